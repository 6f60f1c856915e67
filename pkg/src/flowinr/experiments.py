"""Run orchestration shared by the command line and the acceptance suite.

Every runner writes its artifacts into an output directory together with a
``manifest.json`` listing inputs (with content hashes), the config hash,
seed and library versions.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ReconConfig, apply_overrides
from .errors import ConfigurationError, DimensionError, FormatError
from .io import load_array, save_array, save_graymap
from .metrics import evaluate, flow_cosine, flow_epe
from .mri import KSpaceDataset
from .optim import FitResult, fit, write_loss_log
from .phantom import GroundTruthBundle, PhantomSpec, assemble_dataset, cheat_gt_bundle
from .sampling import make_mask


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict[str, str]:
    return {"flowinr": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir, command: str, inputs: dict[str, str], cfg: ReconConfig | None = None,
                   seed: int | None = None, extra: dict | None = None) -> dict:
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "inputs": {k: {"path": str(p), "sha256": file_sha256(p)} for k, p in inputs.items() if Path(p).is_file()},
        "config_hash": cfg.hash() if cfg is not None else None,
        "seed": seed if seed is not None else (cfg.seed if cfg is not None else None),
        "versions": versions(),
        "outputs": sorted(str(p.relative_to(out_dir)) for p in out_dir.rglob("*")
                          if p.is_file() and p.name != "manifest.json"),
    }
    if cfg is not None:
        manifest["config"] = cfg.to_json()
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


# ---------------------------------------------------------------------------
# on-disk bundles and datasets


def save_bundle(bundle: GroundTruthBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_array(out / "image.finr", bundle.image.astype(np.complex128))
    save_array(out / "flow.finr", bundle.flow.astype(np.float64))
    save_array(out / "maps.finr", bundle.maps.astype(np.complex128))
    (out / "spec.json").write_text(bundle.spec.to_json())
    previews = out / "preview"
    previews.mkdir(exist_ok=True)
    for t in range(bundle.image.shape[-1]):
        save_graymap(previews / f"image_t{t:02d}.pgm", bundle.image[..., t])
        save_graymap(previews / f"speed_t{t:02d}.pgm", np.linalg.norm(bundle.flow[:, :, t], axis=-1))
    return sorted(p for p in out.rglob("*") if p.is_file())


def load_bundle(in_dir) -> GroundTruthBundle:
    d = Path(in_dir)
    spec = PhantomSpec.from_json((d / "spec.json").read_text())
    return GroundTruthBundle(load_array(d / "image.finr"), load_array(d / "flow.finr"),
                             load_array(d / "maps.finr"), spec, spec.seed)


def save_dataset(ds: KSpaceDataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_array(out / "y.finr", ds.y.astype(np.complex128))
    save_array(out / "mask.finr", ds.mask.astype(np.float32))
    save_array(out / "maps.finr", ds.maps.astype(np.complex128))


def dataset_files(in_dir) -> dict[str, Path]:
    d = Path(in_dir)
    return {"y": d / "y.finr", "mask": d / "mask.finr", "maps": d / "maps.finr"}


def load_dataset(in_dir) -> KSpaceDataset:
    files = dataset_files(in_dir)
    for p in files.values():
        if not p.is_file():
            raise FileNotFoundError(f"missing dataset file {p}")
    ds = KSpaceDataset(load_array(files["y"]), load_array(files["mask"]), load_array(files["maps"]))
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# runners


def _write_fit(res: FitResult, out: Path) -> None:
    save_array(out / "image.finr", res.image().astype(np.complex64 if res.config.precision == "float32"
                                                      else np.complex128))
    flow = res.flow()
    save_array(out / "flow_normalized.finr", flow)
    save_array(out / "flow_px.finr", res.flow_pixels().astype(flow.dtype))
    write_loss_log(out / "loss.tsv", res.log)
    (out / "config.txt").write_text(res.config.dumps())


def _metrics(res: FitResult, gt: GroundTruthBundle | None, frames=None) -> dict | None:
    if gt is None:
        return None
    if gt.dims != res.dims:
        raise DimensionError(f"ground truth {gt.dims} does not match reconstruction {res.dims}")
    region = gt.moving_region()
    rep = evaluate(res.image(), gt.image, res.flow_pixels() if region.any() else None,
                   gt.flow if region.any() else None, region if region.any() else None, frames)
    return json.loads(rep.to_json())


@dataclass
class RunOutput:
    result: FitResult
    metrics: dict | None
    out_dir: Path | None


def run_recon(ds: KSpaceDataset, cfg: ReconConfig, out_dir=None, gt: GroundTruthBundle | None = None,
              inputs: dict | None = None, command: str = "recon") -> RunOutput:
    res = fit(ds, cfg)
    met = _metrics(res, gt)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_fit(res, out)
        if met is not None:
            (out / "metrics.json").write_text(json.dumps(met, indent=2))
        write_manifest(out, command, inputs or {}, cfg)
    return RunOutput(res, met, out)


def measured_frames(mask: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.asarray(mask).reshape(-1, mask.shape[-1]).any(axis=0))


def run_interp(ds: KSpaceDataset, cfg: ReconConfig, gt: GroundTruthBundle, out_dir=None,
               inputs: dict | None = None) -> dict:
    """Fit on temporally subsampled data and score measured and unmeasured frames separately."""
    run = run_recon(ds, cfg, None, None)
    nt = ds.dims[2]
    meas = measured_frames(ds.mask)
    unmeas = np.setdiff1d(np.arange(nt), meas)
    full = evaluate(run.result.image(), gt.image)
    report = {
        "psnr": full.psnr, "ssim": full.ssim,
        "measured_frames": meas.tolist(), "unmeasured_frames": unmeas.tolist(),
        "psnr_measured": float(np.mean([full.psnr[k] for k in meas])) if meas.size else None,
        "psnr_unmeasured": float(np.mean([full.psnr[k] for k in unmeas])) if unmeas.size else None,
        "ssim_measured": float(np.mean([full.ssim[k] for k in meas])) if meas.size else None,
        "ssim_unmeasured": float(np.mean([full.ssim[k] for k in unmeas])) if unmeas.size else None,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_fit(run.result, out)
        for t in range(nt):
            save_graymap(out / f"frame_t{t:02d}.pgm", run.result.image()[..., t])
        (out / "interp_metrics.json").write_text(json.dumps(report, indent=2))
        write_manifest(out, "interp", inputs or {}, cfg)
    report["result"] = run.result
    return report


def run_cheatgt(bundle: GroundTruthBundle, afs, cfg: ReconConfig, out_dir=None, mask_kind: str = "pseudo-vista",
                acs_lines: int = 4, mask_seed: int = 0, noise_sigma: float = 0.0, inputs: dict | None = None,
                speed_threshold: float = 0.1) -> list[dict]:
    """Flow accuracy against the analytic motion on a Cheat-GT sequence, one fit per acceleration factor."""
    cheat = cheat_gt_bundle(bundle)
    nx, ny, nt = cheat.dims
    # frame k+1 is frame k moved by flow k, so flow k is the motion over [k, k+1]
    steps = np.arange(nt - 1) + 0.5
    true = cheat.flow[:, :, :-1]
    region = cheat.moving_region(speed_threshold)[:, :, :-1]
    rows = []
    for af in afs:
        mask = make_mask(mask_kind, nx, ny, nt, af, acs_lines if af > 1 else 0, mask_seed)
        ds = assemble_dataset(cheat, mask, noise_sigma, mask_seed)
        res = fit(ds, cfg)
        est = res.flow_pixels(steps)
        if region.any():
            epe, cos = flow_epe(est, true, region), flow_cosine(est, true, region)
        else:
            # no true motion: the error is the estimated speed itself
            epe, cos = float(np.mean(np.linalg.norm(est, axis=-1))), float("nan")
        img = evaluate(res.image(), cheat.image)
        rows.append({"af": af, "epe_px": epe, "cosine": cos, "psnr": img.psnr_mean, "ssim": img.ssim_mean,
                     "result": res})
        if out_dir is not None:
            sub = Path(out_dir) / f"af{af:g}"
            sub.mkdir(parents=True, exist_ok=True)
            _write_fit(res, sub)
            for t in range(nt - 1):
                save_graymap(sub / f"flow_u_t{t:02d}.pgm", est[:, :, t, 0] - est[:, :, t, 0].min())
                save_graymap(sub / f"flow_v_t{t:02d}.pgm", est[:, :, t, 1] - est[:, :, t, 1].min())
    if out_dir is not None:
        out = Path(out_dir)
        save_array(out / "cheat_gt.finr", cheat.image)
        table = [{k: v for k, v in r.items() if k != "result"} for r in rows]
        (out / "cheatgt_report.json").write_text(json.dumps(table, indent=2))
        write_manifest(out, "cheatgt", inputs or {}, cfg)
    return rows


def parse_grid(text: str) -> dict[str, list[str]]:
    """``key = v1, v2, ...`` lines; ``#`` comments allowed."""
    grid: dict[str, list[str]] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"grid line {n}: expected 'key = v1, v2, ...'")
        key, vals = (s.strip() for s in line.split("=", 1))
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigurationError(f"grid line {n}: no values for {key!r}")
        grid[key] = values
    if not grid:
        raise ConfigurationError("sweep grid is empty")
    return grid


def grid_cells(template: ReconConfig, grid: dict[str, list[str]]) -> list[tuple[dict, ReconConfig]]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigurationError("sweep grid is empty")
    keys = list(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        cells.append((overrides, apply_overrides(template, overrides, "<grid>")))
    return cells


def run_sweep(ds: KSpaceDataset, template: ReconConfig, grid: dict[str, list[str]], gt: GroundTruthBundle,
              out_dir, inputs: dict | None = None) -> list[dict]:
    """Fit every grid cell (skipping cells already finished in ``out_dir``) and rank by mean PSNR."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (overrides, cfg) in enumerate(grid_cells(template, grid)):
        cell = out / f"cell_{i:03d}_{cfg.hash()[:10]}"
        done = cell / "metrics.json"
        if done.is_file():
            try:
                met = json.loads(done.read_text())
            except json.JSONDecodeError as exc:
                raise FormatError(f"{done}: corrupt metrics file ({exc})") from None
        else:
            met = run_recon(ds, cfg, cell, gt, inputs, command="sweep-cell").metrics
        rows.append({"cell": cell.name, **overrides, "psnr_mean": met["psnr_mean"], "ssim_mean": met["ssim_mean"]})
    ranked = sorted(rows, key=lambda r: (-r["psnr_mean"], r["cell"]))
    for rank, r in enumerate(ranked, 1):
        r["rank"] = rank
    cols = ["rank", "cell", *grid.keys(), "psnr_mean", "ssim_mean"]
    lines = ["\t".join(cols)] + ["\t".join(str(r[c]) for c in cols) for r in ranked]
    (out / "ranking.tsv").write_text("\n".join(lines) + "\n")
    write_manifest(out, "sweep", inputs or {}, template, extra={"grid": grid})
    return ranked
