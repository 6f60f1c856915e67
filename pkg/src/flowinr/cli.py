"""``flowinr`` command line.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O or
format error. Relative output paths are resolved against
``$FLOWINR_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments as ex
from .config import ReconConfig, apply_overrides, load_config
from .errors import (ConfigurationError, ContractError, DimensionError, DomainError, FormatError,
                     NumericalError, UnsupportedOperationError)
from .io import load_array, save_array, save_graymap
from .phantom import PhantomSpec, assemble_dataset, default_spec, load_phantom_spec, make_dynamic_phantom
from .sampling import make_mask

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "FLOWINR_OUTPUT_ROOT"


def _out(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config(args) -> ReconConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ReconConfig()
    if getattr(args, "iterations", None) is not None:
        cfg = apply_overrides(cfg, {"iterations": args.iterations})
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    if getattr(args, "set", None):
        pairs = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigurationError(f"--set expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            pairs[k.strip()] = v.strip()
        cfg = apply_overrides(cfg, pairs, "--set")
    if getattr(args, "no_of", False):
        cfg = cfg.with_loss(lambda_t=0.0, mu=0.0)
    if getattr(args, "no_tv", False):
        cfg = cfg.with_loss(lambda_s1=0.0, lambda_s2=0.0)
    return cfg


def _inputs(args, *names) -> dict[str, str]:
    out = {}
    for n in names:
        v = getattr(args, n, None)
        if v is None:
            continue
        p = Path(v)
        if p.is_dir():
            for f in sorted(p.glob("*.finr")) + sorted(p.glob("*.json")):
                out[f"{n}/{f.name}"] = str(f)
        else:
            out[n] = str(p)
    return out


def cmd_phantom_gen(args) -> int:
    spec = load_phantom_spec(args.spec) if args.spec else default_spec()
    if args.seed is not None:
        spec = PhantomSpec(spec.nx, spec.ny, spec.nt, spec.components, spec.coils, args.seed, spec.flow_threshold)
    bundle = make_dynamic_phantom(spec)
    out = _out(args.out)
    ex.save_bundle(bundle, out)
    ex.write_manifest(out, "phantom-gen", _inputs(args, "spec"), seed=spec.seed)
    print(f"wrote {spec.nx}x{spec.ny}x{spec.nt} phantom to {out}")
    return EXIT_OK


def _dims(text: str) -> tuple[int, int, int]:
    parts = text.lower().replace(",", "x").split("x")
    if len(parts) != 3:
        raise ConfigurationError(f"--dims expects NXxNYxNT, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigurationError(f"--dims expects integers, got {text!r}") from None


def cmd_mask_gen(args) -> int:
    nx, ny, nt = _dims(args.dims)
    mask = make_mask(args.kind, nx, ny, nt, args.af, args.acs, args.seed)
    out = _out(args.out)
    save_array(out / "mask.finr", mask)
    # phase-encode line pattern over time: rows are y, columns t
    save_graymap(out / "mask_lines.pgm", mask[0].T)
    ex.write_manifest(out, "mask-gen", {}, seed=args.seed,
                      extra={"kind": args.kind, "dims": [nx, ny, nt], "af": args.af, "acs": args.acs,
                             "lines_per_frame": mask[0].sum(axis=0).astype(int).tolist()})
    print(f"wrote {args.kind} mask (AF={args.af:g}) to {out}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    bundle = ex.load_bundle(args.bundle)
    mask = load_array(args.mask)
    ds = assemble_dataset(bundle, mask, args.noise, args.seed)
    out = _out(args.out)
    ex.save_dataset(ds, out)
    ex.write_manifest(out, "dataset", _inputs(args, "bundle", "mask"), seed=args.seed,
                      extra={"noise_sigma": args.noise})
    print(f"wrote dataset to {out}")
    return EXIT_OK


def cmd_recon(args) -> int:
    ds = ex.load_dataset(args.dataset)
    cfg = _config(args)
    gt = ex.load_bundle(args.gt) if args.gt else None
    out = _out(args.out)
    run = ex.run_recon(ds, cfg, out, gt, _inputs(args, "dataset", "config", "gt"))
    msg = f"recon done: final loss {run.result.log[-1].total:.6g}" if run.result.log else "recon done"
    if run.metrics:
        msg += f", PSNR {run.metrics['psnr_mean']:.3f} dB, SSIM {run.metrics['ssim_mean']:.4f}"
    print(msg)
    return EXIT_OK


def cmd_interp(args) -> int:
    ds = ex.load_dataset(args.dataset)
    cfg = _config(args)
    gt = ex.load_bundle(args.gt)
    report = ex.run_interp(ds, cfg, gt, _out(args.out), _inputs(args, "dataset", "config", "gt"))
    print(json.dumps({k: v for k, v in report.items() if k != "result"}))
    return EXIT_OK


def cmd_cheatgt(args) -> int:
    bundle = ex.load_bundle(args.bundle)
    cfg = _config(args)
    afs = [float(a) for a in args.af.split(",") if a.strip()]
    if not afs:
        raise ConfigurationError("--af needs at least one acceleration factor")
    rows = ex.run_cheatgt(bundle, afs, cfg, _out(args.out), args.kind, args.acs, args.mask_seed,
                          inputs=_inputs(args, "bundle", "config"))
    for r in rows:
        print(f"AF={r['af']:g}: EPE {r['epe_px']:.4f} px, cosine {r['cosine']:.4f}, PSNR {r['psnr']:.3f} dB")
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds = ex.load_dataset(args.dataset)
    template = _config(args)
    grid = ex.parse_grid(Path(args.grid).read_text())
    gt = ex.load_bundle(args.gt)
    ranked = ex.run_sweep(ds, template, grid, gt, _out(args.out), _inputs(args, "dataset", "config", "grid", "gt"))
    for r in ranked:
        print(f"{r['rank']:3d}  {r['psnr_mean']:.3f} dB  {r['cell']}")
    return EXIT_OK


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--iterations", type=int, help="override the iteration budget")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flowinr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen", help="render a phantom bundle (image, flow, coil maps)")
    p.add_argument("--spec", help="phantom spec JSON (default: built-in 64x64x8 phantom)")
    p.add_argument("--seed", type=int, help="coil-map seed override")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("mask-gen", help="generate an undersampling mask")
    p.add_argument("--kind", required=True, choices=["random-cartesian", "pseudo-vista", "temporal-uniform"])
    p.add_argument("--dims", required=True, help="NXxNYxNT")
    p.add_argument("--af", type=float, required=True, help="acceleration (temporal factor for temporal-uniform)")
    p.add_argument("--acs", type=int, default=4, help="central always-sampled lines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_gen)

    p = sub.add_parser("dataset", help="simulate k-space from a bundle and a mask")
    p.add_argument("--bundle", required=True)
    p.add_argument("--mask", required=True, help="mask container file")
    p.add_argument("--noise", type=float, default=0.0, help="noise std per real component")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("recon", help="joint image and flow reconstruction")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gt", help="ground-truth bundle for metrics")
    p.add_argument("--no-of", action="store_true", help="disable the optical-flow terms")
    p.add_argument("--no-tv", action="store_true", help="disable both TV terms")
    p.add_argument("--out", required=True)
    _add_fit_args(p)
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("interp", help="temporal interpolation on temporally subsampled data")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--no-of", action="store_true")
    p.add_argument("--no-tv", action="store_true")
    p.add_argument("--out", required=True)
    _add_fit_args(p)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("cheatgt", help="motion accuracy on a Cheat-GT sequence")
    p.add_argument("--bundle", required=True)
    p.add_argument("--af", default="1,8", help="comma-separated acceleration factors")
    p.add_argument("--kind", default="pseudo-vista", choices=["random-cartesian", "pseudo-vista"])
    p.add_argument("--acs", type=int, default=4)
    p.add_argument("--mask-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_fit_args(p)
    p.set_defaults(func=cmd_cheatgt)

    p = sub.add_parser("sweep", help="grid search ranked by mean PSNR (resumable)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--grid", required=True, help="lines of 'key = v1, v2, ...'")
    p.add_argument("--out", required=True)
    _add_fit_args(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, DimensionError, DomainError, ContractError, UnsupportedOperationError,
            ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
