"""Adam and the joint training loop for the image and flow networks."""

from __future__ import annotations

import contextlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import inr
from . import tensor as T
from .config import ReconConfig
from .errors import ContractError, DomainError, NumericalError
from .io import load_array, save_array
from .losses import JointObjective, LossReport
from .mri import KSpaceDataset, adjoint_operator
from .tensor import GradientMap, Tensor


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_settings(cls, adam) -> "AdamState":
        return cls(lr=adam.lr, beta1=adam.beta1, beta2=adam.beta2, eps=adam.eps)


def adam_step(params: dict[str, Tensor], grads: GradientMap, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    ``p -= lr * m_hat / (sqrt(v_hat) + eps)`` with ``m_hat = m / (1 - b1^t)``
    and ``v_hat = v / (1 - b2^t)``.
    """
    for name, p in params.items():
        if p not in grads:
            raise ContractError(f"adam_step: no gradient for parameter {name!r}")
        if grads[p].shape != p.shape:
            raise ContractError(f"adam_step: gradient shape {grads[p].shape} != parameter shape {p.shape} for {name!r}")
    extra = len(grads) - len(params)
    if extra > 0:
        raise ContractError(f"adam_step: {extra} gradients have no matching parameter")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[p]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)


def _named(theta: inr.ModelParameters, phi: inr.ModelParameters | None) -> dict[str, Tensor]:
    out = {f"theta.{t.name}": t for t in theta.tensors()}
    if phi is not None:
        out.update({f"phi.{t.name}": t for t in phi.tensors()})
    return out


@dataclass
class FitResult:
    theta: inr.ModelParameters
    phi: inr.ModelParameters
    log: list[LossReport]
    wall_time: float
    seed: int
    config: ReconConfig
    dims: tuple[int, int, int]
    scale: float = 1.0

    def image(self) -> np.ndarray:
        """Complex reconstruction ``[Nx, Ny, Nt]`` in the units of the measured data."""
        nx, ny, nt = self.dims
        with T.no_grad():
            coords = inr.coordinate_grid(nx, ny, nt, self.theta.tables[0].dtype)
            vol = inr.grid_to_volume(inr.eval_image(self.theta, coords), nx, ny, nt)
        return vol.data * self.scale

    def flow(self, frames=None) -> np.ndarray:
        """Flow ``[Nx, Ny, Nt, 2]`` in normalized coordinate units per unit normalized time.

        ``frames`` selects (possibly fractional) frame times instead of the
        measured ones; the third axis then follows ``frames``.
        """
        nx, ny, nt = self.dims
        dtype = self.phi.tables[0].dtype
        coords = inr.coordinate_grid(nx, ny, nt, dtype)
        if frames is not None:
            frames = np.asarray(frames, dtype=float).reshape(-1)
            if np.any(frames < 0) or np.any(frames > nt - 1):
                raise DomainError(f"flow: frame times must lie in [0, {nt - 1}]")
            plane = coords[: nx * ny, :2]
            t = frames / max(nt - 1, 1)
            coords = np.concatenate([np.column_stack([plane, np.full(nx * ny, tk)]) for tk in t]).astype(dtype)
            nt = len(frames)
        with T.no_grad():
            vol = inr.grid_to_volume(inr.eval_flow(self.phi, coords), nx, ny, nt)
        return vol.data

    def flow_pixels(self, frames=None) -> np.ndarray:
        return inr.flow_to_pixels(self.flow(frames), *self.dims)


def data_scale(ds: KSpaceDataset) -> float:
    """Peak magnitude of the zero-filled image, used to bring data to unit scale."""
    peak = float(np.max(np.abs(adjoint_operator(ds.y, ds)))) if ds.y.size else 0.0
    return peak if peak > 0 else 1.0


@contextlib.contextmanager
def thread_limit(n: int):
    """Cap BLAS/FFT worker threads (``n=1`` gives bit-reproducible runs)."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - optional at runtime
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _check_finite(report: LossReport, grads: GradientMap | None = None) -> None:
    for name in ("total", *LossReport.TERMS):
        if not np.isfinite(getattr(report, name)):
            raise NumericalError(f"non-finite loss term '{name}' at iteration {report.iteration}")
    if grads is not None:
        for t in grads.tensors():
            if not np.all(np.isfinite(grads[t])):
                raise NumericalError(f"non-finite gradient for '{t.name}' at iteration {report.iteration}")


def init_models(cfg: ReconConfig, dtype=None) -> tuple[inr.ModelParameters, inr.ModelParameters]:
    """Image and flow networks drawn from independent streams of ``cfg.seed``."""
    s_theta, s_phi = np.random.SeedSequence(cfg.seed).spawn(2)
    theta = inr.ModelParameters.initialize(cfg.encoder, cfg.mlp, np.random.default_rng(s_theta), dtype)
    phi = inr.ModelParameters.initialize(cfg.encoder, cfg.mlp, np.random.default_rng(s_phi), dtype)
    return theta, phi


def fit(ds: KSpaceDataset, cfg: ReconConfig, resume: str | Path | None = None,
        checkpoint: str | Path | None = None, checkpoint_every: int = 0, callback=None) -> FitResult:
    """Jointly optimize both networks for ``cfg.iterations`` Adam steps.

    The flow network only enters the optimization when a flow term has a
    nonzero weight; otherwise it is returned exactly as initialized.
    """
    ds.validate()
    dtype = np.dtype(cfg.precision)
    start = time.perf_counter()
    with T.default_dtype(dtype), thread_limit(cfg.threads):
        scale = data_scale(ds) if cfg.normalize else 1.0
        scaled = KSpaceDataset(ds.y / scale, ds.mask, ds.maps)
        objective = JointObjective(scaled, cfg.loss, cfg.of_frames, dtype, cfg.of_jitter)
        theta, phi = init_models(cfg, dtype)
        state = AdamState.from_settings(cfg.adam)
        log: list[LossReport] = []
        if resume is not None:
            log = load_checkpoint(resume, theta, phi, state)
        params = _named(theta, phi if objective.uses_flow else None)
        for it in range(state.step, cfg.iterations):
            rng = np.random.default_rng([cfg.seed, it])
            loss, report = objective(theta, phi, it, rng)
            _check_finite(report)
            grads = T.backward(loss, wrt=params.values())
            _check_finite(report, grads)
            adam_step(params, grads, state)
            log.append(report)
            if callback is not None:
                callback(report)
            if checkpoint is not None and checkpoint_every and (it + 1) % checkpoint_every == 0:
                save_checkpoint(checkpoint, theta, phi, state, log)
    return FitResult(theta, phi, log, time.perf_counter() - start, cfg.seed, cfg, ds.dims, scale)


def save_checkpoint(path, theta: inr.ModelParameters, phi: inr.ModelParameters, state: AdamState,
                    log: list[LossReport]) -> None:
    """Parameters and Adam moments as containers plus a JSON index."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, t in _named(theta, phi).items():
        save_array(path / f"{name}.finr", t.data)
    for name, m in state.m.items():
        save_array(path / f"adam_m.{name}.finr", m)
        save_array(path / f"adam_v.{name}.finr", state.v[name])
    meta = {"step": state.step, "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps,
            "moments": sorted(state.m), "log": [r.as_row() for r in log]}
    (path / "state.json").write_text(json.dumps(meta))


def load_checkpoint(path, theta: inr.ModelParameters, phi: inr.ModelParameters,
                    state: AdamState) -> list[LossReport]:
    """Restore a checkpoint into existing models and state; returns the saved loss log."""
    path = Path(path)
    meta = json.loads((path / "state.json").read_text())
    for name, t in _named(theta, phi).items():
        arr = load_array(path / f"{name}.finr")
        if arr.shape != t.shape:
            raise ContractError(f"checkpoint {name}: shape {arr.shape} != {t.shape}")
        t.data = arr.astype(t.dtype, copy=False)
    state.step = int(meta["step"])
    state.lr, state.beta1, state.beta2, state.eps = meta["lr"], meta["beta1"], meta["beta2"], meta["eps"]
    state.m = {n: load_array(path / f"adam_m.{n}.finr") for n in meta["moments"]}
    state.v = {n: load_array(path / f"adam_v.{n}.finr") for n in meta["moments"]}
    return [LossReport(**row) for row in meta["log"]]


LOG_COLUMNS = ("iteration", "total", *LossReport.TERMS)


def write_loss_log(path, log: list[LossReport], delimiter: str = "\t") -> None:
    rows = [delimiter.join(LOG_COLUMNS)]
    for r in log:
        rows.append(delimiter.join(str(r.iteration) if c == "iteration" else repr(getattr(r, c))
                                   for c in LOG_COLUMNS))
    Path(path).write_text("\n".join(rows) + "\n")


def read_loss_log(path, delimiter: str = "\t") -> list[LossReport]:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split(delimiter)
    out = []
    for line in lines[1:]:
        vals = dict(zip(head, line.split(delimiter)))
        out.append(LossReport(iteration=int(vals.pop("iteration")), **{k: float(v) for k, v in vals.items()}))
    return out
