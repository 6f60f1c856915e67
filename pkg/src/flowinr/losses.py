"""Loss terms of the joint image/flow objective and their composition."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import inr
from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .mri import KSpaceDataset, forward_operator
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    lambda_t: float = 0.0
    mu: float = 0.0
    lambda_s1: float = 0.0
    lambda_s2: float = 0.0
    eps: float = 1e-4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ConfigurationError(f"loss.{f.name} must be finite and >= 0, got {v}")
        if self.eps <= 0:
            raise ConfigurationError("loss.eps must be > 0")


@dataclass
class LossReport:
    iteration: int
    total: float
    dc: float
    of_residual: float = 0.0
    of_smooth: float = 0.0
    tv_image: float = 0.0
    tv_flow: float = 0.0

    TERMS = ("dc", "of_residual", "of_smooth", "tv_image", "tv_flow")

    def terms(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.TERMS}

    def as_row(self) -> dict:
        return asdict(self)


def _check_same(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def dc_loss(y_pred, y, eps: float = 1e-4) -> Tensor:
    """Relative L2 plus relative L1 misfit; norms over all coils and samples."""
    y_pred = y_pred if isinstance(y_pred, Tensor) else Tensor(np.asarray(y_pred))
    y = np.asarray(y.data if isinstance(y, Tensor) else y)
    if y_pred.shape != y.shape:
        raise DimensionError(f"dc_loss: shapes {y_pred.shape} and {y.shape} differ")
    diff = T.sub(y_pred, y)
    l2 = T.sqrt(T.sum(T.abs2(diff)))
    l1 = T.sum(T.absolute(diff))
    y_l2 = float(np.sqrt(np.sum(np.abs(y) ** 2)))
    y_l1 = float(np.sum(np.abs(y)))
    return T.add(T.div(l2, y_l2 + eps), T.div(l1, y_l1 + eps))


def of_residual(ix, iy, it, u, v) -> Tensor:
    """Brightness-constancy residual ``Ix*u + Iy*v + It`` (u, v real)."""
    ix, iy, it, u, v = (x if isinstance(x, Tensor) else Tensor(np.asarray(x)) for x in (ix, iy, it, u, v))
    for name, x in (("Iy", iy), ("It", it), ("u", u), ("v", v)):
        _check_same(ix, x, f"of_residual Ix vs {name}")
    return T.add(T.add(T.mul(ix, u), T.mul(iy, v)), it)


def of_loss(residual: Tensor, u: Tensor, v: Tensor, weights: LossWeights,
            flow_grads=None) -> tuple[Tensor, Tensor]:
    """Weighted residual term and weighted flow-smoothness term.

    ``flow_grads`` holds ``(du/dx, du/dy, dv/dx, dv/dy)`` as continuous
    derivatives; it may be omitted when ``weights.mu`` is zero.
    """
    if not isinstance(weights, LossWeights):
        weights = LossWeights(**weights)
    u_shape = tuple(u.shape) if isinstance(u, Tensor) else np.shape(u)
    if tuple(residual.shape) != u_shape:
        raise DimensionError(f"of_loss: residual {residual.shape} and flow {u_shape} differ")
    res_term = T.mul(T.mean(T.abs2(residual)), weights.lambda_t)
    if weights.mu == 0 or flow_grads is None:
        if weights.mu != 0:
            raise ConfigurationError("of_loss: mu > 0 needs flow gradients")
        smooth = T.zeros((), T._real_dtype(residual.dtype))
        return res_term, smooth
    grad_sq = None
    for g in flow_grads:
        g = g if isinstance(g, Tensor) else Tensor(np.asarray(g))
        term = T.abs2(g)
        grad_sq = term if grad_sq is None else T.add(grad_sq, term)
    return res_term, T.mul(T.mean(grad_sq), weights.mu)


def _anisotropic_tv(channel: Tensor) -> Tensor:
    """Sum of absolute forward differences along x and y, averaged over frames."""
    nt = channel.shape[2]
    dx = T.sub(channel[1:, :, :], channel[:-1, :, :])
    dy = T.sub(channel[:, 1:, :], channel[:, :-1, :])
    return T.mul(T.add(T.sum(T.absolute(dx)), T.sum(T.absolute(dy))), 1.0 / nt)


def tv_image(image, weight: float = 1.0) -> Tensor:
    """Anisotropic spatial TV of a complex ``[Nx, Ny, Nt]`` image (real and imaginary parts)."""
    image = image if isinstance(image, Tensor) else Tensor(np.asarray(image))
    if image.ndim != 3:
        raise DimensionError(f"tv_image expects [Nx, Ny, Nt], got {image.shape}")
    tv = _anisotropic_tv(T.real(image))
    if image.is_complex:
        tv = T.add(tv, _anisotropic_tv(T.imag(image)))
    return T.mul(tv, weight)


def tv_flow(flow, weight: float = 1.0) -> Tensor:
    """Anisotropic spatial TV of a ``[Nx, Ny, Nt, 2]`` flow field (u and v channels)."""
    flow = flow if isinstance(flow, Tensor) else Tensor(np.asarray(flow))
    if flow.ndim != 4 or flow.shape[3] != 2:
        raise DimensionError(f"tv_flow expects [Nx, Ny, Nt, 2], got {flow.shape}")
    tv = T.add(_anisotropic_tv(flow[..., 0]), _anisotropic_tv(flow[..., 1]))
    return T.mul(tv, weight)


class JointObjective:
    """The joint loss for one dataset, with coordinate grids prepared once.

    ``of_frames`` > 0 evaluates the optical-flow terms on that many randomly
    chosen frames per call (the data term always uses every frame).
    ``of_jitter`` in [0, 1] moves each optical-flow sample uniformly within
    that fraction of a grid step on every axis, so the flow terms constrain
    the networks between samples as well as on them.
    """

    def __init__(self, ds: KSpaceDataset, weights: LossWeights, of_frames: int = 0, dtype=None,
                 of_jitter: float = 0.0):
        self.ds = ds
        self.weights = weights
        self.dims = ds.dims
        nx, ny, nt = self.dims
        self.dtype = np.dtype(dtype or T.get_default_dtype())
        self.coords = Tensor(inr.coordinate_grid(nx, ny, nt, self.dtype))
        if of_frames < 0 or of_frames > nt:
            raise ConfigurationError(f"of_frames must be in [0, {nt}]")
        self.of_frames = of_frames if of_frames < nt else 0
        if not 0 <= of_jitter <= 1:
            raise ConfigurationError(f"of_jitter must be in [0, 1], got {of_jitter}")
        self.of_jitter = float(of_jitter)
        cdt = T._complex_dtype(self.dtype)
        self.y = np.asarray(ds.y).astype(cdt)
        self.ds_cast = KSpaceDataset(self.y, np.asarray(ds.mask).astype(self.dtype),
                                     np.asarray(ds.maps).astype(cdt))

    @property
    def uses_flow(self) -> bool:
        w = self.weights
        return w.lambda_t > 0 or w.mu > 0 or w.lambda_s2 > 0

    def _of_coords(self, rng):
        """Coordinates for the flow terms, or ``(self.coords, None)`` when they coincide with the grid."""
        nx, ny, nt = self.dims
        if self.of_frames:
            frames = np.sort(rng.choice(nt, size=self.of_frames, replace=False))
            rows = (frames[:, None] * (nx * ny) + np.arange(nx * ny)[None, :]).reshape(-1)
        else:
            rows = None
        if not self.of_jitter:
            return (self.coords, None) if rows is None else (Tensor(self.coords.data[rows]), rows)
        base = self.coords.data if rows is None else self.coords.data[rows]
        step = np.array([1 / max(n - 1, 1) for n in (nx, ny, nt)])
        shift = rng.uniform(-0.5, 0.5, size=base.shape) * step * self.of_jitter
        return Tensor(np.clip(base + shift, 0, 1).astype(self.dtype)), True

    def __call__(self, theta: inr.ModelParameters, phi: inr.ModelParameters | None, iteration: int = 0,
                 rng: np.random.Generator | None = None) -> tuple[Tensor, LossReport]:
        w = self.weights
        nx, ny, nt = self.dims
        out = inr.network_forward(theta, self.coords)
        image = inr.grid_to_volume(T.pack_complex(out[:, 0], out[:, 1]), nx, ny, nt)
        dc = dc_loss(forward_operator(image, self.ds_cast), self.y, w.eps)
        terms = {"dc": dc}
        need_of = w.lambda_t > 0 or w.mu > 0
        flow_out = None
        if self.uses_flow:
            if phi is None:
                raise ConfigurationError("flow terms are enabled but no flow network was given")
            if w.lambda_s2 > 0 or (need_of and not self.of_frames and not self.of_jitter):
                flow_out = inr.network_forward(phi, self.coords)
        if need_of:
            of_coords, rows = self._of_coords(rng or np.random.default_rng(iteration))
            img_out = out if rows is None else inr.network_forward(theta, of_coords)
            fl_out = flow_out if rows is None else inr.network_forward(phi, of_coords)
            u, v = fl_out[:, 0], fl_out[:, 1]
            if w.lambda_t > 0:
                ix, iy, it = inr.image_derivatives(theta, of_coords, img_out)
                r = of_residual(ix, iy, it, u, v)
            else:
                r = T.zeros(u.shape, u.dtype)
            grads = None
            if w.mu > 0:
                dfx, dfy = inr.flow_derivatives(phi, of_coords, fl_out)
                grads = (dfx[:, 0], dfy[:, 0], dfx[:, 1], dfy[:, 1])
            terms["of_residual"], terms["of_smooth"] = of_loss(r, u, v, w, grads)
        if w.lambda_s1 > 0:
            terms["tv_image"] = tv_image(image, w.lambda_s1)
        if w.lambda_s2 > 0:
            terms["tv_flow"] = tv_flow(inr.grid_to_volume(flow_out, nx, ny, nt), w.lambda_s2)
        total = None
        for name in LossReport.TERMS:
            if name in terms:
                total = terms[name] if total is None else T.add(total, terms[name])
        report = LossReport(iteration=iteration, total=float(total.data),
                            **{k: float(v.data) for k, v in terms.items()})
        self.last_image = image
        return total, report


def total_loss(theta, phi, ds: KSpaceDataset, weights: LossWeights, of_frames: int = 0,
               iteration: int = 0, rng=None, of_jitter: float = 0.0) -> tuple[Tensor, LossReport]:
    """One differentiable scalar for the full objective plus its per-term report."""
    return JointObjective(ds, weights, of_frames, of_jitter=of_jitter)(theta, phi, iteration, rng)
