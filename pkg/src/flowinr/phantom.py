"""Analytic dynamic phantoms with known motion, coil maps and synthetic k-space.

Positions and radii are in pixels and time is in frames, so the analytic flow
comes out in pixels per frame. Each component is a smooth shape whose center
and size follow ``base + drift*t + amplitude*sin(2*pi*t/period + phase)``.
Components are drawn back to front: the last one listed is on top.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError
from .mri import KSpaceDataset, forward_operator

SHAPES = ("disk", "ellipse", "ring")


@dataclass(frozen=True)
class Trajectory:
    base: float
    amplitude: float = 0.0
    period: float = 8.0
    phase: float = 0.0
    drift: float = 0.0

    def value(self, t):
        return self.base + self.drift * t + self.amplitude * np.sin(2 * np.pi * t / self.period + self.phase)

    def rate(self, t):
        w = 2 * np.pi / self.period
        return self.drift + self.amplitude * w * np.cos(w * t + self.phase)


@dataclass(frozen=True)
class Component:
    shape: str
    cx: Trajectory
    cy: Trajectory
    radius: Trajectory
    intensity: complex = 1.0
    edge_sigma: float = 1.5
    aspect: float = 1.0          # ellipse: y semi-axis / x semi-axis
    inner_ratio: float = 0.5     # ring: inner radius / outer radius

    def extent(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Half-widths along x and y of the shape at times ``t``."""
        r = self.radius.value(t)
        return r, r * (self.aspect if self.shape == "ellipse" else 1.0)


@dataclass(frozen=True)
class PhantomSpec:
    nx: int
    ny: int
    nt: int
    components: tuple[Component, ...]
    coils: int = 4
    seed: int = 0
    flow_threshold: float = 0.5

    def validate(self) -> None:
        if min(self.nx, self.ny, self.nt) < 1:
            raise ConfigurationError(f"dims: grid must be positive, got {(self.nx, self.ny, self.nt)}")
        if self.coils < 1:
            raise ConfigurationError(f"coils: must be >= 1, got {self.coils}")
        if not 0 < self.flow_threshold < 1:
            raise ConfigurationError(f"flow_threshold: must be in (0, 1), got {self.flow_threshold}")
        t = np.linspace(0, max(self.nt - 1, 0), 16 * max(self.nt, 1))
        for i, c in enumerate(self.components):
            where = f"components[{i}]"
            if c.shape not in SHAPES:
                raise ConfigurationError(f"{where}.shape: expected one of {SHAPES}, got {c.shape!r}")
            if not c.edge_sigma > 0:
                raise ConfigurationError(f"{where}.edge_sigma: must be > 0, got {c.edge_sigma}")
            for name in ("cx", "cy", "radius"):
                if getattr(c, name).period == 0:
                    raise ConfigurationError(f"{where}.{name}.period: must be nonzero")
            if not c.aspect > 0:
                raise ConfigurationError(f"{where}.aspect: must be > 0, got {c.aspect}")
            if not 0 < c.inner_ratio < 1:
                raise ConfigurationError(f"{where}.inner_ratio: must be in (0, 1), got {c.inner_ratio}")
            r = c.radius.value(t)
            if np.any(r <= 0):
                raise ConfigurationError(f"{where}.radius: must stay > 0 for all frames (min {r.min():.3g})")
            hx, hy = c.extent(t)
            x, y = c.cx.value(t), c.cy.value(t)
            if np.any(x - hx < 0) or np.any(x + hx > self.nx - 1) or np.any(y - hy < 0) or np.any(y + hy > self.ny - 1):
                raise ConfigurationError(f"{where}: component leaves the {self.nx}x{self.ny} grid")

    def to_dict(self) -> dict:
        comps = []
        for c in self.components:
            d = asdict(c)
            d["intensity"] = [float(np.real(c.intensity)), float(np.imag(c.intensity))]
            comps.append(d)
        return {"dims": [self.nx, self.ny, self.nt], "coils": self.coils, "seed": self.seed,
                "flow_threshold": self.flow_threshold, "components": comps}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        spec = cls(*_dims(d), components=tuple(_component(c, f"components[{i}]")
                                               for i, c in enumerate(_get(d, "components", "", list))),
                   coils=int(_get(d, "coils", "", (int, float), 4)), seed=int(_get(d, "seed", "", (int, float), 0)),
                   flow_threshold=float(_get(d, "flow_threshold", "", (int, float), 0.5)))
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"phantom spec is not valid JSON: {exc}") from None


_MISSING = object()


def _get(d, key, path, types, default=_MISSING):
    where = f"{path}.{key}" if path else key
    if not isinstance(d, dict):
        raise ConfigurationError(f"{path or '<root>'}: expected an object")
    if key not in d:
        if default is _MISSING:
            raise ConfigurationError(f"{where}: missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, types):
        raise ConfigurationError(f"{where}: unexpected value {v!r}")
    return v


def _dims(d):
    dims = _get(d, "dims", "", list)
    if len(dims) != 3 or not all(isinstance(v, int) and v > 0 for v in dims):
        raise ConfigurationError(f"dims: expected three positive integers, got {dims!r}")
    return dims


_ALLOWED_COMPONENT = {"shape", "cx", "cy", "radius", "intensity", "edge_sigma", "aspect", "inner_ratio"}
_ALLOWED_TRAJ = {"base", "amplitude", "period", "phase", "drift"}


def _trajectory(v, path) -> Trajectory:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return Trajectory(float(v))
    if not isinstance(v, dict):
        raise ConfigurationError(f"{path}: expected a number or an object")
    unknown = set(v) - _ALLOWED_TRAJ
    if unknown:
        raise ConfigurationError(f"{path}.{sorted(unknown)[0]}: unknown field")
    num = (int, float)
    return Trajectory(float(_get(v, "base", path, num)), float(_get(v, "amplitude", path, num, 0.0)),
                      float(_get(v, "period", path, num, 8.0)), float(_get(v, "phase", path, num, 0.0)),
                      float(_get(v, "drift", path, num, 0.0)))


def _component(c, path) -> Component:
    if not isinstance(c, dict):
        raise ConfigurationError(f"{path}: expected an object")
    unknown = set(c) - _ALLOWED_COMPONENT
    if unknown:
        raise ConfigurationError(f"{path}.{sorted(unknown)[0]}: unknown field")
    inten = c.get("intensity", 1.0)
    if isinstance(inten, list) and len(inten) == 2 and all(isinstance(x, (int, float)) for x in inten):
        inten = complex(inten[0], inten[1])
    elif isinstance(inten, (int, float)) and not isinstance(inten, bool):
        inten = complex(inten)
    else:
        raise ConfigurationError(f"{path}.intensity: expected a number or [re, im]")
    num = (int, float)
    return Component(shape=_get(c, "shape", path, str), cx=_trajectory(_get(c, "cx", path, (dict, *num)), f"{path}.cx"),
                     cy=_trajectory(_get(c, "cy", path, (dict, *num)), f"{path}.cy"),
                     radius=_trajectory(_get(c, "radius", path, (dict, *num)), f"{path}.radius"),
                     intensity=inten, edge_sigma=float(_get(c, "edge_sigma", path, num, 1.5)),
                     aspect=float(_get(c, "aspect", path, num, 1.0)),
                     inner_ratio=float(_get(c, "inner_ratio", path, num, 0.5)))


def load_phantom_spec(path) -> PhantomSpec:
    return PhantomSpec.from_json(Path(path).read_text())


def default_spec(nx: int = 64, ny: int = 64, nt: int = 8) -> PhantomSpec:
    """A static elliptical body holding a pulsating disk, an oscillating ring and a drifting disk.

    Peak motion is about one pixel per frame. Positions scale with the grid.
    """
    sx, sy = (nx - 1) / 63, (ny - 1) / 63
    s = min(sx, sy)
    P = float(nt)
    comps = (
        Component("ellipse", Trajectory(31.5 * sx), Trajectory(31.5 * sy), Trajectory(26 * s),
                  intensity=0.45 * np.exp(0.3j), aspect=0.8),
        Component("disk", Trajectory(27 * sx), Trajectory(29 * sy), Trajectory(8.5 * s, 1.5 * s, P),
                  intensity=1.0),
        Component("ring", Trajectory(45 * sx, 1.5 * s, P, 0.5 * math.pi), Trajectory(36 * sy),
                  Trajectory(5.5 * s), intensity=0.75 * np.exp(0.6j), inner_ratio=0.45),
        Component("disk", Trajectory(18 * sx, drift=0.5 * s), Trajectory(44 * sy), Trajectory(3.5 * s),
                  intensity=0.85 * np.exp(-0.4j)),
    )
    return PhantomSpec(nx, ny, nt, comps)


def translating_spec(nx: int = 32, ny: int = 32, nt: int = 6, speed: float = 0.5,
                     edge_sigma: float = 2.0) -> PhantomSpec:
    """One soft disk drifting along x at ``speed`` px/frame; flow is defined wherever the disk is visible."""
    r = min(nx, ny) / 5
    x0 = nx / 2 - speed * (nt - 1) / 2
    comp = Component("disk", Trajectory(x0, drift=speed), Trajectory((ny - 1) / 2), Trajectory(r),
                     intensity=1.0, edge_sigma=edge_sigma)
    return PhantomSpec(nx, ny, nt, (comp,), coils=4, flow_threshold=1e-3)


@dataclass
class GroundTruthBundle:
    image: np.ndarray          # complex [Nx, Ny, Nt]
    flow: np.ndarray           # [Nx, Ny, Nt, 2], pixels per frame
    maps: np.ndarray           # complex [Nc, Nx, Ny]
    spec: PhantomSpec
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.image.shape)

    def moving_region(self, threshold: float = 0.1) -> np.ndarray:
        """Pixels whose true speed is at least ``threshold`` px/frame."""
        return np.linalg.norm(self.flow, axis=-1) >= threshold


def _sigmoid(z):
    return 0.5 * (1 + np.tanh(0.5 * z))


def _coverage(c: Component, px, py, t) -> np.ndarray:
    """Soft occupancy in [0, 1] of one component on the pixel grid at time t."""
    dx = px - c.cx.value(t)
    dy = py - c.cy.value(t)
    r = c.radius.value(t)
    if c.shape == "ellipse":
        # distance scaled to the x semi-axis; exact on the x axis, smooth elsewhere
        rho = np.sqrt(dx ** 2 + (dy / c.aspect) ** 2)
        return _sigmoid((r - rho) / c.edge_sigma)
    rho = np.sqrt(dx ** 2 + dy ** 2)
    outer = _sigmoid((r - rho) / c.edge_sigma)
    if c.shape == "disk":
        return outer
    return outer * _sigmoid((rho - c.inner_ratio * r) / c.edge_sigma)


def _velocity(c: Component, px, py, t) -> tuple[np.ndarray, np.ndarray]:
    # every shape scales about its center, so a point at p moves with c' + (r'/r) (p - c)
    k = c.radius.rate(t) / c.radius.value(t)
    return (c.cx.rate(t) + k * (px - c.cx.value(t)), c.cy.rate(t) + k * (py - c.cy.value(t)))


def render_frame(spec: PhantomSpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Image ``[Nx, Ny]`` and flow ``[Nx, Ny, 2]`` of the phantom at (possibly fractional) time t."""
    px, py = np.meshgrid(np.arange(spec.nx, dtype=np.float64), np.arange(spec.ny, dtype=np.float64), indexing="ij")
    img = np.zeros((spec.nx, spec.ny), dtype=np.complex128)
    flow = np.zeros((spec.nx, spec.ny, 2))
    for c in spec.components:
        a = _coverage(c, px, py, t)
        img = img * (1 - a) + c.intensity * a
        u, v = _velocity(c, px, py, t)
        inside = a >= spec.flow_threshold
        flow[inside, 0] = u[inside]
        flow[inside, 1] = v[inside]
    return img, flow


def make_dynamic_phantom(spec: PhantomSpec | None = None) -> GroundTruthBundle:
    spec = spec or default_spec()
    spec.validate()
    frames = [render_frame(spec, float(t)) for t in range(spec.nt)]
    image = np.stack([f[0] for f in frames], axis=-1)
    flow = np.stack([f[1] for f in frames], axis=2)
    maps = simulate_coils(spec.nx, spec.ny, spec.coils, spec.seed)
    return GroundTruthBundle(image, flow, maps, spec, spec.seed)


def simulate_coils(nx: int, ny: int, nc: int, seed: int = 0) -> np.ndarray:
    """Smooth complex Gaussian-lobe maps ``[Nc, Nx, Ny]`` with ``sum_c |S_c|^2 = 1``.

    Lobe centers sit near a circle around the field of view (random angle
    jitter); each coil carries a random constant phase and a gentle linear
    phase ramp.
    """
    if nc < 1:
        raise ConfigurationError(f"number of coils must be >= 1, got {nc}")
    rng = np.random.default_rng(seed)
    px, py = np.meshgrid(np.arange(nx) - (nx - 1) / 2, np.arange(ny) - (ny - 1) / 2, indexing="ij")
    size = max(nx, ny)
    angles = 2 * np.pi * (np.arange(nc) + rng.uniform(-0.25, 0.25, nc)) / nc
    dist = size * rng.uniform(0.45, 0.6, nc)
    width = size * rng.uniform(0.45, 0.6, nc)
    phase0 = rng.uniform(-np.pi, np.pi, nc)
    ramp = rng.uniform(-1, 1, (nc, 2)) * np.pi / size
    maps = np.empty((nc, nx, ny), dtype=np.complex128)
    for c in range(nc):
        cx, cy = dist[c] * np.cos(angles[c]), dist[c] * np.sin(angles[c])
        mag = np.exp(-((px - cx) ** 2 + (py - cy) ** 2) / (2 * width[c] ** 2))
        maps[c] = mag * np.exp(1j * (phase0[c] + ramp[c, 0] * px + ramp[c, 1] * py))
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos


def _bilinear_clamped(frame: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    nx, ny = frame.shape
    sx = np.clip(sx, 0, nx - 1)
    sy = np.clip(sy, 0, ny - 1)
    x0 = np.minimum(np.floor(sx).astype(np.int64), max(nx - 2, 0))
    y0 = np.minimum(np.floor(sy).astype(np.int64), max(ny - 2, 0))
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    fx = sx - x0
    fy = sy - y0
    return ((1 - fx) * (1 - fy) * frame[x0, y0] + fx * (1 - fy) * frame[x1, y0]
            + (1 - fx) * fy * frame[x0, y1] + fx * fy * frame[x1, y1])


def warp_inverse_flow(frame: np.ndarray, flow_px: np.ndarray) -> np.ndarray:
    """Backward warp: ``out(p) = frame(p - flow(p))``, bilinear, sampling clamped to the grid."""
    frame = np.asarray(frame)
    flow_px = np.asarray(flow_px)
    if frame.ndim != 2 or flow_px.shape != frame.shape + (2,):
        raise DimensionError(f"warp: frame {frame.shape} and flow {flow_px.shape} disagree")
    px, py = np.meshgrid(np.arange(frame.shape[0], dtype=np.float64),
                         np.arange(frame.shape[1], dtype=np.float64), indexing="ij")
    return _bilinear_clamped(frame, px - flow_px[..., 0], py - flow_px[..., 1])


def make_cheat_gt(bundle: GroundTruthBundle) -> np.ndarray:
    """Sequence built from frame 0 by repeatedly warping with the true flow of the current frame."""
    if bundle.image.shape[-1] < 2:
        raise DimensionError("Cheat-GT needs at least two frames")
    frames = [bundle.image[..., 0].copy()]
    for k in range(bundle.image.shape[-1] - 1):
        frames.append(warp_inverse_flow(frames[-1], bundle.flow[:, :, k]))
    return np.stack(frames, axis=-1)


def cheat_gt_bundle(bundle: GroundTruthBundle) -> GroundTruthBundle:
    """The bundle with its image replaced by the Cheat-GT sequence (same flow and maps)."""
    return GroundTruthBundle(make_cheat_gt(bundle), bundle.flow, bundle.maps, bundle.spec, bundle.seed,
                             {**bundle.meta, "cheat_gt": True})


def assemble_dataset(bundle: GroundTruthBundle, mask: np.ndarray, noise_sigma: float = 0.0,
                     seed: int = 0) -> KSpaceDataset:
    """``y = mask * (FFT(S * I) + n)`` with complex Gaussian ``n`` (``noise_sigma`` per real component)."""
    mask = np.asarray(mask)
    if mask.shape != bundle.dims:
        raise DimensionError(f"mask shape {mask.shape} does not match phantom {bundle.dims}")
    if noise_sigma < 0:
        raise ConfigurationError(f"noise_sigma must be >= 0, got {noise_sigma}")
    full = KSpaceDataset(np.zeros((bundle.maps.shape[0],) + bundle.dims, np.complex128),
                         np.ones(bundle.dims), bundle.maps)
    k = forward_operator(bundle.image.astype(np.complex128), full)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        k = k + noise_sigma * (rng.standard_normal(k.shape) + 1j * rng.standard_normal(k.shape))
    return KSpaceDataset(k * mask, mask.astype(np.float64), bundle.maps)
