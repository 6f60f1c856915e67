"""Coordinate networks: multiresolution hash encoding followed by a small ReLU MLP.

One instance represents the complex image (two output channels, real and
imaginary part), a second one the optical flow (channels u and v). Both map
normalized coordinates ``(x, y, t)`` in ``[0, 1]^3`` to two values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import tensor as T
from .errors import ConfigurationError, DimensionError, DomainError
from .tensor import Tensor

# Spatial-hash multipliers for the x, y and t vertex indices.
HASH_PRIMES = (1, 2654435761, 805459861)

# corner c of a cell has offset bit (c >> a) & 1 along axis a
_CORNER_BITS = np.array([[(c >> a) & 1 for a in range(3)] for c in range(8)], dtype=np.int64)


@dataclass(frozen=True)
class HashEncoderConfig:
    levels: int = 8
    features_per_level: int = 2
    log2_table_size: int = 16
    base_resolution: int = 8
    per_level_scale: float = 1.5

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigurationError("encoder.levels must be >= 1")
        if self.features_per_level < 1:
            raise ConfigurationError("encoder.features_per_level must be >= 1")
        if not 1 <= self.log2_table_size <= 32:
            raise ConfigurationError("encoder.log2_table_size must be in [1, 32]")
        if self.base_resolution < 1:
            raise ConfigurationError("encoder.base_resolution must be >= 1")
        if self.per_level_scale < 1.0:
            raise ConfigurationError("encoder.per_level_scale must be >= 1 (resolutions nondecreasing)")

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    def resolutions(self) -> list[int]:
        return [int(math.floor(self.base_resolution * self.per_level_scale ** level + 1e-9))
                for level in range(self.levels)]

    def is_direct(self, resolution: int) -> bool:
        return (resolution + 1) ** 3 <= 2 ** self.log2_table_size

    def table_sizes(self) -> list[int]:
        cap = 2 ** self.log2_table_size
        return [(n + 1) ** 3 if self.is_direct(n) else cap for n in self.resolutions()]


PAPER_ENCODER = HashEncoderConfig(levels=24, features_per_level=2, log2_table_size=24,
                                  base_resolution=16, per_level_scale=2.0)
DESK_ENCODER = HashEncoderConfig(levels=8, features_per_level=2, log2_table_size=16,
                                 base_resolution=8, per_level_scale=1.5)
ENCODER_PRESETS = {"paper": PAPER_ENCODER, "desk": DESK_ENCODER}


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: int = 2
    hidden_width: int = 128
    out_channels: int = 2
    activation: str = "relu"

    def __post_init__(self):
        if self.hidden_layers < 0 or self.hidden_width < 1:
            raise ConfigurationError("mlp.hidden_layers must be >= 0 and mlp.hidden_width >= 1")
        if self.out_channels != 2:
            raise ConfigurationError("mlp.out_channels must be 2")
        if self.activation != "relu":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")

    def layer_shapes(self, in_dim: int) -> list[tuple[int, int]]:
        dims = [in_dim] + [self.hidden_width] * self.hidden_layers + [self.out_channels]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class ModelParameters:
    """Trainable state of one coordinate network (hash tables plus MLP)."""

    encoder: HashEncoderConfig
    mlp: MlpConfig
    tables: list[Tensor]
    weights: list[Tensor]
    biases: list[Tensor]

    @classmethod
    def initialize(cls, encoder: HashEncoderConfig, mlp: MlpConfig, rng: np.random.Generator,
                   dtype=None) -> "ModelParameters":
        """Tables uniform in [-1e-4, 1e-4]; weights uniform in +-1/sqrt(fan_in); zero biases."""
        dtype = np.dtype(dtype or T.get_default_dtype())
        F = encoder.features_per_level
        tables = [rng.uniform(-1e-4, 1e-4, size=(n, F)) for n in encoder.table_sizes()]
        weights, biases = [], []
        for fan_in, fan_out in mlp.layer_shapes(encoder.output_dim):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls._from_arrays(encoder, mlp, tables, weights, biases, dtype)

    @classmethod
    def zeros(cls, encoder: HashEncoderConfig, mlp: MlpConfig, dtype=None) -> "ModelParameters":
        dtype = np.dtype(dtype or T.get_default_dtype())
        F = encoder.features_per_level
        tables = [np.zeros((n, F)) for n in encoder.table_sizes()]
        shapes = mlp.layer_shapes(encoder.output_dim)
        return cls._from_arrays(encoder, mlp, tables, [np.zeros(s) for s in shapes],
                                [np.zeros(s[1]) for s in shapes], dtype)

    @classmethod
    def _from_arrays(cls, encoder, mlp, tables, weights, biases, dtype):
        def mk(arrs, prefix):
            return [Tensor(np.asarray(a, dtype=dtype), requires_grad=True, name=f"{prefix}{i:02d}")
                    for i, a in enumerate(arrs)]
        return cls(encoder, mlp, mk(tables, "table"), mk(weights, "weight"), mk(biases, "bias"))

    def tensors(self) -> list[Tensor]:
        return [*self.tables, *self.weights, *self.biases]

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {t.name: t.data for t in self.tensors()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for t in self.tensors():
            src = np.asarray(arrays[t.name])
            if src.shape != t.shape:
                raise DimensionError(f"parameter {t.name}: expected shape {t.shape}, got {src.shape}")
            t.data = src.astype(t.dtype, copy=True)

    def copy(self) -> "ModelParameters":
        return self._from_arrays(self.encoder, self.mlp, [t.data.copy() for t in self.tables],
                                 [t.data.copy() for t in self.weights],
                                 [t.data.copy() for t in self.biases], self.tables[0].dtype)

    @property
    def num_parameters(self) -> int:
        return int(np.sum([t.size for t in self.tensors()]))


# ---------------------------------------------------------------------------
# coordinates


def coordinate_grid(nx: int, ny: int, nt: int, dtype=None) -> np.ndarray:
    """Normalized grid coordinates ``[nx*ny*nt, 3]``; row order is t-major, then y, then x."""
    def axis(n):
        return np.arange(n) / (n - 1) if n > 1 else np.zeros(1)
    t, y, x = np.meshgrid(axis(nt), axis(ny), axis(nx), indexing="ij")
    coords = np.stack([x.ravel(), y.ravel(), t.ravel()], axis=1)
    return coords.astype(dtype or T.get_default_dtype())


def grid_to_volume(values: Tensor, nx: int, ny: int, nt: int) -> Tensor:
    """Reshape per-coordinate values in grid row order to ``[nx, ny, nt, ...]``."""
    trailing = tuple(values.shape[1:])
    vol = T.reshape(values, (nt, ny, nx) + trailing)
    return T.transpose(vol, (2, 1, 0) + tuple(range(3, 3 + len(trailing))))


def volume_to_grid(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`grid_to_volume` for plain arrays."""
    nx, ny, nt = values.shape[:3]
    trailing = values.shape[3:]
    axes = (2, 1, 0) + tuple(range(3, 3 + len(trailing)))
    return np.transpose(values, axes).reshape((nx * ny * nt,) + trailing)


# ---------------------------------------------------------------------------
# hash encoding


class _Geometry:
    """Cell lookup for one coordinate batch.

    For fixed coordinates the encoding is linear in the tables, so each
    requested derivative order is cached as a sparse matrix ``[B*L, S]`` with
    eight interpolation weights per row (``S`` = total table rows).
    """

    def __init__(self, coords: np.ndarray, cfg: HashEncoderConfig, dtype):
        res = np.array(cfg.resolutions(), dtype=np.float64)
        offsets = np.concatenate([[0], np.cumsum(cfg.table_sizes())[:-1]]).astype(np.int64)
        pos = coords.astype(np.float64)[:, None, :] * res[None, :, None]  # [B, L, 3]
        cell = np.minimum(np.floor(pos), res[None, :, None] - 1).astype(np.int64)
        frac = pos - cell
        corner = cell[:, :, None, :] + _CORNER_BITS[None, None]  # [B, L, 8, 3]
        idx = np.empty(corner.shape[:3], dtype=np.int64)
        mask = np.uint64(2 ** cfg.log2_table_size - 1)
        for level, n in enumerate(cfg.resolutions()):
            c = corner[:, level]
            if cfg.is_direct(n):
                idx[:, level] = c[..., 0] + (n + 1) * (c[..., 1] + (n + 1) * c[..., 2])
            else:
                cu = c.astype(np.uint64)
                h = (cu[..., 0] * np.uint64(HASH_PRIMES[0])) ^ (cu[..., 1] * np.uint64(HASH_PRIMES[1])) \
                    ^ (cu[..., 2] * np.uint64(HASH_PRIMES[2]))
                idx[:, level] = (h & mask).astype(np.int64)
            idx[:, level] += offsets[level]
        self.index = idx
        self.size = int(np.sum(cfg.table_sizes()))
        self.dtype = np.dtype(dtype)
        bits = _CORNER_BITS[None, None].astype(bool)
        self.factors = np.where(bits, frac[:, :, None, :], 1.0 - frac[:, :, None, :]).astype(dtype)
        self.slopes = (np.where(_CORNER_BITS, 1.0, -1.0)[None, :, :] * res[:, None, None]).astype(dtype)
        self._ops: dict[tuple[int, ...], tuple[sparse.csr_matrix, sparse.csr_matrix]] = {}

    def weights(self, deriv_axes: tuple[int, ...]) -> np.ndarray | None:
        """Corner weights ``[B, L, 8]`` of the interpolant differentiated along ``deriv_axes``.

        ``None`` means identically zero (an axis repeated: the interpolant is
        linear along each axis).
        """
        key = tuple(sorted(deriv_axes))
        if len(set(key)) != len(key):
            return None
        w = np.ones(self.factors.shape[:3], dtype=self.dtype)
        for a in range(3):
            w = w * (self.slopes[None, :, :, a] if a in key else self.factors[..., a])
        return w

    def operators(self, deriv_axes: tuple[int, ...]):
        """``(A, A^T)`` sparse pair for one derivative order, or None when zero."""
        key = tuple(sorted(deriv_axes))
        ops = self._ops.get(key)
        if ops is None:
            w = self.weights(key)
            if w is None:
                return None
            rows = w.shape[0] * w.shape[1]
            a = sparse.csr_matrix((w.reshape(-1), self.index.reshape(-1), np.arange(0, 8 * rows + 1, 8)),
                                  shape=(rows, self.size))
            ops = (a, a.T.tocsr())
            if len(self._ops) < 8:
                self._ops[key] = ops
        return ops


_GEOMETRY_CACHE: dict = {}


def _geometry(coords: np.ndarray, cfg: HashEncoderConfig, dtype) -> _Geometry:
    key = (coords.shape, coords.dtype.str, hash(coords.tobytes()), cfg, np.dtype(dtype).str)
    geo = _GEOMETRY_CACHE.get(key)
    if geo is None:
        if len(_GEOMETRY_CACHE) >= 4:
            _GEOMETRY_CACHE.pop(next(iter(_GEOMETRY_CACHE)))
        geo = _Geometry(coords, cfg, dtype)
        _GEOMETRY_CACHE[key] = geo
    return geo


def _check_coords(coords: Tensor) -> None:
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise DimensionError(f"coordinates must have shape [B, 3], got {coords.shape}")
    if coords.size and (coords.data.min() < 0 or coords.data.max() > 1):
        raise DomainError("coordinates must lie in [0, 1]^3")


def _hash_interp(coords: Tensor, tables: list[Tensor], cfg: HashEncoderConfig,
                 deriv_axes: tuple[int, ...] = ()) -> Tensor:
    dtype = tables[0].dtype
    geo = _geometry(coords.data, cfg, dtype)
    B, L, F = coords.shape[0], cfg.levels, cfg.features_per_level
    ops = geo.operators(deriv_axes)
    if ops is None:
        return T.zeros((B, L * F), dtype)
    fwd, adj = ops
    table_all = np.concatenate([t.data for t in tables], axis=0)
    out = np.asarray(fwd @ table_all).reshape(B, L * F)
    bounds = np.cumsum([t.shape[0] for t in tables])[:-1]

    def vjp(g):
        full = np.asarray(adj @ g.reshape(B * L, F))
        return (None, *np.split(full, bounds, axis=0))

    def jvp(ts):
        tc, ttabs = ts[0], ts[1:]
        result = None
        if tc is not None:
            for a in range(3):
                col = tc.data[:, a]
                if not tc.requires_grad and not np.any(col):
                    continue
                term = _hash_interp(coords, tables, cfg, deriv_axes + (a,))
                if tc.requires_grad or not np.all(col == 1):
                    term = T.mul(T.getitem(tc, (slice(None), slice(a, a + 1))), term)
                result = term if result is None else T.add(result, term)
        if any(t is not None for t in ttabs):
            filled = [t if t is not None else T.zeros(p.shape, p.dtype) for t, p in zip(ttabs, tables)]
            term = _hash_interp(coords, filled, cfg, deriv_axes)
            result = term if result is None else T.add(result, term)
        return result

    op = "hash_encode" if not deriv_axes else "hash_encode_d" + "".join("xyt"[a] for a in deriv_axes)
    return T.record(out.astype(dtype, copy=False), (coords, *tables), vjp, jvp, op)


def hash_encode(coords, params: ModelParameters, cfg: HashEncoderConfig | None = None) -> Tensor:
    """Multiresolution hash features ``[B, levels * features]`` (levels in ascending order).

    Coordinates are constants for reverse mode; derivatives with respect to
    them are available through :func:`flowinr.tensor.directional_derivative`.
    """
    cfg = cfg or params.encoder
    coords = coords if isinstance(coords, Tensor) else Tensor(coords)
    _check_coords(coords)
    if len(params.tables) != cfg.levels:
        raise DimensionError(f"expected {cfg.levels} tables, got {len(params.tables)}")
    return _hash_interp(coords, params.tables, cfg)


def mlp_forward(features: Tensor, params: ModelParameters, cfg: MlpConfig | None = None) -> Tensor:
    cfg = cfg or params.mlp
    in_dim = params.weights[0].shape[0]
    if features.ndim != 2 or features.shape[1] != in_dim:
        raise DimensionError(f"mlp: feature shape {features.shape} does not match input width {in_dim}")
    h = features
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = T.add(T.matmul(h, w), b)
        if i < n - 1:
            h = T.relu(h)
    return h


def network_forward(params: ModelParameters, coords) -> Tensor:
    """Raw two-channel network output ``[B, 2]``."""
    return mlp_forward(hash_encode(coords, params), params)


def eval_image(theta: ModelParameters, coords) -> Tensor:
    """Complex image values ``c0 + 1j*c1`` at each coordinate."""
    out = network_forward(theta, coords)
    return T.pack_complex(out[:, 0], out[:, 1])


def eval_flow(phi: ModelParameters, coords) -> Tensor:
    """Flow ``[B, 2]`` as (u, v) in normalized units per unit normalized time."""
    return network_forward(phi, coords)


def image_derivatives(theta: ModelParameters, coords: Tensor, output: Tensor | None = None,
                      axes=(0, 1, 2)) -> tuple[Tensor, ...]:
    """Complex partial derivatives of the image network along ``axes`` (x, y, t by default).

    ``output`` may be the raw network output already computed from the same
    ``coords`` tensor, which avoids a second forward pass.
    """
    if output is None:
        output = network_forward(theta, coords)
    derivs = []
    for a in axes:
        d = T.directional_derivative(output, coords, a)
        derivs.append(T.pack_complex(d[:, 0], d[:, 1]))
    return tuple(derivs)


def flow_derivatives(phi: ModelParameters, coords: Tensor, output: Tensor | None = None,
                     axes=(0, 1)) -> tuple[Tensor, ...]:
    """Partial derivatives ``[B, 2]`` of the flow network along ``axes`` (spatial by default)."""
    if output is None:
        output = network_forward(phi, coords)
    return tuple(T.directional_derivative(output, coords, a) for a in axes)


def flow_to_pixels(flow, nx: int, ny: int, nt: int) -> np.ndarray:
    """Convert normalized flow ``[..., 2]`` to pixels per frame."""
    if nt < 2:
        raise DomainError("flow unit conversion needs at least two frames")
    flow = np.asarray(flow.data if isinstance(flow, Tensor) else flow)
    scale = np.array([(nx - 1) / (nt - 1), (ny - 1) / (nt - 1)])
    return flow * scale.astype(flow.dtype)


def pixels_to_flow(flow_px, nx: int, ny: int, nt: int) -> np.ndarray:
    """Inverse of :func:`flow_to_pixels`."""
    if nt < 2:
        raise DomainError("flow unit conversion needs at least two frames")
    flow_px = np.asarray(flow_px)
    scale = np.array([(nt - 1) / (nx - 1), (nt - 1) / (ny - 1)])
    return flow_px * scale.astype(flow_px.dtype)

