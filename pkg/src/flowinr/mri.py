"""Multi-coil Cartesian acquisition model and its adjoint.

Arrays follow the layout ``image [Nx, Ny, Nt]``, ``maps [Nc, Nx, Ny]`` and
``k-space [Nc, Nx, Ny, Nt]``. The 2D transform runs over the two spatial axes
of every (coil, frame) slab.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor

SPATIAL_AXES = (-3, -2)


@dataclass
class KSpaceDataset:
    """Measured multi-coil k-space ``y``, its sampling ``mask`` and coil ``maps``."""

    y: np.ndarray
    mask: np.ndarray
    maps: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y)
        self.mask = np.asarray(self.mask)
        self.maps = np.asarray(self.maps)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.mask.shape)

    @property
    def num_coils(self) -> int:
        return self.maps.shape[0]

    def validate(self, tol: float = 1e-3) -> None:
        """Check shape agreement, binary mask, zero data off the mask and map normalization."""
        if self.mask.ndim != 3:
            raise DimensionError(f"mask must be [Nx, Ny, Nt], got {self.mask.shape}")
        nx, ny, nt = self.mask.shape
        if self.maps.ndim != 3 or self.maps.shape[1:] != (nx, ny):
            raise DimensionError(f"maps shape {self.maps.shape} does not match mask {self.mask.shape}")
        if self.y.shape != (self.maps.shape[0], nx, ny, nt):
            raise DimensionError(f"k-space shape {self.y.shape} does not match maps/mask")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ContractError("mask entries must be 0 or 1")
        if np.any(self.y[:, self.mask == 0] != 0):
            raise ContractError("k-space data must be zero wherever the mask is zero")
        sos = np.sum(np.abs(self.maps) ** 2, axis=0)
        covered = sos > 0
        if np.any(np.abs(sos[covered] - 1) > tol):
            raise ContractError("coil maps must satisfy sum |S_c|^2 = 1 where nonzero")


def _wrap(x) -> tuple[Tensor, bool]:
    if isinstance(x, Tensor):
        return x, True
    return Tensor(np.asarray(x)), False


def _centered(x: np.ndarray, axes, inverse: bool) -> np.ndarray:
    x = np.fft.ifftshift(x, axes=axes)
    x = np.fft.ifftn(x, axes=axes, norm="ortho") if inverse else np.fft.fftn(x, axes=axes, norm="ortho")
    return np.fft.fftshift(x, axes=axes)


def _fft_prim(x: Tensor, axes, inverse: bool) -> Tensor:
    cdt = T._complex_dtype(x.dtype)
    data = _centered(x.data, axes, inverse).astype(cdt, copy=False)

    # unitary: the adjoint is the inverse transform
    def vjp(g):
        gx = _centered(g, axes, not inverse)
        if x.dtype.kind == "f":
            gx = gx.real
        return (gx.astype(x.dtype, copy=False),)

    return T.record(data, (x,), vjp, lambda t: _fft_prim(t[0], axes, inverse),
                    "ifft2c" if inverse else "fft2c")


def fft2c(x, axes=SPATIAL_AXES):
    """Centered orthonormal 2D DFT (shift, transform, shift; scale 1/sqrt(Nx*Ny))."""
    xt, is_tensor = _wrap(x)
    out = _fft_prim(xt, axes, inverse=False)
    return out if is_tensor else out.data


def ifft2c(x, axes=SPATIAL_AXES):
    """Inverse (and adjoint) of :func:`fft2c`."""
    xt, is_tensor = _wrap(x)
    out = _fft_prim(xt, axes, inverse=True)
    return out if is_tensor else out.data


def apply_sensitivities(image, maps):
    """Coil images ``S_c * I`` of shape ``[Nc, Nx, Ny, Nt]``; maps broadcast over time."""
    it, is_tensor = _wrap(image)
    maps = np.asarray(maps)
    if it.ndim != 3 or maps.ndim != 3 or maps.shape[1:] != it.shape[:2]:
        raise DimensionError(f"image shape {it.shape} and maps shape {maps.shape} disagree")
    out = T.mul(T.reshape(it, (1,) + it.shape), maps[..., None])
    return out if is_tensor else out.data


def _mask_for(y_shape, mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != tuple(y_shape[-3:]):
        raise DimensionError(f"mask shape {mask.shape} does not match data shape {tuple(y_shape)}")
    return mask


def forward_operator(image, ds: KSpaceDataset):
    """Predicted k-space ``mask * FFT(S * I)``."""
    it, is_tensor = _wrap(image)
    if it.shape != ds.dims:
        raise DimensionError(f"image shape {it.shape} does not match dataset dims {ds.dims}")
    k = _fft_prim(apply_sensitivities(it, ds.maps), SPATIAL_AXES, inverse=False)
    mask = _mask_for(k.shape, ds.mask)
    out = T.mul(k, mask)
    return out if is_tensor else out.data


def adjoint_operator(y, ds: KSpaceDataset):
    """Coil-combined zero-filled image ``sum_c conj(S_c) * IFFT(mask * y_c)``."""
    yt, is_tensor = _wrap(y)
    if yt.ndim != 4 or yt.shape[0] != ds.num_coils:
        raise DimensionError(f"k-space shape {yt.shape} does not match {ds.num_coils} coils")
    mask = _mask_for(yt.shape, ds.mask)
    coil = _fft_prim(T.mul(yt, mask), SPATIAL_AXES, inverse=True)
    out = T.sum(T.mul(coil, np.conj(ds.maps)[..., None]), axis=0)
    return out if is_tensor else out.data
