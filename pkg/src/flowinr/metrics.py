"""Image and motion quality metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import correlate

from .errors import ConfigurationError, DimensionError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _same_shape(x, y, what):
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape:
        raise DimensionError(f"{what}: shapes {x.shape} and {y.shape} differ")
    return x, y


def normalize_pair(recon, ref) -> tuple[np.ndarray, np.ndarray]:
    """Magnitudes of both sequences divided by the reference maximum."""
    recon, ref = _same_shape(recon, ref, "normalize_pair")
    peak = np.max(np.abs(ref))
    if peak == 0:
        raise ConfigurationError("reference image is identically zero")
    return np.abs(recon) / peak, np.abs(ref) / peak


def _frames(x: np.ndarray) -> np.ndarray:
    return x[..., None] if x.ndim == 2 else x


def psnr(x, y) -> np.ndarray:
    """Per-frame ``10 log10(1 / MSE)`` for images already in [0, 1]; frames on the last axis."""
    x, y = _same_shape(x, y, "psnr")
    x, y = _frames(x), _frames(y)
    mse = np.mean(np.abs(x - y) ** 2, axis=(0, 1))
    with np.errstate(divide="ignore"):
        out = np.where(mse > 0, -10 * np.log10(np.where(mse > 0, mse, 1)), PSNR_CAP)
    return np.minimum(out, PSNR_CAP)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-ax ** 2 / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(x, y, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every full window position of one 2D frame."""
    x, y = _same_shape(x, y, "ssim")
    if x.ndim != 2:
        raise DimensionError(f"ssim_map expects a 2D frame, got {x.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ConfigurationError(f"frame {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    w = gaussian_window()

    def filt(a):
        return correlate(a, w, mode="valid", method="direct")

    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))


def ssim(x, y, data_range: float = 1.0) -> np.ndarray:
    """Per-frame mean SSIM (11x11 Gaussian window, sigma 1.5); frames on the last axis."""
    x, y = _same_shape(x, y, "ssim")
    x, y = _frames(x), _frames(y)
    return np.array([ssim_map(x[..., k], y[..., k], data_range).mean() for k in range(x.shape[-1])])


def _region(region, shape):
    if region is None:
        region = np.ones(shape, dtype=bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != shape:
        raise DimensionError(f"region shape {region.shape} does not match flow grid {shape}")
    if not region.any():
        raise ConfigurationError("flow metric region is empty")
    return region


def flow_epe(est, gt, region=None) -> float:
    """Mean endpoint error ``|(u, v)_est - (u, v)_gt|`` over ``region`` (flow on the last axis)."""
    est, gt = _same_shape(est, gt, "flow_epe")
    region = _region(region, est.shape[:-1])
    return float(np.mean(np.linalg.norm(est - gt, axis=-1)[region]))


def flow_cosine(est, gt, region=None, eps: float = 1e-12) -> float:
    """Mean cosine similarity of flow vectors over ``region``."""
    est, gt = _same_shape(est, gt, "flow_cosine")
    region = _region(region, est.shape[:-1])
    num = np.sum(est * gt, axis=-1)
    den = np.linalg.norm(est, axis=-1) * np.linalg.norm(gt, axis=-1)
    return float(np.mean((num / np.maximum(den, eps))[region]))


def error_map(x, y) -> np.ndarray:
    """``| |x| - |y| |`` per pixel."""
    x, y = _same_shape(x, y, "error_map")
    return np.abs(np.abs(x) - np.abs(y))


@dataclass
class MetricReport:
    psnr: list[float]
    ssim: list[float]
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    epe: float | None = None
    cosine: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def evaluate(recon, ref, flow_est=None, flow_gt=None, region=None, frames=None) -> MetricReport:
    """PSNR/SSIM after joint normalization by the reference maximum, plus optional flow errors.

    ``frames`` restricts the image statistics to a subset of frame indices.
    """
    x, y = normalize_pair(recon, ref)
    if frames is not None:
        x, y = x[..., list(frames)], y[..., list(frames)]
    p, s = psnr(x, y), ssim(x, y)
    rep = MetricReport(p.tolist(), s.tolist(), float(p.mean()), float(p.std()), float(s.mean()), float(s.std()))
    if flow_est is not None and flow_gt is not None:
        rep.epe = flow_epe(flow_est, flow_gt, region)
        rep.cosine = flow_cosine(flow_est, flow_gt, region)
    return rep
