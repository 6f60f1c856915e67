"""Undersampling masks: random Cartesian, pseudo-VISTA and uniform temporal.

Cartesian masks select full phase-encode lines (along y) per frame and are
returned as ``[Ny, Nt]`` line selectors; :func:`expand_lines` broadcasts them
to ``[Nx, Ny, Nt]`` since every selected line is fully sampled along x.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2


def lines_per_frame(ny: int, af: float) -> int:
    """``round(Ny / AF)`` with halves rounded up."""
    return int(math.floor(ny / af + 0.5))


def acs_block(ny: int, acs_lines: int) -> np.ndarray:
    """Indices of the ``acs_lines`` central phase-encode lines."""
    start = ny // 2 - acs_lines // 2
    return np.arange(start, start + acs_lines)


def _check_budget(ny: int, nt: int, af: float, acs_lines: int) -> int:
    if ny < 1 or nt < 1:
        raise ConfigurationError(f"invalid mask size Ny={ny}, Nt={nt}")
    if af < 1:
        raise ConfigurationError(f"acceleration factor must be >= 1, got {af}")
    n = lines_per_frame(ny, af)
    if not 0 <= acs_lines <= n <= ny:
        raise ConfigurationError(
            f"infeasible budget: {acs_lines} ACS lines with {n} lines per frame (Ny={ny}, AF={af})")
    return n


def _density(ny: int) -> np.ndarray:
    k = np.arange(ny)
    sigma = ny / 4
    return np.exp(-0.5 * ((k - ny / 2) / sigma) ** 2)


def random_cartesian_mask(ny: int, nt: int, af: float, acs_lines: int = 4, seed: int = 0) -> np.ndarray:
    """Per-frame random line selection with a Gaussian variable-density profile.

    The ACS block is always selected; the remaining budget is drawn without
    replacement with probability proportional to ``exp(-(k - Ny/2)^2 / (2 (Ny/4)^2))``.
    """
    n = _check_budget(ny, nt, af, acs_lines)
    rng = np.random.default_rng(seed)
    acs = acs_block(ny, acs_lines)
    free = np.setdiff1d(np.arange(ny), acs)
    p = _density(ny)[free]
    p = p / p.sum()
    mask = np.zeros((ny, nt), dtype=np.float32)
    for f in range(nt):
        mask[acs, f] = 1
        if n > acs_lines:
            mask[rng.choice(free, size=n - acs_lines, replace=False, p=p), f] = 1
    return mask


def pseudo_vista_mask(ny: int, nt: int, af: float, acs_lines: int = 4, seed: int = 0) -> np.ndarray:
    """Variable-density lines shifted by a golden-ratio stride from frame to frame.

    This is a stand-in for VISTA, not the published algorithm. The non-ACS
    lines of every frame are the images of ``m`` evenly spaced points under the
    inverse cumulative density (Gaussian, sigma = Ny/4). A seeded jitter places
    the points within their slots; frame ``f`` shifts all of them by
    ``round(f * Ny / phi) mod Ny`` slots of width ``1/Ny``, so neighbouring
    frames sample different lines. Collisions move to the nearest free line.
    """
    n = _check_budget(ny, nt, af, acs_lines)
    rng = np.random.default_rng(seed)
    acs = acs_block(ny, acs_lines)
    free = np.setdiff1d(np.arange(ny), acs)
    m = n - acs_lines
    mask = np.zeros((ny, nt), dtype=np.float32)
    mask[acs, :] = 1
    if m == 0:
        return mask
    if m == free.size:
        mask[free, :] = 1
        return mask
    w = _density(ny)[free]
    cdf = np.cumsum(w) / w.sum()
    centers = cdf - 0.5 * w / w.sum()  # quantile of each free line's midpoint
    jitter = rng.uniform(0, 1)
    for f in range(nt):
        offset = int(math.floor(f * ny / GOLDEN_RATIO + 0.5)) % ny
        q = np.mod((np.arange(m) + jitter) / m + offset / ny, 1.0)
        taken = np.zeros(free.size, dtype=bool)
        for target in np.sort(q):
            order = np.argsort(np.abs(centers - target), kind="stable")
            pick = order[~taken[order]][0]
            taken[pick] = True
        mask[free[taken], f] = 1
    return mask


def temporal_uniform_mask(nx: int, ny: int, nt: int, factor: int) -> np.ndarray:
    """Frames with ``t % factor == 0`` fully sampled, all others empty."""
    if factor < 1:
        raise ConfigurationError(f"temporal factor must be >= 1, got {factor}")
    mask = np.zeros((nx, ny, nt), dtype=np.float32)
    mask[:, :, ::factor] = 1
    return mask


def expand_lines(lines: np.ndarray, nx: int) -> np.ndarray:
    """Broadcast a ``[Ny, Nt]`` line selector to a ``[Nx, Ny, Nt]`` mask."""
    lines = np.asarray(lines, dtype=np.float32)
    return np.broadcast_to(lines[None], (nx,) + lines.shape).copy()


def make_mask(kind: str, nx: int, ny: int, nt: int, af: float = 1.0, acs_lines: int = 4,
              seed: int = 0) -> np.ndarray:
    """Full ``[Nx, Ny, Nt]`` mask by generator name.

    For ``temporal-uniform`` the acceleration factor is the temporal factor.
    """
    if kind == "random-cartesian":
        return expand_lines(random_cartesian_mask(ny, nt, af, acs_lines, seed), nx)
    if kind == "pseudo-vista":
        return expand_lines(pseudo_vista_mask(ny, nt, af, acs_lines, seed), nx)
    if kind == "temporal-uniform":
        if float(af) != int(af):
            raise ConfigurationError(f"temporal factor must be an integer, got {af}")
        return temporal_uniform_mask(nx, ny, nt, int(af))
    raise ConfigurationError(f"unknown mask kind {kind!r}")
