import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowinr.errors import ConfigurationError, DimensionError
from flowinr.metrics import (K1, error_map, evaluate, flow_cosine, flow_epe, gaussian_window, normalize_pair, psnr,
                             ssim, ssim_map)


def test_psnr_examples():
    x = np.zeros((10, 10))
    assert psnr(x, x)[0] == 99.0
    assert psnr(x, x + 0.1)[0] == pytest.approx(20.0, abs=1e-9)
    assert psnr(x, x + 1.0)[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DimensionError):
        psnr(np.zeros(3), np.zeros(4))


def test_psnr_per_frame():
    x = np.zeros((4, 4, 2))
    y = x.copy()
    y[..., 1] = 0.1
    np.testing.assert_allclose(psnr(x, y), [99.0, 20.0])


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(0)
    base = rng.uniform(size=(32, 32))
    means = [np.mean([psnr(base, base + s * np.random.default_rng(k).normal(size=base.shape))[0]
                      for k in range(20)]) for s in (0.01, 0.02, 0.05, 0.1)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_ssim_examples():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(16, 16))
    assert ssim(x, x)[0] == pytest.approx(1.0, abs=1e-9)
    c1 = K1 ** 2
    assert ssim(np.zeros((16, 16)), np.ones((16, 16)))[0] == pytest.approx(c1 / (1 + c1), rel=1e-9)
    assert c1 / (1 + c1) == pytest.approx(9.999e-5, rel=1e-4)
    with pytest.raises(ConfigurationError):
        ssim(np.zeros((10, 16)), np.zeros((10, 16)))


def _ssim_direct(x, y, size=11, sigma=1.5, L=1.0):
    # one window at a time, no filtering tricks
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-ax ** 2 / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            a, b = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            ma, mb = np.sum(w * a), np.sum(w * b)
            va = np.sum(w * (a - ma) ** 2)
            vb = np.sum(w * (b - mb) ** 2)
            cov = np.sum(w * (a - ma) * (b - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return np.mean(vals)


def test_ssim_matches_sliding_window_oracle():
    rng = np.random.default_rng(2)
    for _ in range(3):
        x = rng.uniform(size=(32, 32))
        y = np.clip(x + 0.2 * rng.normal(size=x.shape), 0, 1)
        assert ssim(x, y)[0] == pytest.approx(_ssim_direct(x, y), abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ssim_bounds_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(size=(14, 13)), rng.uniform(size=(14, 13))
    m = ssim_map(x, y)
    assert np.all(m <= 1) and np.all(m >= -1)
    assert ssim(x, y)[0] == pytest.approx(ssim(y, x)[0], abs=1e-9)


def test_gaussian_window():
    w = gaussian_window()
    assert w.shape == (11, 11) and w.sum() == pytest.approx(1.0) and w[5, 5] == w.max()


def test_epe_and_cosine():
    rng = np.random.default_rng(3)
    gt = rng.normal(size=(6, 5, 2, 2))
    assert flow_epe(gt, gt) == 0
    assert flow_epe(gt + np.array([1.0, 0.0]), gt) == pytest.approx(1.0)
    est = rng.normal(size=gt.shape)
    region = rng.uniform(size=gt.shape[:-1]) < 0.5
    loop = [np.hypot(*(est[idx] - gt[idx])) for idx in np.ndindex(region.shape) if region[idx]]
    assert flow_epe(est, gt, region) == pytest.approx(np.mean(loop), rel=1e-12)
    assert flow_cosine(gt, 2 * gt) == pytest.approx(1.0)
    assert flow_cosine(-gt, gt) == pytest.approx(-1.0)
    mid = 0.5 * (est + gt)
    assert flow_epe(est, gt) <= flow_epe(est, mid) + flow_epe(mid, gt) + 1e-12
    with pytest.raises(ConfigurationError):
        flow_epe(est, gt, np.zeros(region.shape, bool))


def test_error_map():
    x = np.zeros((4, 4))
    assert not error_map(x, x).any()
    y = x.copy()
    y[2, 1] = 1.0
    e = error_map(x, y)
    assert e[2, 1] == 1 and e.sum() == 1
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(5, 5)) + 1j, rng.normal(size=(5, 5))
    np.testing.assert_array_equal(error_map(a, b), error_map(b, a))


def test_evaluate_normalizes_by_reference_peak():
    rng = np.random.default_rng(5)
    ref = 7.0 * rng.uniform(size=(16, 16, 3)) * np.exp(1j)
    x, y = normalize_pair(ref, ref)
    assert y.max() == pytest.approx(1.0)
    rep = evaluate(ref * 1.0, ref, frames=[0, 2])
    assert rep.psnr == [99.0, 99.0] and rep.ssim_mean == pytest.approx(1.0)
    flow = rng.normal(size=(16, 16, 3, 2))
    rep = evaluate(ref, ref, flow, flow)
    assert rep.epe == 0 and rep.cosine == pytest.approx(1.0)
    assert '"psnr_mean"' in rep.to_json()
