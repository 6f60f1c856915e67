import json

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from flowinr.errors import ConfigurationError, DimensionError
from flowinr.mri import KSpaceDataset, forward_operator
from flowinr.phantom import (Component, GroundTruthBundle, PhantomSpec, Trajectory, assemble_dataset,
                             cheat_gt_bundle, default_spec, make_cheat_gt, make_dynamic_phantom, render_frame,
                             simulate_coils, translating_spec, warp_inverse_flow)


def _disk_spec(cx, radius, nx=32, ny=32, nt=4, sigma=1.5):
    comp = Component("disk", cx, Trajectory(15.5), radius, edge_sigma=sigma)
    return PhantomSpec(nx, ny, nt, (comp,), coils=2)


def test_default_bundle_shapes():
    b = make_dynamic_phantom()
    assert b.image.shape == (64, 64, 8) and b.flow.shape == (64, 64, 8, 2) and b.maps.shape == (4, 64, 64)
    assert np.all(np.isfinite(b.image)) and b.moving_region().any()


def test_static_disk_has_no_motion():
    b = make_dynamic_phantom(_disk_spec(Trajectory(15.5), Trajectory(6.0)))
    assert not np.any(b.flow)
    for k in range(1, 4):
        np.testing.assert_array_equal(b.image[..., k], b.image[..., 0])


def test_translation_flow():
    b = make_dynamic_phantom(_disk_spec(Trajectory(10.0, drift=1.0), Trajectory(5.0)))
    inside = np.abs(b.image) >= 0.5
    assert inside.any()
    np.testing.assert_array_equal(b.flow[inside][:, 0], 1.0)
    np.testing.assert_array_equal(b.flow[inside][:, 1], 0.0)
    assert not np.any(b.flow[np.abs(b.image) < 0.5])


def test_contracting_disk_matches_symbolic_derivative():
    t, px, r0, c, x0 = sp.symbols("t p_x r0 c x0")
    s = (px - x0) / r0  # material coordinate at t = 0
    position = x0 + s * (r0 - c * t)
    u_expr = sp.diff(position, t).subs(px, x0 + s * r0)  # velocity in terms of s
    vals = {r0: 9.0, c: 0.5, x0: 15.5}
    spec = _disk_spec(Trajectory(15.5), Trajectory(9.0, drift=-0.5), nt=5)
    for k in range(5):
        _, flow = render_frame(spec, float(k))
        r_t = 9.0 - 0.5 * k
        for p in (12.0, 15.0, 18.0, 20.0):
            if abs(p - 15.5) >= r_t - 2:
                continue
            # the point now at p started at material coordinate (p - x0) / r(t)
            expect = float(u_expr.subs({**vals, px: 15.5 + (p - 15.5) / r_t * 9.0, t: k}))
            got = flow[int(p), 15, 0]
            assert got == pytest.approx(expect, abs=1e-12)
            assert abs(got) == pytest.approx(0.5 * abs(p - 15.5) / r_t, abs=1e-12)


def test_painter_order_front_most_last():
    back = Component("disk", Trajectory(15.5), Trajectory(15.5), Trajectory(8.0), intensity=1.0)
    front = Component("disk", Trajectory(15.5, drift=0.5), Trajectory(15.5), Trajectory(3.0), intensity=2.0,
                      edge_sigma=0.3)
    img, flow = render_frame(PhantomSpec(32, 32, 2, (back, front)), 0.0)
    assert abs(img[15, 15]) == pytest.approx(2.0, abs=1e-2)
    assert flow[15, 15, 0] == 0.5
    assert flow[15, 22, 0] == 0.0


@pytest.mark.parametrize("patch,where", [
    ({"radius": -1.0}, "components[0].radius"),
    ({"edge_sigma": 0.0}, "components[0].edge_sigma"),
    ({"shape": "square"}, "components[0].shape"),
    ({"cx": {"base": 1.0}}, "components[0]"),
    ({"colour": 1}, "components[0].colour"),
])
def test_spec_errors_name_field_path(patch, where):
    d = json.loads(_disk_spec(Trajectory(15.5), Trajectory(6.0)).to_json())
    d["components"][0].update(patch)
    with pytest.raises(ConfigurationError, match=where.replace("[", r"\[").replace("]", r"\]")):
        PhantomSpec.from_dict(d)


def test_spec_json_roundtrip():
    spec = default_spec()
    again = PhantomSpec.from_json(spec.to_json())
    assert again == spec
    with pytest.raises(ConfigurationError):
        PhantomSpec.from_json("{")


def test_phantom_is_deterministic():
    a, b = make_dynamic_phantom(), make_dynamic_phantom()
    assert np.array_equal(a.image, b.image) and np.array_equal(a.maps, b.maps)


def test_coils():
    one = simulate_coils(16, 12, 1, 0)
    np.testing.assert_allclose(np.abs(one), 1, atol=1e-12)
    for nc in (2, 4, 8):
        m = simulate_coils(20, 24, nc, 5)
        np.testing.assert_allclose(np.sum(np.abs(m) ** 2, axis=0), 1, atol=1e-6)
    np.testing.assert_array_equal(simulate_coils(8, 8, 3, 1), simulate_coils(8, 8, 3, 1))
    with pytest.raises(ConfigurationError):
        simulate_coils(8, 8, 0)


def test_warp_examples(rng):
    f = rng.normal(size=(10, 9)) + 1j * rng.normal(size=(10, 9))
    np.testing.assert_array_equal(warp_inverse_flow(f, np.zeros((10, 9, 2))), f)
    shift = np.zeros((10, 9, 2))
    shift[..., 0] = 1
    np.testing.assert_array_equal(warp_inverse_flow(f, shift)[1:], f[:-1])
    shift[..., 0] = 0.5
    np.testing.assert_allclose(warp_inverse_flow(f, shift)[1:], 0.5 * (f[1:] + f[:-1]), atol=1e-15)
    with pytest.raises(DimensionError):
        warp_inverse_flow(f, np.zeros((10, 9)))


def _bundle(image, flow):
    return GroundTruthBundle(image, flow, np.ones((1,) + image.shape[:2]), None)


def test_cheat_gt_examples(rng):
    frame = rng.normal(size=(12, 12))
    b = _bundle(np.repeat(frame[..., None], 4, axis=2), np.zeros((12, 12, 4, 2)))
    for k in range(4):
        np.testing.assert_array_equal(make_cheat_gt(b)[..., k], frame)
    spec = _disk_spec(Trajectory(10.0, drift=1.0), Trajectory(5.0), nt=2)
    gt = make_dynamic_phantom(spec)
    flow = np.zeros_like(gt.flow)
    flow[..., 0] = 1.0
    seq = make_cheat_gt(GroundTruthBundle(gt.image, flow, gt.maps, spec))
    np.testing.assert_allclose(seq[1:, :, 1], gt.image[1:, :, 1], atol=1e-12)


def test_cheat_gt_recomputation_is_bit_exact():
    b = make_dynamic_phantom()
    seq = make_cheat_gt(b)
    for k in range(b.dims[2] - 1):
        assert np.array_equal(warp_inverse_flow(seq[..., k], b.flow[:, :, k]), seq[..., k + 1])
    cg = cheat_gt_bundle(b)
    assert cg.meta["cheat_gt"] and np.array_equal(cg.image, seq) and cg.flow is b.flow


def test_translation_warp_consistency():
    b = make_dynamic_phantom(translating_spec(32, 32, 6))
    errs = [np.mean(np.abs(warp_inverse_flow(b.image[..., k], b.flow[:, :, k]) - b.image[..., k + 1]))
            for k in range(5)]
    assert max(errs) < 0.02 * np.abs(b.image).max()


def test_assemble_dataset_examples():
    b = make_dynamic_phantom(_disk_spec(Trajectory(15.5), Trajectory(6.0), nt=2))
    ones = np.ones(b.dims)
    ds = assemble_dataset(b, ones, 0.0)
    ref = forward_operator(b.image, KSpaceDataset(ds.y, ones, b.maps))
    np.testing.assert_array_equal(ds.y, ref)
    ds.validate()
    assert not np.any(assemble_dataset(b, np.zeros(b.dims), 0.3, 1).y)
    with pytest.raises(DimensionError):
        assemble_dataset(b, np.ones((2, 2, 2)), 0.0)


def test_noise_level_monte_carlo():
    b = make_dynamic_phantom(_disk_spec(Trajectory(15.5), Trajectory(6.0), nt=2))
    ones = np.ones(b.dims)
    clean = assemble_dataset(b, ones, 0.0).y
    sigma = 0.05
    est = [np.std((assemble_dataset(b, ones, sigma, s).y - clean).real) for s in range(50)]
    assert abs(np.mean(est) / sigma - 1) < 0.1


@settings(max_examples=20, deadline=None)
@given(st.floats(4, 12), st.floats(-1, 1), st.floats(0.5, 3))
def test_flow_vanishes_outside_components(radius, drift, sigma):
    spec = _disk_spec(Trajectory(15.5, drift=drift), Trajectory(radius), nt=3, sigma=sigma)
    b = make_dynamic_phantom(spec)
    outside = np.abs(b.image) < 0.5 * 0.999
    assert not np.any(b.flow[outside])
