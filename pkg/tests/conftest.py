import numpy as np
import pytest

from flowinr import tensor as T


@pytest.fixture
def f64():
    with T.precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_diff(fn, arr, index, h=1e-6):
    """Central difference of scalar ``fn()`` with respect to ``arr[index]`` (mutated in place)."""
    old = arr[index]
    arr[index] = old + h
    up = fn()
    arr[index] = old - h
    down = fn()
    arr[index] = old
    return (up - down) / (2 * h)


def rel_err(a, b, floor=1e-12):
    return abs(a - b) / max(abs(a), abs(b), floor)


def tiny_dataset(nx=8, ny=8, nt=3, seed=0, full=False):
    """A small random-phantom dataset for gradient and descent checks."""
    from flowinr import phantom, sampling

    spec = phantom.default_spec(nx, ny, nt) if nx >= 16 else _tiny_spec(nx, ny, nt)
    bundle = phantom.make_dynamic_phantom(spec)
    af = 1.0 if full else 2.0
    mask = sampling.make_mask("random-cartesian", nx, ny, nt, af, 2, seed)
    return bundle, phantom.assemble_dataset(bundle, mask, 0.0, seed)


def _tiny_spec(nx, ny, nt):
    from flowinr.phantom import Component, PhantomSpec, Trajectory

    disk = Component("disk", Trajectory(nx / 2 - 0.5, drift=0.3), Trajectory(ny / 2), Trajectory(nx / 4),
                     intensity=1.0 + 0.5j, edge_sigma=1.0)
    return PhantomSpec(nx, ny, nt, (disk,), coils=2)


def randomize(params, rng, table_scale=1e-1):
    """Spread table entries and biases so no ReLU sits exactly at its kink."""
    for t in params.tables:
        t.data = rng.normal(scale=table_scale, size=t.shape).astype(t.dtype)
    for b in params.biases:
        b.data = rng.uniform(-1, 1, size=b.shape).astype(b.dtype)
    return params


def loss_gradient_errors(objective, theta, phi, per_network=10, seed=0, h=1e-6):
    """Relative errors of backward() against central differences on random touched parameters."""
    from flowinr import tensor as T

    rng = np.random.default_rng(seed)
    loss, _ = objective(theta, phi)
    params = {("theta", i): p for i, p in enumerate(theta.tensors())}
    params.update({("phi", i): p for i, p in enumerate(phi.tensors())})
    grads = T.backward(loss, wrt=params.values())
    errors = []
    for net in ("theta", "phi"):
        # only entries the tiny grid actually reaches carry signal
        cands = [(k, idx) for k, p in params.items() if k[0] == net
                 for idx in zip(*np.nonzero(np.abs(grads[p]) > 1e-8))]
        for j in rng.choice(len(cands), size=per_network, replace=False):
            key, idx = cands[j]
            p = params[key]
            fd = central_diff(lambda: float(objective(theta, phi)[0].data), p.data, idx, h)
            errors.append(rel_err(float(grads[p][idx]), fd))
    return errors
