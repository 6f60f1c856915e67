"""Dense tensors with reverse-mode gradients and differentiable forward tangents.

Every operation records a node holding two rules:

* a vector-Jacobian rule (``vjp``) that maps the output cotangent, a plain
  ndarray, to cotangents of the inputs. :func:`backward` uses it.
* a tangent rule (``jvp``) that maps input tangents to the output tangent
  *using recorded Tensor operations*. :func:`directional_derivative` uses it,
  and because the tangent is built from recorded operations it can itself be
  passed to :func:`backward`. This is how losses containing coordinate
  derivatives of a network obtain parameter gradients.

Complex tensors are supported. For a real loss ``L`` the gradient stored for a
complex tensor ``z`` is ``dL/dRe(z) + 1j * dL/dIm(z)``.

Broadcasting follows numpy: shapes are aligned on trailing dimensions.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, UnsupportedOperationError

__all__ = [
    "Tensor",
    "GradientMap",
    "tensor",
    "zeros",
    "record",
    "backward",
    "directional_derivative",
    "default_dtype",
    "get_default_dtype",
    "set_default_dtype",
    "precision",
    "no_grad",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "sqrt",
    "absolute",
    "abs2",
    "relu",
    "sum",
    "mean",
    "matmul",
    "concat",
    "reshape",
    "transpose",
    "getitem",
    "gather",
    "scatter_add",
    "pack_complex",
    "real",
    "imag",
    "conj",
]

_DEFAULT_DTYPE = np.dtype(np.float32)
_RECORDING = True


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"default dtype must be float32 or float64, got {dtype}")
    _DEFAULT_DTYPE = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for new real tensors."""
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


def precision(mode: str):
    """Context manager selecting ``"float32"`` (default) or ``"float64"``.

    The 64-bit mode is the verification mode: gradient and adjoint checks run
    in it, and division by an exact zero raises :class:`DomainError`.
    """
    if mode not in ("float32", "float64"):
        raise ValueError(f"unknown precision mode {mode!r}")
    return default_dtype(np.dtype(mode))


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording graph nodes."""
    global _RECORDING
    old = _RECORDING
    _RECORDING = False
    try:
        yield
    finally:
        _RECORDING = old


def _real_dtype(dt: np.dtype) -> np.dtype:
    return np.dtype(np.float32) if dt in (np.float32, np.complex64) else np.dtype(np.float64)


def _complex_dtype(dt: np.dtype) -> np.dtype:
    return np.dtype(np.complex64) if _real_dtype(dt) == np.float32 else np.dtype(np.complex128)


class Tensor:
    """An n-dimensional array that may take part in a differentiation graph."""

    __slots__ = ("data", "requires_grad", "_parents", "_vjp", "_jvp", "op", "name", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind in "biu" or arr.dtype == np.float16:
            arr = arr.astype(_DEFAULT_DTYPE)
        elif arr.dtype.kind == "f" and not isinstance(data, np.ndarray):
            arr = arr.astype(_DEFAULT_DTYPE)
        elif arr.dtype.kind == "c" and not isinstance(data, np.ndarray):
            arr = arr.astype(_complex_dtype(_DEFAULT_DTYPE))
        if arr.dtype.kind not in "fc":
            raise TypeError(f"unsupported tensor dtype {arr.dtype}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._jvp = None
        self.op = "leaf"
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_complex(self) -> bool:
        return self.data.dtype.kind == "c"

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self):
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    @property
    def real(self):
        return real(self)

    @property
    def imag(self):
        return imag(self)


class GradientMap(dict):
    """Gradients keyed by parameter tensor identity."""

    def __init__(self):
        super().__init__()
        self._tensors: dict[int, Tensor] = {}

    def __getitem__(self, key: Tensor) -> np.ndarray:
        return super().__getitem__(id(key))

    def __setitem__(self, key: Tensor, value) -> None:
        self._tensors[id(key)] = key
        super().__setitem__(id(key), value)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def __contains__(self, key) -> bool:
        return super().__contains__(id(key))

    def get(self, key, default=None):
        return super().get(id(key), default)


def tensor(data, requires_grad: bool = False, dtype=None, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)


def zeros(shape, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE))


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if like is not None:
        # constants follow the precision of the tensor they combine with
        rd = _real_dtype(like.dtype)
        arr = arr.astype(_complex_dtype(rd) if arr.dtype.kind == "c" else rd, copy=False)
    return Tensor(arr)


def record(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable | None, jvp: Callable | None,
           op: str) -> Tensor:
    """Create the output tensor of a primitive and attach its graph node.

    ``vjp(g)`` returns one cotangent (ndarray or None) per parent.
    ``jvp(tangents)`` receives one tangent (Tensor or None) per parent and
    returns a Tensor or None. Pass ``jvp=None`` for primitives without a
    tangent rule.
    """
    out = Tensor(data)
    out.op = op
    if _RECORDING:
        out._parents = tuple(parents)
        out._vjp = vjp
        out._jvp = jvp
        out.requires_grad = any(p.requires_grad for p in parents)
    return out


# ---------------------------------------------------------------------------
# helpers


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...], dtype: np.dtype) -> np.ndarray:
    if g.shape != shape:
        extra = g.ndim - len(shape)
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    if dtype.kind == "f" and g.dtype.kind == "c":
        g = g.real
    return g.astype(dtype, copy=False)


def _tadd(a: Tensor | None, b: Tensor | None) -> Tensor | None:
    if a is None:
        return b
    if b is None:
        return a
    return add(a, b)


def _conj(x: np.ndarray) -> np.ndarray:
    return np.conj(x) if np.iscomplexobj(x) else x


def _is_64(*arrs: np.ndarray) -> bool:
    return any(_real_dtype(a.dtype) == np.float64 for a in arrs)


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a, b, "add")

    def vjp(g):
        return _unbroadcast(g, a.shape, a.dtype), _unbroadcast(g, b.shape, b.dtype)

    def jvp(t):
        return _tadd(t[0], t[1])

    return record(a.data + b.data, (a, b), vjp, jvp, "add")


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a, b, "sub")

    def vjp(g):
        return _unbroadcast(g, a.shape, a.dtype), _unbroadcast(-g, b.shape, b.dtype)

    def jvp(t):
        if t[1] is None:
            return t[0]
        return neg(t[1]) if t[0] is None else sub(t[0], t[1])

    return record(a.data - b.data, (a, b), vjp, jvp, "sub")


def neg(a) -> Tensor:
    a = _lift(a)
    return record(-a.data, (a,), lambda g: (-g,), lambda t: neg(t[0]), "neg")


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a, b, "mul")

    def vjp(g):
        ga = _unbroadcast(g * _conj(b.data), a.shape, a.dtype) if a.requires_grad else None
        gb = _unbroadcast(g * _conj(a.data), b.shape, b.dtype) if b.requires_grad else None
        return ga, gb

    def jvp(t):
        ta = mul(t[0], b) if t[0] is not None else None
        tb = mul(a, t[1]) if t[1] is not None else None
        return _tadd(ta, tb)

    return record(a.data * b.data, (a, b), vjp, jvp, "mul")


def div(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a, b, "div")
    if _is_64(a.data, b.data) and np.any(b.data == 0):
        raise DomainError(f"div: zero denominator in 64-bit mode (shape {b.shape})")
    out_data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / _conj(b.data), a.shape, a.dtype) if a.requires_grad else None
        gb = (_unbroadcast(-g * _conj(out_data / b.data), b.shape, b.dtype)
              if b.requires_grad else None)
        return ga, gb

    def jvp(t):
        num = t[0]
        if t[1] is not None:
            # rebuilt rather than captured: a closure over the output would form a reference cycle
            q = div(a, b)
            num = sub(num, mul(q, t[1])) if num is not None else neg(mul(q, t[1]))
        return div(num, b)

    return record(out_data, (a, b), vjp, jvp, "div")


def square(a) -> Tensor:
    a = _lift(a)
    return record(a.data * a.data, (a,), lambda g: (g * _conj(2 * a.data),),
                  lambda t: mul(t[0], mul(a, 2.0)), "square")


def sqrt(a) -> Tensor:
    a = _lift(a)
    if a.is_complex:
        raise DomainError("sqrt: complex input not supported")
    if np.any(a.data < 0):
        raise DomainError("sqrt: negative input")
    out_data = np.sqrt(a.data)

    def vjp(g):
        with np.errstate(divide="ignore"):
            return (g * 0.5 / out_data,)

    def jvp(t):
        return div(t[0], mul(sqrt(a), 2.0))

    return record(out_data, (a,), vjp, jvp, "sqrt")


def absolute(a) -> Tensor:
    """Elementwise absolute value; complex modulus for complex input."""
    a = _lift(a)
    out_data = np.abs(a.data)
    if a.is_complex:
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(out_data > 0, a.data / np.where(out_data > 0, out_data, 1), 0)

        def jvp(t):
            return real(mul(t[0], Tensor(np.conj(unit))))
    else:
        unit = np.sign(a.data)

        def jvp(t):
            return mul(t[0], Tensor(unit))

    return record(out_data, (a,), lambda g: (g * unit,), jvp, "abs")


def abs2(a) -> Tensor:
    """Squared modulus ``re**2 + im**2`` (plain square for real input)."""
    a = _lift(a)
    if a.is_complex:
        out_data = a.data.real ** 2 + a.data.imag ** 2

        def jvp(t):
            return mul(real(mul(t[0], conj(a))), 2.0)
    else:
        out_data = a.data * a.data

        def jvp(t):
            return mul(t[0], mul(a, 2.0))

    return record(out_data, (a,), lambda g: (2 * g * a.data,), jvp, "abs2")


def relu(a) -> Tensor:
    # derivative at exactly 0 is taken as 0
    a = _lift(a)
    if a.is_complex:
        raise DomainError("relu: complex input not supported")
    mask = (a.data > 0).astype(a.dtype)
    return record(a.data * mask, (a,), lambda g: (g * mask,),
                  lambda t: mul(t[0], Tensor(mask)), "relu")


def pack_complex(re, im) -> Tensor:
    """Combine two real tensors into one complex tensor ``re + 1j*im``."""
    re = _lift(re, im if isinstance(im, Tensor) else None)
    im = _lift(im, re)
    if re.is_complex or im.is_complex:
        raise DomainError("pack_complex: inputs must be real")
    if re.shape != im.shape:
        raise DimensionError(f"pack_complex: shapes {re.shape} and {im.shape} differ")
    cdt = _complex_dtype(np.result_type(re.dtype, im.dtype))
    data = np.empty(re.shape, dtype=cdt)
    data.real = re.data
    data.imag = im.data

    def vjp(g):
        return g.real.astype(re.dtype, copy=False), g.imag.astype(im.dtype, copy=False)

    def jvp(t):
        tr = t[0] if t[0] is not None else zeros(re.shape, re.dtype)
        ti = t[1] if t[1] is not None else zeros(im.shape, im.dtype)
        return pack_complex(tr, ti)

    return record(data, (re, im), vjp, jvp, "pack_complex")


def real(a) -> Tensor:
    a = _lift(a)
    if not a.is_complex:
        return a
    return record(np.ascontiguousarray(a.data.real), (a,), lambda g: (g.astype(a.dtype),),
                  lambda t: real(t[0]), "real")


def imag(a) -> Tensor:
    a = _lift(a)
    if not a.is_complex:
        return record(np.zeros_like(a.data), (a,), lambda g: (None,), lambda t: None, "imag")
    return record(np.ascontiguousarray(a.data.imag), (a,), lambda g: (1j * g,),
                  lambda t: imag(t[0]), "imag")


def conj(a) -> Tensor:
    a = _lift(a)
    if not a.is_complex:
        return a
    return record(np.conj(a.data), (a,), lambda g: (np.conj(g),), lambda t: conj(t[0]), "conj")


# ---------------------------------------------------------------------------
# reductions and linear algebra


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = _lift(a)
    axes = _norm_axis(axis, a.ndim)
    out_data = np.asarray(a.data.sum(axis=axes, keepdims=keepdims))

    def vjp(g):
        g = np.asarray(g)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return record(out_data, (a,), vjp, lambda t: sum(t[0], axis=axis, keepdims=keepdims), "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def vjp(g):
        ga = _unbroadcast(g @ _conj(b.data).T, a.shape, a.dtype) if a.requires_grad else None
        gb = _unbroadcast(_conj(a.data).T @ g, b.shape, b.dtype) if b.requires_grad else None
        return ga, gb

    def jvp(t):
        ta = matmul(t[0], b) if t[0] is not None else None
        tb = matmul(a, t[1]) if t[1] is not None else None
        return _tadd(ta, tb)

    return record(a.data @ b.data, (a, b), vjp, jvp, "matmul")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_lift(t) for t in tensors]
    if not ts:
        raise ContractError("concat: empty input")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    ax = axis % data.ndim
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def vjp(g):
        parts = np.split(g, bounds, axis=ax)
        return tuple(_unbroadcast(p, t.shape, t.dtype) for p, t in zip(parts, ts))

    def jvp(tt):
        if all(t is None for t in tt):
            return None
        return concat([t if t is not None else zeros(p.shape, p.dtype) for t, p in zip(tt, ts)], axis=ax)

    return record(data, ts, vjp, jvp, "concat")


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return record(data, (a,), lambda g: (g.reshape(a.shape),), lambda t: reshape(t[0], shape), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = _lift(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),),
                  lambda t: transpose(t[0], axes), "transpose")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def getitem(a, idx) -> Tensor:
    """Slicing and fancy indexing; repeated indices accumulate in the adjoint."""
    a = _lift(a)
    data = a.data[idx]
    basic = _is_basic_index(idx)

    def vjp(g):
        full = np.zeros(a.shape, dtype=np.result_type(a.dtype, g.dtype))
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return record(np.array(data, copy=True), (a,), vjp, lambda t: getitem(t[0], idx), "getitem")


def gather(table, index) -> Tensor:
    """Rows of ``table`` selected by an integer ``index`` array (``table[index]``)."""
    table = _lift(table)
    index = np.asarray(index)
    if index.dtype.kind not in "iu":
        raise ContractError("gather: index must be integer")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise DomainError(f"gather: index out of range for table of {table.shape[0]} rows")

    def vjp(g):
        return (_scatter_rows(g, index, table.shape, table.dtype),)

    return record(table.data[index], (table,), vjp, lambda t: gather(t[0], index), "gather")


def _scatter_rows(values: np.ndarray, index: np.ndarray, shape, dtype) -> np.ndarray:
    n = shape[0]
    flat_idx = index.reshape(-1)
    vals = values.reshape(flat_idx.size, -1)
    out = np.zeros((n, vals.shape[1]), dtype=np.result_type(dtype, values.dtype))
    for j in range(vals.shape[1]):
        col = vals[:, j]
        if np.iscomplexobj(col):
            out[:, j] = (np.bincount(flat_idx, col.real, minlength=n)
                         + 1j * np.bincount(flat_idx, col.imag, minlength=n))
        else:
            out[:, j] = np.bincount(flat_idx, col, minlength=n)
    return out.reshape(shape).astype(dtype, copy=False)


def scatter_add(values, index, size: int) -> Tensor:
    """Sum rows of ``values`` into ``size`` output rows at positions ``index``."""
    values = _lift(values)
    index = np.asarray(index)
    if index.shape != values.shape[: index.ndim]:
        raise DimensionError(f"scatter_add: index shape {index.shape} vs values shape {values.shape}")
    if index.size and (index.min() < 0 or index.max() >= size):
        raise DomainError(f"scatter_add: index out of range for {size} rows")
    out_shape = (size,) + values.shape[index.ndim:]
    data = _scatter_rows(values.data, index, out_shape, values.dtype)

    def vjp(g):
        return (g[index],)

    return record(data, (values,), vjp, lambda t: scatter_add(t[0], index, size), "scatter_add")


# ---------------------------------------------------------------------------
# graph traversal


def _topo_order(root: Tensor, only_grad: bool) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and (p.requires_grad or not only_grad):
                stack.append((p, False))
    return order


def backward(loss: Tensor, wrt: Iterable[Tensor] | None = None) -> GradientMap:
    """Gradients of a real scalar ``loss``.

    Returns a fresh :class:`GradientMap` on every call; nothing is cached on the
    tensors, so repeated calls on one graph give identical results. With
    ``wrt`` given, every listed tensor gets an entry (exact zeros when the loss
    does not depend on it); otherwise every reachable leaf requiring grad does.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward: loss must be a Tensor")
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss.is_complex:
        raise ContractError("backward: loss must be real")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones(loss.shape, dtype=loss.dtype)
        for node in reversed(_topo_order(loss, only_grad=True)):
            g = grads.pop(id(node), None) if node._parents else grads.get(id(node))
            if node.is_leaf:
                leaves[id(node)] = node
                continue
            if g is None:
                continue
            pgrads = node._vjp(g)
            for p, pg in zip(node._parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = np.array(pg, dtype=p.dtype, copy=True) if pg.dtype != p.dtype else pg
    out = GradientMap()
    if wrt is None:
        for key, leaf in leaves.items():
            out[leaf] = np.array(grads.get(key, np.zeros(leaf.shape, leaf.dtype)), dtype=leaf.dtype)
    else:
        for t in wrt:
            g = grads.get(id(t))
            out[t] = np.zeros(t.shape, t.dtype) if g is None else np.array(g, dtype=t.dtype)
    return out


def directional_derivative(f, coords: Tensor, axis) -> Tensor:
    """Derivative of a recorded evaluation with respect to ``coords`` along a direction.

    ``f`` is either the output tensor of a computation that consumed
    ``coords``, or a callable that builds it from ``coords``. ``axis`` is a
    column index of ``coords`` (one-hot direction) or a direction array of the
    same shape as ``coords``.

    Tangents are propagated forward through recorded Tensor operations, so
    the result stays differentiable with respect to any parameter it depends on.
    """
    if not isinstance(coords, Tensor):
        raise ContractError("directional_derivative: coords must be a Tensor")
    out = f(coords) if callable(f) else f
    if isinstance(axis, (int, np.integer)):
        if coords.ndim != 2 or not 0 <= axis < coords.shape[1]:
            raise DomainError(f"directional_derivative: axis {axis} invalid for coords {coords.shape}")
        seed = np.zeros(coords.shape, dtype=_real_dtype(coords.dtype))
        seed[:, axis] = 1
    else:
        seed = np.asarray(axis, dtype=_real_dtype(coords.dtype))
        if seed.shape != coords.shape:
            raise DimensionError(f"directional_derivative: direction {seed.shape} vs coords {coords.shape}")
    tangents: dict[int, Tensor | None] = {id(coords): Tensor(seed)}
    for node in _topo_order(out, only_grad=False):
        if id(node) in tangents:
            continue
        if node.is_leaf:
            tangents[id(node)] = None
            continue
        ts = tuple(tangents.get(id(p)) for p in node._parents)
        if all(t is None for t in ts):
            tangents[id(node)] = None
            continue
        if node._jvp is None:
            raise UnsupportedOperationError(f"primitive '{node.op}' has no tangent rule")
        tangents[id(node)] = node._jvp(ts)
    result = tangents.get(id(out))
    if result is None:
        return zeros(out.shape, out.dtype)
    return result
