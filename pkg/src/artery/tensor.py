"""Dense float64 tensors with reverse-mode automatic differentiation.

A small tape engine sized for graphs of a few hundred operations.
Every operation whose inputs require gradients appends one entry to the
active tape; ``backward`` replays the tape once in reverse and then
marks it consumed, so a second backward without a fresh forward pass is
an error.  Broadcasting is deliberately restricted to scalar-vs-tensor
and identical shapes.

The engine is single-threaded: one module-global tape is active at a
time.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import NumericError, ShapeError

# Negative-side slope shared by every leaky ReLU in the package.
LEAKY_SLOPE = 0.2

# Forward results are checked for NaN/inf unless this is switched off.
CHECK_FINITE = True


class Tape:
    """Ordered record of operations from one forward pass."""

    __slots__ = ("entries", "consumed")

    def __init__(self):
        self.entries = []
        self.consumed = False


class _Entry:
    __slots__ = ("inputs", "output", "grad_fn")

    def __init__(self, inputs, output, grad_fn):
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


_ACTIVE = Tape()
_RECORDING = True


class Tensor:
    """Float64 array plus an optional gradient of the same shape."""

    __slots__ = ("values", "requires_grad", "grad", "name", "_tape")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def numpy(self):
        """Copy of the values, detached from the graph."""
        return self.values.copy()

    def detach(self):
        return Tensor(self.values, requires_grad=False)

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # Python scalars are wrapped; anything else must already be a Tensor.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def parameter(values, name=None):
    """Leaf tensor that accumulates gradients."""
    return Tensor(values, requires_grad=True, name=name)


def constant(values):
    return Tensor(values, requires_grad=False)


def _wrap(x):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float)):
        return Tensor(float(x))
    raise TypeError(f"expected Tensor or scalar, got {type(x).__name__}")


@contextlib.contextmanager
def no_grad():
    """Disable tape recording, e.g. for validation passes."""
    global _RECORDING
    prev = _RECORDING
    _RECORDING = False
    try:
        yield
    finally:
        _RECORDING = prev


def _record(op, inputs, out_values, grad_fn):
    global _ACTIVE
    if CHECK_FINITE and not np.all(np.isfinite(out_values)):
        raise NumericError(f"non-finite values produced by '{op}'")
    needs = _RECORDING and any(t.requires_grad for t in inputs)
    out = Tensor(out_values, requires_grad=needs)
    if needs:
        if _ACTIVE.consumed:
            _ACTIVE = Tape()
        _ACTIVE.entries.append(_Entry(tuple(inputs), out, grad_fn))
        out._tape = _ACTIVE
    return out


def _unbroadcast(g, shape):
    """Reduce a gradient back to the (possibly scalar) operand shape."""
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def _check_elementwise(op, a, b):
    if a.values.shape == b.values.shape:
        return
    if a.values.size == 1 or b.values.size == 1:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.values.shape} and {b.values.shape}")


# ---------------------------------------------------------------------------
# elementwise operations
# ---------------------------------------------------------------------------


def add(a, b):
    _check_elementwise("add", a, b)
    out = a.values + b.values

    def grad_fn(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _record("add", (a, b), out, grad_fn)


def sub(a, b):
    _check_elementwise("sub", a, b)
    out = a.values - b.values

    def grad_fn(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

    return _record("sub", (a, b), out, grad_fn)


def mul(a, b):
    _check_elementwise("mul", a, b)
    out = a.values * b.values
    av, bv = a.values, b.values

    def grad_fn(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _record("mul", (a, b), out, grad_fn)


def div(a, b):
    _check_elementwise("div", a, b)
    if np.any(b.values == 0.0):
        raise NumericError("div: division by exact zero")
    out = a.values / b.values
    av, bv = a.values, b.values

    def grad_fn(g):
        return (
            _unbroadcast(g / bv, av.shape),
            _unbroadcast(-g * av / (bv * bv), bv.shape),
        )

    return _record("div", (a, b), out, grad_fn)


def neg(a):
    return _record("neg", (a,), -a.values, lambda g: (-g,))


def relu(a):
    # Subgradient 1 at exactly 0, so zero-initialized layers feeding a
    # relu still receive gradient on the first step.
    out = np.maximum(a.values, 0.0)
    mask = a.values >= 0.0

    def grad_fn(g):
        return (g * mask,)

    return _record("relu", (a,), out, grad_fn)


def leaky_relu(a, slope=LEAKY_SLOPE):
    pos = a.values > 0.0
    out = np.where(pos, a.values, slope * a.values)

    def grad_fn(g):
        return (g * np.where(pos, 1.0, slope),)

    return _record("leaky_relu", (a,), out, grad_fn)


def exp(a):
    # Overflow produces inf, which the finiteness check converts to an error.
    with np.errstate(over="ignore"):
        out = np.exp(a.values)

    def grad_fn(g):
        return (g * out,)

    return _record("exp", (a,), out, grad_fn)


def sqrt(a):
    if np.any(a.values < 0.0):
        raise NumericError("sqrt: negative operand")
    out = np.sqrt(a.values)

    def grad_fn(g):
        return (g * 0.5 / out,)

    return _record("sqrt", (a,), out, grad_fn)


def softplus(a):
    # log(1 + e^x) written to avoid overflow for large |x|.
    av = a.values
    out = np.maximum(av, 0.0) + np.log1p(np.exp(-np.abs(av)))
    sig = 1.0 / (1.0 + np.exp(-np.clip(av, -500.0, 500.0)))

    def grad_fn(g):
        return (g * sig,)

    return _record("softplus", (a,), out, grad_fn)


# ---------------------------------------------------------------------------
# linear algebra and reductions
# ---------------------------------------------------------------------------


def matmul(a, b):
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(
            f"matmul: operands must be 2-D, got {a.values.shape} and {b.values.shape}"
        )
    if a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.values.shape} @ {b.values.shape}"
        )
    out = a.values @ b.values
    av, bv = a.values, b.values

    def grad_fn(g):
        return g @ bv.T, av.T @ g

    return _record("matmul", (a, b), out, grad_fn)


def tsum(a, axis=None, keepdims=False):
    out = np.sum(a.values, axis=axis, keepdims=keepdims)
    shape = a.values.shape

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, shape).copy(),)

    return _record("sum", (a,), out, grad_fn)


def tmean(a, axis=None, keepdims=False):
    out = np.mean(a.values, axis=axis, keepdims=keepdims)
    shape = a.values.shape
    n = a.values.size if axis is None else shape[axis]

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g / n, shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge / n, shape).copy(),)

    return _record("mean", (a,), out, grad_fn)


def softmax(a, axis=-1):
    nd = a.values.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.values.shape}")
    shifted = a.values - np.max(a.values, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def grad_fn(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", (a,), out, grad_fn)


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no tensors given")
    out = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.values.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", tuple(tensors), out, grad_fn)


# ---------------------------------------------------------------------------
# row-structured operations used by graph layers
# ---------------------------------------------------------------------------


def gather_rows(a, index):
    """out[k] = a[index[k]] for a 2-D tensor."""
    idx = np.asarray(index, dtype=np.int64)
    n = a.values.shape[0]
    if np.any(idx < 0) or np.any(idx >= n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")
    out = a.values[idx]

    def grad_fn(g):
        acc = np.zeros_like(a.values)
        np.add.at(acc, idx, g)
        return (acc,)

    return _record("gather_rows", (a,), out, grad_fn)


def scatter_add_rows(a, index, num_rows):
    """out[i] = sum of a[k] over k with index[k] == i."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape[0] != a.values.shape[0]:
        raise ShapeError("scatter_add_rows: index length must match row count")
    if np.any(idx < 0) or np.any(idx >= num_rows):
        raise ShapeError(f"scatter_add_rows: index out of range for {num_rows} rows")
    out = np.zeros((num_rows,) + a.values.shape[1:], dtype=np.float64)
    np.add.at(out, idx, a.values)

    def grad_fn(g):
        return (g[idx],)

    return _record("scatter_add_rows", (a,), out, grad_fn)


def scale_rows(a, s):
    """Multiply each row of a (m x n) by the matching entry of s (m x 1)."""
    if s.values.shape != (a.values.shape[0], 1):
        raise ShapeError(
            f"scale_rows: scale shape {s.values.shape} does not match rows of {a.values.shape}"
        )
    out = a.values * s.values
    av, sv = a.values, s.values

    def grad_fn(g):
        return g * sv, np.sum(g * av, axis=1, keepdims=True)

    return _record("scale_rows", (a, s), out, grad_fn)


def add_rowvec(a, b):
    """Add a 1 x n row vector to every row of an m x n tensor."""
    if b.values.shape != (1, a.values.shape[1]):
        raise ShapeError(
            f"add_rowvec: bias shape {b.values.shape} does not match {a.values.shape}"
        )
    out = a.values + b.values

    def grad_fn(g):
        return g, np.sum(g, axis=0, keepdims=True)

    return _record("add_rowvec", (a, b), out, grad_fn)


def slice_cols(a, start, stop):
    if a.values.ndim != 2:
        raise ShapeError(f"slice_cols: expected 2-D tensor, got {a.values.shape}")
    out = a.values[:, start:stop].copy()
    shape = a.values.shape

    def grad_fn(g):
        acc = np.zeros(shape, dtype=np.float64)
        acc[:, start:stop] = g
        return (acc,)

    return _record("slice_cols", (a,), out, grad_fn)


def mse_loss(pred, target):
    """Mean squared error over all entries; shapes must match exactly."""
    if pred.values.shape != target.values.shape:
        raise ShapeError(
            f"mse_loss: shapes {pred.values.shape} and {target.values.shape} differ"
        )
    d = sub(pred, target)
    return tmean(mul(d, d))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(loss):
    """Populate .grad for every requires_grad tensor reachable from loss.

    Gradients are overwritten, not accumulated across calls.  The tape
    that produced ``loss`` is consumed; running backward on it twice
    raises.
    """
    if loss.values.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.values)
            return
        raise NumericError("backward: loss is not connected to any recorded operation")
    if tape.consumed:
        raise NumericError("backward: tape already consumed; rebuild the forward pass")
    tape.consumed = True

    grads = {id(loss): np.ones_like(loss.values)}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        entry.output.grad = g
        for t, gi in zip(entry.inputs, entry.grad_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            prev = grads.get(id(t))
            grads[id(t)] = gi if prev is None else prev + gi
    # Whatever is left in the map belongs to leaf tensors.
    for entry in tape.entries:
        for t in entry.inputs:
            g = grads.get(id(t))
            if g is not None:
                t.grad = g
