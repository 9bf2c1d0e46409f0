"""Reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run: each operation on Tensors records its parents and a
backward closure, and the monotonically increasing creation id gives the
tape order. backward() walks the nodes reachable from the loss exactly
once, in reverse creation order, so gradient accumulation order is fixed
and runs are reproducible. The graph is rebuilt on every forward pass.

Also provides the Adam optimizer and a central-finite-difference
gradient checker.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, StateError

_GRAD_ENABLED = True
_DEBUG_NAN = False


def set_debug_nan(enabled: bool) -> None:
    """When on, every op output is checked for NaN/inf (slow; for debugging)."""
    global _DEBUG_NAN
    _DEBUG_NAN = bool(enabled)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """N-d array plus optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_id", "_spent")
    _ids = itertools.count()

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._op = ""
        self._id = next(Tensor._ids)
        self._spent = False

    # -- basic introspection -------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operators -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def mean(self, axis=None):
        return mean(self, axis)

    def sum(self, axis=None):
        return tsum(self, axis)

    def backward(self):
        backward(self)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if dtype is not None:
        arr = arr.astype(dtype)
    return Tensor(arr)


def _node(data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    """Create a graph node; collapses to a constant when grads are off."""
    if _DEBUG_NAN and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op {op!r}")
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data)
    if needs:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the pre-broadcast operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into .grad for every tensor reachable from loss.

    loss must be a scalar produced by recorded ops; calling backward a
    second time on the same graph raises StateError (stale tape).
    """
    if not isinstance(loss, Tensor):
        raise ValueError("backward expects a Tensor")
    if loss.size != 1:
        raise ValueError("backward requires a scalar loss")
    if loss._backward is None:
        raise StateError("loss was not produced under an active tape")
    if loss._spent:
        raise StateError("stale tape: backward already ran on this graph")

    # Collect interior nodes reachable from the loss.
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen or t._backward is None:
            continue
        seen.add(id(t))
        nodes.append(t)
        stack.extend(t._parents)

    loss.grad = np.ones_like(loss.data)
    for node in sorted(nodes, key=lambda t: t._id, reverse=True):
        node._backward(node.grad)
        node._spent = True


# --- arithmetic -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), back, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def back(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, (a, b), back, "div")


def matmul(a, b) -> Tensor:
    """a @ b with 2-D b (weight matrix); a may carry leading batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2:
        raise ShapeError("matmul expects a 2-D right operand")
    a_was_1d = a.ndim == 1
    adata = a.data[None, :] if a_was_1d else a.data
    out = adata @ b.data
    if a_was_1d:
        out = out[0]

    def back(g):
        g2 = g[None, :] if a_was_1d else g
        ga = g2 @ b.data.T
        _accumulate(a, ga[0] if a_was_1d else ga)
        k = b.data.shape[0]
        _accumulate(b, adata.reshape(-1, k).T @ g2.reshape(-1, b.data.shape[1]))

    return _node(out, (a, b), back, "matmul")


# --- shape ops --------------------------------------------------------------


def take(a: Tensor, idx) -> Tensor:
    """Basic (slice/int/tuple) indexing; gradient scatters back."""
    a = as_tensor(a)
    out = a.data[idx]

    def back(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[idx] += g

    return _node(out, (a,), back, "take")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _node(out, tuple(tensors), back, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in map(as_tensor, tensors)]
    return concat(expanded, axis=axis)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    out = a.data.reshape(shape)

    def back(g):
        _accumulate(a, g.reshape(old))

    return _node(out, (a,), back, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    out = np.transpose(a.data, axes)

    def back(g):
        _accumulate(a, np.transpose(g, inverse))

    return _node(out, (a,), back, "transpose")


# --- reductions -------------------------------------------------------------


def mean(a: Tensor, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        if axis is None:
            ga = np.broadcast_to(g, a.data.shape) / count
        else:
            ga = np.broadcast_to(np.expand_dims(g, axis), a.data.shape) / count
        _accumulate(a, ga.astype(a.data.dtype, copy=False))

    return _node(out, (a,), back, "mean")


def tsum(a: Tensor, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def back(g):
        if axis is None:
            ga = np.broadcast_to(g, a.data.shape)
        else:
            ga = np.broadcast_to(np.expand_dims(g, axis), a.data.shape)
        _accumulate(a, ga.astype(a.data.dtype, copy=False))

    return _node(out, (a,), back, "sum")


def reduce_max(a: Tensor, axis: int):
    """Max along axis plus argmax indices; gradient flows to the argmax only.

    Ties break to the lowest index (numpy argmax convention).
    """
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def back(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
            _accumulate(a, ga)

    return _node(out, (a,), back, "reduce_max"), idx


# --- elementwise nonlinearities ---------------------------------------------


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def back(g):
        _accumulate(a, g * (1.0 - out * out))

    return _node(out, (a,), back, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # overflow-safe logistic

    def back(g):
        _accumulate(a, g * out * (1.0 - out))

    return _node(out, (a,), back, "sigmoid")


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def back(g):
        _accumulate(a, g * (a.data > 0))  # subgradient 0 at 0

    return _node(out, (a,), back, "relu")


def absolute(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.abs(a.data)

    def back(g):
        _accumulate(a, g * np.sign(a.data))  # subgradient 0 at 0

    return _node(out, (a,), back, "abs")


def softplus(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def back(g):
        _accumulate(a, g * (0.5 * (1.0 + np.tanh(0.5 * a.data))))

    return _node(out, (a,), back, "softplus")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def back(g):
        _accumulate(a, g * out)

    return _node(out, (a,), back, "exp")


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def back(g):
        _accumulate(a, g / a.data)

    return _node(out, (a,), back, "log")


def square(a: Tensor) -> Tensor:
    return mul(a, a)


# --- convolution ------------------------------------------------------------


def conv1d(x, w, mode: str = "valid") -> Tensor:
    """Sliding correlation of 1-D x with 1-D kernel w: y[n] = sum_k w[k] x[n+k].

    mode 'valid' yields len(x)-len(w)+1 outputs; 'full' zero-pads len(w)-1
    on both sides.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 1 or w.ndim != 1:
        raise ShapeError("conv1d expects 1-D operands")
    if mode not in ("valid", "full"):
        raise ValueError("mode must be 'valid' or 'full'")
    k = w.data.shape[0]
    xdata = np.pad(x.data, k - 1) if mode == "full" else x.data
    if xdata.shape[0] < k:
        raise ShapeError("kernel longer than (padded) input")
    out = np.correlate(xdata, w.data, mode="valid")

    def back(g):
        gx = np.convolve(g, w.data, mode="full")
        if mode == "full":
            gx = gx[k - 1 : k - 1 + x.data.shape[0]]
        _accumulate(x, gx)
        _accumulate(w, np.correlate(xdata, g, mode="valid"))

    return _node(out, (x, w), back, "conv1d")


# --- optimizer --------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and step counter."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam with bias correction; zeroes parameter grads after each step."""

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def step(self) -> None:
        s = self.state
        for p in self.params:
            if p.grad is None:
                raise StateError("adam step with missing gradient (run backward first)")
        s.t += 1
        c1 = 1.0 - s.beta1**s.t
        c2 = 1.0 - s.beta2**s.t
        for i, p in enumerate(self.params):
            g = p.grad
            s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g
            s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * (g * g)
            m_hat = s.m[i] / c1
            v_hat = s.v[i] / c2
            p.data -= (s.lr * m_hat / (np.sqrt(v_hat) + s.eps)).astype(p.data.dtype, copy=False)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# --- gradient checking --------------------------------------------------------


def finite_diff_check(f, point: Tensor, h: float = 1e-5) -> float:
    """Compare tape gradients of scalar f(point) against central differences.

    Returns the worst relative error with denominator max(|a|,|n|,1e-8).
    f must be smooth near the point (run in float64); paths through the
    quantized-slot straight-through estimator will report the expected
    STE discrepancy rather than a true gradient error.
    """
    point.requires_grad = True
    point.grad = None
    out = f(point)
    backward(out)
    analytic = point.grad.reshape(-1).copy()

    flat = point.data.reshape(-1)
    numeric = np.zeros_like(analytic)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(point).data)
            flat[i] = orig - h
            fm = float(f(point).data)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
