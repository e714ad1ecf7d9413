"""Dense float64 tensors with a reverse-mode autodiff tape.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient. Outside a tape nothing is recorded, which
is how inference runs without graph overhead::

    with Tape() as tape:
        loss = (x @ w).sum()
        tape.backward(loss)
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_TAPES: list["Tape"] = []


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf from its inputs."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"expected a single-element tensor, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    # operator sugar
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    __slots__ = ("inputs", "output", "backward_fn", "op")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: Callable):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; creation order is a topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        self.nodes.clear()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``.grad`` of every grad-requiring tensor reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers, so call ``zero_grad``
    on parameters between steps.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    produced = {id(n.output): i for i, n in enumerate(tape.nodes)}
    if id(loss) not in produced:
        raise ValueError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes[: produced[id(loss)] + 1]):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in produced:
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
            else:
                t.grad = gi.copy() if t.grad is None else t.grad + gi
        # intermediate outputs keep their gradient too, handy for inspection
        if node.output.requires_grad:
            node.output.grad = g if node.output.grad is None else node.output.grad + g


def grad_enabled() -> bool:
    return bool(_TAPES)


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


def _make(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    _finite(out, op)
    needs = bool(_TAPES) and any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, requires_grad=needs)
    if needs:
        _TAPES[-1].record(Node(op, inputs, result, backward_fn))
    return result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make("relu", np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh-approximated GELU."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make("gelu", out, (a,), bw)


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    """Branch-stable logistic function; never evaluates exp of a positive number.

    Inputs are clamped to +-700 so the lower tail stays a positive normal
    number, and the upper tail is capped one ulp below 1: the result lies
    strictly inside (0, 1) for every finite input.
    """
    z = np.clip(np.asarray(z, dtype=DTYPE), -_SIGMOID_CLAMP, _SIGMOID_CLAMP)
    e = np.exp(-np.abs(z))
    return np.minimum(np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)), _BELOW_ONE)


_SIGMOID_CLAMP = 700.0
_BELOW_ONE = np.nextafter(1.0, 0.0)


def sigmoid(z) -> Tensor:
    z = as_tensor(z)
    out = sigmoid_array(z.data)
    return _make("sigmoid", out, (z,), lambda g: (g * out * (1.0 - out),))


# reductions and shape ops

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", np.asarray(out, dtype=DTYPE), (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make("transpose", np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inv),))


def swap_last(a) -> Tensor:
    axes = list(range(as_tensor(a).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def take_rows(table, ids) -> Tensor:
    """Gather rows of a 2-D table by integer ids (embedding lookup)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _make("take_rows", table.data[ids], (table,), bw)


def select_positions(x, positions) -> Tensor:
    """Pick ``x[b, positions[b], :]`` for each batch row of a 3-D tensor."""
    x = as_tensor(x)
    pos = np.asarray(positions, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def bw(g):
        full = np.zeros_like(x.data)
        full[rows, pos] = g
        return (full,)

    return _make("select_positions", x.data[rows, pos], (x,), bw)


# linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading batch axes.

    Gradients: dA = dC @ B^T, dB = A^T @ dC, summed over broadcast axes.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != (b.shape[-2] if b.ndim > 1 else b.shape[0]):
        raise ShapeError(f"matmul: cannot multiply shapes {list(a.shape)} and {list(b.shape)}")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {list(a.shape)} and {list(b.shape)}")
    if b.ndim == 2 and a.ndim > 2:
        # fold the batch axes into rows so a single GEMM does the work
        k, n = b.shape
        a2 = a.data.reshape(-1, k)
        out = (a2 @ b.data).reshape(a.shape[:-1] + (n,))

        def bw(g):
            g2 = g.reshape(-1, n)
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _make("matmul", out, (a, b), bw)
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _make("matmul", out, (a, b), bw)


# normalisation and probability maps

def softmax_array(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows(x, mask=None) -> Tensor:
    """Softmax over the last axis after max subtraction.

    ``mask`` (boolean, broadcastable to ``x``) marks admissible entries; the
    rest receive -inf before exponentiation. Every row needs at least one
    admissible entry.
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError("softmax_rows needs a non-empty last dimension")
    out = softmax_array(x.data, mask)

    def bw(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return _make("softmax", out, (x,), bw)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    m = np.max(x.data, axis=-1, keepdims=True)
    lse = m + np.log(np.sum(np.exp(x.data - m), axis=-1, keepdims=True))
    out = x.data - lse

    def bw(g):
        p = np.exp(out)
        return (g - p * np.sum(g, axis=-1, keepdims=True),)

    return _make("log_softmax", out, (x,), bw)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"layer_norm: gain {list(gain.shape)} / bias {list(bias.shape)} "
                         f"do not match last dimension {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return (gx, (g * xhat).sum(axis=lead), g.sum(axis=lead))

    return _make("layer_norm", out, (x, gain, bias), bw)


def bce_with_logits(logits, targets, weights=None) -> Tensor:
    """Mean binary cross-entropy taken straight from logits.

    Per cell: ``w * (max(x, 0) - x*t + log1p(exp(-|x|)))``, algebraically the
    same as ``-w[t log s(x) + (1-t) log(1-s(x))]`` without forming s(x).
    ``weights`` broadcast against the last (label) axis.
    """
    x = as_tensor(logits)
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=DTYPE)
    if t.shape != x.shape:
        raise ShapeError(f"bce_with_logits: logits {list(x.shape)} vs targets {list(t.shape)}")
    if np.any(t < 0) or np.any(t > 1) or not np.isfinite(t).all():
        raise ValueError("bce_with_logits: targets must lie in [0, 1]")
    w = np.ones(x.shape[-1:] if x.ndim else (), dtype=DTYPE) if weights is None \
        else np.asarray(weights, dtype=DTYPE)
    if np.any(w <= 0):
        raise ValueError("bce_with_logits: label weights must be positive")
    xd = x.data
    cells = w * (np.maximum(xd, 0.0) - xd * t + np.log1p(np.exp(-np.abs(xd))))
    n = cells.size
    out = np.asarray(cells.sum() / n, dtype=DTYPE)

    def bw(g):
        return (g * w * (sigmoid_array(xd) - t) / n,)

    return _make("bce_with_logits", out, (x,), bw)


def cross_entropy(logits, classes) -> Tensor:
    """Mean softmax cross-entropy over rows of ``logits`` for integer ``classes``."""
    logits = as_tensor(logits)
    classes = np.asarray(classes, dtype=np.int64)
    lp = log_softmax(logits)
    onehot = np.zeros(logits.shape, dtype=DTYPE)
    onehot[np.arange(len(classes)), classes] = 1.0
    return neg(tsum(lp * onehot)) * (1.0 / len(classes))
