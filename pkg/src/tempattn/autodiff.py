"""Eager reverse-mode autodiff over numpy arrays.

Every operation is computed immediately and appended to a :class:`Tape`.
:func:`backward` walks the tape once in reverse.  Tensors are plain numpy
arrays; a :class:`Var` is a handle (tape, node id) with operator overloads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

OPS = frozenset({
    "leaf", "matmul", "add", "sub", "mul", "tanh", "sigmoid", "exp",
    "softmax", "log_softmax", "logsumexp", "concat", "slice", "embedding",
    "scalar_mul", "reshape", "sum", "transpose", "pick", "logaddexp",
})


class DimensionError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    attrs: dict = field(default_factory=dict)


class Tape:
    """Append-only record of operations.

    With ``grad=False`` nothing but the newest values are kept, which is
    what decoding wants.
    """

    def __init__(self, dtype=np.float64, grad: bool = True):
        self.dtype = np.dtype(dtype)
        self.grad = grad
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, name: str | None = None) -> "Var":
        arr = np.asarray(value, dtype=self.dtype)
        _check_finite("leaf", arr)
        return Var(self, self._append(Node("leaf", (), arr, {"name": name})))

    const = leaf

    def value(self, i: int) -> np.ndarray:
        return self.nodes[i].value

    def _append(self, node: Node) -> int:
        if not self.grad and node.op != "leaf":
            # keep the list short; inputs are never needed again
            node.inputs = ()
            node.attrs = {}
        self.nodes.append(node)
        return len(self.nodes) - 1

    def record(self, op: str, inputs: Sequence[int], **attrs) -> int:
        if op not in OPS or op == "leaf":
            raise ValueError(f"unknown op {op!r}")
        n = len(self.nodes)
        for i in inputs:
            if not 0 <= i < n:
                raise ValueError(f"{op}: input id {i} not on tape")
        out = _FORWARD[op]([self.nodes[i].value for i in inputs], attrs)
        _check_finite(op, out)
        return self._append(Node(op, tuple(inputs), out, attrs))


def _check_finite(op, arr):
    if not np.isfinite(arr).all():
        raise NumericError(f"{op}: non-finite output")


def _shapes_err(op, *arrs):
    return DimensionError(f"{op}: incompatible shapes " + " and ".join(str(a.shape) for a in arrs))


# ---------------------------------------------------------------------------
# forward rules: (values, attrs) -> output

def _binary(op, ufunc, a, b):
    try:
        return ufunc(a, b)
    except ValueError:
        raise _shapes_err(op, a, b) from None


def _f_matmul(v, attrs):
    a, b = v
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise _shapes_err("matmul", a, b)
    return a @ b


def _f_add(v, attrs):
    return _binary("add", np.add, v[0], v[1])


def _f_sub(v, attrs):
    return _binary("sub", np.subtract, v[0], v[1])


def _f_mul(v, attrs):
    return _binary("mul", np.multiply, v[0], v[1])


def _f_tanh(v, attrs):
    return np.tanh(v[0])


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _f_sigmoid(v, attrs):
    return _sigmoid(v[0])


def _f_exp(v, attrs):
    with np.errstate(over="ignore"):
        return np.exp(v[0])


def _f_logaddexp(v, attrs):
    return _binary("logaddexp", np.logaddexp, v[0], v[1])


def softmax_np(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def logsumexp_np(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True)))[..., 0]


def _f_softmax(v, attrs):
    return softmax_np(v[0])


def _f_log_softmax(v, attrs):
    x = v[0]
    return x - logsumexp_np(x)[..., None]


def _f_logsumexp(v, attrs):
    return logsumexp_np(v[0])


def _f_concat(v, attrs):
    axis = attrs.get("axis", -1)
    try:
        return np.concatenate(v, axis=axis)
    except ValueError:
        raise _shapes_err("concat", *v) from None


def _f_slice(v, attrs):
    try:
        return np.array(v[0][attrs["index"]])
    except IndexError:
        raise DimensionError(f"slice: index {attrs['index']!r} out of range for {v[0].shape}") from None


def _f_embedding(v, attrs):
    table = v[0]
    ids = np.asarray(attrs["ids"])
    if table.ndim != 2:
        raise DimensionError(f"embedding: table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding: id out of range for table {table.shape}")
    return table[ids]


def _f_scalar_mul(v, attrs):
    return v[0] * attrs["c"]


def _f_reshape(v, attrs):
    try:
        return v[0].reshape(attrs["shape"])
    except ValueError:
        raise DimensionError(f"reshape: cannot view {v[0].shape} as {attrs['shape']}") from None


def _f_sum(v, attrs):
    return np.asarray(v[0].sum(axis=attrs.get("axis")))


def _f_transpose(v, attrs):
    if v[0].ndim != 2:
        raise DimensionError(f"transpose: expected 2-d, got {v[0].shape}")
    return v[0].T.copy()


def _f_pick(v, attrs):
    x = v[0]
    idx = np.asarray(attrs["index"])
    if idx.shape != x.shape[:-1]:
        raise _shapes_err("pick", x, idx)
    return np.take_along_axis(x, idx[..., None], axis=-1)[..., 0]


_FORWARD: dict[str, Callable] = {
    "matmul": _f_matmul, "add": _f_add, "sub": _f_sub, "mul": _f_mul,
    "tanh": _f_tanh, "sigmoid": _f_sigmoid, "exp": _f_exp,
    "softmax": _f_softmax, "log_softmax": _f_log_softmax,
    "logsumexp": _f_logsumexp, "concat": _f_concat, "slice": _f_slice,
    "embedding": _f_embedding, "scalar_mul": _f_scalar_mul,
    "reshape": _f_reshape, "sum": _f_sum, "transpose": _f_transpose,
    "pick": _f_pick, "logaddexp": _f_logaddexp,
}


# ---------------------------------------------------------------------------
# backward rules: (node, input values, upstream grad) -> grads per input

def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _b_matmul(node, v, g):
    a, b = v
    ga = g @ b.T
    if a.ndim == 1:
        gb = np.outer(a, g)
    else:
        gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
    return ga, gb


def _b_add(node, v, g):
    return _unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)


def _b_sub(node, v, g):
    return _unbroadcast(g, v[0].shape), -_unbroadcast(g, v[1].shape)


def _b_mul(node, v, g):
    return _unbroadcast(g * v[1], v[0].shape), _unbroadcast(g * v[0], v[1].shape)


def _b_tanh(node, v, g):
    y = node.value
    return (g * (1.0 - y * y),)


def _b_sigmoid(node, v, g):
    y = node.value
    return (g * y * (1.0 - y),)


def _b_exp(node, v, g):
    return (g * node.value,)


def _b_softmax(node, v, g):
    y = node.value
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


def _b_log_softmax(node, v, g):
    p = np.exp(node.value)
    return (g - p * g.sum(axis=-1, keepdims=True),)


def _b_logsumexp(node, v, g):
    return (g[..., None] * softmax_np(v[0]),)


def _b_logaddexp(node, v, g):
    a, b = v
    return (_unbroadcast(g * np.exp(a - node.value), a.shape),
            _unbroadcast(g * np.exp(b - node.value), b.shape))


def _b_concat(node, v, g):
    axis = node.attrs.get("axis", -1)
    bounds = np.cumsum([x.shape[axis] for x in v])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _b_slice(node, v, g):
    out = np.zeros_like(v[0])
    np.add.at(out, node.attrs["index"], g)
    return (out,)


def _b_embedding(node, v, g):
    out = np.zeros_like(v[0])
    ids = np.asarray(node.attrs["ids"])
    np.add.at(out, ids.reshape(-1), g.reshape(-1, v[0].shape[1]))
    return (out,)


def _b_scalar_mul(node, v, g):
    return (g * node.attrs["c"],)


def _b_reshape(node, v, g):
    return (g.reshape(v[0].shape),)


def _b_sum(node, v, g):
    axis = node.attrs.get("axis")
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, v[0].shape).copy(),)


def _b_transpose(node, v, g):
    return (g.T,)


def _b_pick(node, v, g):
    out = np.zeros_like(v[0])
    idx = np.asarray(node.attrs["index"])[..., None]
    np.put_along_axis(out, idx, g[..., None], axis=-1)
    return (out,)


_BACKWARD: dict[str, Callable] = {
    "matmul": _b_matmul, "add": _b_add, "sub": _b_sub, "mul": _b_mul,
    "tanh": _b_tanh, "sigmoid": _b_sigmoid, "exp": _b_exp,
    "softmax": _b_softmax, "log_softmax": _b_log_softmax,
    "logsumexp": _b_logsumexp, "concat": _b_concat, "slice": _b_slice,
    "embedding": _b_embedding, "scalar_mul": _b_scalar_mul,
    "reshape": _b_reshape, "sum": _b_sum, "transpose": _b_transpose,
    "pick": _b_pick, "logaddexp": _b_logaddexp,
}


class Gradients(dict):
    """Node id -> gradient; nodes the loss does not depend on read as zeros."""

    def __init__(self, tape: Tape):
        super().__init__()
        self._tape = tape

    def __missing__(self, key):
        return np.zeros_like(self._tape.nodes[key].value)

    def of(self, var: "Var") -> np.ndarray:
        return self[var.id]


def backward(tape: Tape, loss) -> Gradients:
    """Gradients of the scalar node ``loss`` with respect to every node."""
    if not tape.grad:
        raise ValueError("backward on a tape recorded with grad=False")
    lid = loss.id if isinstance(loss, Var) else int(loss)
    lval = tape.nodes[lid].value
    if lval.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {lval.shape}")
    grads = Gradients(tape)
    grads[lid] = np.ones_like(lval)
    for k in range(lid, -1, -1):
        if k not in grads:
            continue
        node = tape.nodes[k]
        if node.op == "leaf":
            continue
        vals = [tape.nodes[i].value for i in node.inputs]
        for i, gi in zip(node.inputs, _BACKWARD[node.op](node, vals, grads[k])):
            if i in grads:
                grads[i] = grads[i] + gi
            else:
                grads[i] = gi
    return grads


# ---------------------------------------------------------------------------
# Var handle and functional API

class Var:
    __slots__ = ("tape", "id")
    __array_priority__ = 100

    def __init__(self, tape: Tape, id: int):
        self.tape = tape
        self.id = id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            return other
        return self.tape.const(other)

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum_(self, axis)

    @property
    def T(self):
        return transpose(self)


def _rec(op, inputs, **attrs) -> Var:
    tape = inputs[0].tape
    return Var(tape, tape.record(op, [x.id for x in inputs], **attrs))


def matmul(a: Var, b: Var) -> Var:
    return _rec("matmul", [a, b])


def add(a: Var, b: Var) -> Var:
    return _rec("add", [a, b])


def sub(a: Var, b: Var) -> Var:
    return _rec("sub", [a, b])


def mul(a: Var, b: Var) -> Var:
    return _rec("mul", [a, b])


def tanh(a: Var) -> Var:
    return _rec("tanh", [a])


def sigmoid(a: Var) -> Var:
    return _rec("sigmoid", [a])


def exp(a: Var) -> Var:
    return _rec("exp", [a])


def softmax(a: Var) -> Var:
    """Softmax over the last axis."""
    return _rec("softmax", [a])


def log_softmax(a: Var) -> Var:
    return _rec("log_softmax", [a])


def logsumexp(a: Var) -> Var:
    """Log-sum-exp over the last axis (the axis is dropped)."""
    return _rec("logsumexp", [a])


def logaddexp(a: Var, b: Var) -> Var:
    """Elementwise ``log(exp(a) + exp(b))`` without overflow."""
    return _rec("logaddexp", [a, b])


def concat(xs: Sequence[Var], axis: int = -1) -> Var:
    return _rec("concat", list(xs), axis=axis)


def slice_(a: Var, index) -> Var:
    return _rec("slice", [a], index=index)


def embedding(table: Var, ids) -> Var:
    return _rec("embedding", [table], ids=np.asarray(ids, dtype=np.int64))


def scalar_mul(a: Var, c: float) -> Var:
    return _rec("scalar_mul", [a], c=float(c))


def reshape(a: Var, shape) -> Var:
    return _rec("reshape", [a], shape=tuple(shape))


def sum_(a: Var, axis=None) -> Var:
    return _rec("sum", [a], axis=axis)


def transpose(a: Var) -> Var:
    return _rec("transpose", [a])


def pick(a: Var, index) -> Var:
    """``a[..., index[...]]``: one entry per row of the last axis."""
    return _rec("pick", [a], index=np.asarray(index, dtype=np.int64))


# ---------------------------------------------------------------------------

def grad_check(fn: Callable[[Mapping[str, Var]], Var], params: Mapping[str, np.ndarray],
               epsilon: float = 1e-5, max_entries: int | None = None, seed: int = 0) -> float:
    """Worst relative error between tape gradients and central differences.

    ``fn`` receives a dict of leaf Vars (same keys as ``params``) and must
    return a scalar Var.  ``max_entries`` caps the number of probed entries
    per tensor (sampled with ``seed``); ``None`` probes all of them.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(ps, grad):
        tape = Tape(np.float64, grad=grad)
        leaves = {k: tape.leaf(v, name=k) for k, v in ps.items()}
        out = fn(leaves)
        return tape, leaves, out

    tape, leaves, out = evaluate(params, True)
    grads = backward(tape, out)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        g = grads.of(leaves[name])
        flat = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            flat = rng.choice(p.size, size=max_entries, replace=False)
        for i in flat:
            idx = np.unravel_index(i, p.shape)
            orig = p[idx]
            p[idx] = orig + epsilon
            try:
                fp = float(evaluate(params, False)[2].value)
                p[idx] = orig - epsilon
                fm = float(evaluate(params, False)[2].value)
            except NumericError:
                return float("inf")
            finally:
                p[idx] = orig
            num = (fp - fm) / (2 * epsilon)
            if not np.isfinite(num):
                return float("inf")
            ana = float(g[idx])
            err = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, err)
    return worst
