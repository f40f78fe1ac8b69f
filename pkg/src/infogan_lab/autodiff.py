"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

The operation catalogue is fixed and small: exactly the primitives the
generator / discriminator / recognition networks and their losses need.
Every op has a forward rule and a closure-free backward rule selected by
operation id, so each rule can be audited and gradient-checked on its own.

Usage:

    with Tape() as tape:
        tape.watch(w)
        y = reduce_sum(mul(w, w))
        tape.backward(y)
        g = tape.grad(w)          # dy/dw as a Tensor

Outside a ``Tape`` context the same functions run as plain numpy and record
nothing, which is the fast path used for evaluation and finite differences.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "Tape",
    "BatchNormState",
    "ShapeError",
    "DomainError",
    "UsageError",
    "forward_op",
    "grad_check",
    "OP_CATALOGUE",
    "const",
    "zeros",
    "ones",
    "full",
    "matmul",
    "add",
    "mul",
    "relu",
    "lrelu",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "softmax",
    "log_softmax",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "concat",
    "batchnorm",
    "gaussian_reparam",
]


class ShapeError(ValueError):
    """Input shapes do not conform to an op's shape rule."""


class DomainError(ValueError):
    """An op was evaluated outside its numeric domain (log <= 0, exp overflow)."""


class UsageError(RuntimeError):
    """The engine was driven incorrectly (bad root, unknown op, ...)."""


def _as_array(values) -> np.ndarray:
    # note: not ascontiguousarray, which would promote 0-d scalars to 1-d
    arr = np.asarray(values, dtype=np.float64, order="C")
    return arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)


class Tensor:
    """Dense float64 array plus the id of its node on the recording tape.

    ``node`` is None unless the tensor has been touched by an op (or
    ``Tape.watch``) while a tape was active.
    """

    __slots__ = ("data", "node", "_tape")

    def __init__(self, values):
        self.data = _as_array(values)
        self.node: int | None = None
        self._tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        """Same values, not connected to any tape (shares the buffer)."""
        return Tensor(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self)

    def __float__(self) -> float:
        if self.data.size != 1:
            raise TypeError(f"only size-1 tensors convert to float, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, node={self.node})"


def const(values) -> Tensor:
    """Tensor from array-like; alias documenting 'this carries no gradient of interest'."""
    return Tensor(values)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape))


def full(shape, value: float) -> Tensor:
    return Tensor(np.full(shape, float(value)))


class BatchNormState:
    """Running moments for one batchnorm layer (eval mode reads these).

    Train mode normalizes with batch statistics and folds them into the
    running averages with the given momentum: r <- m*r + (1-m)*batch.
    """

    def __init__(self, num_features: int, momentum: float = 0.9, eps: float = 1e-5):
        self.num_features = int(num_features)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.running_mean = np.zeros(self.num_features)
        self.running_var = np.ones(self.num_features)

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = self.momentum
        self.running_mean = m * self.running_mean + (1.0 - m) * batch_mean
        self.running_var = m * self.running_var + (1.0 - m) * batch_var


class TapeNode:
    __slots__ = ("op", "input_ids", "input_values", "value", "attrs")

    def __init__(self, op, input_ids, input_values, value, attrs):
        self.op = op
        self.input_ids = input_ids
        self.input_values = input_values
        self.value = value
        self.attrs = attrs


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Ordered record of executed ops; supports repeated backward passes.

    Nodes are stored in execution order, so every node's inputs precede it
    and a single reverse sweep implements the chain rule. ``backward`` may
    be called several times with different scalar roots on the same tape;
    each call recomputes the gradient map from scratch.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self.gradients: dict[int, Tensor] = {}
        self._leaf_ids: list[int] = []
        self._prev = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None
        return False

    def watch(self, tensor: Tensor) -> None:
        """Register a leaf so it is guaranteed a (possibly zero) gradient."""
        self._register(tensor)

    def _register(self, tensor: Tensor) -> int:
        if tensor._tape is self and tensor.node is not None:
            return tensor.node
        nid = len(self.nodes)
        self.nodes.append(TapeNode("leaf", (), (), tensor.data, None))
        self._leaf_ids.append(nid)
        tensor.node = nid
        tensor._tape = self
        return nid

    def record(self, op: str, inputs: list[Tensor], attrs, out: Tensor) -> None:
        input_ids = tuple(self._register(t) for t in inputs)
        nid = len(self.nodes)
        self.nodes.append(TapeNode(op, input_ids, tuple(t.data for t in inputs), out.data, attrs))
        out.node = nid
        out._tape = self

    def backward(self, root: Tensor) -> dict[int, Tensor]:
        """Reverse sweep from a scalar root; returns node id -> gradient.

        Leaves not on any path to the root get zero gradients. Gradients
        accumulate over fan-out.
        """
        if root._tape is not self or root.node is None:
            raise UsageError("backward: root tensor was not recorded on this tape")
        if root.data.size != 1:
            raise UsageError(f"backward: root must be scalar, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {root.node: np.ones_like(self.nodes[root.node].value)}
        for nid in range(root.node, -1, -1):
            g = grads.get(nid)
            if g is None:
                continue
            node = self.nodes[nid]
            if node.op == "leaf":
                continue
            input_grads = _BACKWARD[node.op](g, node)
            for iid, gi in zip(node.input_ids, input_grads):
                if gi is None:
                    continue
                acc = grads.get(iid)
                grads[iid] = gi if acc is None else acc + gi
        for nid in self._leaf_ids:
            if nid not in grads:
                grads[nid] = np.zeros_like(self.nodes[nid].value)
        self.gradients = {nid: Tensor(g) for nid, g in grads.items()}
        return self.gradients

    def grad(self, tensor: Tensor) -> Tensor | None:
        if tensor._tape is not self or tensor.node is None:
            return None
        return self.gradients.get(tensor.node)


# ---------------------------------------------------------------------------
# forward rules
# ---------------------------------------------------------------------------

def _require(cond: bool, op: str, msg: str) -> None:
    if not cond:
        raise ShapeError(f"{op}: {msg}")


def _f_matmul(arrs, attrs):
    a, b = arrs
    _require(a.ndim == 2 and b.ndim == 2, "matmul", f"needs two matrices, got {a.shape} and {b.shape}")
    _require(a.shape[1] == b.shape[0], "matmul", f"inner dims differ: {a.shape} @ {b.shape}")
    return a @ b


def _f_add(arrs, attrs):
    a, b = arrs
    if a.shape == b.shape:
        return a + b
    # only supported broadcast: bias vector over the batch axis
    _require(
        a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0],
        "add",
        f"shapes must match or be (B,F)+(F,), got {a.shape} + {b.shape}",
    )
    return a + b[None, :]


def _f_mul(arrs, attrs):
    a, b = arrs
    _require(a.shape == b.shape, "mul", f"elementwise shapes differ: {a.shape} vs {b.shape}")
    return a * b


def _f_relu(arrs, attrs):
    return np.maximum(arrs[0], 0.0)


def _f_lrelu(arrs, attrs):
    x = arrs[0]
    rate = float(attrs["rate"])
    return np.where(x > 0.0, x, rate * x)


def _f_tanh(arrs, attrs):
    return np.tanh(arrs[0])


def _f_sigmoid(arrs, attrs):
    return expit(arrs[0])


def _f_exp(arrs, attrs):
    with np.errstate(over="ignore"):
        out = np.exp(arrs[0])
    if not np.all(np.isfinite(out)):
        raise DomainError(f"exp: overflow (max input {arrs[0].max():g})")
    return out


def _f_log(arrs, attrs):
    x = arrs[0]
    if np.any(x <= 0.0):
        raise DomainError(f"log: non-positive input (min {x.min():g})")
    return np.log(x)


def _rowwise(x, op: str):
    _require(x.ndim == 2, op, f"needs a 2-D batch of rows, got {x.shape}")
    return x - x.max(axis=1, keepdims=True)


def _f_softmax(arrs, attrs):
    shifted = _rowwise(arrs[0], "softmax")
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _f_log_softmax(arrs, attrs):
    # fused and max-shifted: never -inf for sane logits
    shifted = _rowwise(arrs[0], "log_softmax")
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _f_reduce_mean(arrs, attrs):
    return np.asarray(arrs[0].mean())


def _f_reduce_sum(arrs, attrs):
    return np.asarray(arrs[0].sum())


def _f_reshape(arrs, attrs):
    x = arrs[0]
    shape = tuple(int(d) for d in attrs["shape"])
    _require(
        int(np.prod(shape, dtype=np.int64)) == x.size,
        "reshape",
        f"cannot reshape {x.shape} to {shape}",
    )
    return x.reshape(shape)


def _f_concat(arrs, attrs):
    axis = int(attrs["axis"])
    base = arrs[0]
    for other in arrs[1:]:
        _require(other.ndim == base.ndim, "concat", f"rank mismatch: {base.shape} vs {other.shape}")
        for d in range(base.ndim):
            _require(
                d == axis or other.shape[d] == base.shape[d],
                "concat",
                f"non-axis dims differ: {base.shape} vs {other.shape} (axis {axis})",
            )
    return np.concatenate(arrs, axis=axis)


def _batch_moments(x, eps):
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    return mean, var, inv_std


def _f_batchnorm(arrs, attrs):
    x, gamma, beta = arrs
    state: BatchNormState = attrs["state"]
    training: bool = attrs["training"]
    _require(x.ndim == 2, "batchnorm", f"needs (B,F) input, got {x.shape}")
    _require(
        gamma.shape == (x.shape[1],) and beta.shape == (x.shape[1],),
        "batchnorm",
        f"scale/shift must be ({x.shape[1]},), got {gamma.shape} and {beta.shape}",
    )
    if training:
        mean, var, inv_std = _batch_moments(x, state.eps)
        state.update(mean, var)
    else:
        mean = state.running_mean
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
    return gamma * ((x - mean) * inv_std) + beta


def _f_gaussian_reparam(arrs, attrs):
    mu, log_sigma = arrs
    eps = attrs["eps"]
    _require(mu.shape == log_sigma.shape, "gaussian_reparam", f"mu/log_sigma shapes differ: {mu.shape} vs {log_sigma.shape}")
    _require(np.shape(eps) == mu.shape, "gaussian_reparam", f"eps shape {np.shape(eps)} must match mu {mu.shape}")
    scale = np.exp(log_sigma)
    if not np.all(np.isfinite(scale)):
        raise DomainError("gaussian_reparam: exp(log_sigma) overflow")
    return mu + scale * eps


# ---------------------------------------------------------------------------
# backward rules (one per op id; inputs' gradients in input order)
# ---------------------------------------------------------------------------

def _b_matmul(g, node):
    a, b = node.input_values
    return [g @ b.T, a.T @ g]


def _b_add(g, node):
    a, b = node.input_values
    if a.shape == b.shape:
        return [g, g]
    return [g, g.sum(axis=0)]


def _b_mul(g, node):
    a, b = node.input_values
    return [g * b, g * a]


def _b_relu(g, node):
    return [g * (node.input_values[0] > 0.0)]


def _b_lrelu(g, node):
    rate = float(node.attrs["rate"])
    x = node.input_values[0]
    return [g * np.where(x > 0.0, 1.0, rate)]


def _b_tanh(g, node):
    y = node.value
    return [g * (1.0 - y * y)]


def _b_sigmoid(g, node):
    y = node.value
    return [g * y * (1.0 - y)]


def _b_exp(g, node):
    return [g * node.value]


def _b_log(g, node):
    return [g / node.input_values[0]]


def _b_softmax(g, node):
    y = node.value
    return [y * (g - (g * y).sum(axis=1, keepdims=True))]


def _b_log_softmax(g, node):
    p = np.exp(node.value)
    return [g - p * g.sum(axis=1, keepdims=True)]


def _b_reduce_mean(g, node):
    x = node.input_values[0]
    return [np.full(x.shape, float(g) / x.size)]


def _b_reduce_sum(g, node):
    x = node.input_values[0]
    return [np.full(x.shape, float(g))]


def _b_reshape(g, node):
    return [g.reshape(node.input_values[0].shape)]


def _b_concat(g, node):
    axis = int(node.attrs["axis"])
    sizes = [v.shape[axis] for v in node.input_values]
    return np.split(g, np.cumsum(sizes)[:-1], axis=axis)


def _b_batchnorm(g, node):
    x, gamma, _ = node.input_values
    state: BatchNormState = node.attrs["state"]
    if node.attrs["training"]:
        n = x.shape[0]
        mean, _, inv_std = _batch_moments(x, state.eps)
        centered = x - mean
        xhat = centered * inv_std
        dxhat = g * gamma
        dvar = (dxhat * centered).sum(axis=0) * (-0.5) * inv_std**3
        dmean = -(dxhat.sum(axis=0)) * inv_std + dvar * (-2.0) * centered.sum(axis=0) / n
        dx = dxhat * inv_std + dvar * 2.0 * centered / n + dmean / n
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x - state.running_mean) * inv_std
        dx = g * gamma * inv_std
    return [dx, (g * xhat).sum(axis=0), g.sum(axis=0)]


def _b_gaussian_reparam(g, node):
    _, log_sigma = node.input_values
    eps = node.attrs["eps"]
    return [g, g * np.exp(log_sigma) * eps]


_FORWARD = {
    "matmul": _f_matmul,
    "add": _f_add,
    "mul": _f_mul,
    "relu": _f_relu,
    "lrelu": _f_lrelu,
    "tanh": _f_tanh,
    "sigmoid": _f_sigmoid,
    "exp": _f_exp,
    "log": _f_log,
    "softmax": _f_softmax,
    "log_softmax": _f_log_softmax,
    "reduce_mean": _f_reduce_mean,
    "reduce_sum": _f_reduce_sum,
    "reshape": _f_reshape,
    "concat": _f_concat,
    "batchnorm": _f_batchnorm,
    "gaussian_reparam": _f_gaussian_reparam,
}

_BACKWARD = {
    "matmul": _b_matmul,
    "add": _b_add,
    "mul": _b_mul,
    "relu": _b_relu,
    "lrelu": _b_lrelu,
    "tanh": _b_tanh,
    "sigmoid": _b_sigmoid,
    "exp": _b_exp,
    "log": _b_log,
    "softmax": _b_softmax,
    "log_softmax": _b_log_softmax,
    "reduce_mean": _b_reduce_mean,
    "reduce_sum": _b_reduce_sum,
    "reshape": _b_reshape,
    "concat": _b_concat,
    "batchnorm": _b_batchnorm,
    "gaussian_reparam": _b_gaussian_reparam,
}

OP_CATALOGUE = tuple(sorted(_FORWARD))


def forward_op(name: str, inputs: list[Tensor], attrs: dict | None = None) -> Tensor:
    """Run one catalogue op; records a tape node when a tape is active."""
    rule = _FORWARD.get(name)
    if rule is None:
        raise UsageError(f"unknown op '{name}' (catalogue: {', '.join(OP_CATALOGUE)})")
    out = Tensor(rule(tuple(t.data for t in inputs), attrs or {}))
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.record(name, inputs, attrs or {}, out)
    return out


# thin call-site sugar over forward_op

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("matmul", [a, b])


def add(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("add", [a, b])


def mul(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("mul", [a, b])


def relu(x: Tensor) -> Tensor:
    return forward_op("relu", [x])


def lrelu(x: Tensor, rate: float = 0.1) -> Tensor:
    return forward_op("lrelu", [x], {"rate": rate})


def tanh(x: Tensor) -> Tensor:
    return forward_op("tanh", [x])


def sigmoid(x: Tensor) -> Tensor:
    return forward_op("sigmoid", [x])


def exp(x: Tensor) -> Tensor:
    return forward_op("exp", [x])


def log(x: Tensor) -> Tensor:
    return forward_op("log", [x])


def softmax(x: Tensor) -> Tensor:
    return forward_op("softmax", [x])


def log_softmax(x: Tensor) -> Tensor:
    return forward_op("log_softmax", [x])


def reduce_mean(x: Tensor) -> Tensor:
    return forward_op("reduce_mean", [x])


def reduce_sum(x: Tensor) -> Tensor:
    return forward_op("reduce_sum", [x])


def reshape(x: Tensor, shape) -> Tensor:
    return forward_op("reshape", [x], {"shape": tuple(shape)})


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    return forward_op("concat", list(tensors), {"axis": axis})


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    return forward_op("batchnorm", [x, gamma, beta], {"state": state, "training": training})


def gaussian_reparam(mu: Tensor, log_sigma: Tensor, eps: np.ndarray) -> Tensor:
    return forward_op("gaussian_reparam", [mu, log_sigma], {"eps": np.asarray(eps, dtype=np.float64)})


def grad_check(loss_builder, params: list[Tensor], step: float = 1e-6) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_builder(params) -> scalar Tensor`` must be deterministic (freeze
    any random draws before calling); this is probed with two forward
    passes. The error metric per coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if not (0.0 < step <= 1e-3):
        raise UsageError(f"grad_check: step must be in (0, 1e-3], got {step}")
    v1 = float(loss_builder(params))
    v2 = float(loss_builder(params))
    if v1 != v2:
        raise UsageError("grad_check: loss_builder is not deterministic across forward passes")
    with Tape() as tape:
        for p in params:
            tape.watch(p)
        loss = loss_builder(params)
        tape.backward(loss)
        analytic = [tape.grad(p).data.copy() for p in params]

    max_err = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.ravel()
        ga_flat = ga.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(loss_builder(params))
            flat[i] = orig - step
            f_minus = float(loss_builder(params))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = ga_flat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
