"""Minimal tape-based reverse-mode automatic differentiation.

A :class:`Tape` is a Wengert list: each node records an operation kind, the
ids of its inputs and (after :func:`forward`) its value. The graph is built
once and can be replayed with new leaf bindings, which is how training binds
a fresh minibatch of windows to the same unrolled network.

Tensors are float64 numpy arrays. Shapes are either vectors ``(n,)`` or
column-batched matrices ``(n, B)``; there is no general broadcasting. The
only mixed-shape operations are ``matmul`` and ``bias_add`` (vector added to
every column).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import NonFiniteError, ShapeError

Tensor = np.ndarray


def as_tensor(x) -> Tensor:
    arr = np.array(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor contains non-finite values")
    return arr


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    inputs: tuple[int, ...]
    attr: object = None
    name: str | None = None
    needs_grad: bool = False

    def label(self) -> str:
        return f"node {self.id} ({self.kind}{', ' + self.name if self.name else ''})"


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _same(node, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{node.label()}: shapes {a.shape} and {b.shape} differ")


def _fw_matmul(node, a, b):
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"{node.label()}: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _fw_bias_add(node, m, b):
    if b.ndim != 1 or m.shape[0] != b.shape[0] or m.ndim not in (1, 2):
        raise ShapeError(f"{node.label()}: bias {b.shape} incompatible with {m.shape}")
    return m + b if m.ndim == 1 else m + b[:, None]


def _fw_binary(fn):
    def run(node, a, b):
        _same(node, a, b)
        return fn(a, b)

    return run


def _fw_concat(node, *xs):
    tail = xs[0].shape[1:]
    for x in xs:
        if x.ndim == 0 or x.shape[1:] != tail:
            raise ShapeError(f"{node.label()}: cannot concatenate shapes {[v.shape for v in xs]}")
    return np.concatenate(xs, axis=0)


def _fw_mean(node, a):
    if a.ndim == 0 or a.shape[0] == 0:
        raise ShapeError(f"{node.label()}: mean needs a non-empty vector, got {a.shape}")
    return a.mean(axis=0)


_FORWARD: dict[str, Callable] = {
    "matmul": _fw_matmul,
    "bias_add": _fw_bias_add,
    "add": _fw_binary(np.add),
    "sub": _fw_binary(np.subtract),
    "mul": _fw_binary(np.multiply),
    "div": _fw_binary(np.divide),
    "sigmoid": lambda node, a: _sigmoid(a),
    "tanh": lambda node, a: np.tanh(a),
    "softplus": lambda node, a: np.logaddexp(0.0, a),
    "square": lambda node, a: a * a,
    "sqrt": lambda node, a: np.sqrt(a),
    "log": lambda node, a: np.log(a),
    "mean": _fw_mean,
    "sum": lambda node, a: np.asarray(a.sum()),
    "concat": _fw_concat,
    "scale": lambda node, a: a * node.attr,
    "shift": lambda node, a: a + node.attr,
    "floor": lambda node, a: np.maximum(a, node.attr),
}


def _vjp(node: Node, g: Tensor, ins: list[Tensor], out: Tensor) -> list[Tensor]:
    """Gradient of the node output w.r.t. each input, given upstream ``g``."""
    k = node.kind
    if k == "matmul":
        a, b = ins
        if a.ndim == 2 and b.ndim == 2:
            return [g @ b.T, a.T @ g]
        if a.ndim == 2:
            return [np.outer(g, b), a.T @ g]
        if b.ndim == 2:
            return [b @ g, np.outer(a, g)]
        return [g * b, g * a]
    if k == "bias_add":
        return [g, g if g.ndim == 1 else g.sum(axis=1)]
    if k == "add":
        return [g, g]
    if k == "sub":
        return [g, -g]
    if k == "mul":
        return [g * ins[1], g * ins[0]]
    if k == "div":
        a, b = ins
        return [g / b, -g * out / b]
    if k == "sigmoid":
        return [g * out * (1.0 - out)]
    if k == "tanh":
        return [g * (1.0 - out * out)]
    if k == "softplus":
        return [g * _sigmoid(ins[0])]
    if k == "square":
        return [2.0 * g * ins[0]]
    if k == "sqrt":
        return [0.5 * g / out]
    if k == "log":
        return [g / ins[0]]
    if k == "mean":
        a = ins[0]
        return [np.broadcast_to(g / a.shape[0], a.shape).copy()]
    if k == "sum":
        return [np.full(ins[0].shape, float(g))]
    if k == "concat":
        bounds = np.cumsum([x.shape[0] for x in ins])[:-1]
        return np.split(g, bounds, axis=0)
    if k == "scale":
        return [g * node.attr]
    if k == "shift":
        return [g]
    if k == "floor":
        return [np.where(ins[0] > node.attr, g, 0.0)]
    raise ValueError(f"unsupported operation kind {k!r}")


class Tape:
    """Recorder for a static computation graph.

    Leaves are bound at :func:`forward` time. ``trainable`` leaves receive
    gradients; non-trainable ones (data, noise) are treated as inputs.
    Constants carry their value inside the graph.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.values: list[Tensor | None] = []
        self.outputs: list[int] = []
        self._leaves: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, kind, inputs=(), attr=None, name=None, needs_grad=None) -> int:
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f"input {i} is not a node of this tape")
        if needs_grad is None:
            needs_grad = any(self.nodes[i].needs_grad for i in inputs)
        node = Node(len(self.nodes), kind, tuple(inputs), attr, name, needs_grad)
        self.nodes.append(node)
        self.values.append(None)
        return node.id

    def leaf(self, name: str, trainable: bool = True) -> int:
        if name in self._leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        nid = self._push("leaf", name=name, needs_grad=trainable)
        self._leaves[name] = nid
        return nid

    def constant(self, value) -> int:
        return self._push("const", attr=as_tensor(value), needs_grad=False)

    @property
    def leaves(self) -> dict[str, int]:
        return dict(self._leaves)

    # operation builders
    def matmul(self, a, b):
        return self._push("matmul", (a, b))

    def bias_add(self, m, b):
        return self._push("bias_add", (m, b))

    def add(self, a, b):
        return self._push("add", (a, b))

    def sub(self, a, b):
        return self._push("sub", (a, b))

    def mul(self, a, b):
        return self._push("mul", (a, b))

    def div(self, a, b):
        return self._push("div", (a, b))

    def sigmoid(self, a):
        return self._push("sigmoid", (a,))

    def tanh(self, a):
        return self._push("tanh", (a,))

    def softplus(self, a):
        return self._push("softplus", (a,))

    def square(self, a):
        return self._push("square", (a,))

    def sqrt(self, a):
        return self._push("sqrt", (a,))

    def log(self, a):
        return self._push("log", (a,))

    def mean(self, a):
        return self._push("mean", (a,))

    def sum(self, a):
        return self._push("sum", (a,))

    def concat(self, *xs):
        if not xs:
            raise ValueError("concat needs at least one input")
        return self._push("concat", xs)

    def scale(self, a, c: float):
        return self._push("scale", (a,), attr=float(c))

    def shift(self, a, c: float):
        return self._push("shift", (a,), attr=float(c))

    def floor(self, a, c: float):
        return self._push("floor", (a,), attr=float(c))

    def mark_output(self, nid: int) -> int:
        self.outputs.append(nid)
        return nid


def forward(tape: Tape, leaf_values: Mapping) -> dict[int, Tensor]:
    """Evaluate every node in recording order and cache the values on the tape.

    ``leaf_values`` may be keyed by leaf node id or leaf name.
    """
    bound: dict[int, Tensor] = {}
    for key, value in leaf_values.items():
        nid = tape._leaves[key] if isinstance(key, str) else key
        bound[nid] = np.asarray(value, dtype=np.float64)

    vals = tape.values
    with np.errstate(all="ignore"):
        for node in tape.nodes:
            if node.kind == "leaf":
                if node.id not in bound:
                    raise ValueError(f"{node.label()} is not bound")
                v = bound[node.id]
            elif node.kind == "const":
                v = node.attr
            else:
                fn = _FORWARD.get(node.kind)
                if fn is None:
                    raise ValueError(f"{node.label()}: unsupported operation kind")
                v = fn(node, *[vals[i] for i in node.inputs])
            if not np.isfinite(v).all():
                raise NonFiniteError(f"{node.label()} produced a non-finite value")
            vals[node.id] = v
    return dict(enumerate(vals))


def backward(tape: Tape, seed_output: int) -> dict[str, Tensor]:
    """Gradient of the scalar ``seed_output`` w.r.t. every trainable leaf.

    Accumulation runs in reverse recording order, so results are deterministic.
    """
    seed_val = tape.values[seed_output]
    if seed_val is None:
        raise ValueError("forward has not been run on this tape")
    if np.size(seed_val) != 1:
        raise ShapeError(f"seed node {seed_output} is not scalar (shape {np.shape(seed_val)})")

    grads: list[Tensor | None] = [None] * len(tape.nodes)
    grads[seed_output] = np.ones_like(seed_val)
    vals = tape.values
    for node in reversed(tape.nodes[: seed_output + 1]):
        g = grads[node.id]
        if g is None or not node.inputs or not node.needs_grad:
            continue
        ins = [vals[i] for i in node.inputs]
        for i, gi in zip(node.inputs, _vjp(node, g, ins, vals[node.id])):
            if not tape.nodes[i].needs_grad:
                continue
            grads[i] = gi if grads[i] is None else grads[i] + gi

    out = {}
    for name, nid in tape._leaves.items():
        if tape.nodes[nid].needs_grad:
            g = grads[nid]
            out[name] = np.zeros_like(vals[nid]) if g is None else g
    return out


def check_gradients(
    builder: Callable,
    point,
    step: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``builder(tape, leaf)`` must return the id of a scalar node. ``point`` is
    either a single tensor (``leaf`` is then a node id) or a mapping
    name -> tensor (``leaf`` is then a mapping name -> node id). The relative
    error of each component is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step {step} outside [1e-7, 1e-3]")
    single = not isinstance(point, Mapping)
    points = {"x": as_tensor(point)} if single else {k: as_tensor(v) for k, v in point.items()}

    tape = Tape()
    leaves = {k: tape.leaf(k) for k in points}
    out = builder(tape, leaves["x"] if single else leaves)
    forward(tape, points)
    analytic = backward(tape, out)

    worst = 0.0
    for name, base in points.items():
        flat = base.ravel()
        for j in range(flat.size):
            shifted = {k: v.copy() for k, v in points.items()}
            probe = shifted[name].reshape(-1)
            probe[j] = flat[j] + step
            hi = float(forward(tape, shifted)[out])
            probe[j] = flat[j] - step
            lo = float(forward(tape, shifted)[out])
            numeric = (hi - lo) / (2.0 * step)
            if not np.isfinite(numeric):
                raise NonFiniteError(f"finite difference for {name}[{j}] is not finite")
            a = float(analytic[name].reshape(-1)[j])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
