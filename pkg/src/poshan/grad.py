"""Dense-tensor computation graph with reverse-mode gradients.

All trainable machinery in this package is assembled from the primitives
here.  Tensors wrap rank-0/1/2 float64 numpy arrays and record a
define-by-run graph as ops are applied; :func:`backward` walks that graph
in reverse topological order and accumulates gradients into every tensor
created with ``requires_grad=True``.  Graphs are rebuilt per forward pass,
so parameter tensors can be shared across many graphs and their gradients
accumulate until explicitly cleared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform; the message names both shapes."""


class EmptyAttentionError(ValueError):
    """Masked softmax received a mask with no unmasked position."""


class NonFiniteError(FloatingPointError):
    """A tensor that must be finite contains NaN or Inf."""


class DeterminismError(RuntimeError):
    """A forward closure produced different values on repeated evaluation."""


class Tensor:
    """A node in the computation graph.

    ``data`` is always a float64 array of rank 0, 1 or 2 (rank 0 is the
    scalar case used for scores and losses).  ``grad`` stays ``None`` until
    a backward pass deposits a gradient of the same shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = ()):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are rank 0..2, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def check_finite(self, context: str = "tensor") -> "Tensor":
        if not self.is_finite():
            raise NonFiniteError(f"{context} contains non-finite values")
        return self

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"


def constant(data) -> Tensor:
    """A leaf tensor that never receives gradients."""
    return Tensor(data, requires_grad=False, op="const")


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad``, allocating the buffer on first use."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _result(data, parents: tuple, op: str) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                 op=op, parents=parents)
    return out


def _require_rank(t: Tensor, rank: int, op: str, role: str) -> None:
    if t.data.ndim != rank:
        raise ShapeError(f"{op}: {role} must have rank {rank}, got shape {t.shape}")


# ---------------------------------------------------------------------------
# Primitive ops


def matvec(m: Tensor, x: Tensor) -> Tensor:
    """Matrix-vector product m @ x."""
    _require_rank(m, 2, "matvec", "matrix")
    _require_rank(x, 1, "matvec", "vector")
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: matrix {m.shape} does not conform to vector {x.shape}")
    out = _result(m.data @ x.data, (m, x), "matvec")

    def back():
        g = out.grad
        accumulate_grad(m, np.outer(g, x.data))
        accumulate_grad(x, m.data.T @ g)

    out._backward = back
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """w @ x + b for a rank-1 input."""
    _require_rank(x, 1, "affine", "input")
    _require_rank(w, 2, "affine", "weight")
    _require_rank(b, 1, "affine", "bias")
    if w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ShapeError(
            f"affine: weight {w.shape} does not conform to input {x.shape} and bias {b.shape}")
    out = _result(w.data @ x.data + b.data, (x, w, b), "affine")

    def back():
        g = out.grad
        accumulate_grad(x, w.data.T @ g)
        accumulate_grad(w, np.outer(g, x.data))
        accumulate_grad(b, g)

    out._backward = back
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = _result(a.data + b.data, (a, b), "add")

    def back():
        accumulate_grad(a, out.grad)
        accumulate_grad(b, out.grad)

    out._backward = back
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    out = _result(a.data * b.data, (a, b), "hadamard")

    def back():
        accumulate_grad(a, out.grad * b.data)
        accumulate_grad(b, out.grad * a.data)

    out._backward = back
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python float (not a graph input)."""
    out = _result(x.data * c, (x,), "scale")

    def back():
        accumulate_grad(x, out.grad * c)

    out._backward = back
    return out


def scalar_scale(x: Tensor, s: Tensor) -> Tensor:
    """Scale a tensor by a scalar tensor (rank 0 or shape (1,))."""
    if s.data.size != 1:
        raise ShapeError(f"scalar_scale: scale factor must be a scalar, got shape {s.shape}")
    sval = float(s.data.reshape(()))
    out = _result(x.data * sval, (x, s), "scalar_scale")

    def back():
        g = out.grad
        accumulate_grad(x, g * sval)
        accumulate_grad(s, np.full_like(s.data, np.sum(g * x.data)))

    out._backward = back
    return out


def tanh_elem(x: Tensor) -> Tensor:
    out = _result(np.tanh(x.data), (x,), "tanh")

    def back():
        accumulate_grad(x, out.grad * (1.0 - out.data ** 2))

    out._backward = back
    return out


def sigmoid_elem(x: Tensor) -> Tensor:
    # split form avoids overflow in exp for large |x|
    d = x.data
    pos = d >= 0
    z = np.empty_like(d)
    z[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    z[~pos] = ez / (1.0 + ez)
    out = _result(z, (x,), "sigmoid")

    def back():
        accumulate_grad(x, out.grad * out.data * (1.0 - out.data))

    out._backward = back
    return out


def relu_elem(x: Tensor) -> Tensor:
    out = _result(np.maximum(x.data, 0.0), (x,), "relu")

    def back():
        accumulate_grad(x, out.grad * (x.data > 0.0))

    out._backward = back
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two rank-1 tensors."""
    _require_rank(a, 1, "concat", "left")
    _require_rank(b, 1, "concat", "right")
    out = _result(np.concatenate([a.data, b.data]), (a, b), "concat")
    split = a.shape[0]

    def back():
        g = out.grad
        accumulate_grad(a, g[:split])
        accumulate_grad(b, g[split:])

    out._backward = back
    return out


def sum_vectors(vectors: Sequence[Tensor]) -> Tensor:
    """Elementwise sum of one or more same-shape rank-1 tensors."""
    if not vectors:
        raise ShapeError("sum_vectors: need at least one vector")
    shape = vectors[0].shape
    for v in vectors:
        if v.shape != shape:
            raise ShapeError(f"sum_vectors: shapes {shape} and {v.shape} differ")
    total = vectors[0].data.copy()
    for v in vectors[1:]:
        total += v.data
    out = _result(total, tuple(vectors), "sum_vectors")

    def back():
        for v in vectors:
            accumulate_grad(v, out.grad)

    out._backward = back
    return out


def mean_vectors(vectors: Sequence[Tensor]) -> Tensor:
    """Elementwise arithmetic mean of same-shape rank-1 tensors."""
    if not vectors:
        raise ShapeError("mean_vectors: need at least one vector")
    shape = vectors[0].shape
    for v in vectors:
        if v.shape != shape:
            raise ShapeError(f"mean_vectors: shapes {shape} and {v.shape} differ")
    total = vectors[0].data.copy()
    for v in vectors[1:]:
        total += v.data
    n = len(vectors)
    out = _result(total / n, tuple(vectors), "mean_vectors")

    def back():
        g = out.grad / n
        for v in vectors:
            accumulate_grad(v, g)

    out._backward = back
    return out


def weighted_sum(weights: Tensor, vectors: Sequence[Tensor]) -> Tensor:
    """Sum of vectors scaled by the matching entry of ``weights``."""
    _require_rank(weights, 1, "weighted_sum", "weights")
    if weights.shape[0] != len(vectors):
        raise ShapeError(
            f"weighted_sum: {weights.shape[0]} weights for {len(vectors)} vectors")
    shape = vectors[0].shape
    for v in vectors:
        if v.shape != shape:
            raise ShapeError(f"weighted_sum: shapes {shape} and {v.shape} differ")
    acc = weights.data[0] * vectors[0].data
    for i in range(1, len(vectors)):
        acc = acc + weights.data[i] * vectors[i].data
    out = _result(acc, (weights, *vectors), "weighted_sum")

    def back():
        g = out.grad
        gw = np.array([np.dot(g, v.data) for v in vectors])
        accumulate_grad(weights, gw)
        for i, v in enumerate(vectors):
            accumulate_grad(v, weights.data[i] * g)

    out._backward = back
    return out


def stack_scalars(scalars: Sequence[Tensor]) -> Tensor:
    """Stack rank-0 tensors into a rank-1 tensor."""
    if not scalars:
        raise ShapeError("stack_scalars: need at least one scalar")
    for s in scalars:
        if s.data.ndim != 0:
            raise ShapeError(f"stack_scalars: expected scalars, got shape {s.shape}")
    out = _result(np.array([s.data for s in scalars]), tuple(scalars), "stack")

    def back():
        for i, s in enumerate(scalars):
            accumulate_grad(s, out.grad[i])

    out._backward = back
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two rank-1 tensors; returns a scalar tensor."""
    _require_rank(a, 1, "dot", "left")
    _require_rank(b, 1, "dot", "right")
    if a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} differ")
    out = _result(np.dot(a.data, b.data), (a, b), "dot")

    def back():
        g = out.grad
        accumulate_grad(a, g * b.data)
        accumulate_grad(b, g * a.data)

    out._backward = back
    return out


def pick_row(m: Tensor, index: int) -> Tensor:
    """Select row ``index`` of a rank-2 tensor; gradients scatter back."""
    _require_rank(m, 2, "pick_row", "matrix")
    if not 0 <= index < m.shape[0]:
        raise IndexError(f"pick_row: row {index} out of range for shape {m.shape}")
    out = _result(m.data[index].copy(), (m,), "pick_row")

    def back():
        if m.requires_grad:
            if m.grad is None:
                m.grad = np.zeros_like(m.data)
            m.grad[index] += out.grad

    out._backward = back
    return out


def masked_softmax(scores: Tensor, mask: Sequence[bool]) -> Tensor:
    """Softmax over the unmasked positions; masked positions are exactly 0.

    Stabilized by subtracting the max over unmasked entries before
    exponentiation, so large scores do not overflow.
    """
    _require_rank(scores, 1, "masked_softmax", "scores")
    m = np.asarray(mask, dtype=bool)
    if m.shape != scores.shape:
        raise ShapeError(f"masked_softmax: scores {scores.shape} vs mask {m.shape}")
    if not m.any():
        raise EmptyAttentionError("masked_softmax: mask has no unmasked position")
    shifted = scores.data - np.max(scores.data[m])
    e = np.where(m, np.exp(np.where(m, shifted, 0.0)), 0.0)
    p = e / e.sum()
    out = _result(p, (scores,), "masked_softmax")

    def back():
        g = out.grad
        s = np.dot(g, out.data)
        accumulate_grad(scores, out.data * (g - s))

    out._backward = back
    return out


def softmax_cross_entropy_with_logits(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of ``label``; scalar output.

    The gradient with respect to the logits is softmax(logits) minus the
    one-hot label vector.
    """
    _require_rank(logits, 1, "softmax_cross_entropy", "logits")
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} logits")
    shifted = logits.data - np.max(logits.data)
    e = np.exp(shifted)
    p = e / e.sum()
    loss = np.log(e.sum()) - shifted[label]
    out = _result(np.asarray(loss), (logits,), "softmax_xent")

    def back():
        g = float(out.grad)
        delta = p.copy()
        delta[label] -= 1.0
        accumulate_grad(logits, g * delta)

    out._backward = back
    return out


def softmax_probs(logits: Tensor) -> np.ndarray:
    """Plain softmax of a rank-1 tensor's values (no graph node)."""
    shifted = logits.data - np.max(logits.data)
    e = np.exp(shifted)
    return e / e.sum()


# ---------------------------------------------------------------------------
# Parameters and the backward pass


class Parameter:
    """A named, optionally trainable leaf tensor.

    Names must be unique within a model; the training loop addresses
    gradients, optimizer state and checkpoints by these names.
    """

    def __init__(self, name: str, value, trainable: bool = True):
        self.name = name
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.value.requires_grad = trainable
        self.value.op = f"param:{name}"
        self.trainable = trainable

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative postorder over the requires-grad subgraph under ``root``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, child = stack[-1]
        if child == 0:
            if id(node) in seen:
                stack.pop()
                continue
            seen.add(id(node))
        parents = node._parents
        while child < len(parents) and (
                not parents[child].requires_grad or id(parents[child]) in seen):
            child += 1
        if child < len(parents):
            stack[-1] = (node, child + 1)
            stack.append((parents[child], 0))
        else:
            order.append(node)
            stack.pop()
    return order


def backward(loss: Tensor, params: Iterable[Parameter] = ()) -> dict[str, np.ndarray]:
    """Run reverse accumulation from a scalar loss.

    Gradients are added into every reachable ``requires_grad`` tensor, so
    repeated calls without clearing accumulate (used for batching).  Returns
    a map from parameter name to its current gradient; parameters that are
    not on the path to the loss get zeros.
    """
    if loss.data.ndim != 0:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if loss.requires_grad:
        accumulate_grad(loss, np.ones((), dtype=np.float64))
        for node in reversed(_topo_order(loss)):
            if node._backward is not None and node.grad is not None:
                node._backward()
    return collect_gradients(params)


def collect_gradients(params: Iterable[Parameter]) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    for p in params:
        if not p.trainable:
            continue
        g = p.value.grad
        grads[p.name] = np.zeros_like(p.data) if g is None else g
    return grads


def zero_gradients(params: Iterable[Parameter]) -> None:
    for p in params:
        p.value.grad = None


# ---------------------------------------------------------------------------
# Finite-difference verification


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    checked: int
    passed: bool


@dataclass
class GradCheckReport:
    epsilon: float
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_tsv(self) -> str:
        lines = ["parameter\tmax_rel_error\tstatus"]
        for e in self.entries:
            lines.append(f"{e.name}\t{e.max_rel_error:.3e}\t{'pass' if e.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


# relative-error floor: below this magnitude the comparison is effectively
# absolute, which keeps central-difference roundoff from flagging healthy
# near-zero gradients
_REL_FLOOR = 1e-5

# exhaustive check up to this many entries per tensor; sample beyond it
SAMPLE_LIMIT = 4096
SAMPLE_SIZE = 256


def finite_difference_check(forward: Callable[[], Tensor],
                            params: Sequence[Parameter],
                            epsilon: float = 1e-5,
                            tolerance: float = 1e-4,
                            seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``forward`` must rebuild the graph and return the scalar loss tensor on
    every call, and must be deterministic; the check evaluates it twice up
    front and raises :class:`DeterminismError` if the values differ.  For
    tensors with more than ``SAMPLE_LIMIT`` entries, a seeded uniform sample
    of ``SAMPLE_SIZE`` entries is checked instead of every entry.
    """
    if not (1e-8 < epsilon < 1e-2):
        raise ValueError(f"epsilon {epsilon} outside (1e-8, 1e-2)")

    first = forward().item()
    second = forward().item()
    if first != second:
        raise DeterminismError(
            f"forward is not deterministic: {first!r} != {second!r}")

    trainable = [p for p in params if p.trainable]
    zero_gradients(trainable)
    analytic = backward(forward(), trainable)
    zero_gradients(trainable)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(epsilon=epsilon, tolerance=tolerance)
    for p in trainable:
        flat = p.data.reshape(-1)
        n = flat.size
        if n > SAMPLE_LIMIT:
            indices = np.sort(rng.choice(n, size=SAMPLE_SIZE, replace=False))
        else:
            indices = np.arange(n)
        a_flat = analytic[p.name].reshape(-1)
        worst = 0.0
        for i in indices:
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = forward().item()
            flat[i] = orig - epsilon
            f_minus = forward().item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            a = a_flat[i]
            rel = abs(a - fd) / max(abs(a), abs(fd), _REL_FLOOR)
            if rel > worst:
                worst = rel
        report.entries.append(GradCheckEntry(
            name=p.name, max_rel_error=worst, checked=len(indices),
            passed=worst <= tolerance))
    return report
