"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

Every operation returns a new :class:`Matrix` node recording its parents and
a closure that routes the upstream gradient to them, so a forward computation
implicitly builds the computation graph (the tape). ``backward`` topologically
sorts the reachable subgraph from a scalar loss and accumulates ``dLoss/dX``
into every node, summing over shared sub-expressions.

All storage is float64 and row-major. Values are immutable once produced by
an operation; only optimizer steps overwrite parameter ``data`` in place,
and never during a forward/backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, InvariantError


def _as_array(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


class Matrix:
    """A dense rows x cols float64 matrix that is also a graph node.

    ``data`` is the forward value, ``grad`` the accumulated gradient after
    ``backward`` (None until then). Parameter leaves are flagged with
    ``is_param`` and optionally carry a ``name`` for optimizer state and
    checkpoints.
    """

    __slots__ = ("data", "grad", "name", "is_param", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, name="", is_param=False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.name = name
        self.is_param = is_param
        self._parents: tuple[Matrix, ...] = tuple(parents)
        self._backward: Callable[[np.ndarray], None] | None = backward

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def values(self) -> np.ndarray:
        """Entries flattened in row-major order."""
        return self.data.ravel()

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise InvariantError(f"item() on non-scalar matrix of shape {self.shape}")
        return float(self.data[0, 0])

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Matrix(shape={self.shape}{tag}, param={self.is_param})"


def parameter(values, name: str) -> Matrix:
    """A trainable leaf; gradients accumulate into it during backward."""
    return Matrix(values, name=name, is_param=True)


def constant(values) -> Matrix:
    """A non-trainable leaf (inputs, masks, averaging matrices)."""
    if isinstance(values, Matrix):
        return values
    return Matrix(values)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product a @ b, differentiable w.r.t. both inputs."""
    if a.cols != b.rows:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape} x {b.shape} (inner dims {a.cols} != {b.rows})"
        )
    out_data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g @ b.data.T)
        b.accumulate_grad(a.data.T @ g)

    return Matrix(out_data, (a, b), backward)


def add(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out_data = a.data + b.data

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return Matrix(out_data, (a, b), backward)


def add_row_bias(a: Matrix, bias: Matrix) -> Matrix:
    """Add a 1 x cols bias row to every row of ``a``."""
    if bias.rows != 1 or bias.cols != a.cols:
        raise DimensionError(f"bias shape {bias.shape} incompatible with {a.shape}")
    out_data = a.data + bias.data

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g)
        bias.accumulate_grad(g.sum(axis=0, keepdims=True))

    return Matrix(out_data, (a, bias), backward)


def mul(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise (Hadamard) product."""
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out_data = a.data * b.data

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)

    return Matrix(out_data, (a, b), backward)


def scale(a: Matrix, c: float) -> Matrix:
    out_data = a.data * c

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g * c)

    return Matrix(out_data, (a,), backward)


def transpose(a: Matrix) -> Matrix:
    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g.T)

    return Matrix(a.data.T.copy(), (a,), backward)


def leaky_relu(a: Matrix, slope: float) -> Matrix:
    """Elementwise max(x, slope*x); the subgradient at exactly 0 is slope."""
    if slope < 0:
        raise InvariantError(f"leaky_relu slope must be >= 0, got {slope}")
    positive = a.data > 0.0
    out_data = np.where(positive, a.data, slope * a.data)

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g * np.where(positive, 1.0, slope))

    return Matrix(out_data, (a,), backward)


def gelu(a: Matrix) -> Matrix:
    """Smooth gated activation (tanh form) used in the feed-forward blocks."""
    c = np.sqrt(2.0 / np.pi)
    x = a.data
    inner = c * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g: np.ndarray) -> None:
        dinner = c * (1.0 + 3 * 0.044715 * x**2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        a.accumulate_grad(g * local)

    return Matrix(out_data, (a,), backward)


def masked_row_softmax(scores: Matrix, mask) -> Matrix:
    """Per-row softmax restricted to positions where ``mask`` == 1.

    Masked-out entries are exactly 0 in the output; a row whose mask is all
    zeros yields a row of zeros (isolated node) rather than an error. Rows
    with at least one unmasked entry sum to 1.
    """
    mask_data = mask.data if isinstance(mask, Matrix) else np.asarray(mask, dtype=np.float64)
    if mask_data.shape != scores.shape:
        raise DimensionError(
            f"masked_row_softmax shapes differ: scores {scores.shape} vs mask {mask_data.shape}"
        )
    if not np.all((mask_data == 0.0) | (mask_data == 1.0)):
        raise InvariantError("mask entries must be exactly 0 or 1")

    keep = mask_data == 1.0
    shifted = np.where(keep, scores.data, -np.inf)
    row_max = np.max(shifted, axis=1, keepdims=True)
    # Rows with no unmasked entry have row_max == -inf; give them 0 weight.
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.where(keep, np.exp(shifted - row_max), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    out_data = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0.0)

    def backward(g: np.ndarray) -> None:
        dot = np.sum(g * out_data, axis=1, keepdims=True)
        scores.accumulate_grad(out_data * (g - dot))

    parents = (scores, mask) if isinstance(mask, Matrix) else (scores,)
    return Matrix(out_data, parents, backward)


def concat_features(a: Matrix, b: Matrix, axis: str = "rows") -> Matrix:
    """Stack two matrices along rows or cols; gradient splits back."""
    if axis == "rows":
        if a.cols != b.cols:
            raise DimensionError(f"row concat needs equal cols: {a.shape} vs {b.shape}")
        out_data = np.concatenate([a.data, b.data], axis=0)
        split = a.rows

        def backward(g: np.ndarray) -> None:
            a.accumulate_grad(g[:split])
            b.accumulate_grad(g[split:])

    elif axis == "cols":
        if a.rows != b.rows:
            raise DimensionError(f"col concat needs equal rows: {a.shape} vs {b.shape}")
        out_data = np.concatenate([a.data, b.data], axis=1)
        split = a.cols

        def backward(g: np.ndarray) -> None:
            a.accumulate_grad(g[:, :split])
            b.accumulate_grad(g[:, split:])

    else:
        raise InvariantError(f"axis must be 'rows' or 'cols', got {axis!r}")
    return Matrix(out_data, (a, b), backward)


def slice_rows(a: Matrix, start: int, stop: int) -> Matrix:
    if not (0 <= start <= stop <= a.rows):
        raise DimensionError(f"row slice [{start}:{stop}] out of range for {a.shape}")
    out_data = a.data[start:stop].copy()

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        full[start:stop] = g
        a.accumulate_grad(full)

    return Matrix(out_data, (a,), backward)


def gather_rows(table: Matrix, indices) -> Matrix:
    """Select rows of ``table`` by integer index (embedding lookup)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError("gather_rows expects a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= table.rows):
        raise DimensionError(f"row index out of range for table with {table.rows} rows")
    out_data = table.data[idx].copy()

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table.accumulate_grad(full)

    return Matrix(out_data, (table,), backward)


def layer_norm(x: Matrix, gain: Matrix, bias: Matrix, eps: float = 1e-5) -> Matrix:
    """Row-wise normalization with learned 1 x cols gain and bias."""
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise DimensionError(
            f"layer_norm gain/bias must be (1, {x.cols}), got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gain.data + bias.data

    def backward(g: np.ndarray) -> None:
        n = x.cols
        dxhat = g * gain.data
        gain.accumulate_grad((g * xhat).sum(axis=0, keepdims=True))
        bias.accumulate_grad(g.sum(axis=0, keepdims=True))
        # Standard layer-norm backward, derived per row.
        dx = inv * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=1, keepdims=True) / n
        )
        x.accumulate_grad(dx)

    return Matrix(out_data, (x, gain, bias), backward)


def sum_all(a: Matrix) -> Matrix:
    out_data = np.array([[a.data.sum()]])

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(np.full_like(a.data, g[0, 0]))

    return Matrix(out_data, (a,), backward)


def mean_all(a: Matrix) -> Matrix:
    n = a.data.size
    out_data = np.array([[a.data.sum() / n]])

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(np.full_like(a.data, g[0, 0] / n))

    return Matrix(out_data, (a,), backward)


def cross_entropy(logits: Matrix, targets) -> Matrix:
    """Mean token cross-entropy of row-wise softmax(logits) against targets.

    ``targets`` is a 1-D integer array with one class id per row. Returns a
    1x1 scalar node.
    """
    idx = np.asarray(targets, dtype=np.int64)
    if idx.ndim != 1 or idx.shape[0] != logits.rows:
        raise DimensionError(
            f"targets must be 1-D with {logits.rows} entries, got shape {idx.shape}"
        )
    if idx.size == 0:
        raise DimensionError("cross_entropy needs at least one target row")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = idx.shape[0]
    picked = p[np.arange(n), idx]
    out_data = np.array([[-np.mean(np.log(np.maximum(picked, 1e-300)))]])

    def backward(g: np.ndarray) -> None:
        d = p.copy()
        d[np.arange(n), idx] -= 1.0
        logits.accumulate_grad(d * (g[0, 0] / n))

    return Matrix(out_data, (logits,), backward)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def topo_order(loss: Matrix) -> list[Matrix]:
    """Iterative post-order DFS; each reachable node appears exactly once."""
    order: list[Matrix] = []
    seen: set[int] = set()
    stack: list[tuple[Matrix, bool]] = [(loss, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Matrix) -> None:
    """Accumulate dLoss/dX into every node reachable from the scalar loss."""
    if loss.shape != (1, 1):
        raise InvariantError(f"backward requires a scalar (1x1) loss, got shape {loss.shape}")
    order = topo_order(loss)
    loss.accumulate_grad(np.ones((1, 1)))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params: Iterable[Matrix]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    worst_index: tuple[int, int]


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences.

    The relative error per entry is |g_ad - g_fd| / max(1, |g_ad| + |g_fd|).
    """

    tol: float
    entries: list[GradCheckEntry] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_error < self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_error={self.max_rel_error:.3e} tol={self.tol:.1e}"


def gradient_check(
    f: Callable[[], Matrix],
    params: Sequence[Matrix],
    step: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Check analytic gradients of a deterministic scalar function ``f``.

    ``f`` rebuilds its computation from the current parameter values on every
    call; it is evaluated once for the analytic gradients and twice per
    parameter entry for the central differences.
    """
    if step <= 0:
        raise InvariantError(f"finite-difference step must be > 0, got {step}")
    report = GradCheckReport(tol=tol)

    zero_grads(params)
    loss = f()
    backward(loss)
    analytic = []
    for p in params:
        analytic.append(np.zeros_like(p.data) if p.grad is None else p.grad.copy())
    zero_grads(params)

    for p, g_ad in zip(params, analytic):
        worst = 0.0
        worst_idx = (0, 0)
        for i in range(p.rows):
            for j in range(p.cols):
                orig = p.data[i, j]
                p.data[i, j] = orig + step
                up = f().item()
                p.data[i, j] = orig - step
                down = f().item()
                p.data[i, j] = orig
                if not (np.isfinite(up) and np.isfinite(down)):
                    report.failures.append(
                        f"non-finite value at {p.name or 'param'}[{i},{j}] under perturbation"
                    )
                    continue
                g_fd = (up - down) / (2.0 * step)
                r = abs(g_ad[i, j] - g_fd) / max(1.0, abs(g_ad[i, j]) + abs(g_fd))
                if r > worst:
                    worst = r
                    worst_idx = (i, j)
        report.entries.append(GradCheckEntry(p.name or "param", worst, worst_idx))
    return report
