"""Minimal dense-matrix reverse-mode differentiation engine.

Everything is a 2-D float64 array; scalars are (1, 1) tensors. Operations
record themselves on the active :class:`Tape` (when one is open) and
``Tape.backward`` replays the records in reverse, which is a reverse
topological order because records are appended in execution order.

The engine is deliberately small: exactly the primitives needed to train a
graph-attention classifier with a linear probability head. Sparse
neighborhood aggregation is expressed with ``gather_rows`` /
``segment_softmax`` / ``spmm`` over a CSR edge layout.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DegenerateRowError, DimensionError, DomainError

LOG_CLAMP = 1e-12  # floor applied to probabilities before any log


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"tensors are 2-D; got array of shape {arr.shape}")
    return arr


class Tensor:
    """Dense 2-D float64 array, optionally tracked for gradients.

    ``grad`` is None until a backward pass (or ``zero_grad``) touches the
    tensor; repeated backward passes accumulate into it.
    """

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_matrix(values)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self) -> str:
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Use as a context manager; ops executed inside record a backward
    closure when their output needs a gradient. ``backward`` visits the
    records exactly once, newest first.
    """

    def __init__(self):
        # (output, inputs, backward_fn); backward_fn(out_grad) returns one
        # gradient array (or None) per input.
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _push_tape(self)
        return self

    def __exit__(self, *exc) -> None:
        _pop_tape(self)

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> None:
        self._records.append((output, tuple(inputs), backward_fn))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from loss."""
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar loss; got shape {loss.shape}")
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        leaves: dict[int, Tensor] = {id(loss): loss}
        for output, inputs, backward_fn in reversed(self._records):
            out_grad = adjoint.pop(id(output), None)
            leaves.pop(id(output), None)
            if out_grad is None:
                continue  # not an ancestor of the loss
            if output.requires_grad:
                output.accumulate_grad(out_grad)
            for tensor, grad in zip(inputs, backward_fn(out_grad)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + grad
                else:
                    adjoint[key] = grad
                    leaves[key] = tensor
        for key, tensor in leaves.items():
            if tensor.requires_grad:
                tensor.accumulate_grad(adjoint[key])


_TAPE_STACK: list[Tape] = []


def _push_tape(tape: Tape) -> None:
    _TAPE_STACK.append(tape)


def _pop_tape(tape: Tape) -> None:
    if not _TAPE_STACK or _TAPE_STACK[-1] is not tape:
        raise ContractError("tape stack corrupted: exiting a tape that is not active")
    _TAPE_STACK.pop()


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _result(values: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(values, requires_grad=any(t.requires_grad for t in inputs))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, backward_fn)
    return out


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


# ---------------------------------------------------------------------------
# arithmetic primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        return g @ bv.T, av.T @ g

    return _result(av @ bv, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ, {a.shape} vs {b.shape}")

    def backward(g):
        return g, g

    return _result(a.values + b.values, (a, b), backward)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ContractError("add_n needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionError(f"add_n: shapes differ, {shape} vs {t.shape}")

    def backward(g):
        return tuple(g for _ in tensors)

    total = tensors[0].values.copy()
    for t in tensors[1:]:
        total += t.values
    return _result(total, tuple(tensors), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        return g * bv, g * av

    return _result(av * bv, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward(g):
        return (g * factor,)

    return _result(a.values * factor, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def backward(g):
        return (np.full(shape, g[0, 0]),)

    return _result(a.values.sum(), (a,), backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[0]):
        raise DimensionError(f"slice_rows: [{start}:{stop}] outside {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _result(a.values[start:stop].copy(), (a,), backward)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    rows = tensors[0].shape[0]
    for t in tensors[1:]:
        if t.shape[0] != rows:
            raise DimensionError(f"concat_cols: row counts differ, {rows} vs {t.shape[0]}")
    widths = [t.shape[1] for t in tensors]

    def backward(g):
        grads = []
        offset = 0
        for w in widths:
            grads.append(g[:, offset:offset + w])
            offset += w
        return tuple(grads)

    return _result(np.concatenate([t.values for t in tensors], axis=1), tuple(tensors), backward)


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise DimensionError(f"gather_rows: index must be 1-D, got shape {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ContractError("gather_rows: index out of range")
    shape = a.shape

    def backward(g):
        full = np.empty(shape)
        # bincount is much faster than ufunc.at for the narrow matrices here
        for col in range(shape[1]):
            full[:, col] = np.bincount(index, weights=g[:, col], minlength=shape[0])
        return (full,)

    return _result(a.values[index], (a,), backward)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    av = a.values
    pos = av > 0

    def backward(g):
        return (g * np.where(pos, 1.0, slope),)

    return _result(np.where(pos, av, slope * av), (a,), backward)


def relu(a: Tensor) -> Tensor:
    av = a.values
    pos = av > 0  # subgradient 0 at 0

    def backward(g):
        return (g * pos,)

    return _result(np.where(pos, av, 0.0), (a,), backward)


def elu(a: Tensor) -> Tensor:
    av = a.values
    neg_branch = np.expm1(np.minimum(av, 0.0))
    pos = av > 0

    def backward(g):
        return (g * np.where(pos, 1.0, neg_branch + 1.0),)

    return _result(np.where(pos, av, neg_branch), (a,), backward)


def log(a: Tensor) -> Tensor:
    av = a.values
    if np.any(av <= 0.0):
        raise DomainError("log: inputs must be strictly positive")

    def backward(g):
        return (g / av,)

    return _result(np.log(av), (a,), backward)


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------

def _softmax_backward(probs: np.ndarray, g: np.ndarray) -> np.ndarray:
    # rowwise: dlogits = p * (g - sum(g * p))
    inner = (g * probs).sum(axis=1, keepdims=True)
    return probs * (g - inner)


def row_softmax(logits: Tensor) -> Tensor:
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (_softmax_backward(probs, g),)

    return _result(probs, (logits,), backward)


def masked_row_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Rowwise softmax over the unmasked entries; masked entries are exactly 0.

    ``mask`` is a boolean array matching ``logits``; True marks entries that
    participate. A row with no unmasked entry has no defined distribution and
    raises :class:`DegenerateRowError`.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise DimensionError(f"masked_row_softmax: mask {mask.shape} vs logits {logits.shape}")
    empty = ~mask.any(axis=1)
    if empty.any():
        rows = np.flatnonzero(empty)[:8].tolist()
        raise DegenerateRowError(f"softmax rows with no unmasked entry: {rows}")
    neg_inf = np.where(mask, logits.values, -np.inf)
    shifted = neg_inf - neg_inf.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    probs = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (np.where(mask, _softmax_backward(probs, g), 0.0),)

    return _result(probs, (logits,), backward)


def segment_softmax(edge_vals: Tensor, offsets: np.ndarray) -> Tensor:
    """Softmax over contiguous CSR row segments of an (E, 1) tensor.

    Equivalent to :func:`masked_row_softmax` on the dense matrix whose row i
    holds the segment ``offsets[i]:offsets[i+1]``, but linear in E.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    if edge_vals.shape[1] != 1:
        raise DimensionError(f"segment_softmax: expected (E, 1), got {edge_vals.shape}")
    if offsets[-1] != edge_vals.shape[0]:
        raise DimensionError(
            f"segment_softmax: offsets end at {offsets[-1]}, tensor has {edge_vals.shape[0]} rows")
    lengths = np.diff(offsets)
    if np.any(lengths == 0):
        rows = np.flatnonzero(lengths == 0)[:8].tolist()
        raise DegenerateRowError(f"softmax segments with no entries: {rows}")
    row_of_edge = np.repeat(np.arange(lengths.size), lengths)
    vals = edge_vals.values[:, 0]
    seg_max = np.fmax.reduceat(vals, offsets[:-1])
    e = np.exp(vals - seg_max[row_of_edge])
    seg_sum = np.add.reduceat(e, offsets[:-1])
    probs = e / seg_sum[row_of_edge]

    def backward(g):
        gv = g[:, 0]
        inner = np.add.reduceat(gv * probs, offsets[:-1])
        return ((probs * (gv - inner[row_of_edge])).reshape(-1, 1),)

    return _result(probs.reshape(-1, 1), (edge_vals,), backward)


# ---------------------------------------------------------------------------
# sparse-dense product over a CSR support
# ---------------------------------------------------------------------------

def spmm(edge_vals: Tensor, offsets: np.ndarray, targets: np.ndarray,
         dense: Tensor, num_rows: int) -> Tensor:
    """Multiply a sparse matrix (values on a CSR support) by a dense matrix.

    Row i of the output is sum over edges e in segment i of
    ``edge_vals[e] * dense[targets[e]]``. Differentiable in both the edge
    values and the dense operand.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if edge_vals.shape != (targets.size, 1):
        raise DimensionError(
            f"spmm: edge values {edge_vals.shape} vs support of {targets.size} edges")
    if targets.size and targets.max() >= dense.shape[0]:
        raise DimensionError(
            f"spmm: target index {targets.max()} outside dense operand {dense.shape}")
    vals = edge_vals.values[:, 0]
    mat = sp.csr_matrix((vals, targets, offsets), shape=(num_rows, dense.shape[0]))
    dense_vals = dense.values

    def backward(g):
        row_of_edge = np.repeat(np.arange(num_rows), np.diff(offsets))
        d_vals = np.einsum("ek,ek->e", g[row_of_edge], dense_vals[targets])
        d_dense = mat.T @ g
        return d_vals.reshape(-1, 1), d_dense

    return _result(mat @ dense_vals, (edge_vals, dense), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def weighted_cross_entropy(probs: Tensor, onehot: np.ndarray, sample_weights: np.ndarray,
                           row_mask: Optional[np.ndarray] = None,
                           clamp: float = LOG_CLAMP) -> Tensor:
    """Weighted cross entropy -sum_v w_v * y_v . log p(v) over masked rows.

    ``onehot`` and ``sample_weights`` are plain arrays (labels and boosting
    weights are not differentiated through). Probabilities are clamped at
    ``clamp`` before the log; rows outside ``row_mask`` contribute nothing.
    """
    onehot = np.asarray(onehot, dtype=np.float64)
    if onehot.shape != probs.shape:
        raise DimensionError(f"cross entropy: onehot {onehot.shape} vs probs {probs.shape}")
    weights = np.asarray(sample_weights, dtype=np.float64).reshape(-1)
    if weights.size != probs.shape[0]:
        raise DimensionError(
            f"cross entropy: {weights.size} weights for {probs.shape[0]} rows")
    if np.any(weights < 0):
        raise ContractError("cross entropy: sample weights must be nonnegative")
    row_sums = probs.values.sum(axis=1)
    if row_mask is None:
        active = np.ones(probs.shape[0], dtype=bool)
    else:
        active = np.asarray(row_mask, dtype=bool)
    if np.any(np.abs(row_sums[active] - 1.0) > 1e-6):
        raise ContractError("cross entropy: probability rows must sum to 1")
    w_col = np.where(active, weights, 0.0).reshape(-1, 1)
    clamped = np.maximum(probs.values, clamp)
    loss = -(w_col * onehot * np.log(clamped)).sum()
    unclamped = probs.values >= clamp

    def backward(g):
        return (g[0, 0] * (-(w_col * onehot) / clamped) * unclamped,)

    return _result(loss, (probs,), backward)
