"""Reverse-mode differentiable tensor core.

Everything is dense float64 numpy. Gradients flow through an explicit Tape:
operations executed while a Tape is active record a backward rule, and
``Tape.backward`` replays the rules in exact reverse execution order,
accumulating (never overwriting) into input gradients. Tapes are created per
forward pass, discarded after backward, and never shared across threads.

Only the primitives the recommendation models need are provided; this is not
a general-purpose autodiff system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A dense array with an optional gradient slot.

    ``grad`` is lazily allocated on first accumulation and has the same shape
    as ``data``. A Tensor may be read from many threads, but must not take
    part in a backward pass concurrently.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"


_TAPE_STACK: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of executed primitives for one forward pass.

    Use as a context manager around the forward computation, then call
    ``backward(loss, params)`` once. Replaying visits records in exact
    reverse execution order; each backward rule adds into its input grads.
    """

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        self._records.append((out, backward))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor, params: "ParameterStore | None" = None) -> None:
        """Populate grads of everything reachable from ``loss``.

        ``loss`` must be scalar. Parameters in ``params`` that are not
        reachable from the loss end up with an explicit zero grad.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.requires_grad:
            if not any(out is loss for out, _ in self._records):
                raise ValueError("loss tensor was not produced on this tape")
            loss.grad = np.ones_like(loss.data)
            for out, rule in reversed(self._records):
                if out.grad is not None:
                    rule(out.grad)
        if params is not None:
            for p in params.tensors():
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)


def _trace(out: Tensor, inputs: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _trace(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _trace(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _trace(out, (a, b), backward)


def scale(t: Tensor, c: float) -> Tensor:
    out = Tensor(t.data * c)

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g * c)

    return _trace(out, (t,), backward)


def add_const(t: Tensor, c: float) -> Tensor:
    out = Tensor(t.data + c)

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g)

    return _trace(out, (t,), backward)


def one_minus(t: Tensor) -> Tensor:
    return add_const(scale(t, -1.0), 1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _trace(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Dense layer y = xW + b, bias broadcast over the batch."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear shape mismatch: x {x.shape} vs W {w.shape}")
    if b.data.shape != (w.shape[1],):
        raise ShapeError(f"linear bias shape {b.shape} does not match W {w.shape}")
    return add(matmul(x, w), b)


def exp(t: Tensor) -> Tensor:
    out = Tensor(np.exp(t.data))

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g * out.data)

    return _trace(out, (t,), backward)


def tanh(t: Tensor) -> Tensor:
    out = Tensor(np.tanh(t.data))

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g * (1.0 - out.data * out.data))

    return _trace(out, (t,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split form avoids overflow warnings for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t: Tensor) -> Tensor:
    out = Tensor(_sigmoid(t.data))

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g * out.data * (1.0 - out.data))

    return _trace(out, (t,), backward)


def softplus(t: Tensor) -> Tensor:
    """log(1 + exp(x)), the stable form of -log sigmoid(-x)."""
    out = Tensor(np.logaddexp(0.0, t.data))

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g * _sigmoid(t.data))

    return _trace(out, (t,), backward)


def sum_all(t: Tensor) -> Tensor:
    out = Tensor(np.sum(t.data))

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(np.broadcast_to(g, t.shape).copy())

    return _trace(out, (t,), backward)


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log softmax over the last axis of a [batch, N] tensor.

    Max-subtraction keeps it finite for any finite input; exp of the output
    sums to 1 per row to machine precision.
    """
    if logits.data.ndim != 2 or logits.shape[1] < 1:
        raise ShapeError(f"log_softmax expects [batch, N], got {logits.shape}")
    x = logits.data
    m = np.max(x, axis=1, keepdims=True)
    lse = m + np.log(np.sum(np.exp(x - m), axis=1, keepdims=True))
    out = Tensor(x - lse)

    def backward(g: np.ndarray) -> None:
        if logits.requires_grad:
            sm = np.exp(out.data)
            logits.accumulate_grad(g - sm * g.sum(axis=1, keepdims=True))

    return _trace(out, (logits,), backward)


def logsumexp_all(t: Tensor) -> Tensor:
    """log sum exp over every entry, as a scalar."""
    x = t.data
    m = np.max(x)
    out = Tensor(m + np.log(np.sum(np.exp(x - m))))

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            t.accumulate_grad(g * np.exp(x - out.data))

    return _trace(out, (t,), backward)


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of ``table``; backward scatters gradients additively."""
    idx = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        bad = idx[(idx < 0) | (idx >= n)][0]
        raise IndexError(f"embedding id {bad} out of range [0, {n})")
    out = Tensor(table.data[idx] if idx.size else np.zeros((0, table.shape[1])))

    def backward(g: np.ndarray) -> None:
        if table.requires_grad and idx.size:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return _trace(out, (table,), backward)


def gather2d(t: Tensor, rows: Sequence[int], cols: Sequence[int]) -> Tensor:
    """Pick entries t[rows[i], cols[i]] into a 1-D tensor."""
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    out = Tensor(t.data[r, c])

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            np.add.at(t.grad, (r, c), g)

    return _trace(out, (t,), backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors along axis 0."""
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[lo:hi])

    return _trace(out, tuple(parts), backward)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Join two [batch, d] tensors along the feature axis."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    split = a.shape[1]

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g[:, :split])
        if b.requires_grad:
            b.accumulate_grad(g[:, split:])

    return _trace(out, (a, b), backward)


def slice_rows(t: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(t.data[start:stop].copy())

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad[start:stop] += g

    return _trace(out, (t,), backward)


# ---------------------------------------------------------------------------
# GRU cell


@dataclass
class GRUCellParams:
    """Reset / update / candidate weights of one gated recurrent unit."""

    w_reset: Tensor
    u_reset: Tensor
    b_reset: Tensor
    w_update: Tensor
    u_update: Tensor
    b_update: Tensor
    w_cand: Tensor
    u_cand: Tensor
    b_cand: Tensor


def gru_cell(x: Tensor, h_prev: Tensor, p: GRUCellParams) -> Tensor:
    """One GRU step: h' = u * h_prev + (1 - u) * c.

    The update gate preserves the previous state, so with all-zero
    parameters the cell halves the hidden state exactly.
    """
    if x.shape[0] != h_prev.shape[0]:
        raise ShapeError(f"gru_cell batch mismatch: x {x.shape} vs h {h_prev.shape}")
    r = sigmoid(add(add(matmul(x, p.w_reset), matmul(h_prev, p.u_reset)), p.b_reset))
    u = sigmoid(add(add(matmul(x, p.w_update), matmul(h_prev, p.u_update)), p.b_update))
    c = tanh(add(add(matmul(x, p.w_cand), matmul(mul(r, h_prev), p.u_cand)), p.b_cand))
    return add(mul(u, h_prev), mul(one_minus(u), c))


# ---------------------------------------------------------------------------
# parameters and optimization


class ParameterStore:
    """Named trainable tensors plus Adam moment state.

    Names are unique; the step counter is shared across all parameters and
    increases by one per ``adam_step``.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._moment1: dict[str, np.ndarray] = {}
        self._moment2: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(values, requires_grad=True, name=name)
        self._params[name] = t
        self._moment1[name] = np.zeros_like(t.data)
        self._moment2[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def tensors(self) -> Iterable[Tensor]:
        return self._params.values()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def adam_step(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        """One Adam update with bias correction.

        Weight decay is added to the raw gradient before the moment updates
        (plain additive decay, not the decoupled variant). Grads are cleared
        after the step.
        """
        for name, p in self._params.items():
            if p.grad is None:
                raise ValueError(f"adam_step before backward: no gradient for {name}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1**t
        bc2 = 1.0 - beta2**t
        for name, p in self._params.items():
            g = p.grad if weight_decay == 0.0 else p.grad + weight_decay * p.data
            m = self._moment1[name]
            v = self._moment2[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
            p.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, values in snap.items():
            self._params[name].data[...] = values


def gradient_check(
    loss_fn: Callable[[], Tensor],
    store: ParameterStore,
    epsilon: float = 1e-5,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Compare analytic grads against central finite differences.

    ``loss_fn`` must be deterministic (fix any noise inputs outside). Returns
    the max of |a - n| / max(|a|, |n|, 1e-8) over the checked coordinates.
    """
    store.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss, store)
    analytic = {name: p.grad.copy() for name, p in store.items()}
    store.zero_grad()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in store.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = loss_fn().item()
            flat[i] = orig - epsilon
            f_minus = loss_fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
