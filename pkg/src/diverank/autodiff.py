"""Minimal reverse-mode automatic differentiation on dense 2-D tensors.

Everything is float64 and strictly two-dimensional: vectors are 1 x n or
n x 1.  Operations executed inside an active Tape record backward
closures; `backward` replays them in exact reverse recording order, so
gradient accumulation is deterministic and bit-reproducible.  The op set
is the closure of what the attention, excitation, and scoring graphs
need; no more.
"""

from __future__ import annotations

import json
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import ValidationError

CHECKPOINT_VERSION = 1

_TAPE_STACK: list["Tape"] = []
_GRAD_DISABLED = 0


class Tape:
    """Ordered log of recorded operations; context manager activates it."""

    def __init__(self):
        self.records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.records)


class no_grad:
    """Context manager that suspends recording entirely."""

    def __enter__(self) -> None:
        global _GRAD_DISABLED
        _GRAD_DISABLED += 1

    def __exit__(self, *exc) -> None:
        global _GRAD_DISABLED
        _GRAD_DISABLED -= 1


def _active_tape() -> "Tape | None":
    if _GRAD_DISABLED or not _TAPE_STACK:
        return None
    return _TAPE_STACK[-1]


class Tensor:
    """Dense 2-D float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValidationError(f"tensors are 2-D; got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ValidationError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _record(out: Tensor, inputs: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    tape = _active_tape()
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        if tape is not None:
            out._tape = tape
            tape.records.append((out, backward))
    return out


def backward(loss: Tensor) -> None:
    """Populate gradients of every recorded tensor reachable from `loss`.

    `loss` must be 1x1 and must have been produced under an active Tape.
    Records are replayed newest-first; records whose output never received
    a gradient are skipped.
    """
    if loss.shape != (1, 1):
        raise ValidationError(f"backward needs a scalar 1x1 loss, got {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise ValidationError("loss was not recorded on a tape (no grad path)")
    loss.accumulate(np.ones((1, 1)))
    for out, back in reversed(tape.records):
        if out.grad is None:
            continue
        back(out.grad)


# ----- primitives -----


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValidationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _record(out, (a, b), back)


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    ar, ac = a.shape
    br, bc = b.shape
    if (ar, ac) == (br, bc):
        return
    if ac == bc and (ar == 1 or br == 1):
        return
    raise ValidationError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def _reduce_to(shape: tuple[int, int], g: np.ndarray) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; one operand may be a broadcast 1 x n row."""
    _binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(_reduce_to(a.shape, g))
        if b.requires_grad:
            b.accumulate(_reduce_to(b.shape, g))

    return _record(out, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul_elementwise(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; one operand may be a broadcast 1 x n row."""
    _binary_shapes(a, b, "mul_elementwise")
    out = Tensor(a.data * b.data)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(_reduce_to(a.shape, g * b.data))
        if b.requires_grad:
            b.accumulate(_reduce_to(b.shape, g * a.data))

    return _record(out, (a, b), back)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = Tensor(a.data * s)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g * s)

    return _record(out, (a,), back)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValidationError("concat_cols needs at least one tensor")
    rows = parts[0].shape[0]
    for p in parts:
        if p.shape[0] != rows:
            raise ValidationError("concat_cols row counts differ")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def back(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate(g[:, lo:hi])

    return _record(out, tuple(parts), back)


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Select rows of `table` by index; backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ValidationError("gather_rows indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValidationError("gather_rows index out of range")
    out = Tensor(table.data[idx])

    def back(g: np.ndarray) -> None:
        if table.requires_grad:
            buf = np.zeros_like(table.data)
            np.add.at(buf, idx, g)
            table.accumulate(buf)

    return _record(out, (table,), back)


def tile_rows(a: Tensor, reps: int) -> Tensor:
    """Repeat a 1 x n row `reps` times; backward sums over the copies."""
    if a.shape[0] != 1:
        raise ValidationError(f"tile_rows needs a 1 x n tensor, got {a.shape}")
    if reps < 1:
        raise ValidationError("tile_rows reps must be >= 1")
    out = Tensor(np.repeat(a.data, reps, axis=0))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g.sum(axis=0, keepdims=True))

    return _record(out, (a,), back)


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.data.T.copy())

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g.T)

    return _record(out, (a,), back)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction; rows sum to one."""
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    y = ex / ex.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            inner = (g * y).sum(axis=1, keepdims=True)
            a.accumulate(y * (g - inner))

    return _record(out, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g * y * (1.0 - y))

    return _record(out, (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g * mask)

    return _record(out, (a,), back)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g / a.data)

    return _record(out, (a,), back)


def sum_rows(a: Tensor) -> Tensor:
    """Collapse rows: (m, n) -> (1, n)."""
    out = Tensor(a.data.sum(axis=0, keepdims=True))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(np.repeat(g, a.shape[0], axis=0))

    return _record(out, (a,), back)


def mean_rows(a: Tensor) -> Tensor:
    """Collapse rows by arithmetic mean: (m, n) -> (1, n)."""
    m = a.shape[0]
    out = Tensor(a.data.mean(axis=0, keepdims=True))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(np.repeat(g / m, m, axis=0))

    return _record(out, (a,), back)


def sum_all(a: Tensor) -> Tensor:
    """Collapse everything to a 1 x 1 scalar."""
    out = Tensor(np.array([[a.data.sum()]]))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, g[0, 0]))

    return _record(out, (a,), back)


# ----- parameters and optimization -----


def init_param(rows: int, cols: int, rng: np.random.Generator) -> Tensor:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init; fan_in = rows."""
    bound = 1.0 / np.sqrt(rows)
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


def zeros_param(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True)


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """In-place p <- p - lr * grad for every parameter, then zero grads.

    Raises if any parameter is missing its gradient, which catches
    forgotten backward calls and disconnected graphs.
    """
    params = list(params)
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValidationError(f"parameter {i} has no gradient; run backward first")
    for p in params:
        p.data -= lr * p.grad
        p.grad = None


# ----- checkpoint IO -----


def save_checkpoint(path: str, tensors: dict[str, "Tensor | np.ndarray"], meta: dict | None = None) -> None:
    """Write named tensors as versioned JSON with shapes and row-major data."""
    entries = []
    for name in sorted(tensors):
        val = tensors[name]
        arr = val.data if isinstance(val, Tensor) else np.asarray(val, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"checkpoint tensor {name!r} must be 2-D")
        entries.append(
            {
                "name": name,
                "shape": [int(arr.shape[0]), int(arr.shape[1])],
                "data": [float(v) for v in arr.reshape(-1)],
            }
        )
    doc = {"version": CHECKPOINT_VERSION, "meta": meta or {}, "tensors": entries}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version!r}")
    tensors: dict[str, np.ndarray] = {}
    for entry in doc["tensors"]:
        rows, cols = entry["shape"]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(rows, cols)
        tensors[entry["name"]] = arr
    return tensors, doc.get("meta", {})
