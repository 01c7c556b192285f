"""Reverse-mode autodiff over dense float64 matrices.

Values are plain 2-D numpy float64 arrays ("matrices": row-major, rows x cols).
``Node`` wraps a matrix for graph tracking; ``Param`` is a leaf with a
persistent gradient accumulator and an RMSProp state buffer.  Operations
record their backward rule on the innermost active ``Tape`` (entered as a
context manager); with no active tape they are pure forward evaluations.

The op set is deliberately small: matmul, same-shape add/sub/mul, row-wise
bias add, scalar scale, elementwise activations, row reductions, reshape and
transpose.  Broadcasting beyond the row-wise bias add is unsupported.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Node",
    "Param",
    "Tape",
    "constant",
    "matmul",
    "add",
    "add_row",
    "sub",
    "mul",
    "scale",
    "activation",
    "reduce",
    "reshape",
    "transpose",
    "take_rows",
    "concat_rows",
    "CHECK_FINITE",
]

# When True every public op validates that its output is finite.  Off by
# default: the property suite asserts the no-NaN contract instead, and the
# optimizer step validates gradients each update.
CHECK_FINITE = False


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


class Node:
    """A matrix value in the computation graph."""

    __slots__ = ("value", "grad", "track")

    def __init__(self, value: np.ndarray, track: bool = False):
        self.value = value
        self.grad: np.ndarray | None = None
        self.track = track

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def __repr__(self) -> str:
        return f"Node(shape={self.value.shape}, track={self.track})"


class Param(Node):
    """Trainable leaf: value plus persistent grad and RMSProp accumulator.

    ``grad`` accumulates across backward passes until explicitly cleared
    (the optimizer step clears it).  ``rms_state`` holds the running mean
    of squared gradients and is always elementwise nonnegative.
    """

    __slots__ = ("rms_state",)

    def __init__(self, value):
        v = _as_matrix(value).copy()
        super().__init__(v, track=True)
        self.grad = np.zeros_like(v)
        self.rms_state = np.zeros_like(v)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param(shape={self.value.shape})"


def constant(x) -> Node:
    """Wrap a value as an untracked graph node (no gradient ever flows)."""
    return Node(_as_matrix(x), track=False)


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


_ACTIVE: list["Tape"] = []


class Tape:
    """Records backward rules in forward order; replays them in reverse."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _ACTIVE.pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    def __len__(self) -> int:
        return len(self._ops)

    def _record(self, fn: Callable[[], None]) -> None:
        self._ops.append(fn)

    def backward(self, loss: Node) -> None:
        """Seed d(loss)/d(loss)=1 and push gradients back to every leaf.

        ``loss`` must be a 1x1 node produced by ops recorded on this tape.
        Param gradients accumulate on top of whatever they already hold.
        """
        if not self._ops:
            raise ValueError("backward on an empty tape")
        if loss.value.shape != (1, 1):
            raise ShapeError(f"loss must be 1x1, got {loss.value.shape}")
        loss.grad = np.ones((1, 1))
        for fn in reversed(self._ops):
            fn()


def _tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _accum(node: Node, g: np.ndarray) -> None:
    if isinstance(node, Param):
        node.grad += g
    elif node.grad is None:
        node.grad = g
    else:
        node.grad = node.grad + g


def _finish(out: Node) -> Node:
    if CHECK_FINITE and not np.isfinite(out.value).all():
        raise FloatingPointError("operation produced a non-finite entry")
    return out


def matmul(a, b) -> Node:
    """Matrix product a @ b."""
    a, b = _wrap(a), _wrap(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.value.shape} x {b.value.shape}")
    out = Node(a.value @ b.value, track=a.track or b.track)
    t = _tape()
    if t is not None and out.track:
        av, bv = a.value, b.value

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.track:
                _accum(a, g @ bv.T)
            if b.track:
                _accum(b, av.T @ g)

        t._record(bwd)
    return _finish(out)


def add(a, b) -> Node:
    """Elementwise sum of two same-shape matrices."""
    a, b = _wrap(a), _wrap(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    out = Node(a.value + b.value, track=a.track or b.track)
    t = _tape()
    if t is not None and out.track:

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.track:
                _accum(a, g)
            if b.track:
                _accum(b, g)

        t._record(bwd)
    return _finish(out)


def add_row(x, bias) -> Node:
    """Add a 1 x n bias row to every row of x (the only broadcast allowed)."""
    x, bias = _wrap(x), _wrap(bias)
    if bias.value.shape != (1, x.value.shape[1]):
        raise ShapeError(
            f"add_row expects bias 1x{x.value.shape[1]}, got {bias.value.shape}"
        )
    out = Node(x.value + bias.value, track=x.track or bias.track)
    t = _tape()
    if t is not None and out.track:

        def bwd():
            g = out.grad
            if g is None:
                return
            if x.track:
                _accum(x, g)
            if bias.track:
                _accum(bias, g.sum(axis=0, keepdims=True))

        t._record(bwd)
    return _finish(out)


def sub(a, b) -> Node:
    """Elementwise difference a - b."""
    a, b = _wrap(a), _wrap(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"sub shape mismatch: {a.value.shape} vs {b.value.shape}")
    out = Node(a.value - b.value, track=a.track or b.track)
    t = _tape()
    if t is not None and out.track:

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.track:
                _accum(a, g)
            if b.track:
                _accum(b, -g)

        t._record(bwd)
    return _finish(out)


def mul(a, b) -> Node:
    """Hadamard product of two same-shape matrices."""
    a, b = _wrap(a), _wrap(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul shape mismatch: {a.value.shape} vs {b.value.shape}")
    out = Node(a.value * b.value, track=a.track or b.track)
    t = _tape()
    if t is not None and out.track:
        av, bv = a.value, b.value

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.track:
                _accum(a, g * bv)
            if b.track:
                _accum(b, g * av)

        t._record(bwd)
    return _finish(out)


def scale(x, c: float) -> Node:
    """Multiply every entry by the python scalar c."""
    x = _wrap(x)
    c = float(c)
    out = Node(x.value * c, track=x.track)
    t = _tape()
    if t is not None and out.track:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(x, g * c)

        t._record(bwd)
    return _finish(out)


# kind -> (forward, derivative-from-(input, output)).  Subgradient at 0 is 0
# for relu and abs; elu uses alpha=1.
_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (lambda v: np.maximum(v, 0.0), lambda v, o: (v > 0).astype(np.float64)),
    "elu": (
        lambda v: np.where(v > 0, v, np.expm1(v)),
        lambda v, o: np.where(v > 0, 1.0, o + 1.0),
    ),
    "abs": (np.abs, lambda v, o: np.sign(v)),
    "identity": (lambda v: v.copy(), lambda v, o: np.ones_like(v)),
}


def activation(x, kind: str) -> Node:
    """Elementwise nonlinearity: one of relu, elu, abs, identity."""
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation kind {kind!r}")
    x = _wrap(x)
    fwd, deriv = _ACTIVATIONS[kind]
    out = Node(fwd(x.value), track=x.track)
    t = _tape()
    if t is not None and out.track:
        xv, ov = x.value, out.value

        def bwd():
            g = out.grad
            if g is None:
                return
            # look the derivative up again so a monkeypatched rule is honored
            _accum(x, g * _ACTIVATIONS[kind][1](xv, ov))

        t._record(bwd)
    return _finish(out)


def reduce(x, kind: str) -> Node:
    """Collapse rows (mean_rows, max_rows) or everything (sum_all).

    max_rows routes its gradient to the first argmax of each column.
    """
    x = _wrap(x)
    v = x.value
    if v.size == 0:
        raise ValueError("reduce of an empty matrix")
    if kind == "mean_rows":
        out_v = v.mean(axis=0, keepdims=True)
    elif kind == "max_rows":
        out_v = v.max(axis=0, keepdims=True)
    elif kind == "sum_all":
        out_v = np.array([[v.sum()]])
    else:
        raise ValueError(f"unknown reduce kind {kind!r}")
    out = Node(out_v, track=x.track)
    t = _tape()
    if t is not None and out.track:
        rows = v.shape[0]

        def bwd():
            g = out.grad
            if g is None:
                return
            if kind == "mean_rows":
                _accum(x, np.repeat(g / rows, rows, axis=0))
            elif kind == "max_rows":
                z = np.zeros_like(v)
                idx = np.argmax(v, axis=0)  # first argmax: deterministic ties
                z[idx, np.arange(v.shape[1])] = g[0]
                _accum(x, z)
            else:
                _accum(x, np.full_like(v, g[0, 0]))

        t._record(bwd)
    return _finish(out)


def reshape(x, rows: int, cols: int) -> Node:
    """Row-major reshape."""
    x = _wrap(x)
    if rows * cols != x.value.size:
        raise ShapeError(f"cannot reshape {x.value.shape} to ({rows}, {cols})")
    out = Node(x.value.reshape(rows, cols), track=x.track)
    t = _tape()
    if t is not None and out.track:
        orig = x.value.shape

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(x, g.reshape(orig))

        t._record(bwd)
    return _finish(out)


def transpose(x) -> Node:
    x = _wrap(x)
    out = Node(x.value.T.copy(), track=x.track)
    t = _tape()
    if t is not None and out.track:

        def bwd():
            g = out.grad
            if g is None:
                return
            _accum(x, g.T)

        t._record(bwd)
    return _finish(out)


def take_rows(x, start: int, stop: int) -> Node:
    """Contiguous row slice x[start:stop, :]."""
    x = _wrap(x)
    rows = x.value.shape[0]
    if not 0 <= start < stop <= rows:
        raise ShapeError(f"row slice [{start}:{stop}] out of range for {rows} rows")
    out = Node(x.value[start:stop].copy(), track=x.track)
    t = _tape()
    if t is not None and out.track:

        def bwd():
            g = out.grad
            if g is None:
                return
            z = np.zeros_like(x.value)
            z[start:stop] = g
            _accum(x, z)

        t._record(bwd)
    return _finish(out)


def concat_rows(parts: Sequence["Node"]) -> Node:
    """Stack same-width matrices vertically."""
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows of zero parts")
    width = parts[0].value.shape[1]
    for p in parts:
        if p.value.shape[1] != width:
            raise ShapeError(
                f"concat_rows width mismatch: {p.value.shape[1]} vs {width}"
            )
    out = Node(np.vstack([p.value for p in parts]), track=any(p.track for p in parts))
    t = _tape()
    if t is not None and out.track:
        offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

        def bwd():
            g = out.grad
            if g is None:
                return
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.track:
                    _accum(p, g[lo:hi])

        t._record(bwd)
    return _finish(out)


def collect_params(*sources: Iterable[Param] | dict[str, Param]) -> list[Param]:
    """Flatten mixed iterables/dicts of params into one de-duplicated list."""
    seen: dict[int, Param] = {}
    for src in sources:
        it: Sequence[Param] | Iterable[Param]
        it = src.values() if isinstance(src, dict) else src
        for p in it:
            seen.setdefault(id(p), p)
    return list(seen.values())
