"""Minimal dense-tensor engine with reverse-mode autodiff.

Values live in numpy arrays (float32 by default, float64 if the caller
feeds float64 arrays); every op records a backward closure so a single
`backward()` call on a scalar populates `.grad` on all reachable inputs.
Broadcasting is restricted to the patterns the transformer needs
(row-wise bias add, row tiling); anything else is a shape error.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class NumericError(ValueError):
    """Non-finite input where the op requires finite values."""


class Tensor:
    """Array node in a define-by-run graph.

    Leaves created with requires_grad=True are trainable parameters;
    leaves without it are constants. Non-leaves carry the producing
    op's backward closure and parent references.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self._op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self._op or 'leaf'})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction helper -------------------------------------------

    @staticmethod
    def _node(data: np.ndarray, parents: Sequence["Tensor"], op: str,
              backward: Callable[[], None] | None) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = False
        live = tuple(p for p in parents if p.needs_grad)
        out._parents = live
        out._backward = backward if live else None
        out._op = op
        return out

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    # -- backward -------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss.

        Visits each producing op exactly once, in reverse topological
        order; gradients accumulate additively across shared inputs.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() requires a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.needs_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


# -- element and matrix ops ----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-D bias broadcast over the rows of a 2-D a."""
    bias_row = a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]
    if not bias_row and a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} do not match")
    out_data = a.data + b.data

    def backward() -> None:
        _accumulate(a, out.grad)
        _accumulate(b, out.grad.sum(axis=0) if bias_row else out.grad)

    out = Tensor._node(out_data, (a, b), "add", backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} do not match")
    out_data = a.data * b.data

    def backward() -> None:
        _accumulate(a, out.grad * b.data)
        _accumulate(b, out.grad * a.data)

    out = Tensor._node(out_data, (a, b), "mul", backward)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out_data = a.data * c

    def backward() -> None:
        _accumulate(a, out.grad * c)

    out = Tensor._node(out_data, (a,), "scale", backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-D matrix product with gradients for both operands."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: shapes {a.data.shape} and {b.data.shape} are not conformable")
    out_data = a.data @ b.data

    def backward() -> None:
        _accumulate(a, out.grad @ b.data.T)
        _accumulate(b, a.data.T @ out.grad)

    out = Tensor._node(out_data, (a, b), "matmul", backward)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got shape {a.data.shape}")

    def backward() -> None:
        _accumulate(a, out.grad.T)

    out = Tensor._node(a.data.T.copy(), (a,), "transpose", backward)
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward() -> None:
        _accumulate(a, out.grad.reshape(a.data.shape))

    out = Tensor._node(a.data.reshape(shape).copy(), (a,), "reshape", backward)
    return out


def tsum(a: Tensor) -> Tensor:
    def backward() -> None:
        _accumulate(a, np.full_like(a.data, out.grad))

    out = Tensor._node(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), "sum", backward)
    return out


def tmean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward() -> None:
        _accumulate(a, np.full_like(a.data, out.grad / n))

    out = Tensor._node(np.asarray(a.data.mean(), dtype=a.data.dtype), (a,), "mean", backward)
    return out


# -- slicing / stitching -------------------------------------------------------


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def backward() -> None:
        full = np.zeros_like(a.data)
        full[start:stop] = out.grad
        _accumulate(a, full)

    out = Tensor._node(a.data[start:stop].copy(), (a,), "slice_rows", backward)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def backward() -> None:
        full = np.zeros_like(a.data)
        full[:, start:stop] = out.grad
        _accumulate(a, full)

    out = Tensor._node(a.data[:, start:stop].copy(), (a,), "slice_cols", backward)
    return out


def row(a: Tensor, i: int) -> Tensor:
    """Single row of a 2-D tensor as a 1-D vector."""

    def backward() -> None:
        full = np.zeros_like(a.data)
        full[i] = out.grad
        _accumulate(a, full)

    out = Tensor._node(a.data[i].copy(), (a,), "row", backward)
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    widths = [p.data.shape[1] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=1)

    def backward() -> None:
        off = 0
        for p, w in zip(parts, widths):
            _accumulate(p, out.grad[:, off:off + w])
            off += w

    out = Tensor._node(out_data, tuple(parts), "concat_cols", backward)
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    heights = [p.data.shape[0] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=0)

    def backward() -> None:
        off = 0
        for p, h in zip(parts, heights):
            _accumulate(p, out.grad[off:off + h])
            off += h

    out = Tensor._node(out_data, tuple(parts), "concat_rows", backward)
    return out


def tile_rows(a: Tensor, n: int) -> Tensor:
    """Repeat a [1, d] row n times; gradient sums back over the copies."""
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeError(f"tile_rows: expected [1, d], got shape {a.data.shape}")

    def backward() -> None:
        _accumulate(a, out.grad.sum(axis=0, keepdims=True))

    out = Tensor._node(np.repeat(a.data, n, axis=0), (a,), "tile_rows", backward)
    return out


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of an embedding table; gradients scatter-add back."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding: id out of range for table of {table.data.shape[0]} rows")

    def backward() -> None:
        full = np.zeros_like(table.data)
        np.add.at(full, idx, out.grad)
        _accumulate(table, full)

    out = Tensor._node(table.data[idx].copy(), (table,), "embedding", backward)
    return out


# -- nonlinearities and losses ---------------------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`; rows sum to 1 within 1e-6."""
    if not np.all(np.isfinite(x.data) | np.isneginf(x.data)):
        raise NumericError("softmax: input contains nan or +inf")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward() -> None:
        g = out.grad
        dot = (g * s).sum(axis=axis, keepdims=True)
        _accumulate(x, (g - dot) * s)

    out = Tensor._node(s, (x,), "softmax", backward)
    return out


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    d = x.data
    inner = _GELU_C * (d + _GELU_A * d ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * d * (1.0 + t)

    def backward() -> None:
        sech2 = 1.0 - t * t
        deriv = 0.5 * (1.0 + t) + 0.5 * d * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * d ** 2)
        _accumulate(x, out.grad * deriv)

    out = Tensor._node(out_data.astype(d.dtype), (x,), "gelu", backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row zero mean / unit variance, then affine gain and bias."""
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    var = d.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out_data = xhat * gain.data + bias.data

    def backward() -> None:
        g = out.grad
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, (dxhat - m1 - xhat * m2) * inv)
        axes = tuple(range(d.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=axes) if axes else g * xhat)
        _accumulate(bias, g.sum(axis=axes) if axes else g)

    out = Tensor._node(out_data.astype(d.dtype), (x, gain, bias), "layer_norm", backward)
    return out


def cross_entropy_mean(logits: Tensor, targets: Sequence[int],
                       ignore_id: int | None = None) -> Tensor:
    """Mean of -log softmax(logits)[target] over positions not equal to ignore_id."""
    tgt = np.asarray(targets, dtype=np.int64)
    n, c = logits.data.shape
    if tgt.shape != (n,):
        raise ShapeError(f"cross_entropy: {n} logit rows but targets shape {tgt.shape}")
    keep = np.ones(n, dtype=bool) if ignore_id is None else tgt != ignore_id
    if not keep.any():
        raise ValueError("cross_entropy: every position carries the ignore id")
    kept = tgt[keep]
    if kept.min() < 0 or kept.max() >= c:
        raise IndexError(f"cross_entropy: target id out of range [0, {c})")

    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=-1))
    per_pos = lse - z[np.arange(n), np.clip(tgt, 0, c - 1)]
    n_kept = int(keep.sum())
    loss = per_pos[keep].mean()

    def backward() -> None:
        g = float(out.grad)
        soft = np.exp(z - zmax)
        soft /= soft.sum(axis=-1, keepdims=True)
        soft[np.arange(n)[keep], kept] -= 1.0
        soft[~keep] = 0.0
        _accumulate(logits, soft * (g / n_kept))

    out = Tensor._node(np.asarray(loss, dtype=z.dtype), (logits,), "cross_entropy", backward)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only during training."""
    if rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout needs an explicit rng for reproducibility")
    mask = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def backward() -> None:
        _accumulate(x, out.grad * mask)

    out = Tensor._node(x.data * mask, (x,), "dropout", backward)
    return out


# -- gradient checking -----------------------------------------------------------


def grad_check(f: Callable[[list[np.ndarray]], Tensor],
               arrays: list[np.ndarray],
               coords: list[tuple[int, int]],
               h: float = 1e-3,
               tol: float = 1e-2,
               oracle_dtype=np.float64) -> dict:
    """Compare reverse-mode gradients of scalar f against central differences.

    `f` rebuilds the graph from plain arrays so the oracle can rerun it at
    `oracle_dtype` precision (forward evaluations only, independent of the
    backward path). `coords` lists (array index, flat element index) pairs
    to probe. Returns a report dict with per-coordinate relative errors.
    """
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = _run(f, leaves)
    loss.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves]

    high = [a.astype(oracle_dtype) for a in arrays]
    errors = []
    for ai, flat in coords:
        probe = [a.copy() for a in high]
        base = probe[ai].reshape(-1)[flat]
        probe[ai].reshape(-1)[flat] = base + h
        fp = _run_plain(f, probe)
        probe[ai].reshape(-1)[flat] = base - h
        fm = _run_plain(f, probe)
        numeric = (fp - fm) / (2.0 * h)
        a_val = float(analytic[ai].reshape(-1)[flat])
        denom = max(abs(a_val), abs(numeric), 1e-8)
        errors.append(abs(a_val - numeric) / denom)
    max_err = max(errors) if errors else 0.0
    return {"max_rel_error": max_err, "errors": errors, "passed": max_err <= tol}


def _run(f, leaves: list[Tensor]) -> Tensor:
    out = f(leaves)
    if out.data.size != 1:
        raise ShapeError("grad_check: f must be scalar-valued")
    return out


def _run_plain(f, arrays: list[np.ndarray]) -> float:
    return _run(f, [Tensor(a) for a in arrays]).item()
