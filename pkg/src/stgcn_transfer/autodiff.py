"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every public operation computes its value eagerly with numpy and, when a
:class:`Tape` is active, appends a node holding a vector-Jacobian product
closure.  :func:`backward` walks the tape in reverse to accumulate adjoints.

Only first-order gradients are supported: adjoints are plain arrays, never
recorded tensors.
"""

from __future__ import annotations

import weakref
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "as_tensor",
    "backward",
    "grad_check",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "matmul",
    "conv1d",
    "relu",
    "exp",
    "log",
    "sum",
    "mean",
    "softmax",
    "log_softmax",
    "reshape",
    "transpose",
    "cosine_similarity_matrix",
]

_ACTIVE: list["Tape"] = []


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for a primitive."""


class Tensor:
    """An immutable float64 array that may live on a tape.

    Leaves are created with :meth:`Tape.watch`; everything else is the
    output of a primitive.  Tensors hash by identity, so they can key
    gradient maps.
    """

    __slots__ = ("data", "_tape_ref", "_parents", "_vjp", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, tape: "Tape | None" = None, parents=(), vjp=None):
        arr = np.asarray(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        # weak, so tape -> node -> tape is not a cycle and a finished tape is freed at once
        self._tape_ref = None if tape is None else weakref.ref(tape)
        self._parents = parents
        self._vjp = vjp

    @property
    def tape(self) -> "Tape | None":
        return None if self._tape_ref is None else self._tape_ref()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, tracked={self.tape is not None})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; operations executed inside record onto it.
    Nodes are appended as they are computed, so the list is already in
    topological order.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def watch(self, value) -> Tensor:
        leaf = Tensor(value, tape=self)
        self.leaves.append(leaf)
        self.nodes.append(leaf)
        return leaf

    def gradient(self, root: Tensor, leaves: Iterable[Tensor] | None = None) -> dict:
        return backward(self, root, leaves)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value: np.ndarray, parents: Sequence[Tensor], vjp) -> Tensor:
    # a node joins the tape of its tracked inputs; constant-only results stay untracked
    tape = next((p.tape for p in parents if p.tape is not None), None)
    if tape is None:
        return Tensor(value)
    out = Tensor(value, tape=tape, parents=tuple(parents), vjp=vjp)
    tape.nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a, b, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def vjp(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _record(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _record(a.data * mask, (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise ValueError("log: input must be strictly positive")
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _record(out, (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record(out, (a,), vjp)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def vjp(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _record(out, (a,), vjp)


# ---------------------------------------------------------------- structural


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


# ---------------------------------------------------------------- linear maps


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions differ ({a.shape} @ {b.shape}: {a.shape[-1]} != {b.shape[-2]})"
        )
    if b.ndim == 2 and a.ndim > 2:
        # fold leading axes into one GEMM instead of a broadcast batch of small products
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def vjp(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _record(out, (a, b), vjp)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), vjp)


def conv1d(x, kernel, padding: str = "same") -> Tensor:
    """Stride-1 cross-correlation along the second-to-last axis.

    ``x`` has shape ``(..., L, C_in)`` and ``kernel`` has shape
    ``(K, C_in, C_out)``; the output is ``(..., L_out, C_out)`` where
    ``L_out = L`` for ``"same"`` zero padding and ``L - K + 1`` for
    ``"valid"``.  For even ``K`` the extra pad goes on the right.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim < 2 or kernel.ndim != 3:
        raise ShapeError(f"conv1d: expected x (..., L, C_in) and kernel (K, C_in, C_out), got {x.shape}, {kernel.shape}")
    K, c_in, c_out = kernel.shape
    length = x.shape[-2]
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv1d: input has {x.shape[-1]} channels, kernel expects {c_in}")
    if padding == "same":
        left = (K - 1) // 2
        right = K - 1 - left
    elif padding == "valid":
        left = right = 0
        if K > length:
            raise ShapeError(f"conv1d: kernel length {K} exceeds sequence length {length}")
    else:
        raise ValueError(f"conv1d: unknown padding {padding!r}")

    pad = [(0, 0)] * (x.ndim - 2) + [(left, right), (0, 0)]
    xp = np.pad(x.data, pad) if (left or right) else x.data
    out_len = xp.shape[-2] - K + 1
    w = kernel.data
    # one matmul per kernel tap over shifted views
    out = xp[..., 0:out_len, :] @ w[0]
    for k in range(1, K):
        out += xp[..., k : k + out_len, :] @ w[k]
    axes = list(range(xp.ndim - 1))

    def vjp(g):
        gk = np.stack([np.tensordot(xp[..., k : k + out_len, :], g, axes=(axes, axes)) for k in range(K)])
        gxp = np.zeros_like(xp)
        for k in range(K):
            gxp[..., k : k + out_len, :] += g @ w[k].T
        return gxp[..., left : left + length, :], gk

    return _record(out, (x, kernel), vjp)


def cosine_similarity_matrix(u, v) -> Tensor:
    """Pairwise cosine similarities between rows of ``u`` (N, d) and ``v`` (M, d)."""
    u, v = as_tensor(u), as_tensor(v)
    if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
        raise ShapeError(f"cosine_similarity_matrix: expected (N, d) and (M, d), got {u.shape}, {v.shape}")
    nu = np.linalg.norm(u.data, axis=1)
    nv = np.linalg.norm(v.data, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    uh = u.data / nu[:, None]
    vh = v.data / nv[:, None]
    out = uh @ vh.T

    def vjp(g):
        guh = g @ vh
        gvh = g.T @ uh
        gu = (guh - uh * (guh * uh).sum(axis=1, keepdims=True)) / nu[:, None]
        gv = (gvh - vh * (gvh * vh).sum(axis=1, keepdims=True)) / nv[:, None]
        return gu, gv

    return _record(out, (u, v), vjp)


# ---------------------------------------------------------------- gradients


def backward(tape: Tape, root: Tensor, leaves: Iterable[Tensor] | None = None) -> dict:
    """Reverse sweep from a scalar ``root``.

    Returns a map from each leaf (all watched leaves by default) to its
    gradient; leaves that do not influence ``root`` get zeros.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    if root.tape is not tape:
        raise ValueError("backward: root was not recorded on this tape")
    adjoint: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(tape.nodes):
        g = adjoint.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if parent.tape is None:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg
    targets = tape.leaves if leaves is None else list(leaves)
    return {leaf: adjoint.get(id(leaf), np.zeros_like(leaf.data)) for leaf in targets}


def grad_check(function: Callable[[Tensor], Tensor], point, step: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ValueError("grad_check: step must be positive")
    x0 = np.array(as_tensor(point).data, dtype=np.float64)
    with Tape() as tape:
        x = tape.watch(x0)
        y = function(x)
    if not np.all(np.isfinite(y.data)):
        raise ValueError("grad_check: function value is not finite")
    analytic = backward(tape, y)[x]

    def f(z):
        val = function(Tensor(z)).data
        if not np.all(np.isfinite(val)):
            raise ValueError("grad_check: function value is not finite")
        return float(val.reshape(-1)[0])

    numeric = np.empty_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        zp = flat.copy()
        zm = flat.copy()
        zp[i] += step
        zm[i] -= step
        numeric.reshape(-1)[i] = (f(zp.reshape(x0.shape)) - f(zm.reshape(x0.shape))) / (2 * step)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
