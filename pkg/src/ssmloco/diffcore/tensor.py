"""Dense tensors with define-by-run reverse-mode differentiation.

Operations only record onto a :class:`Tape` while one is active, so rollout
inference runs without any bookkeeping::

    with Tape() as tape:
        loss = (w @ x).tanh().sum()
    grads = tape.backward(loss)
    grads[w]
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32
_TAPE_STACK: list["Tape"] = []
_KINK_LOG: list[list] = []


class NonFiniteError(FloatingPointError):
    """A forward operation produced NaN or Inf."""


class BackwardError(RuntimeError):
    pass


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the dtype used for tensors built from Python data."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def record_kinks():
    """Collect the arguments of every non-smooth op (relu, clip, min/max).

    Used by finite-difference checks to detect probes that straddle a kink.
    """
    log: list = []
    _KINK_LOG.append(log)
    try:
        yield log
    finally:
        _KINK_LOG.pop()


def _log_kink(arr: np.ndarray) -> None:
    if _KINK_LOG:
        _KINK_LOG[-1].append(np.signbit(arr).copy())


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_tracked", "__weakref__")

    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, np.ndarray):
            arr = data
        else:
            arr = np.asarray(data, dtype=_DEFAULT_DTYPE)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_DEFAULT_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._tracked = requires_grad

    # ---- metadata -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # ---- operators ----------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # ---- method sugar -------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return reduce("sum", self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce("mean", self, axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def square(self):
        return square(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def _raise_item():
    raise ValueError("item() requires a single-element tensor")


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if like is not None:
        return Tensor(np.asarray(x, dtype=like.dtype))
    return Tensor(x)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------
class _Node:
    __slots__ = ("out", "parents", "vjp")

    def __init__(self, out: Tensor, parents: tuple, vjp: Callable):
        self.out = out
        self.parents = parents
        self.vjp = vjp


class Tape:
    """Ordered record of primitive operations for one backward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, parents: tuple, vjp: Callable) -> None:
        self.nodes.append(_Node(out, parents, vjp))

    def reset(self) -> None:
        self.nodes = []
        self.consumed = False

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict:
        """Propagate d(loss) back through the recorded graph.

        Returns a dict mapping every ``requires_grad`` leaf seen on the tape
        (plus anything in ``wrt``) to its gradient. Leaves the loss does not
        depend on get zeros.
        """
        if self.consumed:
            raise BackwardError("tape already consumed; record a new forward pass")
        if loss.size != 1:
            raise BackwardError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {id(t): t for t in (wrt or ())}
        if loss.requires_grad:
            leaves[id(loss)] = loss
        for node in reversed(self.nodes):
            for p in node.parents:
                if p.requires_grad:
                    leaves[id(p)] = p
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            pgrads = node.vjp(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p._tracked:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        self.consumed = True
        self.nodes = []
        out = {}
        for key, leaf in leaves.items():
            g = grads.get(key)
            out[leaf] = np.zeros_like(leaf.data) if g is None else g.astype(leaf.dtype, copy=False)
        return out


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable, check: bool = False) -> Tensor:
    if check and not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite output from forward operation")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.name = None
    tape = _active_tape()
    tracked = tape is not None and any(p._tracked for p in parents)
    out._tracked = tracked
    if tracked:
        tape.record(out, tuple(parents), vjp)
    return out


_FP_GUARD = dict(over="raise", invalid="raise", divide="raise", under="ignore")


def _guarded(fn, *args):
    try:
        with np.errstate(**_FP_GUARD):
            return fn(*args)
    except FloatingPointError as exc:
        raise NonFiniteError(str(exc)) from None


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (adjoint of trailing-dim broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra < 0:
        raise ValueError(f"cannot unbroadcast {grad.shape} to {shape}")
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not broadcastable") from None


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b


# ---------------------------------------------------------------------------
# Binary elementwise
# ---------------------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _make(_guarded(np.add, a.data, b.data), (a, b),
                 lambda g: (unbroadcast(g, sa) if a._tracked else None,
                            unbroadcast(g, sb) if b._tracked else None))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _make(_guarded(np.subtract, a.data, b.data), (a, b),
                 lambda g: (unbroadcast(g, sa) if a._tracked else None,
                            unbroadcast(-g, sb) if b._tracked else None))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data
    return _make(_guarded(np.multiply, ad, bd), (a, b),
                 lambda g: (unbroadcast(g * bd, ad.shape) if a._tracked else None,
                            unbroadcast(g * ad, bd.shape) if b._tracked else None))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data
    out = _guarded(np.divide, ad, bd)

    def vjp(g):
        ga = g / bd
        return (unbroadcast(ga, ad.shape) if a._tracked else None,
                unbroadcast(-ga * out, bd.shape) if b._tracked else None)

    return _make(out, (a, b), vjp)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties send the gradient to ``a``."""
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    _log_kink(a.data - b.data)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (unbroadcast(np.where(pick_a, g, 0), a.shape),
                            unbroadcast(np.where(pick_a, 0, g), b.shape)))


def maximum(a, b) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    _log_kink(a.data - b.data)
    pick_a = a.data >= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (unbroadcast(np.where(pick_a, g, 0), a.shape),
                            unbroadcast(np.where(pick_a, 0, g), b.shape)))


# ---------------------------------------------------------------------------
# Unary elementwise
# ---------------------------------------------------------------------------
def neg(x) -> Tensor:
    x = as_tensor(x)
    return _make(-x.data, (x,), lambda g: (-g,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = _guarded(np.exp, x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _make(_guarded(np.log, xd), (x,), lambda g: (g / xd,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1 - out * out),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (1 + np.tanh(0.5 * v))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return _make(out, (x,), lambda g: (g * out * (1 - out),))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _make(np.logaddexp(0, xd).astype(xd.dtype, copy=False), (x,),
                 lambda g: (g * _sigmoid(xd),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    _log_kink(x.data)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _make(_guarded(np.square, xd), (x,), lambda g: (2 * g * xd,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = _guarded(np.sqrt, x.data)
    return _make(out, (x,), lambda g: (_guarded(np.divide, g, 2 * out),))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; gradient passes only strictly inside."""
    x = as_tensor(x)
    _log_kink(x.data - lo)
    _log_kink(x.data - hi)
    inside = (x.data > lo) & (x.data < hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


_ELEMENTWISE = {
    "add": add, "mul": mul, "sub": sub, "div": div,
    "exp": exp, "log": log, "tanh": tanh, "softplus": softplus, "sigmoid": sigmoid,
    "relu": relu, "neg": neg, "square": square, "sqrt": sqrt,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise primitive by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# Linear algebra, reductions, shape
# ---------------------------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a._tracked else None
        gb = unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b._tracked else None
        return ga, gb

    return _make(ad @ bd, (a, b), vjp, check=True)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, (int, np.integer)):
        axis = (axis,)
    for a in axis:
        if not -ndim <= a < ndim:
            raise ValueError(f"axis {a} out of range for {ndim}-d tensor")
    return tuple(a % ndim for a in axis)


def reduce(op: str, x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    if count == 0:
        raise ValueError("reduction over an empty axis")
    if op == "sum":
        out = x.data.sum(axis=axes, keepdims=keepdims)
        scale = None
    elif op == "mean":
        out = x.data.mean(axis=axes, keepdims=keepdims)
        scale = 1.0 / count
    else:
        raise ValueError(f"unknown reduction {op!r}")
    shape = x.shape

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        g = np.broadcast_to(g, shape)
        return ((g * scale) if scale is not None else g.copy(),)

    return _make(np.asarray(out, dtype=x.dtype), (x,), vjp)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return reduce("sum", x, axis, keepdims)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    return reduce("mean", x, axis, keepdims)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    shape, dtype = x.shape, x.dtype

    basic = _is_basic_index(idx)

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(x.data[idx], (x,), vjp)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(data, ts, vjp)


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in ts], axis=axis)
    ax = axis % data.ndim

    def vjp(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return _make(data, ts, vjp)


# ---------------------------------------------------------------------------
# Fused primitives
# ---------------------------------------------------------------------------
def layernorm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gain`` and ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layernorm affine params must have shape ({d},)")
    if d < 2 and eps <= 0:
        raise ValueError("layernorm over a single feature needs eps > 0")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = _guarded(lambda v: 1.0 / np.sqrt(v + eps), var).astype(xd.dtype, copy=False)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data

    def vjp(g):
        gxhat = g * gd
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gain, bias), vjp)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), vjp)


def linear_recurrence(decay, drive, x0, backend: str = "sequential", block: int = 32) -> Tensor:
    """States of ``x_k = decay_k * x_{k-1} + drive_k`` for every k.

    ``decay`` and ``drive`` have shape ``(..., K, *S)`` and ``x0`` has shape
    ``(..., *S)`` where the token axis K sits at ``-1 - len(S)``; here S is
    taken as the trailing two axes (channel, state). Returns all K states.
    """
    from .scan import scan_parallel, scan_sequential

    decay, drive, x0 = as_tensor(decay), as_tensor(drive), as_tensor(x0)
    if decay.shape != drive.shape:
        raise ValueError(f"decay {decay.shape} and drive {drive.shape} differ")
    if decay.ndim < 3 or x0.shape != decay.shape[:-3] + decay.shape[-2:]:
        raise ValueError(f"state {x0.shape} does not match recurrence inputs {decay.shape}")
    axis = decay.ndim - 3
    run = scan_parallel if backend == "parallel" else scan_sequential
    if backend not in ("parallel", "sequential"):
        raise ValueError(f"unknown scan backend {backend!r}")
    a, b, x0d = decay.data, drive.data, x0.data
    xs = run(a, b, x0d, axis=axis, block=block)
    if not np.all(np.isfinite(xs)):
        raise NonFiniteError("non-finite state in linear recurrence")

    def vjp(g):
        # reverse-time recurrence: lam_k = g_k + a_{k+1} lam_{k+1}
        a_next = np.concatenate(
            [np.take(a, np.arange(1, a.shape[axis]), axis=axis),
             np.zeros_like(np.take(a, [0], axis=axis))], axis=axis)
        lam = run(np.flip(a_next, axis), np.flip(g, axis), np.zeros_like(x0d), axis=axis, block=block)
        lam = np.flip(lam, axis)
        prev = np.concatenate([np.expand_dims(x0d, axis),
                               np.take(xs, np.arange(xs.shape[axis] - 1), axis=axis)], axis=axis)
        g_decay = lam * prev
        g_x0 = np.take(a, 0, axis=axis) * np.take(lam, 0, axis=axis)
        return g_decay, lam, g_x0

    return _make(xs, (decay, drive, x0), vjp)


def selective_scan(delta, u, Bm, Cm, A, x0, backend: str = "sequential", block: int = 32):
    """Fused selective scan; returns ``(y, x_last)``.

    Shapes: delta, u (Bt, K, d); Bm, Cm (Bt, K, h); A (d, h), negative;
    x0 (Bt, d, h). Computes, for every token k,

        x_k = exp(delta_k[:, None] * A) * x_{k-1} + (delta_k * u_k)[:, None] * Bm_k[None, :]
        y_k = x_k @ Cm_k

    ``y`` is differentiable in every input; ``x_last`` is a plain array
    (carried state is treated as data by the callers).
    """
    from .scan import scan_parallel, scan_sequential

    delta, u, Bm, Cm, A, x0 = (as_tensor(t) for t in (delta, u, Bm, Cm, A, x0))
    Bt, K, d = u.shape
    h = A.shape[-1]
    if delta.shape != u.shape or Bm.shape != (Bt, K, h) or Cm.shape != (Bt, K, h) or A.shape != (d, h):
        raise ValueError("selective_scan: inconsistent input shapes")
    if x0.shape != (Bt, d, h):
        raise ValueError(f"selective_scan: state {x0.shape} does not match ({Bt}, {d}, {h})")
    if backend not in ("sequential", "parallel"):
        raise ValueError(f"unknown scan backend {backend!r}")
    run = scan_parallel if backend == "parallel" else scan_sequential
    dl, ud, bd, cd, ad, x0d = delta.data, u.data, Bm.data, Cm.data, A.data, x0.data
    dA = _guarded(np.exp, dl[..., None] * ad)
    du = dl * ud
    drive = du[..., None] * bd[:, :, None, :]
    xs = run(dA, drive, x0d, axis=1, block=block)
    if not np.all(np.isfinite(xs)):
        raise NonFiniteError("non-finite state in selective scan")
    y = np.matmul(xs, cd[..., None])[..., 0]

    def vjp(g):
        gxs = g[..., None] * cd[:, :, None, :]
        a_next = np.concatenate([dA[:, 1:], np.zeros_like(dA[:, :1])], axis=1)
        lam = run(a_next[:, ::-1], gxs[:, ::-1], np.zeros_like(x0d), axis=1, block=block)[:, ::-1]
        prev = np.concatenate([x0d[:, None], xs[:, :-1]], axis=1)
        g_dA = lam * prev
        g_dA *= dA
        ones = np.ones((h, 1), dtype=g_dA.dtype)
        # contractions over the short state axis go through matmul (much faster than .sum(-1))
        g_delta = np.matmul(g_dA * ad, ones)[..., 0]
        g_A = (g_dA * dl[..., None]).reshape(-1, d, h).sum(axis=0)
        g_du = np.matmul(lam, bd[..., None])[..., 0]
        g_delta = g_delta + g_du * ud
        g_u = g_du * dl
        g_B = np.matmul(du[:, :, None, :], lam)[:, :, 0]
        g_C = np.matmul(g[:, :, None, :], xs)[:, :, 0]
        g_x0 = dA[:, 0] * lam[:, 0]
        return g_delta, g_u, g_B, g_C, g_A, g_x0

    return _make(y, (delta, u, Bm, Cm, A, x0), vjp), xs[:, -1]
