"""Dense float32 tensors with reverse-mode automatic differentiation.

The tape is implicit: every tensor produced while recording is enabled
remembers its parent tensors and a backward closure, and carries a
monotonically increasing creation id. Creation order is a topological
order of the graph, so ``backward`` walks reachable nodes by descending
id — no explicit sort is needed and replay is fully deterministic in
single-threaded mode.

Only two broadcasting forms are supported by the elementwise ops:
scalar-vs-tensor and equal shapes. Channel-wise conditioning and
concatenation, which a generic broadcast would otherwise cover, are
dedicated primitives with hand-written gradients.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import RankError, ShapeError

_grad_enabled = True
_next_id = itertools.count()


def is_grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A contiguous float32 array, optionally recorded on the tape.

    ``grad`` is populated (same shape as ``data``) for every tensor with
    ``requires_grad=True`` that was reachable from the loss of the last
    ``backward`` call.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._id = next(_next_id)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise RankError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Value-equal tensor with no tape parents; gradients stop here."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        out._id = next(_next_id)
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar over the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def detach(x: Tensor) -> Tensor:
    return x.detach()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    """Wrap a forward result, recording it when the tape is active."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into every reachable recorded tensor.

    The visited section of the tape is consumed: parent links and
    closures are dropped so memory is released and a second backward
    through the same subgraph is impossible.
    """
    if loss.data.size != 1:
        raise RankError(f"backward() needs a scalar loss, got shape {loss.shape}")

    # reachable recorded nodes, then reverse creation order
    nodes: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in seen or t._backward is None:
            continue
        seen.add(t._id)
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._id, reverse=True)

    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)
    for t in nodes:
        if t.grad is None:
            t._parents = ()
            t._backward = None
            continue
        grads = t._backward(t.grad)
        for parent, g in zip(t._parents, grads):
            if g is not None and (parent.requires_grad or parent._backward is not None):
                _accum(parent, g)
        t._parents = ()
        t._backward = None


# ---------------------------------------------------------------------------
# elementwise ops (scalar or equal-shape operands only)
# ---------------------------------------------------------------------------


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        return _node(a.data + np.float32(s), (a,), lambda g: (g,))
    _check_same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        return _node(a.data - np.float32(s), (a,), lambda g: (g,))
    _check_same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        return _node(a.data * np.float32(s), (a,), lambda g: (g * np.float32(s),))
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def tsum(a: Tensor) -> Tensor:
    """Sum over all elements, as a 0-d tensor."""
    shape = a.shape
    return _node(
        np.asarray(a.data.sum(), dtype=np.float32),
        (a,),
        lambda g: (np.broadcast_to(g, shape).astype(np.float32),)
    )


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x), the activation used throughout the denoiser."""
    sig = 1.0 / (1.0 + np.exp(-a.data))
    sig = sig.astype(np.float32)
    out = a.data * sig
    ad = a.data
    return _node(out, (a,), lambda g: (g * (sig * (1.0 + ad * (1.0 - sig))),))


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean over all elements of the squared difference (0-d tensor)."""
    a = _as_tensor(a)
    b = _as_tensor(b)
    _check_same_shape(a, b, "mse")
    diff = a.data - b.data
    val = np.float32((diff * diff).mean())
    scale = np.float32(2.0 / diff.size)

    def bwd(g):
        gd = (g * scale) * diff
        return (gd, -gd)

    return _node(np.asarray(val).reshape(()), (a, b), bwd)


# ---------------------------------------------------------------------------
# structured ops for the denoiser
# ---------------------------------------------------------------------------


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two [N,C,H,W] tensors along the channel axis."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise RankError("concat_channels expects rank-4 tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: shapes {a.shape} and {b.shape} differ off-channel")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return _node(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]))


def channel_affine(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Per-channel y = x * scale[c] + shift[c] over an [N,C,H,W] tensor."""
    if x.data.ndim != 4:
        raise RankError("channel_affine expects a rank-4 tensor")
    c = x.shape[1]
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeError(f"channel_affine: need scale/shift of shape ({c},)")
    s4 = scale.data.reshape(1, c, 1, 1)
    xd = x.data

    def bwd(g):
        return (
            g * s4,
            (g * xd).sum(axis=(0, 2, 3)),
            g.sum(axis=(0, 2, 3)),
        )

    return _node(xd * s4 + shift.data.reshape(1, c, 1, 1), (x, scale, shift), bwd)


def linear(v: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """w @ v + b for a vector v [D], weights w [O,D], bias b [O]."""
    if v.data.ndim != 1 or w.data.ndim != 2 or b.data.ndim != 1:
        raise RankError("linear expects v:[D], w:[O,D], b:[O]")
    if w.shape[1] != v.shape[0] or w.shape[0] != b.shape[0]:
        raise ShapeError(f"linear: incompatible {v.shape}, {w.shape}, {b.shape}")
    vd, wd = v.data, w.data

    def bwd(g):
        return (wd.T @ g, np.outer(g, vd), g)

    return _node(wd @ vd + b.data, (v, w, b), bwd)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel) slice over its spatial extent."""
    if x.data.ndim != 4:
        raise RankError("instance_norm expects a rank-4 tensor")
    xd = x.data
    mu = xd.mean(axis=(2, 3), keepdims=True)
    var = xd.var(axis=(2, 3), keepdims=True)
    inv = (1.0 / np.sqrt(var + np.float32(eps))).astype(np.float32)
    y = (xd - mu) * inv

    def bwd(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gym = (g * y).mean(axis=(2, 3), keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _node(y, (x,), bwd)


def _im2col(x: np.ndarray, kh: int, kw: int, ph: int, pw: int) -> np.ndarray:
    """[N,C,H,W] -> [N*H*W, C*kh*kw] patch matrix for a same-padded conv."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # win: [N, C, H, W, kh, kw] -> [N, H, W, C, kh, kw]
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * kh * kw)
    return np.ascontiguousarray(col)


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    col = _im2col(x, kh, kw, (kh - 1) // 2, (kw - 1) // 2)
    out = col @ w.reshape(f, c * kh * kw).T
    if b is not None:
        out += b
    out = out.reshape(n, h, wd, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), col


def conv2d(x: Tensor, w: Tensor, b: Tensor, pad: int | None = None) -> Tensor:
    """Same-padded stride-1 cross-correlation of [N,C,H,W] with [F,C,kh,kw].

    Gradients for x go through a full correlation with the spatially
    flipped, channel-transposed kernel; gradients for w and b are plain
    GEMM reductions over the cached patch matrix.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise RankError("conv2d expects x:[N,C,H,W], w:[F,C,kh,kw]")
    n, c, h, wid = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} must be odd (same padding only)")
    if b.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({f},)")
    if pad is not None and (pad != (kh - 1) // 2 or pad != (kw - 1) // 2):
        raise ShapeError(f"conv2d: pad {pad} is not (k-1)/2 for kernel {kh}x{kw}")

    out, col = _conv_forward(x.data, w.data, b.data)
    wd = w.data

    def bwd(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1).reshape(n * h * wid, f))
        dw = (gmat.T @ col).reshape(f, c, kh, kw)
        db = gmat.sum(axis=0)
        wrot = np.ascontiguousarray(wd[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx, _ = _conv_forward(np.ascontiguousarray(g), wrot, None)
        return (dx, dw, db)

    return _node(out, (x, w, b), bwd)
