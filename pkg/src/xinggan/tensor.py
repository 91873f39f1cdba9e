"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays (row-major, C order). A :class:`Var` binds an array
into the computation graph; every op below returns a new ``Var`` whose
``_backward`` closure maps the output gradient to one gradient per parent.

Precision is a global mode: float32 for training, float64 for gradient and
oracle checks (see :func:`precision`).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_DTYPE = np.dtype(np.float32)


def get_dtype() -> np.dtype:
    return _DTYPE


def set_dtype(dtype) -> None:
    global _DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dt}; use float32 or float64")
    _DTYPE = dt


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default scalar precision."""
    old = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(old)


class NonFiniteError(ValueError):
    """An op received NaN or infinite input it cannot handle."""


class Var:
    """A tensor bound into the differentiable computation graph."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        if isinstance(data, np.ndarray) and data.dtype.kind == "f":
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Var":
        return Var(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{tag})"

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Var):
    """A trainable leaf. ``init`` names the initialization rule."""

    def __init__(self, shape: Sequence[int], init: str = "zeros", fan_in: int = 1):
        super().__init__(np.zeros(tuple(shape), dtype=_DTYPE), requires_grad=True)
        self.init = init
        self.fan_in = fan_in


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=_DTYPE))


def _node(data: np.ndarray, parents: tuple, backward_fn: Callable) -> Var:
    if any(p.requires_grad for p in parents):
        return Var(data, requires_grad=True, _parents=parents, _backward=backward_fn)
    return Var(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Var) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every trainable leaf.

    Gradients accumulate across calls; callers reset them between steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            grads[k] = grads[k] + pg if k in grads else pg


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), bw)


def scale(x, s: float) -> Var:
    x = as_var(x)
    return _node(x.data * x.data.dtype.type(s), (x,), lambda g: (g * s,))


def tanh(x) -> Var:
    x = as_var(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x) -> Var:
    x = as_var(x)
    mask = x.data > 0
    return _node(np.maximum(x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope: float = 0.2) -> Var:
    x = as_var(x)
    k = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return _node(x.data * k, (x,), lambda g: (g * k,))


def abs_(x) -> Var:
    x = as_var(x)
    s = np.sign(x.data)
    return _node(np.abs(x.data), (x,), lambda g: (g * s,))


def sum_(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(out, dtype=x.dtype), (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def bce_with_logits(logits, target: float) -> Var:
    """Mean binary cross-entropy between sigmoid(logits) and a constant label."""
    x = as_var(logits)
    z = float(target)
    d = x.data
    per = np.maximum(d, 0) - d * z + np.log1p(np.exp(-np.abs(d)))
    n = d.size

    def bw(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * d))
        return (g * (sig - z) / n,)

    return _node(np.asarray(per.mean(), dtype=x.dtype), (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra and shape


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data @ b.data, (a, b), bw)


def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError("softmax input contains non-finite values")
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), bw)


def softmax_rows(m) -> Var:
    m = as_var(m)
    if m.ndim != 2:
        raise ValueError(f"softmax_rows expects a matrix, got shape {m.shape}")
    return softmax(m, axis=-1)


def reshape(x, shape) -> Var:
    x = as_var(x)
    out = x.data.reshape(shape)
    return _node(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Sequence[int] | None = None) -> Var:
    x = as_var(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _node(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))


def concat(xs: Iterable, axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, tuple(xs), bw)


def concat_channels(xs: Sequence) -> Var:
    """Stack ``[C_i, H, W]`` (or batched ``[B, C_i, H, W]``) maps along channels."""
    xs = [as_var(x) for x in xs]
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != len(ref) or x.shape[-2:] != ref[-2:] or x.shape[:-3] != ref[:-3]:
            raise ValueError(f"concat_channels spatial mismatch: {ref} vs {x.shape}")
    return concat(xs, axis=xs[0].ndim - 3)


def detach(x) -> Var:
    return Var(as_var(x).data)


# ---------------------------------------------------------------------------
# convolution and normalization


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """(B,C,H,W) -> ((B*Ho*Wo, C*k*k) columns, Ho, Wo)."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    return cols, ho, wo


def _col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add (B,Ho,Wo,C,k,k) patches back into a (B,C,H,W) map."""
    b, c, h, w = shape
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.transpose(0, 3, 4, 5, 1, 2)  # B,C,k,k,Ho,Wo
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += patches[:, :, i, j]
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return out


def _batched(fn):
    """Let a (B,C,H,W) op also accept a single (C,H,W) map."""

    def wrapper(x, *args, **kwargs):
        x = as_var(x)
        if x.ndim == 3:
            try:
                out = fn(reshape(x, (1,) + x.shape), *args, **kwargs)
            except ValueError as e:
                # report the caller's shape, not the promoted one
                raise ValueError(str(e).replace(str((1,) + x.shape), str(x.shape))) from None
            return reshape(out, out.shape[1:])
        if x.ndim != 4:
            raise ValueError(f"{fn.__name__} expects [C,H,W] or [B,C,H,W], got {x.shape}")
        return fn(x, *args, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_batched
def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Var:
    """Zero-padded 2-D cross-correlation. ``weight`` is [Cout, Cin, k, k]."""
    w = as_var(weight)
    cout, cin, k, k2 = w.shape
    b, c, h, wd = x.shape
    if c != cin or k != k2:
        raise ValueError(f"conv2d shape mismatch: input {x.shape} vs weight {w.shape}")
    if stride < 1 or h + 2 * pad < k or wd + 2 * pad < k:
        raise ValueError(f"conv2d kernel {k} (stride {stride}, pad {pad}) does not fit input {x.shape}")
    cols, ho, wo = _im2col(x.data, k, stride, pad)
    wmat = w.data.reshape(cout, -1)
    out = (cols @ wmat.T).reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)
    parents = (x, w)
    if bias is not None:
        bias = as_var(bias)
        out = out + bias.data.reshape(1, -1, 1, 1)
        parents = (x, w, bias)
    out = np.ascontiguousarray(out)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = gw = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(b, ho, wo, c, k, k)
            gx = _col2im(gcols, x.shape, k, stride, pad, ho, wo)
        if w.requires_grad:
            gw = (g2.T @ cols).reshape(w.shape)
        if bias is not None:
            return gx, gw, g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw

    return _node(out, parents, bw)


@_batched
def conv_transpose2d(x, weight, bias=None, stride: int = 2, pad: int = 1) -> Var:
    """Transposed convolution; ``weight`` is [Cin, Cout, k, k].

    Output size is (H - 1) * stride - 2 * pad + k.
    """
    w = as_var(weight)
    cin, cout, k, _ = w.shape
    b, c, h, wd = x.shape
    if c != cin:
        raise ValueError(f"conv_transpose2d shape mismatch: input {x.shape} vs weight {w.shape}")
    hout = (h - 1) * stride - 2 * pad + k
    wout = (wd - 1) * stride - 2 * pad + k
    x2 = x.data.transpose(0, 2, 3, 1).reshape(-1, cin)
    wmat = w.data.reshape(cin, -1)
    cols = (x2 @ wmat).reshape(b, h, wd, cout, k, k)
    out = _col2im(cols, (b, cout, hout, wout), k, stride, pad, h, wd)
    parents = (x, w)
    if bias is not None:
        bias = as_var(bias)
        out = out + bias.data.reshape(1, -1, 1, 1)
        parents = (x, w, bias)

    def bw(g):
        gcols, _, _ = _im2col(g, k, stride, pad)  # (B*H*W, Cout*k*k)
        gx = gw = None
        if x.requires_grad:
            gx = (gcols @ wmat.T).reshape(b, h, wd, cin).transpose(0, 3, 1, 2)
        if w.requires_grad:
            gw = (x2.T @ gcols).reshape(w.shape)
        if bias is not None:
            return gx, gw, g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw

    return _node(out, parents, bw)


@_batched
def instance_norm(x, gamma, beta, eps: float = 1e-5) -> Var:
    """Per-sample, per-channel normalization over space, then affine."""
    gamma, beta = as_var(gamma), as_var(beta)
    b, c, h, w = x.shape
    m = h * w
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gmap = gamma.data.reshape(1, -1, 1, 1)
    out = xhat * gmap + beta.data.reshape(1, -1, 1, 1)

    def bw(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gmap
            gx = inv / m * (m * dxhat - dxhat.sum(axis=(2, 3), keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=(2, 3), keepdims=True))
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        return gx, gg, gb

    return _node(out.astype(x.dtype, copy=False), (x, gamma, beta), bw)
