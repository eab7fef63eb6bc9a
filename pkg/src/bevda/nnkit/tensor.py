"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps a float64 ndarray plus an optional gradient accumulator and a
link into the op graph. Backward walks the graph once in reverse topological
order; every op's backward accumulates (+=) into its parents, so gradients of
summed losses equal sums of individual gradients.

Only the ops this package needs are provided: elementwise arithmetic, matmul,
conv2d (via im2col), relu / sigmoid / softmax, reductions, shape ops, select,
and a stable binary cross-entropy with logits.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, seed: np.ndarray | None = None):
        if seed is None:
            if self.data.size != 1:
                raise ContractViolation("backward() without a seed needs a scalar tensor")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, rng: np.random.Generator | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return Tensor(-a.data, parents=(a,), backward=backward)


def powf(a, p: float) -> Tensor:
    """a ** p for a constant exponent (a > 0 when p is fractional)."""
    a = as_tensor(a)
    out_data = a.data**p

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1.0))

    return Tensor(out_data, parents=(a,), backward=backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return Tensor(out_data, parents=(a,), backward=backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return Tensor(np.log(a.data), parents=(a,), backward=backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor(a.data * mask, parents=(a,), backward=backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data * (1.0 - out_data))

    return Tensor(out_data, parents=(a,), backward=backward)


def softmax(a, axis: int) -> Tensor:
    """Numerically stabilized softmax along one axis (max subtraction)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate(out_data * (g - inner))

    return Tensor(out_data, parents=(a,), backward=backward)


def select(cond: np.ndarray, a, b) -> Tensor:
    """Elementwise where(cond, a, b); cond is a constant boolean array."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out_data = np.where(cond, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def bce_with_logits(logits, targets) -> Tensor:
    """Elementwise binary cross-entropy in the stable log-sum-exp form."""
    z, g_t = as_tensor(logits), as_tensor(targets)
    zd = z.data
    out_data = np.maximum(zd, 0.0) - zd * g_t.data + np.log1p(np.exp(-np.abs(zd)))

    def backward(g):
        if z.requires_grad:
            sig = np.where(zd >= 0, 1.0 / (1.0 + np.exp(-np.abs(zd))), np.exp(-np.abs(zd)) / (1.0 + np.exp(-np.abs(zd))))
            z._accumulate(_unbroadcast(g * (sig - g_t.data), zd.shape))
        if g_t.requires_grad:
            g_t._accumulate(_unbroadcast(-g * zd, g_t.data.shape))

    return Tensor(out_data, parents=(z, g_t), backward=backward)


# -- reductions and shape ops ------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full_like(a.data, g))
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % a.data.ndim for ax in axes)
            shape = tuple(1 if i in axes else n for i, n in enumerate(a.data.shape))
            g = g.reshape(shape)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return Tensor(out_data, parents=(a,), backward=backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inverse))

    return Tensor(a.data.transpose(axes), parents=(a,), backward=backward)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out_data = a.data[index]

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, index, g)
            a._accumulate(buf)

    return Tensor(np.array(out_data), parents=(a,), backward=backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractViolation("matmul supports 2-D operands only")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor(out_data, parents=(a, b), backward=backward)


# -- convolution -------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = x.shape[2], x.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), (ho, wo, hp, wp)


def _col2im_indices(c: int, ho: int, wo: int, kh: int, kw: int, stride: int, wp: int):
    rows = (np.arange(ho)[:, None] * stride + np.arange(kh)[None, :]).reshape(ho, 1, kh, 1)
    cols = (np.arange(wo)[:, None] * stride + np.arange(kw)[None, :]).reshape(1, wo, 1, kw)
    flat = (rows * wp + cols).reshape(ho * wo, kh * kw)
    return flat


def conv2d(x, w, b, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) over (N, C_in, H, W) inputs.

    Weights are (C_out, C_in, kh, kw); bias is (C_out,). Zero padding.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise ContractViolation("conv2d expects (N,Cin,H,W) input and (Cout,Cin,kh,kw) weights")
    n, c_in, h, wdt = x.data.shape
    c_out, _, kh, kw = w.data.shape
    cols, (ho, wo, hp, wp) = _im2col(x.data, kh, kw, stride, pad)
    w_mat = w.data.reshape(c_out, c_in * kh * kw)
    out = cols @ w_mat.T + b.data
    out_data = out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)

    def backward(g):
        g_mat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        if b.requires_grad:
            b._accumulate(g_mat.sum(axis=0))
        if w.requires_grad:
            w._accumulate((g_mat.T @ cols).reshape(w.data.shape))
        if x.requires_grad:
            g_cols = g_mat @ w_mat
            g_cols = g_cols.reshape(n, ho * wo, c_in, kh * kw).transpose(0, 2, 1, 3)
            flat = _col2im_indices(c_in, ho, wo, kh, kw, stride, wp)
            buf = np.zeros((n, c_in, hp * wp))
            np.add.at(
                buf,
                (np.arange(n)[:, None, None, None], np.arange(c_in)[None, :, None, None], flat[None, None]),
                g_cols,
            )
            buf = buf.reshape(n, c_in, hp, wp)
            if pad:
                buf = buf[:, :, pad:-pad, pad:-pad]
            x._accumulate(buf)

    return Tensor(out_data, parents=(x, w, b), backward=backward)


def conv1x1(x, w, b) -> Tensor:
    """Per-pixel linear map: (N, C_in, H, W) -> (N, C_out, H, W)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 4 or w.data.ndim != 2:
        raise ContractViolation("conv1x1 expects (N,Cin,H,W) input and (Cout,Cin) weights")
    n, c_in, h, wdt = x.data.shape
    c_out = w.data.shape[0]
    out_data = np.einsum("oc,nchw->nohw", w.data, x.data, optimize=True) + b.data[None, :, None, None]

    def backward(g):
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            w._accumulate(np.einsum("nohw,nchw->oc", g, x.data, optimize=True))
        if x.requires_grad:
            x._accumulate(np.einsum("oc,nohw->nchw", w.data, g, optimize=True))

    return Tensor(out_data, parents=(x, w, b), backward=backward)


# -- optimization utilities ---------------------------------------------------


def zero_grads(params: dict[str, Tensor]):
    for p in params.values():
        p.zero_grad()


def sgd_step(params: dict[str, Tensor], velocities: dict[str, np.ndarray], lr: float, momentum: float = 0.0):
    """In-place SGD with classical momentum: v <- m*v + g; p <- p - lr*v."""
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if momentum != 0.0:
            v = velocities.get(name)
            if v is None:
                v = np.zeros_like(p.data)
            v = momentum * v + g
            velocities[name] = v
        else:
            v = g
        p.data = p.data - lr * v


def grad_check(fn, params: dict[str, Tensor], eps: float = 1e-5, atol: float = 1e-8) -> float:
    """Max relative error between analytic gradients and central differences.

    ``fn`` must be a pure function of the parameter values returning a scalar
    Tensor. Per entry the error is max(|a - n| - atol, 0) / max(|a|, |n|);
    the absolute floor absorbs finite-difference roundoff noise on entries
    whose true gradient is near zero.
    """
    zero_grads(params)
    loss = fn()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn().item()
            flat[i] = orig - eps
            down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name].ravel()[i]
            err = max(abs(a - numeric) - atol, 0.0) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst
