"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps an ndarray; differentiable ops link each output to its
inputs with a closure holding the local gradient rule. backward() walks
that implicit tape in reverse topological order, summing gradients over
every path, then clears the tape. float32 is the working precision;
build float64 tensors for verification-grade finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DTYPE = np.float32
_FLOATS = (np.float32, np.float64)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOATS:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # tracked leaves always carry a gradient buffer so that a parameter
        # taking no part in a loss reads back an exact zero gradient
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def sum(self, axes=None):
        return reduce_sum(self, axes)

    def mean(self, axes=None):
        return reduce_mean(self, axes)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Coerce x to a Tensor; scalars take the dtype of `like` when given."""
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None and np.isscalar(x) else None
    return Tensor(x, dtype=dtype)


def _from_op(data, parents, backward_fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._consumed = False
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _sum_to_shape(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast result gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- binary ops

def _binary(a, b, fwd, bwd_a, bwd_b):
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = as_tensor(a, like=b)
    else:
        a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        data = fwd(a.data, b.data)
    except ValueError as exc:
        raise ValueError(f"shapes {a.data.shape} and {b.data.shape} do not broadcast") from exc

    def _bw(g):
        if a.requires_grad:
            _accum(a, _sum_to_shape(bwd_a(g, a.data, b.data), a.data.shape))
        if b.requires_grad:
            _accum(b, _sum_to_shape(bwd_b(g, a.data, b.data), b.data.shape))

    return _from_op(data, (a, b), _bw)


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def matmul(a, b):
    """Batched matrix product [.., m, k] @ [.., k, n] with leading broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    data = np.matmul(a.data, b.data)

    def _bw(g):
        if a.requires_grad:
            _accum(a, _sum_to_shape(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
        if b.requires_grad:
            _accum(b, _sum_to_shape(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))

    return _from_op(data, (a, b), _bw)


# ----------------------------------------------------------------- unary ops

def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    x = as_tensor(x)
    data = np.maximum(x.data, 0)
    # subgradient at 0 is taken as 0
    return _from_op(data, (x,), lambda g: _accum(x, g * (x.data > 0)))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _from_op(y, (x,), lambda g: _accum(x, g * (1.0 - y * y)))


def sigmoid(x):
    x = as_tensor(x)
    y = _stable_sigmoid(x.data)
    return _from_op(y, (x,), lambda g: _accum(x, g * y * (1.0 - y)))


def neg(x):
    x = as_tensor(x)
    return _from_op(-x.data, (x,), lambda g: _accum(x, -g))


def abs_(x):
    x = as_tensor(x)
    return _from_op(np.abs(x.data), (x,), lambda g: _accum(x, g * np.sign(x.data)))


# ------------------------------------------------------------- shape & conv

def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.transpose(x.data, axes)
    return _from_op(data, (x,), lambda g: _accum(x, np.transpose(g, inverse)))


def reshape(x, shape):
    x = as_tensor(x)
    shape = tuple(shape)
    data = np.reshape(x.data, shape)
    return _from_op(data, (x,), lambda g: _accum(x, np.reshape(g, x.data.shape)))


def tail(x, n):
    """Last n entries along the final axis."""
    x = as_tensor(x)
    if not 1 <= n <= x.data.shape[-1]:
        raise ValueError(f"tail of {n} from axis of length {x.data.shape[-1]}")
    data = np.ascontiguousarray(x.data[..., -n:])

    def _bw(g):
        full = np.zeros_like(x.data)
        full[..., -n:] = g
        _accum(x, full)

    return _from_op(data, (x,), _bw)


def dilated_conv1d(x, kernel, dilation=1):
    """Valid-only temporal convolution along the last axis.

    x is [B, C_in, N, T], kernel [C_out, C_in, 1, K]; the output keeps the
    node axis and shrinks time to T - dilation*(K-1). No padding, so every
    output depends only on real inputs.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or kernel.data.shape[2] != 1:
        raise ValueError(f"expected x [B,C,N,T] and kernel [O,C,1,K], got {x.data.shape} and {kernel.data.shape}")
    B, Ci, N, T = x.data.shape
    Co, Ck, _, K = kernel.data.shape
    if Ck != Ci:
        raise ValueError(f"kernel expects {Ck} input channels, x has {Ci}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    T_out = T - dilation * (K - 1)
    if T_out < 1:
        raise ValueError(
            f"time axis too short: T={T}, K={K}, dilation={dilation} needs T >= {dilation * (K - 1) + 1}"
        )
    k2 = kernel.data[:, :, 0, :]  # [Co, Ci, K]
    out = np.zeros((B, Co, N, T_out), dtype=np.result_type(x.data, kernel.data))
    for kk in range(K):
        xs = x.data[..., kk * dilation: kk * dilation + T_out]
        out += np.einsum("oc,bcnt->bont", k2[:, :, kk], xs, optimize=True)

    def _bw(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for kk in range(K):
                gx[..., kk * dilation: kk * dilation + T_out] += np.einsum(
                    "oc,bont->bcnt", k2[:, :, kk], g, optimize=True
                )
            _accum(x, gx)
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            for kk in range(K):
                xs = x.data[..., kk * dilation: kk * dilation + T_out]
                gk[:, :, 0, kk] = np.einsum("bont,bcnt->oc", g, xs, optimize=True)
            _accum(kernel, gk)

    return _from_op(out, (x, kernel), _bw)


# ------------------------------------------------------------------ reduces

def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(int(a) % ndim if -ndim <= int(a) < ndim else ndim for a in axes)
    if any(a >= ndim for a in axes) or len(set(axes)) != len(axes):
        raise ValueError(f"invalid reduction axes {axes} for ndim {ndim}")
    return axes


def _reduce(x, axes, mean):
    x = as_tensor(x)
    axes = _norm_axes(axes, x.ndim)
    count = int(np.prod([x.data.shape[a] for a in axes])) if axes else 1
    data = x.data.sum(axis=axes if axes else None)
    if mean:
        data = data / count

    def _bw(g):
        ge = g
        for a in sorted(axes):
            ge = np.expand_dims(ge, a)
        ge = np.broadcast_to(ge, x.data.shape)
        _accum(x, ge / count if mean else ge.copy())

    return _from_op(np.asarray(data), (x,), _bw)


def reduce_sum(x, axes=None):
    return _reduce(x, axes, mean=False)


def reduce_mean(x, axes=None):
    return _reduce(x, axes, mean=True)


# ----------------------------------------------------------------- backward

def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable tracked tensor.

    The loss must be scalar and still attached to its tape; the tape is
    freed afterwards, so a second call on the same graph raises.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, has shape {loss.data.shape}")
    if loss._consumed:
        raise RuntimeError("tape already consumed by a previous backward call")
    if not loss.requires_grad:
        raise RuntimeError("loss is not connected to any tracked tensor")

    topo: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad += np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
    for node in topo:
        if node._parents:
            node._parents = ()
            node._backward = None
            node._consumed = True


# --------------------------------------------------------------- grad check

@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    passed: bool


def grad_check(f, params, h=1e-5, tol=1e-4) -> list[GradCheckResult]:
    """Compare backward() gradients of f() against central differences.

    f rebuilds its graph from `params` (a dict of float64 leaf tensors) on
    every call and returns a scalar Tensor. Relative error per coordinate
    is |a - n| / max(|a|, |n|, 1); the report carries the max per tensor.
    """
    if isinstance(params, (list, tuple)):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 tensors, {name} is {p.data.dtype}")
        if not p.requires_grad:
            raise ValueError(f"parameter {name} must require grad")
        # perturbations below go through a flat view of the buffer
        p.data = np.ascontiguousarray(p.data)

    for p in params.values():
        p.zero_grad()
    backward(f())
    analytic = {name: p.grad.copy() for name, p in params.items()}

    results = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_plus = float(f().data)
            flat[i] = keep - h
            f_minus = float(f().data)
            flat[i] = keep
            numeric[i] = (f_plus - f_minus) / (2.0 * h)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1.0)
        max_rel = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
        results.append(GradCheckResult(name, max_rel, max_rel <= tol))
    return results
