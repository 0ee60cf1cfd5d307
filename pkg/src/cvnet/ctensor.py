"""Complex tensors with reverse-mode automatic differentiation.

Everything is double-precision complex (complex128). Tensors are immutable:
ops return new tensors and record a backward closure on a tape; `backward()`
walks the tape in reverse creation order (creation order is already a
topological order because inputs always exist before their outputs).

Gradient convention
-------------------
For a real scalar loss L and a complex variable z = x + iy we propagate the
conjugate Wirtinger derivative

    grad(z) = dL/dz* = (dL/dx + i dL/dy) / 2

so that steepest descent is the plain update z <- z - lr * grad(z).
For an op w = f(z) with formal Wirtinger partials (dw/dz, dw/dz*), the chain
rule for a real loss is

    grad(z) += conj(grad(w)) * dw/dz*  +  grad(w) * conj(dw/dz)

which every backward closure below implements in vectorized form. The loss
node itself is seeded with 1/2 (the Wirtinger derivative of Re(w) at w):
with that seed, L = |z|^2 yields grad(z) = z exactly.

Ops whose math is real (softmax, sigmoid, tanh, log, sqrt) require an exactly
zero imaginary part and use the holomorphic-extension rule; upstream re()/
abs2() nodes keep admissible perturbations on the real axis, so the composite
derivative is exact.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np

__all__ = [
    "CTensor", "ShapeError", "DomainError", "GraphError",
    "astensor", "no_grad", "is_grad_enabled",
    "add", "sub", "neg", "hadamard", "div", "scale", "conj", "transpose",
    "reshape", "concat", "re", "im", "abs2", "cabs", "crelu", "matmul",
    "conv1d", "softmax", "sigmoid", "tanh", "log", "sqrt", "csum", "cmean",
    "diag_part", "elementwise", "complex_matmul", "backward",
]


class ShapeError(ValueError):
    """Operand shapes violate an op contract."""


class DomainError(ValueError):
    """Operand values violate an op contract (e.g. complex input to softmax)."""


class GraphError(RuntimeError):
    """Tape/graph misuse (e.g. backward from a non-real or non-scalar node)."""


_grad_mode = [True]
_ids = itertools.count()


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / evaluation)."""
    _grad_mode.append(False)
    try:
        yield
    finally:
        _grad_mode.pop()


def is_grad_enabled():
    return _grad_mode[-1]


class CTensor:
    """N-d complex128 array plus tape bookkeeping.

    `real_only` marks parameters that are real by construction (their
    gradient and updates are projected onto the real axis).
    """

    __slots__ = ("value", "grad", "requires_grad", "real_only", "op",
                 "_parents", "_backward", "_id")

    def __init__(self, value, requires_grad=False, real_only=False,
                 op="leaf", parents=()):
        arr = np.asarray(value, dtype=np.complex128)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.value = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) and is_grad_enabled()
        self.real_only = bool(real_only)
        self.op = op
        self._parents = parents if self.requires_grad else ()
        self._backward = None
        self._id = next(_ids)

    # ---- metadata ----
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"CTensor(shape={self.shape}, op={self.op!r})"

    def item(self):
        if self.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return complex(self.value.reshape(()))

    # ---- operator sugar ----
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return hadamard(self, _coerce(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / other)
        return div(self, _coerce(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __getitem__(self, key):
        return _slice(self, key)

    @property
    def T(self):
        return transpose(self)

    @property
    def H(self):
        return transpose(conj(self))


def astensor(value, requires_grad=False, real_only=False):
    """Wrap an array-like as a leaf tensor."""
    return CTensor(value, requires_grad=requires_grad, real_only=real_only)


def _coerce(x):
    if isinstance(x, CTensor):
        return x
    return CTensor(x)


def _make(value, op, parents):
    req = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = CTensor(value, requires_grad=req, op=op,
                  parents=tuple(parents) if req else ())
    return out


def _unbroadcast(g, shape):
    """Sum gradient `g` down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape))
                 if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not align")


def _require_real(op, a):
    if np.any(a.value.imag != 0.0):
        raise DomainError(f"{op}: input must have exactly zero imaginary part")


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("add", a, b)
    out = _make(a.value + b.value, "add", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g, b.shape)
        out._backward = _bw
    return out


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("sub", a, b)
    out = _make(a.value - b.value, "sub", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.shape)
            if b.requires_grad:
                b.grad -= _unbroadcast(g, b.shape)
        out._backward = _bw
    return out


def neg(a):
    out = _make(-a.value, "neg", (a,))
    if out.requires_grad:
        def _bw():
            a.grad -= out.grad
        out._backward = _bw
    return out


def hadamard(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("hadamard", a, b)
    out = _make(a.value * b.value, "hadamard", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g * np.conj(b.value), a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g * np.conj(a.value), b.shape)
        out._backward = _bw
    return out


def div(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast("div", a, b)
    if np.any(b.value == 0):
        raise DomainError("div: zero denominator")
    out = _make(a.value / b.value, "div", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += _unbroadcast(g * np.conj(1.0 / b.value), a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(
                    g * np.conj(-a.value / (b.value * b.value)), b.shape)
        out._backward = _bw
    return out


def scale(a, c):
    """Multiply by a python/numpy scalar constant (not a tape node)."""
    c = complex(c)
    out = _make(a.value * c, "scale", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad * np.conj(c)
        out._backward = _bw
    return out


def conj(a):
    out = _make(np.conj(a.value), "conj", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += np.conj(out.grad)
        out._backward = _bw
    return out


def transpose(a):
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got shape {a.shape}")
    out = _make(a.value.T, "transpose", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad.T
        out._backward = _bw
    return out


def reshape(a, shape):
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}")
    out = _make(a.value.reshape(shape), "reshape", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad.reshape(a.shape)
        out._backward = _bw
    return out


def concat(parts, axis=0):
    parts = [_coerce(p) for p in parts]
    out = _make(np.concatenate([p.value for p in parts], axis=axis),
                "concat", tuple(parts))
    if out.requires_grad:
        sizes = [p.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def _bw():
            g = out.grad
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    p.grad += g[tuple(idx)]
        out._backward = _bw
    return out


def _slice(a, key):
    out = _make(a.value[key], "slice", (a,))
    if out.requires_grad:
        def _bw():
            buf = np.zeros_like(a.value)
            buf[key] = out.grad
            a.grad += buf
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# real/imag structure
# ---------------------------------------------------------------------------

def re(a):
    out = _make(a.value.real.astype(np.complex128), "re", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad.real
        out._backward = _bw
    return out


def im(a):
    out = _make(a.value.imag.astype(np.complex128), "im", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += 1j * out.grad.real
        out._backward = _bw
    return out


def abs2(a):
    """|z|^2 elementwise; output is real-valued."""
    v = a.value
    out = _make((v.real * v.real + v.imag * v.imag).astype(np.complex128),
                "abs2", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += 2.0 * out.grad.real * a.value
        out._backward = _bw
    return out


def cabs(a):
    """|z| elementwise, subgradient 0 at z = 0."""
    mag = np.abs(a.value)
    out = _make(mag.astype(np.complex128), "cabs", (a,))
    if out.requires_grad:
        with np.errstate(invalid="ignore"):
            unit = np.where(mag == 0.0, 0.0,
                            a.value / np.where(mag == 0.0, 1.0, mag))

        def _bw():
            a.grad += out.grad.real * unit
        out._backward = _bw
    return out


def crelu(a):
    """ReLU on real and imaginary parts independently (subgradient 0 at 0)."""
    v = a.value
    out = _make(np.maximum(v.real, 0.0) + 1j * np.maximum(v.imag, 0.0),
                "crelu", (a,))
    if out.requires_grad:
        mx = v.real > 0.0
        my = v.imag > 0.0

        def _bw():
            g = out.grad
            a.grad += mx * g.real + 1j * (my * g.imag)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = _make(a.value @ b.value, "matmul", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a.grad += g @ np.conj(b.value.T)
            if b.requires_grad:
                b.grad += np.conj(a.value.T) @ g
        out._backward = _bw
    return out


def complex_matmul(a, b):
    """Alias kept for the public contract; identical to matmul."""
    return matmul(a, b)


def conv1d(x, kern):
    """1-d cross-correlation with same padding, stride 1, full complex arithmetic.

    x: (in_ch, T), kern: (out_ch, in_ch, k) with odd k. Returns (out_ch, T).
    """
    if x.ndim != 2 or kern.ndim != 3:
        raise ShapeError(f"conv1d: expected (C,T) and (O,C,k), got {x.shape}, {kern.shape}")
    cin, t_len = x.shape
    cout, cin_k, k = kern.shape
    if cin != cin_k:
        raise ShapeError(f"conv1d: channel mismatch, input {cin} vs kernel {cin_k}")
    if k % 2 != 1:
        raise ShapeError(f"conv1d: kernel size must be odd for same padding, got {k}")
    pad = (k - 1) // 2
    xp = np.pad(x.value, ((0, 0), (pad, pad)))
    y = np.zeros((cout, t_len), dtype=np.complex128)
    kv = kern.value
    for j in range(k):
        y += kv[:, :, j] @ xp[:, j:j + t_len]
    out = _make(y, "conv1d", (x, kern))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if kern.requires_grad:
                for j in range(k):
                    kern.grad[:, :, j] += g @ np.conj(xp[:, j:j + t_len].T)
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for j in range(k):
                    gxp[:, j:j + t_len] += np.conj(kv[:, :, j].T) @ g
                x.grad += gxp[:, pad:pad + t_len]
        out._backward = _bw
    return out


def diag_part(a):
    """Diagonal of a square matrix as a (1, n) row."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"diag_part: expected square matrix, got {a.shape}")
    n = a.shape[0]
    out = _make(np.diagonal(a.value).reshape(1, n).copy(), "diag", (a,))
    if out.requires_grad:
        def _bw():
            buf = np.zeros_like(a.value)
            np.fill_diagonal(buf, out.grad.reshape(n))
            a.grad += buf
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# real-domain nonlinearities
# ---------------------------------------------------------------------------

def softmax(a, axis=-1):
    """Row-stochastic softmax over `axis`; input must be real-valued."""
    _require_real("softmax", a)
    x = a.value.real
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _make(s.astype(np.complex128), "softmax", (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            a.grad += s * (g - (g * s).sum(axis=axis, keepdims=True))
        out._backward = _bw
    return out


def sigmoid(a):
    """Logistic function on real input, clamped to the open interval (0, 1)."""
    _require_real("sigmoid", a)
    x = a.value.real
    p = np.empty_like(x)
    pos = x >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    p[~pos] = ex / (1.0 + ex)
    p = np.clip(p, 5e-324, np.nextafter(1.0, 0.0))
    out = _make(p.astype(np.complex128), "sigmoid", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad * (p * (1.0 - p))
        out._backward = _bw
    return out


def tanh(a):
    _require_real("tanh", a)
    t = np.tanh(a.value.real)
    out = _make(t.astype(np.complex128), "tanh", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad * (1.0 - t * t)
        out._backward = _bw
    return out


def log(a):
    _require_real("log", a)
    x = a.value.real
    if np.any(x <= 0.0):
        raise DomainError("log: input must be strictly positive")
    out = _make(np.log(x).astype(np.complex128), "log", (a,))
    if out.requires_grad:
        def _bw():
            a.grad += out.grad / x
        out._backward = _bw
    return out


def sqrt(a):
    _require_real("sqrt", a)
    x = a.value.real
    if np.any(x < 0.0):
        raise DomainError("sqrt: input must be non-negative")
    r = np.sqrt(x)
    out = _make(r.astype(np.complex128), "sqrt", (a,))
    if out.requires_grad:
        safe = np.where(r == 0.0, np.inf, r)

        def _bw():
            # subgradient 0 at exactly 0
            a.grad += out.grad / (2.0 * safe)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def csum(a, axis=None, keepdims=False):
    out = _make(a.value.sum(axis=axis, keepdims=keepdims), "sum", (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.shape)
        out._backward = _bw
    return out


def cmean(a, axis=None, keepdims=False):
    n = a.size if axis is None else a.shape[axis]
    out = _make(a.value.mean(axis=axis, keepdims=keepdims), "mean", (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.shape) / n
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# dispatcher kept for the elementwise contract
# ---------------------------------------------------------------------------

_ELEMENTWISE = {"add": add, "sub": sub, "hadamard": hadamard, "conj": conj,
                "scale": scale, "abs2": abs2, "re": re, "im": im}


def elementwise(op_kind, a, b=None):
    """Strict elementwise entry point: binary ops need equal shapes
    (a scalar operand is the only broadcast allowed)."""
    if op_kind not in _ELEMENTWISE:
        raise ValueError(f"elementwise: unknown op kind {op_kind!r}")
    fn = _ELEMENTWISE[op_kind]
    if op_kind in ("add", "sub", "hadamard"):
        if b is None:
            raise ValueError(f"elementwise: {op_kind} needs two operands")
        a, bb = _coerce(a), _coerce(b)
        if a.shape != bb.shape and a.size != 1 and bb.size != 1:
            raise ShapeError(
                f"elementwise {op_kind}: shapes {a.shape} and {bb.shape} differ")
        return fn(a, bb)
    if op_kind == "scale":
        return scale(a, b)
    if b is not None:
        raise ValueError(f"elementwise: {op_kind} is unary")
    return fn(a)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Reverse sweep from a real scalar loss; fills `.grad` with dL/dz*.

    Gradients of `real_only` leaves are projected onto the real axis.
    """
    if loss.size != 1:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.shape}")
    if np.any(loss.value.imag != 0.0):
        raise GraphError("backward: loss must be real-valued")
    if not loss.requires_grad:
        raise GraphError("backward: loss does not depend on any trainable tensor")

    # Reachable subgraph; creation ids give a valid topological order.
    seen = {id(loss): loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    order = sorted(seen.values(), key=lambda t: t._id, reverse=True)

    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad[...] = 0.5

    for node in order:
        if node._backward is not None:
            node._backward()

    for node in order:
        if node.real_only and node.grad is not None:
            node.grad = node.grad.real.astype(np.complex128)
