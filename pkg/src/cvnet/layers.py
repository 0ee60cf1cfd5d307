"""Complex-valued layers: linear, conv1d, split relu, layer norm, complex-to-
real head, and fully connected stacks.

Conventions: feature vectors are column vectors, a batch of tokens is a
(d, N) matrix (one token per column). Layers operate column-wise. Weight
init is complex Glorot: Re and Im each uniform in
+-sqrt(3/(fan_in+fan_out)), then scaled by 1/sqrt(2) so the complex variance
is 1/(fan_in+fan_out). Biases start at zero.
"""

from __future__ import annotations

import numpy as np

from . import ctensor as ct
from .ctensor import CTensor, ShapeError, astensor

__all__ = ["Module", "CLinear", "CConv1d", "CLN", "C2R", "CFCN",
           "glorot_complex", "param_count"]


def glorot_complex(rng, fan_in, fan_out, shape):
    bound = np.sqrt(3.0 / (fan_in + fan_out))
    w = (rng.uniform(-bound, bound, size=shape)
         + 1j * rng.uniform(-bound, bound, size=shape)) / np.sqrt(2.0)
    return w


class Module:
    """Minimal container: named parameters plus nested submodules."""

    def __init__(self):
        self._params = {}
        self._mods = {}

    def add_param(self, name, value, real_only=False):
        t = astensor(value, requires_grad=True, real_only=real_only)
        self._params[name] = t
        return t

    def add_module(self, name, mod):
        self._mods[name] = mod
        return mod

    def parameters(self, prefix=""):
        out = {}
        for k, p in self._params.items():
            out[prefix + k] = p
        for k, m in self._mods.items():
            out.update(m.parameters(prefix + k + "."))
        return out

    def state_dict(self):
        return {k: p.value.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state):
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.complex128)
            if arr.shape != p.shape:
                raise ShapeError(f"state {k}: shape {arr.shape} != {p.shape}")
            p.value = arr.copy()


def param_count(module):
    """Total trainable real scalars (a complex scalar counts as 2)."""
    total = 0
    for p in module.parameters().values():
        total += p.size * (1 if p.real_only else 2)
    return total


class CLinear(Module):
    """y = W x + b on column-stacked inputs: (out, N) = (out, in) @ (in, N)."""

    def __init__(self, in_dim, out_dim, rng, bias=True):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.w = self.add_param("w", glorot_complex(rng, in_dim, out_dim,
                                                    (out_dim, in_dim)))
        self.b = self.add_param("b", np.zeros((out_dim, 1))) if bias else None

    def forward(self, x):
        if x.ndim != 2 or x.shape[0] != self.in_dim:
            raise ShapeError(f"CLinear: expected ({self.in_dim}, N) input, got {x.shape}")
        y = ct.matmul(self.w, x)
        if self.b is not None:
            y = ct.add(y, self.b)
        return y

    __call__ = forward


class CConv1d(Module):
    """Same-padded stride-1 complex cross-correlation over (in_ch, T) inputs."""

    def __init__(self, in_ch, out_ch, rng, ksize=3, bias=True):
        super().__init__()
        self.in_ch, self.out_ch, self.ksize = in_ch, out_ch, ksize
        fan_in, fan_out = in_ch * ksize, out_ch * ksize
        self.kern = self.add_param("kern", glorot_complex(rng, fan_in, fan_out,
                                                          (out_ch, in_ch, ksize)))
        self.b = self.add_param("b", np.zeros((out_ch, 1))) if bias else None

    def forward(self, x):
        y = ct.conv1d(x, self.kern)
        if self.b is not None:
            y = ct.add(y, self.b)
        return y

    __call__ = forward


def _sym_sqrt_entries(l11, l12, l22, tiny=1e-24):
    """Closed-form 2x2 PSD square root for [[l11,l12],[l12,l22]] built from
    scalar graph ops. Returns the three entries of the symmetric root."""
    det = ct.sub(ct.hadamard(l11, l22), ct.hadamard(l12, l12))
    s = ct.sqrt(ct.add(ct.re(det), astensor(tiny)))
    tr = ct.add(l11, l22)
    t = ct.sqrt(ct.add(ct.re(ct.add(tr, ct.scale(s, 2.0))), astensor(tiny)))
    r11 = ct.div(ct.add(l11, s), t)
    r12 = ct.div(l12, t)
    r22 = ct.div(ct.add(l22, s), t)
    return r11, r12, r22


class CLN(Module):
    """Complex layer norm: per column, center the complex mean, whiten the
    2x2 covariance of [Re; Im] (epsilon on the diagonal), then apply a
    learned PSD scale Lambda^{1/2} and a complex shift beta.

    Lambda is parameterized as A A^T with A lower-triangular (3 real
    scalars, init sqrt(1/2) I so Lambda = I/2); beta is one complex scalar.
    """

    def __init__(self, eps=1e-5):
        super().__init__()
        self.eps = float(eps)
        self.a_fact = self.add_param(
            "a_fact", np.array([np.sqrt(0.5), 0.0, np.sqrt(0.5)]), real_only=True)
        self.beta = self.add_param("beta", np.zeros((1, 1)))

    def forward(self, x):
        if x.ndim != 2 or x.shape[0] < 2:
            raise ShapeError(f"CLN: need a (d>=2, N) input, got {x.shape}")
        mu = ct.cmean(x, axis=0, keepdims=True)
        xc = ct.sub(x, mu)
        xr = ct.re(xc)
        xi = ct.im(xc)

        # per-column second moments of the stacked real representation
        var_r = ct.add(ct.cmean(ct.hadamard(xr, xr), axis=0, keepdims=True),
                       astensor(self.eps))
        var_i = ct.add(ct.cmean(ct.hadamard(xi, xi), axis=0, keepdims=True),
                       astensor(self.eps))
        cov = ct.cmean(ct.hadamard(xr, xi), axis=0, keepdims=True)

        # inverse square root of K = [[var_r, cov], [cov, var_i]]:
        # K^{-1/2} = [[var_i+s, -cov], [-cov, var_r+s]] / (s t) with
        # s = sqrt(det K), t = sqrt(tr K + 2 s)
        det = ct.sub(ct.hadamard(var_r, var_i), ct.hadamard(cov, cov))
        s = ct.sqrt(ct.re(det))
        t = ct.sqrt(ct.re(ct.add(ct.add(var_r, var_i), ct.scale(s, 2.0))))
        denom = ct.hadamard(s, t)
        m11 = ct.div(ct.add(var_i, s), denom)
        m12 = ct.div(ct.neg(cov), denom)
        m22 = ct.div(ct.add(var_r, s), denom)

        # learned PSD scale: Lambda = A A^T, apply its symmetric square root
        a11 = self.a_fact[0:1]
        a21 = self.a_fact[1:2]
        a22 = self.a_fact[2:3]
        l11 = ct.hadamard(a11, a11)
        l12 = ct.hadamard(a11, a21)
        l22 = ct.add(ct.hadamard(a21, a21), ct.hadamard(a22, a22))
        g11, g12, g22 = _sym_sqrt_entries(l11, l12, l22)

        # W = Lambda^{1/2} K^{-1/2}, a 2x2 of (1, N) rows
        w11 = ct.add(ct.hadamard(g11, m11), ct.hadamard(g12, m12))
        w12 = ct.add(ct.hadamard(g11, m12), ct.hadamard(g12, m22))
        w21 = ct.add(ct.hadamard(g12, m11), ct.hadamard(g22, m12))
        w22 = ct.add(ct.hadamard(g12, m12), ct.hadamard(g22, m22))

        out_r = ct.add(ct.hadamard(w11, xr), ct.hadamard(w12, xi))
        out_i = ct.add(ct.hadamard(w21, xr), ct.hadamard(w22, xi))
        return ct.add(ct.add(out_r, ct.scale(out_i, 1j)), self.beta)

    __call__ = forward

    def set_identity_scale(self):
        """Test hook: set Lambda = I (A = I), beta = 0."""
        self.a_fact.value = np.array([1.0, 0.0, 1.0], dtype=np.complex128)
        self.beta.value = np.zeros((1, 1), dtype=np.complex128)


class C2R(Module):
    """Complex scalar -> probability: sigmoid(w . [Re z; Im z] + b).

    Applies elementwise over a (1, N) row of complex logits; w, b are real.
    """

    def __init__(self, rng):
        super().__init__()
        self.w = self.add_param("w", rng.uniform(-1, 1, size=(2, 1)), real_only=True)
        self.b = self.add_param("b", np.zeros((1, 1)), real_only=True)

    def forward(self, z):
        wr = self.w[0:1]
        wi = self.w[1:2]
        pre = ct.add(ct.add(ct.hadamard(wr, ct.re(z)), ct.hadamard(wi, ct.im(z))),
                     self.b)
        return ct.sigmoid(pre)

    __call__ = forward


class CFCN(Module):
    """Fully connected complex stack: split relu between layers, affine last."""

    def __init__(self, dims, rng, bias=True):
        super().__init__()
        if len(dims) < 2:
            raise ValueError("CFCN: need at least input and output dims")
        self.layers = [self.add_module(f"lin{i}", CLinear(dims[i], dims[i + 1], rng, bias=bias))
                       for i in range(len(dims) - 1)]

    def forward(self, x):
        for i, lin in enumerate(self.layers):
            x = lin(x)
            if i + 1 < len(self.layers):
                x = ct.crelu(x)
        return x

    __call__ = forward
