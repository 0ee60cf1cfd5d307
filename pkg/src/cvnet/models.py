"""Task models built on the complex tape.

Three networks: a pilot-lattice channel estimator, a heterogeneous
transformer for user activity detection, and an end-to-end pilot /
feedback-quantization / precoder chain. Each accepts numpy arrays or graph
tensors; forward passes stay on the tape so losses differentiate through
every stage, including the power normalizations.
"""

from __future__ import annotations

import logging

import numpy as np

from . import ctensor as ct
from .attention import DecoderBlock, EncoderBlock, heads_attention
from .ctensor import CTensor, ShapeError, astensor, no_grad
from .layers import C2R, CFCN, CLN, CConv1d, CLinear, Module, glorot_complex

__all__ = [
    "normalize_columns", "normalize_trace",
    "ComplexLight", "HetEncoderLayer", "ActDetModel", "actdet_inputs",
    "PrecodeChain",
]

log = logging.getLogger(__name__)


def _as_graph(x):
    return x if isinstance(x, CTensor) else astensor(x)


def normalize_columns(x, power):
    """Rescale every column to squared norm `power`.

    An exactly zero column cannot be normalized; it is replaced by a fixed
    unit-power direction (all energy on the first row) and the event is
    logged, so early training never divides by zero.
    """
    zero = np.flatnonzero(np.sum(np.abs(x.value) ** 2, axis=0) == 0.0)
    if zero.size:
        log.warning("normalize_columns: %d zero column(s) sent to the "
                    "fallback direction", zero.size)
        fix = np.zeros_like(x.value)
        fix[0, zero] = 1.0
        x = ct.add(x, astensor(fix))
    p2 = ct.csum(ct.abs2(x), axis=0, keepdims=True)
    factor = ct.div(np.sqrt(power), ct.sqrt(p2))
    return ct.hadamard(x, factor)


def normalize_trace(x, power):
    """Rescale the whole matrix so Tr(X^H X) = power, with the same
    zero-input fallback policy as normalize_columns."""
    if not np.any(x.value):
        log.warning("normalize_trace: zero matrix sent to the fallback "
                    "direction")
        fix = np.full(x.shape, 1.0 / np.sqrt(x.value.size), dtype=complex)
        x = ct.add(x, astensor(fix))
    tr = ct.csum(ct.abs2(x))
    factor = ct.div(np.sqrt(power), ct.sqrt(tr))
    return ct.hadamard(x, factor)


class ComplexLight(Module):
    """Pilot-lattice channel estimator.

    The (n_pf, n_pt) least-squares pilot estimate embeds through a
    convolution over pilot-time channels and a subcarrier-axis linear lift,
    passes one encoder block whose tokens are the n_filter channels, then
    two decoder convolutions (the second with a skip) reshape channels to
    n_s symbols; a final norm and affine projection produce the full
    (n_f, n_s) frame estimate.
    """

    def __init__(self, n_pf=36, n_pt=2, n_f=72, n_s=14, n_filter=16,
                 d_f=128, n_heads=2, rng=None):
        super().__init__()
        rng = np.random.default_rng(rng)
        if n_f % n_heads:
            raise ValueError(f"n_f={n_f} not divisible by {n_heads} heads")
        self.n_pf, self.n_pt, self.n_f, self.n_s = n_pf, n_pt, n_f, n_s
        self.embed_conv = self.add_module(
            "embed_conv", CConv1d(n_pt, n_filter, rng, ksize=3))
        self.embed_lin = self.add_module(
            "embed_lin", CLinear(n_pf, n_f, rng))
        self.encoder = self.add_module(
            "encoder", EncoderBlock(n_f, d_f, n_heads, rng))
        self.dec_conv1 = self.add_module(
            "dec_conv1", CConv1d(n_filter, n_s, rng, ksize=3))
        self.dec_conv2 = self.add_module(
            "dec_conv2", CConv1d(n_s, n_s, rng, ksize=3))
        self.out_ln = self.add_module("out_ln", CLN())
        self.w_out = self.add_param(
            "w_out", glorot_complex(rng, n_f, n_f, (n_f, n_f)))
        self.b_out = self.add_param("b_out", np.zeros((1, n_s), complex))

    def forward(self, h_ls):
        x = _as_graph(h_ls)
        if x.shape != (self.n_pf, self.n_pt):
            raise ShapeError(f"pilot estimate {x.shape}, expected "
                             f"({self.n_pf}, {self.n_pt})")
        c = self.embed_conv(ct.transpose(x))          # (n_filter, n_pf)
        e = self.embed_lin(ct.transpose(c))           # (n_f, n_filter)
        e = self.encoder(e)
        d = ct.crelu(self.dec_conv1(ct.transpose(e)))  # (n_s, n_f)
        d = ct.add(self.dec_conv2(d), d)
        hd = self.out_ln(ct.transpose(d))             # (n_f, n_s)
        return ct.add(ct.matmul(self.w_out, hd), self.b_out)

    __call__ = forward


class HetEncoderLayer(Module):
    """One heterogeneous encoder layer over a user-token branch and a
    covariance-context branch.

    Both branches project into a joint multi-head attention over N+1
    tokens through their own Q/K/V maps and a shared output projection;
    the result splits back and each branch applies its own residual norm
    and FCN stack, so the streams mix while keeping separate
    representations.
    """

    def __init__(self, d_e, n_heads, d_head, d_f, rng):
        super().__init__()
        self.n_heads = n_heads
        width = n_heads * d_head
        for name in ("q_b", "k_b", "v_b", "q_c", "k_c", "v_c"):
            setattr(self, name,
                    self.add_module(name, CLinear(d_e, width, rng,
                                                  bias=False)))
        self.w_o = self.add_module("w_o", CLinear(width, d_e, rng,
                                                  bias=False))
        self.ln_b1 = self.add_module("ln_b1", CLN())
        self.ln_c1 = self.add_module("ln_c1", CLN())
        self.fcn_b = self.add_module("fcn_b", CFCN([d_e, d_f, d_e], rng))
        self.fcn_c = self.add_module("fcn_c", CFCN([d_e, d_f, d_e], rng))
        self.ln_b2 = self.add_module("ln_b2", CLN())
        self.ln_c2 = self.add_module("ln_c2", CLN())

    def forward(self, b, c):
        n = b.shape[1]
        q = ct.concat([self.q_b(b), self.q_c(c)], axis=1)
        k = ct.concat([self.k_b(b), self.k_c(c)], axis=1)
        v = ct.concat([self.v_b(b), self.v_c(c)], axis=1)
        att = heads_attention(q, k, v, self.n_heads, self.w_o)
        b1 = self.ln_b1(ct.add(att[:, :n], b))
        c1 = self.ln_c1(ct.add(att[:, n:], c))
        b2 = self.ln_b2(ct.add(self.fcn_b(b1), b1))
        c2 = self.ln_c2(ct.add(self.fcn_c(c1), c1))
        return b2, c2

    __call__ = forward


class ActDetModel(Module):
    """Activity detector over (B, C) grant-free inputs.

    Each user token stacks the standardized signature, its matched-filter
    response through the sample covariance, the per-user excess-energy
    statistic, and the interference load (2L+2 entries, see
    actdet_inputs); the flattened covariance
    embeds as one context token. Z heterogeneous encoder layers mix the
    two branches; a decoder attends from the context query over all
    tokens; each user's probability comes from a linear map on
    [user token; context] through the complex-to-real head. The user
    count N is free at run time.
    """

    def __init__(self, pilot_len=8, d_e=64, n_layers=5, n_heads=4,
                 d_head=16, d_f=256, rng=None):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.pilot_len = pilot_len
        self.n_heads = n_heads
        width = n_heads * d_head
        self.embed_b = self.add_module("embed_b",
                                       CLinear(2 * pilot_len + 2, d_e, rng))
        self.embed_c = self.add_module("embed_c",
                                       CLinear(pilot_len ** 2, d_e, rng))
        self.layers = [
            self.add_module(f"enc{i}",
                            HetEncoderLayer(d_e, n_heads, d_head, d_f, rng))
            for i in range(n_layers)
        ]
        for name in ("dq_c", "dk_b", "dv_b", "dk_c", "dv_c"):
            setattr(self, name,
                    self.add_module(name, CLinear(d_e, width, rng,
                                                  bias=False)))
        self.d_wo = self.add_module("d_wo", CLinear(width, d_e, rng,
                                                    bias=False))
        self.head_lin = self.add_module("head_lin",
                                        CLinear(2 * d_e, 1, rng))
        self.c2r = self.add_module("c2r", C2R(rng))

    def forward(self, b_in, c_in):
        b_in = _as_graph(b_in)
        c_in = _as_graph(c_in)
        l = self.pilot_len
        if b_in.shape[0] != 2 * l + 2 or c_in.shape != (l, l):
            raise ShapeError(f"inputs B {b_in.shape}, C {c_in.shape} do not "
                             f"fit pilot length {l} (user tokens carry "
                             f"{2 * l + 2} entries)")
        n = b_in.shape[1]
        b = self.embed_b(b_in)
        c = self.embed_c(ct.reshape(c_in, (l * l, 1)))
        for layer in self.layers:
            b, c = layer(b, c)
        q = self.dq_c(c)
        k = ct.concat([self.dk_b(b), self.dk_c(c)], axis=1)
        v = ct.concat([self.dv_b(b), self.dv_c(c)], axis=1)
        x_d = heads_attention(q, k, v, self.n_heads, self.d_wo)  # (d_e, 1)
        tiled = ct.matmul(x_d, astensor(np.ones((1, n))))
        z = self.head_lin(ct.concat([b, tiled], axis=0))         # (1, n)
        return self.c2r(z)

    __call__ = forward


def _compress(z):
    """Phase-preserving magnitude compression z -> z * asinh(|z|)/|z|.

    Path gains put near-cell users 3-4 orders of magnitude above the noise
    floor, so raw noise-standardized inputs are heavy-tailed and a handful
    of samples dominate every gradient. asinh is linear near zero and
    logarithmic in the tail, keeps phase and magnitude ordering, and needs
    no data-dependent statistics.
    """
    mag = np.abs(z)
    safe = np.where(mag == 0.0, 1.0, mag)
    return z * np.arcsinh(mag) / safe


def actdet_inputs(sample):
    """Build detector inputs from a grant-free snapshot.

    Signatures and covariance are standardized by the known noise level
    (B/sigma and C/(M sigma^2)) and magnitude-compressed. Each user token
    additionally stacks three matched-filter features computed from the
    same pair:

    * the covariance response C~ @ b~_n,
    * the excess-energy statistic
      u_n = (b~_n^H C~ b~_n - ||b~_n||^2) / ||b~_n||^4, whose mean under
      the signal model is the activity indicator itself, and
    * the interference load l_n = sum_j rho_jn relu(u_j) with
      rho_jn = |b~_j^H b~_n|^2 / ||b~_n||^4, the part of u_n that other
      plausibly-active users explain away.

    Handing the quadratic statistics to the embedding leaves the attention
    stack the learnable part of the problem (context-dependent shrinkage
    and joint refinement across users) instead of asking softmax attention
    to synthesize weighted quadratic subtraction from raw signatures.
    """
    sig = np.sqrt(sample.sigma2)
    m = sample.Y.shape[1]
    b_std = sample.B / sig
    c_std = sample.C / (m * sample.sigma2)
    resp = c_std @ b_std
    energy = np.sum(np.abs(b_std) ** 2, axis=0)
    quad = np.real(np.sum(b_std.conj() * resp, axis=0))
    excess = (quad - energy) / energy ** 2
    gram2 = np.abs(b_std.conj().T @ b_std) ** 2
    np.fill_diagonal(gram2, 0.0)
    load = gram2.T.dot(np.maximum(excess, 0.0)) / energy ** 2
    tokens = np.vstack([_compress(b_std), _compress(resp),
                        _compress(excess)[None, :],
                        _compress(load)[None, :]])
    return tokens.astype(np.complex128), _compress(c_std)


class PrecodeChain(Module):
    """End-to-end pilot design, feedback quantization, and precoding.

    pilot_net maps the flattened uplink channel to an (n_antennas,
    m_pilots) pilot matrix with per-column power rho; users receive
    y = P^H h_dl + noise and quantize b_bits through feedback_net (tanh
    surrogate when training, hard signs at inference); the precoder former
    fuses embedded uplink channel tokens (encoders) with embedded bit
    tokens (decoders with cross attention) into V with Tr(V^H V) = rho.
    """

    def __init__(self, n_antennas=8, n_users=2, m_pilots=8, b_bits=10,
                 rho=1.0, d_p=64, p_heads=4, l_p=2, m_p=2, l_d=3, l_f=3,
                 d_p_ff=None, tau=10.0, rng=None):
        super().__init__()
        rng = np.random.default_rng(rng)
        if d_p % p_heads:
            raise ValueError(f"d_p={d_p} not divisible by {p_heads} heads")
        if l_d < 1 or l_f < 1:
            raise ValueError("pilot and feedback nets need at least 1 layer")
        d_p_ff = 2 * d_p if d_p_ff is None else d_p_ff
        self.n_antennas, self.n_users = n_antennas, n_users
        self.m_pilots, self.b_bits = m_pilots, b_bits
        self.rho, self.tau = float(rho), float(tau)
        pilot_dims = ([n_antennas * n_users] + [4 * m_pilots] * (l_d - 1)
                      + [n_antennas * m_pilots])
        fb_dims = [m_pilots] + [4 * b_bits] * (l_f - 1) + [b_bits]
        self.pilot_net = self.add_module("pilot_net", CFCN(pilot_dims, rng))
        self.feedback_net = self.add_module("feedback_net",
                                            CFCN(fb_dims, rng))
        self.embed_h = self.add_module("embed_h",
                                       CLinear(n_antennas, d_p, rng))
        self.embed_q = self.add_module("embed_q", CLinear(b_bits, d_p, rng))
        self.encoders = [
            self.add_module(f"enc{i}", EncoderBlock(d_p, d_p_ff, p_heads,
                                                    rng))
            for i in range(l_p)
        ]
        self.decoders = [
            self.add_module(f"dec{i}", DecoderBlock(d_p, d_p_ff, p_heads,
                                                    rng))
            for i in range(m_p)
        ]
        self.out_lin = self.add_module("out_lin",
                                       CLinear(d_p, n_antennas, rng))

    def pilot_forward(self, h_ul):
        h = _as_graph(h_ul)
        if h.shape != (self.n_antennas, self.n_users):
            raise ShapeError(f"uplink channel {h.shape}, expected "
                             f"({self.n_antennas}, {self.n_users})")
        flat = ct.reshape(h, (self.n_antennas * self.n_users, 1))
        raw = self.pilot_net(flat)
        p = ct.reshape(raw, (self.n_antennas, self.m_pilots))
        return normalize_columns(p, self.rho)

    def feedback_forward(self, y, mode="train"):
        pre = ct.re(self.feedback_net(_as_graph(y)))   # (b_bits, n_users)
        if mode == "train":
            return ct.tanh(ct.scale(pre, self.tau))
        if mode == "infer":
            v = pre.value.real
            return astensor(np.where(v >= 0.0, 1.0, -1.0))
        raise ValueError(f"unknown feedback mode {mode!r}")

    def precoder_forward(self, q, h_ul):
        qt = _as_graph(q)
        if qt.shape != (self.b_bits, self.n_users):
            raise ShapeError(f"feedback bits {qt.shape}, expected "
                             f"({self.b_bits}, {self.n_users})")
        enc = self.embed_h(_as_graph(h_ul))
        for blk in self.encoders:
            enc = blk(enc)
        z = self.embed_q(qt)
        for blk in self.decoders:
            z = blk(z, enc)
        raw = self.out_lin(z)                          # (n_antennas, n_users)
        return normalize_trace(raw, self.rho)

    def run(self, h_ul, h_dl, noise, mode="train"):
        """Full chain to the precoder; h_dl and noise enter as constants."""
        p = self.pilot_forward(h_ul)
        y = ct.add(ct.matmul(ct.transpose(ct.conj(p)), _as_graph(h_dl)),
                   _as_graph(noise))
        q = self.feedback_forward(y, mode=mode)
        return self.precoder_forward(q, h_ul)

    def infer_precoder(self, h_ul, h_dl, noise):
        """Hard-bit inference pass; returns a plain numpy precoder."""
        with no_grad():
            v = self.run(h_ul, h_dl, noise, mode="infer")
        return v.value

    __call__ = run
