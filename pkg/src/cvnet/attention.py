"""Complex attention: real-part scores, complex mixing.

Tokens are columns. Scores between queries Q and keys K (both (d, N)) are
Re(Q^H K)/sqrt(d); softmax runs over keys (axis 1); values mix with full
complex arithmetic. Phase structure survives in V even though scores are
real.
"""

from __future__ import annotations

import numpy as np

from . import ctensor as ct
from .ctensor import ShapeError
from .layers import CLN, CFCN, Module, glorot_complex

__all__ = ["cattention", "attention_scores", "heads_attention", "CMHA",
           "EncoderBlock", "CrossAttentionBlock", "DecoderBlock"]


def attention_scores(q, k):
    """Re(Q^H K)/sqrt(d_head) as a (N_q, N_k) real-valued tensor."""
    if q.shape[0] != k.shape[0]:
        raise ShapeError(f"attention: query dim {q.shape[0]} != key dim {k.shape[0]}")
    d = q.shape[0]
    return ct.scale(ct.re(ct.matmul(ct.transpose(ct.conj(q)), k)),
                    1.0 / np.sqrt(d))


def _pair_order(k_val, v_val):
    """Value-determined column order for key/value pairs (lexicographic)."""
    keys = np.vstack([k_val.real, k_val.imag, v_val.real, v_val.imag])
    return np.lexsort(keys[::-1])


def cattention(q, k, v):
    """Single-head attention; returns (d_v, N_q).

    Key/value pairs are first sorted into a value-canonical column order, so
    the two reductions over keys (softmax denominator, value mixing) always
    accumulate in the same sequence. The output is then exactly invariant to
    simultaneous column permutations of K and V, not just up to re-summation
    rounding.
    """
    if k.shape[1] != v.shape[1]:
        raise ShapeError(f"attention: {k.shape[1]} keys vs {v.shape[1]} values")
    order = _pair_order(k.value, v.value)
    if not np.array_equal(order, np.arange(order.size)):
        k = k[:, order]
        v = v[:, order]
    a = ct.softmax(attention_scores(q, k), axis=1)
    return ct.matmul(v, ct.transpose(a))


def heads_attention(q, k, v, n_heads, w_o):
    """Multi-head core on pre-projected inputs.

    q/k/v are (T*d_h, N) stacks; rows are split into T head blocks, each head
    runs cattention, outputs concatenate along features and pass through w_o
    (a CLinear without bias).
    """
    rows = q.shape[0]
    if rows % n_heads != 0:
        raise ShapeError(f"attention: {rows} rows not divisible by {n_heads} heads")
    d_h = rows // n_heads
    outs = []
    for t in range(n_heads):
        sl = slice(t * d_h, (t + 1) * d_h)
        outs.append(cattention(q[sl, :], k[sl, :], v[sl, :]))
    return w_o(ct.concat(outs, axis=0))


class CMHA(Module):
    """Multi-head attention with internal Q/K/V projections (no biases) and
    an output projection W_o (no bias)."""

    def __init__(self, d_model, n_heads, d_head, rng, d_out=None):
        super().__init__()
        d_out = d_model if d_out is None else d_out
        self.n_heads, self.d_head = n_heads, d_head
        width = n_heads * d_head
        self.wq = self.add_param("wq", glorot_complex(rng, d_model, width, (width, d_model)))
        self.wk = self.add_param("wk", glorot_complex(rng, d_model, width, (width, d_model)))
        self.wv = self.add_param("wv", glorot_complex(rng, d_model, width, (width, d_model)))
        self.wo = self.add_param("wo", glorot_complex(rng, width, d_out, (d_out, width)))

    def forward(self, q_in, k_in, v_in):
        q = ct.matmul(self.wq, q_in)
        k = ct.matmul(self.wk, k_in)
        v = ct.matmul(self.wv, v_in)
        return heads_attention(q, k, v, self.n_heads,
                               lambda cat: ct.matmul(self.wo, cat))

    __call__ = forward


class EncoderBlock(Module):
    """Pre-norm-free transformer encoder layer:
    h = cln(mha(x,x,x) + x); out = cln(fcn(h) + h)."""

    def __init__(self, d_model, d_ff, n_heads, rng, d_head=None):
        super().__init__()
        d_head = d_model // n_heads if d_head is None else d_head
        self.mha = self.add_module("mha", CMHA(d_model, n_heads, d_head, rng))
        self.ln1 = self.add_module("ln1", CLN())
        self.fcn = self.add_module("fcn", CFCN([d_model, d_ff, d_model], rng))
        self.ln2 = self.add_module("ln2", CLN())

    def forward(self, x):
        h = self.ln1(ct.add(self.mha(x, x, x), x))
        return self.ln2(ct.add(self.fcn(h), h))

    __call__ = forward


class CrossAttentionBlock(Module):
    """Cross attention + residual + norm.

    Queries come from `q_src`, keys from `kv_src`; values come from `q_src`
    as well (value_source="query", the default) or from `kv_src`
    (value_source="kv", the conventional wiring).
    """

    def __init__(self, d_model, n_heads, rng, d_head=None, value_source="query"):
        super().__init__()
        if value_source not in ("query", "kv"):
            raise ValueError(f"CrossAttentionBlock: bad value_source {value_source!r}")
        d_head = d_model // n_heads if d_head is None else d_head
        self.value_source = value_source
        self.mha = self.add_module("mha", CMHA(d_model, n_heads, d_head, rng))
        self.ln = self.add_module("ln", CLN())

    def forward(self, q_src, kv_src):
        if self.value_source == "query" and q_src.shape[1] != kv_src.shape[1]:
            raise ShapeError(
                "cross attention with value_source='query' needs equal token "
                f"counts, got {q_src.shape[1]} query vs {kv_src.shape[1]} kv")
        v_src = q_src if self.value_source == "query" else kv_src
        return self.ln(ct.add(self.mha(q_src, kv_src, v_src), q_src))

    __call__ = forward


class DecoderBlock(Module):
    """Decoder layer: self-attention on the query stream, cross attention
    against the encoder output (values stay on the query stream), then an
    FCN; residual + norm after the self-attention and FCN stages."""

    def __init__(self, d_model, d_ff, n_heads, rng, d_head=None):
        super().__init__()
        d_head = d_model // n_heads if d_head is None else d_head
        self.self_mha = self.add_module(
            "self_mha", CMHA(d_model, n_heads, d_head, rng))
        self.ln1 = self.add_module("ln1", CLN())
        self.cross = self.add_module(
            "cross", CrossAttentionBlock(d_model, n_heads, rng,
                                         d_head=d_head,
                                         value_source="query"))
        self.fcn = self.add_module("fcn", CFCN([d_model, d_ff, d_model], rng))
        self.ln2 = self.add_module("ln2", CLN())

    def forward(self, z, enc):
        h = self.ln1(ct.add(self.self_mha(z, z, z), z))
        h = self.cross(h, enc)
        return self.ln2(ct.add(self.fcn(h), h))

    __call__ = forward
