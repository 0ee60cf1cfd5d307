"""Named gradient-check suite: every layer and every task loss.

Each entry builds a randomized instance at tiny dimensions and compares the
tape gradient against central finite differences. `run_gradcheck` returns
one result row per component; the CLI turns failures into exit code 1.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import ctensor as ct
from . import wsim
from .attention import (CMHA, CrossAttentionBlock, DecoderBlock,
                        EncoderBlock, cattention)
from .config import ConfigError
from .ctensor import astensor
from .gradcheck import check_gradients
from .layers import C2R, CFCN, CLN, CConv1d, CLinear
from .losses import end_to_end_loss, huber_loss, weighted_bce
from .models import ActDetModel, ComplexLight, PrecodeChain, actdet_inputs

__all__ = ["COMPONENTS", "run_gradcheck"]

_DEFAULT_TOL = 1e-5


def _probe(t):
    return ct.cmean(ct.abs2(t))


def _module_build(mod, *inputs):
    def build():
        def loss():
            return _probe(mod(*inputs))
        return mod.parameters(), loss
    return build


def _clinear(rng):
    mod = CLinear(3, 4, rng)
    x = astensor(wsim.crandn(rng, (3, 2)))
    return _module_build(mod, x)


def _cconv1d(rng):
    mod = CConv1d(2, 3, rng, ksize=3)
    x = astensor(wsim.crandn(rng, (2, 6)))
    return _module_build(mod, x)


def _crelu(rng):
    lin = CLinear(3, 3, rng)
    x = astensor(wsim.crandn(rng, (3, 2)))

    def build():
        def loss():
            return _probe(ct.crelu(lin(x)))
        return lin.parameters(), loss
    return build


def _cln(rng):
    mod = CLN()
    x = astensor(wsim.crandn(rng, (4, 3)), requires_grad=True)

    def build():
        def loss():
            return _probe(mod(x))
        params = dict(mod.parameters())
        params["x"] = x
        return params, loss
    return build


def _c2r(rng):
    mod = C2R(rng)
    lin = CLinear(3, 1, rng)
    x = astensor(wsim.crandn(rng, (3, 4)))

    def build():
        def loss():
            return _probe(mod(lin(x)))
        params = {**mod.parameters(),
                  **{f"lin.{k}": v for k, v in lin.parameters().items()}}
        return params, loss
    return build


def _cfcn(rng):
    mod = CFCN([3, 5, 2], rng)
    x = astensor(wsim.crandn(rng, (3, 2)))
    return _module_build(mod, x)


def _catt(rng):
    q = astensor(wsim.crandn(rng, (3, 2)), requires_grad=True)
    k = astensor(wsim.crandn(rng, (3, 4)), requires_grad=True)
    v = astensor(wsim.crandn(rng, (3, 4)), requires_grad=True)

    def build():
        def loss():
            return _probe(cattention(q, k, v))
        return {"q": q, "k": k, "v": v}, loss
    return build


def _cmha(rng):
    mod = CMHA(4, 2, 2, rng)
    x = astensor(wsim.crandn(rng, (4, 3)))
    return _module_build(mod, x, x, x)


def _encoder_block(rng):
    mod = EncoderBlock(4, 6, 2, rng)
    x = astensor(wsim.crandn(rng, (4, 3)))
    return _module_build(mod, x)


def _cross_attention_block(rng):
    mod = CrossAttentionBlock(4, 2, rng)
    q = astensor(wsim.crandn(rng, (4, 2)))
    kv = astensor(wsim.crandn(rng, (4, 2)))
    return _module_build(mod, q, kv)


def _decoder_block(rng):
    mod = DecoderBlock(4, 6, 2, rng)
    z = astensor(wsim.crandn(rng, (4, 2)))
    enc = astensor(wsim.crandn(rng, (4, 2)))
    return _module_build(mod, z, enc)


def _chanest_loss(rng):
    mod = ComplexLight(n_pf=4, n_pt=2, n_f=6, n_s=3, n_filter=2, d_f=8,
                       n_heads=2, rng=rng)
    ls = wsim.crandn(rng, (4, 2))
    h = wsim.crandn(rng, (6, 3))

    def build():
        def loss():
            return huber_loss(mod(ls), astensor(h))
        return mod.parameters(), loss
    return build


def _actdet_loss(rng):
    mod = ActDetModel(pilot_len=2, d_e=4, n_layers=1, n_heads=2, d_head=2,
                      d_f=8, rng=rng)
    sample = wsim.gen_grantfree_sample(3, 2, 2, p_active=0.5, seed=rng)
    b, c = actdet_inputs(sample)

    def build():
        def loss():
            return weighted_bce(mod(b, c), sample.a)
        return mod.parameters(), loss
    return build


def _precode_loss(rng):
    mod = PrecodeChain(n_antennas=4, n_users=2, m_pilots=4, b_bits=3,
                       rho=1.0, d_p=4, p_heads=2, l_p=1, m_p=1, l_d=2,
                       l_f=2, d_p_ff=8, rng=rng)
    ch = wsim.gen_sv_channels(4, 2, 2, 3.5e9, 3.6e9, seed=rng)

    def build():
        def loss():
            return end_to_end_loss(mod, ch.H_UL, ch.H_DL, 0.1, noise_seed=7)
        return mod.parameters(), loss
    return build


# name -> (builder, tolerance, kind)
COMPONENTS = {
    "clinear": (_clinear, _DEFAULT_TOL, "layer"),
    "cconv1d": (_cconv1d, _DEFAULT_TOL, "layer"),
    "crelu": (_crelu, _DEFAULT_TOL, "layer"),
    "cln": (_cln, _DEFAULT_TOL, "layer"),
    "c2r": (_c2r, _DEFAULT_TOL, "layer"),
    "cfcn": (_cfcn, _DEFAULT_TOL, "layer"),
    "catt": (_catt, _DEFAULT_TOL, "layer"),
    "cmha": (_cmha, _DEFAULT_TOL, "layer"),
    "encoder_block": (_encoder_block, _DEFAULT_TOL, "layer"),
    "cross_attention_block": (_cross_attention_block, _DEFAULT_TOL,
                              "layer"),
    "decoder_block": (_decoder_block, _DEFAULT_TOL, "layer"),
    "chanest_loss": (_chanest_loss, _DEFAULT_TOL, "task"),
    "actdet_loss": (_actdet_loss, _DEFAULT_TOL, "task"),
    "precode_loss": (_precode_loss, 1e-4, "task"),
}


def run_gradcheck(scope=None, seed=20260814):
    """Check one component, one kind ("layer"/"task"), or everything.

    Returns [{"component", "kind", "max_err", "tol", "ok"}, ...].
    """
    if scope in (None, "all"):
        names = list(COMPONENTS)
    elif scope in ("layer", "task"):
        names = [k for k, v in COMPONENTS.items() if v[2] == scope]
    elif scope in COMPONENTS:
        names = [scope]
    else:
        raise ConfigError(
            f"unknown gradcheck scope {scope!r} (component name, "
            f"'layer', 'task', or 'all')")
    results = []
    for name in names:
        builder, tol, kind = COMPONENTS[name]
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        errs = check_gradients(builder(rng), tol=np.inf)
        worst = max(errs.values())
        results.append({"component": name, "kind": kind,
                        "max_err": float(worst), "tol": tol,
                        "ok": bool(worst <= tol)})
    return results
