"""Losses and metrics for the three tasks.

Graph-side losses return scalar tape tensors; metrics are plain numpy.
"""

from __future__ import annotations

import numpy as np

from . import ctensor as ct
from .ctensor import CTensor, astensor
from .wsim import crandn

__all__ = [
    "huber_loss", "mse_metric", "weighted_bce", "pm_pf",
    "sum_rate_graph", "end_to_end_loss",
]


def _plain(x):
    return x.value if isinstance(x, CTensor) else np.asarray(x)


def huber_loss(h_hat, h):
    """Mean Huber loss on the complex residual modulus.

    Per entry with r = |h_hat - h|: r^2/2 when r <= 1, else r - 1/2. Both
    branches meet at 1/2 (and share the gradient) at r = 1.
    """
    x = ct.sub(h_hat, _as_const(h))
    mag = ct.cabs(x)
    quad_mask = (mag.value.real <= 1.0).astype(np.float64)
    quad = ct.scale(ct.abs2(x), 0.5)
    lin = ct.sub(mag, 0.5)
    per = ct.add(ct.hadamard(astensor(quad_mask), quad),
                 ct.hadamard(astensor(1.0 - quad_mask), lin))
    return ct.cmean(per)


def _as_const(x):
    return x if isinstance(x, CTensor) else astensor(x)


def mse_metric(h_hat, h):
    """Mean squared error over all entries of the frame."""
    a = _plain(h_hat)
    b = _plain(h)
    if a.shape != b.shape:
        raise ValueError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b) ** 2))


def weighted_bce(p, a, lam=10.0):
    """Activity-weighted binary cross entropy.

    -(1/N) sum_n [lam * a_n * ln p_n + (1 - a_n) * ln(1 - p_n)] with p the
    (1, N) probability row. Probabilities outside (0, 1) raise a domain
    error through the logarithm.
    """
    p = _as_const(p)
    a = np.asarray(a, dtype=np.float64).reshape(1, -1)
    if p.shape != a.shape:
        raise ValueError(f"probabilities {p.shape} vs labels {a.shape}")
    lp = ct.log(p)
    l1p = ct.log(ct.sub(1.0, p))
    term = ct.add(ct.scale(ct.hadamard(astensor(a), lp), lam),
                  ct.hadamard(astensor(1.0 - a), l1p))
    return ct.scale(ct.csum(term), -1.0 / a.size)


def pm_pf(p, a, gamma):
    """Missed-detection and false-alarm probabilities at threshold gamma.

    Detection is p > gamma. Either probability is None when its class is
    absent. To aggregate a sample set, concatenate the per-sample p and a
    vectors first: that sums numerators and denominators before dividing.
    """
    p = np.asarray(_plain(p)).real.ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise ValueError(f"probabilities {p.shape} vs labels {a.shape}")
    det = (p > gamma).astype(np.float64)
    n_active = a.sum()
    n_silent = (1.0 - a).sum()
    pm = None if n_active == 0 else float(1.0 - (det * a).sum() / n_active)
    pf = None if n_silent == 0 else float((det * (1.0 - a)).sum() / n_silent)
    return pm, pf


def sum_rate_graph(v, h_dl, sigma2):
    """Downlink sum rate as a tape scalar (bits/s/Hz); numpy twin of
    wsim.sum_rate for training through the precoder."""
    if sigma2 <= 0:
        raise ValueError(f"noise power must be positive, got {sigma2}")
    v = _as_const(v)
    h = _as_const(h_dl)
    g2 = ct.abs2(ct.matmul(ct.transpose(ct.conj(v)), h))   # (K, K)
    colsum = ct.csum(g2, axis=0, keepdims=True)            # (1, K)
    dg = ct.diag_part(g2)                                  # (1, K)
    interf = ct.sub(colsum, dg)
    snr = ct.div(dg, ct.add(interf, sigma2))
    return ct.scale(ct.csum(ct.log(ct.add(snr, 1.0))), 1.0 / np.log(2.0))


def end_to_end_loss(chain, h_ul, h_dl, sigma2, noise_seed):
    """Negative achieved sum rate of the full chain on one channel pair.

    The received-pilot noise enters as a constant drawn from noise_seed, so
    the gradient flows through the pilot matmul and both normalizations.
    """
    rng = np.random.default_rng(noise_seed)
    noise = np.sqrt(sigma2) * crandn(rng, (chain.m_pilots, chain.n_users))
    v = chain.run(h_ul, h_dl, noise, mode="train")
    return ct.scale(sum_rate_graph(v, h_dl, sigma2), -1.0)
