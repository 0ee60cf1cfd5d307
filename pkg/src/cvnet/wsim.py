"""Wireless scene generation and classical baselines.

Plain numpy, no autodiff: OFDM frames over an ETU tapped-delay-line channel
with Jakes Doppler fading, least-squares pilot estimation, grant-free uplink
snapshots, Saleh-Valenzuela uplink/downlink channel pairs, and the
zero-forcing precoder / sum-rate reference.

Every generator is a pure function of its seed. `seed` may be an int (or
None) or an existing numpy Generator; dataset builders derive independent
per-sample streams with `rng_stream`, which keys a Philox counter off
(master_seed, tag, indices) so generation order and worker count never
change the output.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "rng_stream", "crandn", "qpsk_symbols",
    "gen_etu_channel", "ofdm_observe", "pilot_lattice", "ls_estimate",
    "OfdmFrame", "gen_ofdm_frame",
    "GrantFreeSample", "gen_grantfree_sample",
    "DuplexChannels", "steering_matrix", "gen_sv_channels",
    "zf_precoder", "sum_rate",
]

# 3GPP TS 36.101 Extended Typical Urban profile.
ETU_DELAYS_S = np.array(
    [0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0]) * 1e-9
ETU_POWERS_DB = np.array(
    [-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0])
_ETU_POWERS = 10.0 ** (ETU_POWERS_DB / 10.0)
_ETU_POWERS = _ETU_POWERS / _ETU_POWERS.sum()

N_SINUSOIDS = 32

# One LTE-like resource block frame: 72 subcarriers at 15 kHz, 14 symbols
# spanning 1 ms.
DEFAULT_N_F = 72
DEFAULT_N_S = 14
DEFAULT_SUBCARRIER_SPACING_HZ = 15e3
DEFAULT_SYMBOL_DURATION_S = 1e-3 / 14


def rng_stream(master_seed, tag, *indices):
    """Independent Philox generator keyed by (master_seed, tag, indices).

    The tag hashes into the spawn key, so streams for different purposes
    ("channel", "noise", "pilots", ...) never collide and per-sample streams
    are order-independent.
    """
    key = zlib.crc32(tag.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(key, *indices))
    return np.random.Generator(np.random.Philox(ss))


def crandn(rng, shape):
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / np.sqrt(2.0)


def qpsk_symbols(rng, shape):
    """Unit-modulus QPSK: (±1 ± 1j)/sqrt(2)."""
    re = 2.0 * rng.integers(0, 2, shape) - 1.0
    im = 2.0 * rng.integers(0, 2, shape) - 1.0
    return (re + 1j * im) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# OFDM / ETU
# ---------------------------------------------------------------------------

def gen_etu_channel(n_f, n_s, doppler_hz,
                    subcarrier_spacing_hz=DEFAULT_SUBCARRIER_SPACING_HZ,
                    symbol_duration_s=DEFAULT_SYMBOL_DURATION_S,
                    seed=None):
    """Frequency response H[f, t] of an ETU channel, shape (n_f, n_s).

    Each tap fades with a Jakes Doppler spectrum realized as a sum of
    N_SINUSOIDS complex sinusoids with uniform arrival angles and phases;
    H[f, t] = sum_taps g_tap(t) * exp(-2j*pi * f * spacing * delay_tap).
    The tap powers are normalized so E|H|^2 = 1.
    """
    if n_f < 1 or n_s < 1:
        raise ValueError(f"OFDM grid must be at least 1x1, got {n_f}x{n_s}")
    if subcarrier_spacing_hz <= 0 or symbol_duration_s <= 0:
        raise ValueError("subcarrier spacing and symbol duration must be "
                         "positive")
    if doppler_hz < 0:
        raise ValueError(f"doppler must be >= 0, got {doppler_hz}")
    rng = np.random.default_rng(seed)
    n_taps = ETU_DELAYS_S.size
    alpha = rng.uniform(0.0, 2.0 * np.pi, (n_taps, N_SINUSOIDS))
    phi = rng.uniform(0.0, 2.0 * np.pi, (n_taps, N_SINUSOIDS))
    t = np.arange(n_s) * symbol_duration_s
    omega = 2.0 * np.pi * doppler_hz * np.cos(alpha)
    phase = omega[:, :, None] * t[None, None, :] + phi[:, :, None]
    g = np.sqrt(_ETU_POWERS / N_SINUSOIDS)[:, None] \
        * np.exp(1j * phase).sum(axis=1)
    f = np.arange(n_f) * subcarrier_spacing_hz
    steer = np.exp(-2j * np.pi * np.outer(f, ETU_DELAYS_S))
    return steer @ g


def ofdm_observe(h, x, snr_db, seed=None):
    """Y = H o X + W with W i.i.d. CN(0, sigma2).

    sigma2 = mean|H o X|^2 / 10^(snr_db/10), referenced to this frame's
    signal power. snr_db of None or +inf disables the noise entirely.
    """
    h = np.asarray(h)
    x = np.asarray(x)
    if h.shape != x.shape:
        raise ValueError(f"frame shapes differ: H {h.shape} vs X {x.shape}")
    s = h * x
    if snr_db is None or np.isinf(snr_db):
        return s
    sigma2 = np.mean(np.abs(s) ** 2) / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    return s + np.sqrt(sigma2) * crandn(rng, s.shape)


def pilot_lattice(n_f, n_s, n_pt=2):
    """Comb pilot pattern: every 2nd subcarrier, n_pt evenly spaced symbols.

    Returns (rows, cols) index arrays; the pilot set is their product.
    """
    if n_f < 2 or n_s < n_pt or n_pt < 1:
        raise ValueError(f"grid {n_f}x{n_s} cannot host {n_pt} pilot symbols")
    rows = np.arange(0, n_f, 2)
    cols = np.array([(n_s * (2 * i + 1)) // (2 * n_pt) for i in range(n_pt)])
    return rows, cols


def ls_estimate(y, x, pilot_rows, pilot_cols):
    """Least-squares channel estimate Y/X on the pilot lattice.

    Returns the (n_pf, n_pt) matrix of per-pilot ratios.
    """
    sel = np.ix_(np.asarray(pilot_rows), np.asarray(pilot_cols))
    xp = np.asarray(x)[sel]
    yp = np.asarray(y)[sel]
    zero = np.argwhere(xp == 0)
    if zero.size:
        i, j = zero[0]
        raise ZeroDivisionError(
            f"zero pilot symbol at subcarrier {pilot_rows[i]}, "
            f"symbol {pilot_cols[j]}")
    return yp / xp


@dataclass
class OfdmFrame:
    """One channel-distorted OFDM frame with its pilot lattice."""
    H: np.ndarray            # (n_f, n_s) channel frequency response
    X: np.ndarray            # (n_f, n_s) transmitted symbols
    Y: np.ndarray            # (n_f, n_s) received symbols
    pilot_rows: np.ndarray   # (n_pf,)
    pilot_cols: np.ndarray   # (n_pt,)
    snr_db: float
    doppler_hz: float


def gen_ofdm_frame(n_f=DEFAULT_N_F, n_s=DEFAULT_N_S, snr_db=10.0,
                   doppler_hz=50.0,
                   subcarrier_spacing_hz=DEFAULT_SUBCARRIER_SPACING_HZ,
                   symbol_duration_s=DEFAULT_SYMBOL_DURATION_S,
                   n_pt=2, pilot_values=None, seed=None):
    """Full frame: ETU channel, QPSK symbols, noisy observation, pilot mask.

    `pilot_values` (n_pf, n_pt), when given, overwrites X on the lattice so a
    dataset can share one known pilot sequence across frames.
    """
    rng = np.random.default_rng(seed)
    h = gen_etu_channel(n_f, n_s, doppler_hz, subcarrier_spacing_hz,
                        symbol_duration_s, seed=rng)
    x = qpsk_symbols(rng, (n_f, n_s))
    rows, cols = pilot_lattice(n_f, n_s, n_pt)
    if pilot_values is not None:
        pv = np.asarray(pilot_values)
        want = (rows.size, cols.size)
        if pv.shape != want:
            raise ValueError(f"pilot values {pv.shape} do not fit the "
                             f"{want} lattice")
        x[np.ix_(rows, cols)] = pv
    y = ofdm_observe(h, x, snr_db, seed=rng)
    return OfdmFrame(H=h, X=x, Y=y, pilot_rows=rows, pilot_cols=cols,
                     snr_db=snr_db, doppler_hz=doppler_hz)


# ---------------------------------------------------------------------------
# grant-free uplink
# ---------------------------------------------------------------------------

@dataclass
class GrantFreeSample:
    """One grant-free access snapshot."""
    B: np.ndarray        # (pilot_len, n_users) scaled signatures
    Y: np.ndarray        # (pilot_len, n_antennas) received signal
    C: np.ndarray        # (pilot_len, pilot_len) sample covariance Y Y^H
    a: np.ndarray        # (n_users,) 0/1 activity
    sigma2: float        # receiver noise power (mW), for input scaling


def gen_grantfree_sample(n_users, n_antennas, pilot_len, p_active=0.1,
                         cell_radius_km=1.0, tx_power_dbm=23.0,
                         noise_psd_dbm_hz=-169.0, bandwidth_hz=10e6,
                         min_dist_km=0.05, seed=None):
    """Grant-free snapshot: Y = sum_n a_n sqrt(eta g_n) s_n h_n^T + W.

    Signatures s_n are i.i.d. CN(0,1) per symbol; g_n follows the urban
    path-loss law 128.1 + 37.6 log10(d_km) with users placed uniformly over
    the cell area between min_dist_km and cell_radius_km; every user
    transmits at tx_power_dbm. Powers are tracked in mW.
    """
    if min(n_users, n_antennas, pilot_len) < 1:
        raise ValueError("n_users, n_antennas and pilot_len must be >= 1")
    if not 0.0 <= p_active <= 1.0:
        raise ValueError(f"p_active must lie in [0, 1], got {p_active}")
    if not 0 < min_dist_km < cell_radius_km:
        raise ValueError("need 0 < min_dist_km < cell_radius_km")
    rng = np.random.default_rng(seed)
    s = crandn(rng, (pilot_len, n_users))
    d_km = np.sqrt(rng.uniform(min_dist_km ** 2, cell_radius_km ** 2,
                               n_users))
    pathloss_db = 128.1 + 37.6 * np.log10(d_km)
    eta_g = 10.0 ** ((tx_power_dbm - pathloss_db) / 10.0)
    sigma2 = 10.0 ** ((noise_psd_dbm_hz + 10.0 * np.log10(bandwidth_hz))
                      / 10.0)
    a = (rng.uniform(size=n_users) < p_active).astype(np.float64)
    h = crandn(rng, (n_users, n_antennas))
    w = np.sqrt(sigma2) * crandn(rng, (pilot_len, n_antennas))
    b_mat = s * np.sqrt(eta_g)[None, :]
    y = (b_mat * a[None, :]) @ h + w
    c = y @ y.conj().T
    return GrantFreeSample(B=b_mat, Y=y, C=c, a=a, sigma2=float(sigma2))


# ---------------------------------------------------------------------------
# Saleh-Valenzuela uplink/downlink pairs
# ---------------------------------------------------------------------------

@dataclass
class DuplexChannels:
    """Paired uplink/downlink channels over one antenna array."""
    H_UL: np.ndarray     # (n_antennas, n_users)
    H_DL: np.ndarray     # (n_antennas, n_users)
    f_ul_hz: float
    f_dl_hz: float
    n_paths: int


def steering_matrix(theta, n_antennas, f_hz, f_ref_hz):
    """Unit-norm ULA steering vectors as columns, one per angle.

    Element spacing is half a wavelength at f_ref_hz, so the phase ramp at
    carrier f_hz is pi * (f_hz/f_ref_hz) * n * sin(theta).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    n = np.arange(n_antennas)[:, None]
    ramp = np.pi * (f_hz / f_ref_hz) * n * np.sin(theta)[None, :]
    return np.exp(-1j * ramp) / np.sqrt(n_antennas)


def gen_sv_channels(n_antennas, n_users, n_paths, f_ul_hz, f_dl_hz,
                    seed=None):
    """Sparse multipath uplink/downlink pair with shared geometry.

    Per user: n_paths departure angles uniform on [-pi/2, pi/2) shared
    between the two bands (propagation geometry does not move with carrier
    frequency), per-path gains i.i.d. CN(0,1) drawn independently per band;
    h = sqrt(N/P) * sum_p gain_p * a(theta_p, f), giving E||h||^2 = N.
    """
    if n_paths < 1:
        raise ValueError(f"need at least one path, got {n_paths}")
    if f_ul_hz <= 0 or f_dl_hz <= 0:
        raise ValueError("carrier frequencies must be positive")
    rng = np.random.default_rng(seed)
    h_ul = np.empty((n_antennas, n_users), dtype=np.complex128)
    h_dl = np.empty((n_antennas, n_users), dtype=np.complex128)
    scale = np.sqrt(n_antennas / n_paths)
    for k in range(n_users):
        theta = rng.uniform(-np.pi / 2, np.pi / 2, n_paths)
        a_ul = steering_matrix(theta, n_antennas, f_ul_hz, f_ul_hz)
        a_dl = steering_matrix(theta, n_antennas, f_dl_hz, f_ul_hz)
        h_ul[:, k] = scale * (a_ul @ crandn(rng, n_paths))
        h_dl[:, k] = scale * (a_dl @ crandn(rng, n_paths))
    return DuplexChannels(H_UL=h_ul, H_DL=h_dl, f_ul_hz=float(f_ul_hz),
                          f_dl_hz=float(f_dl_hz), n_paths=int(n_paths))


# ---------------------------------------------------------------------------
# classical baselines
# ---------------------------------------------------------------------------

def zf_precoder(h_dl, rho):
    """Zero-forcing precoder with equal per-user power and Tr(V^H V) = rho.

    Directions come from H (H^H H)^{-1}; each column is normalized to unit
    power, then the whole matrix scales by sqrt(rho/K). Column-wise rescaling
    keeps the zero-interference property, which only depends on directions.
    """
    h_dl = np.asarray(h_dl)
    if rho <= 0:
        raise ValueError(f"transmit power must be positive, got {rho}")
    if np.linalg.cond(h_dl) > 1e12:
        raise np.linalg.LinAlgError(
            "downlink channel is rank deficient; zero-forcing undefined")
    k = h_dl.shape[1]
    v = h_dl @ np.linalg.inv(h_dl.conj().T @ h_dl)
    v = v / np.linalg.norm(v, axis=0, keepdims=True)
    return np.sqrt(rho / k) * v


def sum_rate(v, h_dl, sigma2):
    """Downlink sum rate in bits/s/Hz.

    sum_k log2(1 + |v_k^H h_k|^2 / (sum_{k'!=k} |v_k'^H h_k|^2 + sigma2)).
    """
    v = np.asarray(v)
    h_dl = np.asarray(h_dl)
    if v.shape != h_dl.shape:
        raise ValueError(f"precoder {v.shape} vs channel {h_dl.shape}")
    if sigma2 <= 0:
        raise ValueError(f"noise power must be positive, got {sigma2}")
    g = np.abs(v.conj().T @ h_dl) ** 2     # g[k', k] = |v_k'^H h_k|^2
    sig = np.diag(g)
    interf = g.sum(axis=0) - sig
    return float(np.sum(np.log2(1.0 + sig / (interf + sigma2))))
