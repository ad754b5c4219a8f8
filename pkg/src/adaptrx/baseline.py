"""Conventional receivers: LMMSE channel estimation with iterative
estimation-detection-decoding (IEDD), and the perfect-channel-knowledge
IDD bound.

Grid correlation is modeled as separable (time x frequency), so estimation
runs as two cascaded one-dimensional Wiener filters: first across
subcarriers at every symbol time that carries observations, then across
time per subcarrier, propagating per-position error variances. Decoder
feedback uses extrinsic LLRs for both the demapper priors and the
soft-symbol virtual pilots.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import j0

from .channel import ChannelParams, compute_pdp_weights, doppler_frequency, \
    pdp_frequency_correlation
from .fec import DecodeResult
from .framing import FrameCodec
from .link import BITS_PER_SYMBOL, FrameGeometry, qam16_bit_table, \
    qam16_constellation

WIENER_EPS = 1e-9
PRIOR_CLIP = 50.0
_UNOBSERVED = np.inf


@dataclass
class CorrelationModel:
    """Separable second-order channel statistics plus the noise level."""

    r_time: np.ndarray   # autocorrelation over symbol lags, r_time[0] = 1
    r_freq: np.ndarray   # autocorrelation over subcarrier lags, r_freq[0] = 1
    noise_var: float

    def __post_init__(self):
        if not (np.isclose(self.r_time[0], 1.0)
                and np.isclose(self.r_freq[0], 1.0)):
            raise ValueError("autocorrelation must be 1 at lag zero")

    @cached_property
    def R_time(self) -> np.ndarray:
        return toeplitz(self.r_time, np.conj(self.r_time))

    @cached_property
    def R_freq(self) -> np.ndarray:
        return toeplitz(self.r_freq, np.conj(self.r_freq))


def genie_correlation(params: ChannelParams, geom: FrameGeometry,
                      noise_var: float) -> CorrelationModel:
    """Correlation model matched to the true channel ensemble."""
    f_d = doppler_frequency(params.velocity_kmh, params.carrier_freq_hz)
    lags_s = np.arange(geom.n_symbols) * geom.symbol_duration_s
    r_time = j0(2.0 * np.pi * f_d * lags_s)
    pdp = compute_pdp_weights(params.num_taps, params.decay_total_db)
    r_freq = pdp_frequency_correlation(pdp, params, geom)
    return CorrelationModel(r_time=r_time.astype(complex), r_freq=r_freq,
                            noise_var=noise_var)


# --- soft symbols from bit LLRs -------------------------------------------

_POINTS = qam16_constellation()
_BITS = qam16_bit_table()             # (16, 4)
_BIT_SIGNS = 1.0 - 2.0 * _BITS        # +1 for bit 0, -1 for bit 1


def soft_symbols(bit_llrs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior symbol mean and variance from per-bit LLRs log(P0/P1).

    ``bit_llrs`` has shape (..., 4); returns mean (...,) complex and
    variance (...,) float in [0, 1 + margin].
    """
    llr = np.clip(np.asarray(bit_llrs, dtype=np.float64),
                  -PRIOR_CLIP, PRIOR_CLIP)
    # log P(bit = B) = -softplus(-(1-2B) * llr), summed over the 4 bits
    arg = llr[..., None, :] * _BIT_SIGNS[None, :, :]   # (..., 16, 4)
    logp = -np.logaddexp(0.0, -arg).sum(axis=-1)        # (..., 16)
    logp -= logp.max(axis=-1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=-1, keepdims=True)
    mean = p @ _POINTS
    power = p @ np.abs(_POINTS) ** 2
    var = np.maximum(power - np.abs(mean) ** 2, 0.0)
    return mean, var


# --- cascaded Wiener estimation -------------------------------------------

def _wiener_1d(corr_full: np.ndarray, obs: np.ndarray, noise: np.ndarray,
               obs_idx: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Batched 1-D Wiener smoothing of sequences sharing observation positions.

    corr_full: (N, N) Hermitian; obs: (B, K) values at obs_idx; noise:
    (B, K) per-observation error variances. Returns estimates (B, N) and
    error variances (B, N).
    """
    r_op = corr_full[np.ix_(obs_idx, obs_idx)]       # (K, K)
    r_no = corr_full[:, obs_idx]                     # (N, K)
    k = len(obs_idx)
    a = r_op[None, :, :] + (noise[:, :, None] + eps) * np.eye(k)[None, :, :]
    # G = r_no A^-1  per batch element, via solve on the Hermitian transpose
    g = np.conj(np.transpose(
        np.linalg.solve(a, np.broadcast_to(
            np.conj(r_no.T), (noise.shape[0], k, corr_full.shape[0]))),
        (0, 2, 1)))
    est = np.einsum("bnk,bk->bn", g, obs.astype(complex))
    err = 1.0 - np.einsum("bnk,nk->bn", g, np.conj(r_no)).real
    return est, np.maximum(err, 0.0)


def lmmse_estimate(obs: np.ndarray, noise_var: np.ndarray,
                   corr: CorrelationModel,
                   eps: float = WIENER_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Wiener-filter channel estimate over the full grid with error variances.

    obs: (n_frames, n_t, n_f) least-squares channel observations (value
    irrelevant where unobserved); noise_var: matching per-position effective
    noise variances, ``np.inf`` marking unobserved positions. Observation
    positions must be identical across frames (they are: the pilot grid, or
    the whole grid once decoder feedback exists).

    Returns (h_hat, err_var), both (n_frames, n_t, n_f).
    """
    obs = np.atleast_3d(np.asarray(obs))
    if obs.ndim == 2:
        obs = obs[None]
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=np.float64),
                                obs.shape)
    n_frames, n_t, n_f = obs.shape
    observed = np.isfinite(noise_var[0])
    if not observed.any():
        raise ValueError("at least one observed position is required")
    obs_rows = np.nonzero(observed.any(axis=1))[0]

    # stage 1: across frequency, for every symbol time with observations
    est1 = np.zeros((n_frames, len(obs_rows), n_f), dtype=complex)
    var1 = np.ones((n_frames, len(obs_rows), n_f))
    for i, row in enumerate(obs_rows):
        cols = np.nonzero(observed[row])[0]
        e, v = _wiener_1d(corr.R_freq, obs[:, row, cols],
                          noise_var[:, row, cols], cols, eps)
        est1[:, i] = e
        var1[:, i] = v

    # stage 2: across time, per subcarrier, stage-1 variance as noise
    o2 = np.transpose(est1, (0, 2, 1)).reshape(n_frames * n_f, len(obs_rows))
    n2 = np.transpose(var1, (0, 2, 1)).reshape(n_frames * n_f, len(obs_rows))
    e2, v2 = _wiener_1d(corr.R_time, o2, n2, obs_rows, eps)
    h_hat = np.transpose(e2.reshape(n_frames, n_f, n_t), (0, 2, 1))
    err = np.transpose(v2.reshape(n_frames, n_f, n_t), (0, 2, 1))
    return h_hat, err


# --- APP demapping ---------------------------------------------------------

# point indices grouped by the value of each bit: (4, 8) tables
_IDX_BIT0 = np.stack([np.nonzero(_BITS[:, b] == 0)[0]
                      for b in range(BITS_PER_SYMBOL)])
_IDX_BIT1 = np.stack([np.nonzero(_BITS[:, b] == 1)[0]
                      for b in range(BITS_PER_SYMBOL)])
# prior-metric projection: summing a point's zero-bit priors is the full
# prior term up to a per-symbol constant that cancels in every LLR
_PRIOR_PROJ = (1.0 - _BITS.astype(np.float64)).T     # (4, 16)


def _halved_logsumexp(metric: np.ndarray) -> np.ndarray:
    """(..., 16) point metrics -> (..., 4) LLRs via per-bit 8-point sums."""
    m0 = metric[..., _IDX_BIT0]                       # (..., 4, 8)
    m1 = metric[..., _IDX_BIT1]
    top = metric.max(axis=-1, keepdims=True)[..., None]
    with np.errstate(divide="ignore"):                # a fully improbable half
        lse0 = np.log(np.exp(m0 - top).sum(axis=-1))  # is a legitimate -inf
        lse1 = np.log(np.exp(m1 - top).sum(axis=-1))
    return lse0 - lse1


class DemapTable:
    """Cached symbol likelihood metrics for repeated demapping with fresh
    priors, as in iterative detection loops where Y, H and the error
    variance stay fixed while decoder feedback changes."""

    def __init__(self, y: np.ndarray, h: np.ndarray, err_var: np.ndarray,
                 noise_var: float):
        y = np.asarray(y)
        h = np.asarray(h)
        err = np.asarray(err_var, dtype=np.float64)
        abs_x2 = np.abs(_POINTS) ** 2
        yh = y * np.conj(h)
        sq = (np.abs(y)[..., None] ** 2
              - 2.0 * (yh.real[..., None] * _POINTS.real
                       + yh.imag[..., None] * _POINTS.imag)
              + np.abs(h)[..., None] ** 2 * abs_x2)
        sigma_eff = noise_var + abs_x2 * err[..., None]
        self.base = -sq / sigma_eff - np.log(sigma_eff)   # (..., 16)

    def llrs(self, priors: np.ndarray | None = None) -> np.ndarray:
        """Full APP LLRs (..., 4); priors included when given."""
        if priors is None:
            return _halved_logsumexp(self.base)
        llr = np.clip(np.asarray(priors, dtype=np.float64),
                      -PRIOR_CLIP, PRIOR_CLIP)
        return _halved_logsumexp(self.base + llr @ _PRIOR_PROJ)


def app_demap(y: np.ndarray, h: np.ndarray, err_var: np.ndarray,
              noise_var: float,
              priors: np.ndarray | None = None) -> np.ndarray:
    """Exact a-posteriori bit LLRs of 16-QAM symbols under estimated channels.

    y, h, err_var: (..., n_sym) received values, channel estimates and
    estimation error variances; priors: (..., n_sym, 4) per-bit prior LLRs
    log(P0/P1) or None. The likelihood of point x uses effective noise
    ``noise_var + |x|^2 err_var``. Returns (..., n_sym, 4) full APP LLRs
    (priors included; subtract them for the extrinsic part).
    """
    return DemapTable(y, h, err_var, noise_var).llrs(priors)


# --- iterative receivers ----------------------------------------------------

def _gather(grid: np.ndarray, bit_map: np.ndarray) -> np.ndarray:
    """(F, n_t, n_f) -> (F, n_data) at the data positions."""
    return grid[..., bit_map[:, 0], bit_map[:, 1]]


def _demap_and_decode(table, priors_flat, codec, bp_iters, state):
    """One demap -> BP segment; returns (DecodeResult, state, new priors)."""
    n_frames = priors_flat.shape[0]
    priors = np.clip(priors_flat, -PRIOR_CLIP, PRIOR_CLIP).reshape(
        n_frames, -1, BITS_PER_SYMBOL)
    app = table.llrs(priors)
    dem_ext = (app - priors).reshape(n_frames, -1)

    cw_in = codec.codeword_llrs(dem_ext).reshape(-1, codec.code.n)
    result, state = codec.code.bp_decode(cw_in, max_iters=bp_iters,
                                         state=state)
    dec_ext = result.llr_extrinsic.reshape(
        n_frames, codec.n_codewords, codec.code.n)
    new_priors = codec.frame_values_from_codewords(dec_ext)
    return result, state, new_priors


def iedd_receive(y: np.ndarray, codec: FrameCodec, corr: CorrelationModel,
                 n_outer: int = 4, bp_per_outer: int = 5,
                 h_override: np.ndarray | None = None) -> DecodeResult:
    """LMMSE estimation with iterative detection and decoding.

    y: (n_frames, n_t, n_f) received grids. Each outer round re-estimates
    the channel (unless ``h_override`` injects a known one), demaps with the
    decoder's extrinsic LLRs as priors, and runs ``bp_per_outer`` BP
    iterations continuing the previous decoder state. Soft symbols from the
    feedback act as virtual pilots with effective noise
    ``noise_var + symbol variance``.
    """
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    n_frames = y.shape[0]
    geom, pattern = codec.geometry, codec.pattern
    bit_map = pattern.data_positions()
    noise_var = corr.noise_var

    y_d = _gather(y, bit_map)
    priors = np.zeros((n_frames, codec.n_frame_bits))

    pilot_mask = pattern.mask
    pilot_obs = np.zeros_like(y)
    pilot_obs[:, pilot_mask] = y[:, pilot_mask] / pattern.values[pilot_mask]

    state = None
    result = None
    for outer in range(n_outer):
        if h_override is not None:
            h_d = _gather(np.asarray(h_override), bit_map)
            if h_d.shape != y_d.shape:
                h_d = np.broadcast_to(h_d, y_d.shape)
            ev_d = np.zeros_like(y_d, dtype=np.float64)
        else:
            nv = np.full(y.shape, _UNOBSERVED)
            nv[:, pilot_mask] = noise_var
            if outer == 0:
                obs = pilot_obs
            else:
                # decoder feedback turns data symbols into virtual pilots
                mean, var = soft_symbols(
                    priors.reshape(n_frames, -1, BITS_PER_SYMBOL))
                power = np.abs(mean) ** 2
                good = power > 1e-12
                ls_d = np.where(good, y_d / np.where(good, mean, 1.0), 0.0)
                nv_d = np.where(
                    good, (noise_var + var) / np.where(good, power, 1.0),
                    1e12)
                obs = pilot_obs.copy()
                obs[:, bit_map[:, 0], bit_map[:, 1]] = ls_d
                nv[:, bit_map[:, 0], bit_map[:, 1]] = nv_d
            h_hat, err_var = lmmse_estimate(obs, nv, corr)
            h_d = _gather(h_hat, bit_map)
            ev_d = _gather(err_var, bit_map)

        table = DemapTable(y_d, h_d, ev_d, noise_var)
        result, state, priors = _demap_and_decode(
            table, priors, codec, bp_per_outer, state)
    return result


def perfect_knowledge_idd(y: np.ndarray, h: np.ndarray, codec: FrameCodec,
                          noise_var: float, n_outer: int = 20,
                          bp_per_outer: int = 1) -> DecodeResult:
    """IDD bound: true channel known, demapper priors refreshed every BP pass."""
    y = np.asarray(y)
    h = np.asarray(h)
    if y.ndim == 2:
        y = y[None]
        h = h[None]
    n_frames = y.shape[0]
    bit_map = codec.pattern.data_positions()
    y_d = _gather(y, bit_map)
    h_d = _gather(h, bit_map)
    ev_d = np.zeros_like(y_d, dtype=np.float64)
    priors = np.zeros((n_frames, codec.n_frame_bits))

    table = DemapTable(y_d, h_d, ev_d, noise_var)
    state = None
    result = None
    for _ in range(n_outer):
        result, state, priors = _demap_and_decode(
            table, priors, codec, bp_per_outer, state)
    return result
