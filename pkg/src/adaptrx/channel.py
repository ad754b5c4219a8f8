"""Stochastic time-varying, frequency-selective fading channel.

Tapped-delay-line model: complex tap gains follow a Clarke/Jakes Doppler
spectrum (sum-of-sinusoids synthesis) with an exponentially decaying power
delay profile, sampled onto the OFDM resource grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .link import FrameGeometry

SPEED_OF_LIGHT_M_S = 299_792_458.0

# Sinusoids per tap in the Clarke-compatible generator; angles and phases
# are redrawn per tap and per realization.
NUM_SINUSOIDS = 32


@dataclass(frozen=True)
class ChannelParams:
    """Macro parameters of one channel condition (sub-ensemble)."""

    num_taps: int
    velocity_kmh: float
    carrier_freq_hz: float = 5.9e9
    tap_spacing_s: float = 1e-7
    decay_total_db: float = -13.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        if self.velocity_kmh < 0:
            raise ValueError("velocity_kmh must be >= 0")
        if self.tap_spacing_s <= 0:
            raise ValueError("tap_spacing_s must be > 0")
        if self.decay_total_db > 0:
            raise ValueError("decay_total_db must be <= 0")


@dataclass(frozen=True)
class PdpWeights:
    """Amplitude weights of the exponentially decaying power delay profile.

    ``weights[l]`` is the root power of tap l; the profile is normalized to
    unit total power. ``decay_beta`` is None for the degenerate single-tap
    profile.
    """

    weights: np.ndarray
    decay_beta: float | None

    @property
    def powers(self) -> np.ndarray:
        return self.weights ** 2


def compute_pdp_weights(num_taps: int, decay_total_db: float = -13.0) -> PdpWeights:
    """Exponential profile whose last/first tap power ratio is decay_total_db.

    The decay base solves beta^(L-1) = 10^(decay_total_db/10); weights are
    normalized so the tap powers sum to one. A single tap degenerates to
    weight 1.
    """
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    if decay_total_db > 0:
        raise ValueError("decay_total_db must be <= 0")
    if num_taps == 1:
        return PdpWeights(weights=np.ones(1), decay_beta=None)

    beta = 10.0 ** (decay_total_db / (10.0 * (num_taps - 1)))
    powers = beta ** np.arange(num_taps)
    powers /= powers.sum()
    return PdpWeights(weights=np.sqrt(powers), decay_beta=float(beta))


def doppler_frequency(velocity_kmh: float, carrier_freq_hz: float) -> float:
    """Maximum Doppler shift v*f_c/c for a velocity given in km/h."""
    if velocity_kmh < 0:
        raise ValueError("velocity_kmh must be >= 0")
    return (velocity_kmh / 3.6) * carrier_freq_hz / SPEED_OF_LIGHT_M_S


@dataclass
class TapProcess:
    """Complex gain sequence of one tap at the requested time instants."""

    gains: np.ndarray
    doppler_freq_hz: float


def generate_tap_processes(params: ChannelParams, time_instants: np.ndarray,
                           pdp: PdpWeights,
                           rng: np.random.Generator) -> list[TapProcess]:
    """Independent Rayleigh tap processes with Jakes temporal correlation.

    Each tap is a sum of NUM_SINUSOIDS complex exponentials with uniformly
    random arrival angles and phases, giving E[a(t) a*(t+d)] =
    p_l * J0(2 pi f_D d). A static channel (v = 0) draws one complex
    Gaussian gain per tap, the limit of the Jakes model.
    """
    t = np.asarray(time_instants, dtype=float)
    if t.size == 0:
        raise ValueError("time_instants must be nonempty")
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError("time_instants must be ascending")

    gains = _tap_gain_matrix(params, t, pdp, rng)
    f_d = doppler_frequency(params.velocity_kmh, params.carrier_freq_hz)
    return [TapProcess(gains=gains[l], doppler_freq_hz=f_d)
            for l in range(params.num_taps)]


def _tap_gain_matrix(params: ChannelParams, t: np.ndarray, pdp: PdpWeights,
                     rng: np.random.Generator) -> np.ndarray:
    """(num_taps, len(t)) complex tap gains.

    Sinusoid amplitudes are complex Gaussian (not constant-modulus), which
    makes the marginal gain distribution exactly Rayleigh at any sinusoid
    count while keeping the Jakes autocorrelation.
    """
    n_taps = params.num_taps
    if params.velocity_kmh == 0:
        draw = (rng.standard_normal(n_taps) + 1j * rng.standard_normal(n_taps))
        gains = pdp.weights * draw / np.sqrt(2.0)
        return np.repeat(gains[:, None], t.size, axis=1)

    f_d = doppler_frequency(params.velocity_kmh, params.carrier_freq_hz)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(n_taps, NUM_SINUSOIDS))
    amps = (rng.standard_normal((n_taps, NUM_SINUSOIDS))
            + 1j * rng.standard_normal((n_taps, NUM_SINUSOIDS)))
    amps /= np.sqrt(2.0 * NUM_SINUSOIDS)
    # (taps, sinusoids, time)
    arg = (2.0 * np.pi * f_d * np.cos(angles))[:, :, None] * t[None, None, :]
    gains = (amps[:, :, None] * np.exp(1j * arg)).sum(axis=1)
    return pdp.weights[:, None] * gains


@dataclass
class ChannelRealization:
    """Frequency-domain channel matrix of one frame."""

    h: np.ndarray  # (n_symbols, n_subcarriers) complex
    params: ChannelParams


def sample_channel_matrix(params: ChannelParams, geom: FrameGeometry,
                          rng: np.random.Generator) -> ChannelRealization:
    """Sample the transfer function onto the frame's resource grid.

    The channel is held constant within one OFDM symbol and sampled at the
    symbol start; H[k, n] = sum_l a_l(k T_S) exp(-j 2 pi f_n tau_l).
    """
    pdp = compute_pdp_weights(params.num_taps, params.decay_total_db)
    t = np.arange(geom.n_symbols) * geom.symbol_duration_s
    gains = _tap_gain_matrix(params, t, pdp, rng)  # (L, n_symbols)

    delays = np.arange(params.num_taps) * params.tap_spacing_s
    freqs = np.arange(geom.n_subcarriers) * geom.subcarrier_spacing_hz
    steering = np.exp(-2j * np.pi * np.outer(delays, freqs))  # (L, n_sub)
    h = gains.T @ steering
    return ChannelRealization(h=h, params=params)


def pdp_frequency_correlation(pdp: PdpWeights, params: ChannelParams,
                              geom: FrameGeometry) -> np.ndarray:
    """Channel correlation across subcarrier lags: DFT of the tap powers.

    Returns r[d] = E[H(f + d df) H*(f)] = sum_l p_l exp(-j 2 pi d df tau_l)
    for d = 0 .. n_subcarriers-1, so a Hermitian Toeplitz covariance matrix
    has r as its first column.
    """
    delays = np.arange(params.num_taps) * params.tap_spacing_s
    lags = np.arange(geom.n_subcarriers) * geom.subcarrier_spacing_hz
    return (pdp.powers[None, :]
            * np.exp(-2j * np.pi * np.outer(lags, delays))).sum(axis=1)
