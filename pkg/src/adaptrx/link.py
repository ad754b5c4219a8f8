"""OFDM frame construction: pilot grid, 16-QAM mapping, channel/noise application.

The simulation operates directly on the frequency-domain resource grid
(time symbols x subcarriers); the cyclic prefix is assumed long enough
that the channel acts as an element-wise multiplication on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BITS_PER_SYMBOL = 4  # 16-QAM

# Gray-coded 4-PAM levels for one I/Q axis, indexed by the 2-bit value.
_PAM_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0]) / np.sqrt(10.0)


@dataclass(frozen=True)
class FrameGeometry:
    """Resource-grid dimensions and timing of one OFDM frame."""

    n_symbols: int = 36
    n_subcarriers: int = 64
    pilot_spacing_time: int = 15
    pilot_spacing_freq: int = 5
    symbol_duration_s: float = 8e-6
    bandwidth_hz: float = 10e6

    def __post_init__(self):
        if not (1 <= self.pilot_spacing_time <= self.n_symbols):
            raise ValueError("pilot_spacing_time must be in [1, n_symbols]")
        if not (1 <= self.pilot_spacing_freq <= self.n_subcarriers):
            raise ValueError("pilot_spacing_freq must be in [1, n_subcarriers]")

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.bandwidth_hz / self.n_subcarriers

    @property
    def grid_size(self) -> int:
        return self.n_symbols * self.n_subcarriers


@dataclass(frozen=True)
class PilotPattern:
    """Rectangular pilot grid with fixed constant-modulus (QPSK) pilot values.

    ``values`` holds the pilot symbols at mask positions and 0 elsewhere.
    """

    mask: np.ndarray
    values: np.ndarray

    @property
    def num_pilots(self) -> int:
        return int(self.mask.sum())

    def data_positions(self) -> np.ndarray:
        """(n_data, 2) array of (symbol, subcarrier) indices in row-major order."""
        rows, cols = np.nonzero(~self.mask)
        return np.stack([rows, cols], axis=1)


def build_pilot_pattern(geom: FrameGeometry, rng_seed: int = 0) -> PilotPattern:
    """Place pilots at every (pilot_spacing_time, pilot_spacing_freq) grid node.

    Pilot values are QPSK points drawn once from a seeded RNG so the same
    sequence is reused for every frame of a simulation.
    """
    mask = np.zeros((geom.n_symbols, geom.n_subcarriers), dtype=bool)
    time_idx = np.arange(0, geom.n_symbols, geom.pilot_spacing_time)
    freq_idx = np.arange(0, geom.n_subcarriers, geom.pilot_spacing_freq)
    mask[np.ix_(time_idx, freq_idx)] = True

    rng = np.random.default_rng(rng_seed)
    quadrant = rng.integers(0, 4, size=int(mask.sum()))
    points = np.exp(1j * (np.pi / 4 + np.pi / 2 * quadrant))
    values = np.zeros(mask.shape, dtype=complex)
    values[mask] = points
    return PilotPattern(mask=mask, values=values)


@dataclass
class FrameGrid:
    """Transmitted grid plus the bit-to-symbol placement map."""

    x: np.ndarray
    bit_map: np.ndarray  # (n_data, 2) data positions, row-major
    n_data: int

    @property
    def n_bits(self) -> int:
        return self.n_data * BITS_PER_SYMBOL


def qam16_constellation() -> np.ndarray:
    """Unit-average-energy Gray-mapped 16-QAM, indexed by the 4-bit value.

    Bits (b0, b1) Gray-select the I level, (b2, b3) the Q level, so any two
    neighbouring points differ in exactly one bit.
    """
    idx = np.arange(16)
    return _PAM_LEVELS[idx >> 2] + 1j * _PAM_LEVELS[idx & 0b11]


_QAM16 = qam16_constellation()

# bit value (16, 4): bit b of constellation index j
_QAM16_BITS = (np.arange(16)[:, None] >> np.array([3, 2, 1, 0])[None, :]) & 1


def qam16_bit_table() -> np.ndarray:
    """(16, 4) table of the bit labels of each constellation point."""
    return _QAM16_BITS.copy()


def map_bits_to_frame(bits: np.ndarray, pattern: PilotPattern,
                      geom: FrameGeometry) -> FrameGrid:
    """Fill data positions with Gray-mapped 16-QAM, pilots at mask positions.

    Data symbols are placed row-major (time-major) over the non-pilot
    positions; symbol i carries bits [4i, 4i+4).
    """
    positions = pattern.data_positions()
    n_data = len(positions)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size != n_data * BITS_PER_SYMBOL:
        raise ValueError(
            f"expected {n_data * BITS_PER_SYMBOL} bits, got {bits.size}")

    groups = bits.reshape(n_data, BITS_PER_SYMBOL)
    idx = (groups[:, 0] << 3) | (groups[:, 1] << 2) | (groups[:, 2] << 1) | groups[:, 3]
    x = pattern.values.astype(complex).copy()
    x[positions[:, 0], positions[:, 1]] = _QAM16[idx]
    return FrameGrid(x=x, bit_map=positions, n_data=n_data)


def hard_demap_frame(y: np.ndarray, h: np.ndarray, bit_map: np.ndarray) -> np.ndarray:
    """Nearest-point hard demapping of equalized data symbols, for tests."""
    sym = y[bit_map[:, 0], bit_map[:, 1]] / h[bit_map[:, 0], bit_map[:, 1]]
    idx = np.argmin(np.abs(sym[:, None] - _QAM16[None, :]) ** 2, axis=1)
    return _QAM16_BITS[idx].ravel().astype(np.uint8)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-element complex noise level and its Eb/N0 bookkeeping."""

    sigma: float
    ebn0_db: float


def ebn0_to_sigma(ebn0_db: float, bits_per_symbol: int = BITS_PER_SYMBOL,
                  code_rate: float = 0.5) -> float:
    """Noise standard deviation for unit symbol energy.

    Eb counts information bits through the code rate and bits per symbol
    only; pilot and CP overheads are deliberately excluded.
    """
    if bits_per_symbol < 1:
        raise ValueError("bits_per_symbol must be >= 1")
    if not 0 < code_rate <= 1:
        raise ValueError("code_rate must be in (0, 1]")
    return float(np.sqrt(1.0 / (bits_per_symbol * code_rate * 10.0 ** (ebn0_db / 10.0))))


def noise_spec(ebn0_db: float, bits_per_symbol: int = BITS_PER_SYMBOL,
               code_rate: float = 0.5) -> NoiseSpec:
    return NoiseSpec(sigma=ebn0_to_sigma(ebn0_db, bits_per_symbol, code_rate),
                     ebn0_db=ebn0_db)


def apply_channel(x: np.ndarray, h: np.ndarray, sigma: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Element-wise channel with circularly symmetric AWGN of variance sigma^2.

    Works on a single grid or a stacked batch of grids (leading axes).
    """
    if x.shape != h.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {h.shape}")
    y = h * x
    if sigma > 0:
        scale = sigma / np.sqrt(2.0)
        noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        y = y + scale * noise
    return y


def ls_estimate_at_pilots(y: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Least-squares channel estimates Y/X at pilot positions, zero elsewhere.

    Accepts a single grid or a batch with leading axes.
    """
    est = np.zeros(y.shape, dtype=complex)
    est[..., pattern.mask] = y[..., pattern.mask] / pattern.values[pattern.mask]
    return est
