"""Monte-Carlo frame generation shared by every receiver under test.

A :class:`FrameBatch` bundles the transmitted information bits, the channel
realization and the received grid, so paired comparisons can run all
receivers against identical realizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, sample_channel_matrix
from .framing import FrameCodec
from .link import apply_channel, ebn0_to_sigma, map_bits_to_frame


@dataclass
class InterferenceSpec:
    """Extra Gaussian noise on selected subcarriers, specified as an SNR
    penalty: added variance = (10^(penalty/10) - 1) * sigma^2, raising the
    total noise power on those subcarriers by exactly the penalty."""

    subcarriers: tuple[int, ...] = (0, 1, 62, 63)
    penalty_db: float = 6.0

    def added_variance(self, noise_var: float) -> float:
        return (10.0 ** (self.penalty_db / 10.0) - 1.0) * noise_var


@dataclass
class FrameBatch:
    """Aligned transmit/channel/receive records of ``n_frames`` frames."""

    info: np.ndarray          # (F, n_info) uint8
    frame_bits: np.ndarray    # (F, n_frame_bits) uint8, interleaved order
    x: np.ndarray             # (F, n_t, n_f) transmitted grids
    h: np.ndarray             # (F, n_t, n_f) channel matrices
    y: np.ndarray             # (F, n_t, n_f) received grids
    sigma: float
    ebn0_db: float
    interference: InterferenceSpec | None = field(default=None)

    @property
    def n_frames(self) -> int:
        return self.info.shape[0]


def apply_interference(y: np.ndarray, spec: InterferenceSpec,
                       noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """Add independent complex Gaussian interference on the named subcarriers."""
    added = spec.added_variance(noise_var)
    if added <= 0:
        return y
    out = np.array(y, copy=True)
    cols = list(spec.subcarriers)
    shape = out[..., cols].shape
    scale = np.sqrt(added / 2.0)
    out[..., cols] += scale * (rng.standard_normal(shape)
                               + 1j * rng.standard_normal(shape))
    return out


def generate_frames(codec: FrameCodec, params: ChannelParams, ebn0_db: float,
                    n_frames: int, rng: np.random.Generator,
                    interference: InterferenceSpec | None = None,
                    sigma: float | None = None) -> FrameBatch:
    """Draw ``n_frames`` independent (bits, channel, noise) realizations."""
    geom = codec.geometry
    if sigma is None:
        sigma = ebn0_to_sigma(ebn0_db)

    info = codec.random_info(rng, n_frames)
    frame_bits = codec.encode(info)

    x = np.empty((n_frames, geom.n_symbols, geom.n_subcarriers), dtype=complex)
    h = np.empty_like(x)
    for i in range(n_frames):
        grid = map_bits_to_frame(frame_bits[i], codec.pattern, geom)
        x[i] = grid.x
        h[i] = sample_channel_matrix(params, geom, rng).h

    y = apply_channel(x, h, sigma, rng)
    if interference is not None:
        y = apply_interference(y, interference, sigma ** 2, rng)
    return FrameBatch(info=info, frame_bits=frame_bits, x=x, h=h, y=y,
                      sigma=sigma, ebn0_db=ebn0_db, interference=interference)


def count_info_errors(codec: FrameCodec, batch: FrameBatch,
                      hard_info: np.ndarray) -> tuple[int, int]:
    """(errored bits, total bits) of decoder outputs against the batch."""
    decided = np.asarray(hard_info).reshape(batch.n_frames, codec.n_info_bits)
    errors = int((decided != batch.info).sum())
    return errors, batch.info.size
