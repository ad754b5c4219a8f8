"""Frame-level bit plumbing: codeword packing, filler bits and the
frame-spanning interleaver.

A frame's data positions carry ``n_data * 4`` bits. Six (1296, 648)
codewords account for 7776 of them; the remainder is random filler that is
excluded from error counting and from training labels. One interleaver
permutation spans the whole frame, so each codeword sees many different
subcarriers and symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fec import Interleaver, LdpcCode
from .link import (
    BITS_PER_SYMBOL,
    FrameGeometry,
    PilotPattern,
    build_pilot_pattern,
)

NUM_CODEWORDS = 6


@dataclass
class FrameCodec:
    """Maps information bits to interleaved frame bits and back."""

    geometry: FrameGeometry
    pattern: PilotPattern
    code: LdpcCode
    interleaver: Interleaver
    n_codewords: int = NUM_CODEWORDS
    filler_seed: int = 0xF111
    _filler_rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.interleaver.length != self.n_frame_bits:
            raise ValueError(
                f"interleaver length {self.interleaver.length} != "
                f"frame bits {self.n_frame_bits}")
        if self.n_filler_bits < 0:
            raise ValueError("codewords do not fit in the frame")
        self._filler_rng = np.random.default_rng(self.filler_seed)

    # --- sizes ----------------------------------------------------------

    @property
    def n_frame_bits(self) -> int:
        n_data = self.geometry.grid_size - self.pattern.num_pilots
        return n_data * BITS_PER_SYMBOL

    @property
    def n_coded_bits(self) -> int:
        return self.n_codewords * self.code.n

    @property
    def n_filler_bits(self) -> int:
        return self.n_frame_bits - self.n_coded_bits

    @property
    def n_info_bits(self) -> int:
        return self.n_codewords * self.code.k

    @property
    def coded_mask(self) -> np.ndarray:
        """Boolean (n_frame_bits,) in interleaved order; True on coded bits."""
        flat = np.zeros(self.n_frame_bits, dtype=bool)
        flat[:self.n_coded_bits] = True
        return self.interleaver.interleave(flat)

    # --- transmit side ----------------------------------------------------

    def random_info(self, rng: np.random.Generator,
                    n_frames: int = 1) -> np.ndarray:
        return rng.integers(0, 2, (n_frames, self.n_info_bits), dtype=np.uint8)

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        """Info bits (n_frames, n_info) -> interleaved frame bits (n_frames, n_frame)."""
        u = np.atleast_2d(np.asarray(info_bits, dtype=np.uint8))
        n_frames = u.shape[0]
        cw = self.code.encode(u.reshape(-1, self.code.k))
        coded = cw.reshape(n_frames, self.n_coded_bits)
        filler = self._filler_rng.integers(
            0, 2, (n_frames, self.n_filler_bits), dtype=np.uint8)
        return self.interleaver.interleave(
            np.concatenate([coded, filler], axis=1))

    # --- receive side -----------------------------------------------------

    def codeword_llrs(self, frame_llrs: np.ndarray) -> np.ndarray:
        """Interleaved frame LLRs (..., n_frame) -> (..., n_codewords, n)."""
        return self.codewords_from_ordered(
            self.interleaver.deinterleave(np.asarray(frame_llrs)))

    def codewords_from_ordered(self, ordered: np.ndarray) -> np.ndarray:
        """Already-deinterleaved values (..., n_frame) -> (..., n_codewords, n),
        dropping the trailing filler positions."""
        x = np.asarray(ordered)
        flat = x[..., :self.n_coded_bits]
        return flat.reshape(*x.shape[:-1], self.n_codewords, self.code.n)

    def frame_values_from_codewords(self, values: np.ndarray,
                                    fill=0) -> np.ndarray:
        """Per-codeword values (..., n_codewords, n) -> interleaved frame order.

        Filler positions receive ``fill``. Works for hard bits and for
        floating-point LLRs alike.
        """
        v = np.asarray(values)
        lead = v.shape[:-2]
        flat = v.reshape(*lead, self.n_coded_bits)
        pad = np.full(lead + (self.n_filler_bits,), fill, dtype=v.dtype)
        return self.interleaver.interleave(np.concatenate([flat, pad], axis=-1))

    def frame_bits_from_codewords(self, hard_coded: np.ndarray) -> np.ndarray:
        """Hard codeword bits (..., n_codewords, n) -> interleaved frame bits.

        Filler positions are zero-filled; combine with :attr:`coded_mask`
        when the result is used as training labels.
        """
        return self.frame_values_from_codewords(
            np.asarray(hard_coded, dtype=np.uint8))


def default_codec(interleave_seed: int = 1,
                  pilot_seed: int = 0,
                  code: LdpcCode | None = None) -> FrameCodec:
    """The standard frame: 36 x 64 grid, 39 pilots, six codewords."""
    geom = FrameGeometry()
    pattern = build_pilot_pattern(geom, rng_seed=pilot_seed)
    if code is None:
        code = LdpcCode.default()
    n_bits = (geom.grid_size - pattern.num_pilots) * BITS_PER_SYMBOL
    return FrameCodec(
        geometry=geom,
        pattern=pattern,
        code=code,
        interleaver=Interleaver(n_bits, seed=interleave_seed),
    )
