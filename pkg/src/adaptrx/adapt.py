"""On-the-fly receiver adaptation: recover training labels from decoder
output, gate them by syndrome quality and operating SNR, and retrain the
deployed weights one accepted batch at a time.

A retraining step waits for 32 accepted batches of 50 frames each; every
batch contributes exactly one Adam update and is then discarded. The
simulated air time of that collection is 32 * 50 * 36 * 8 us = 0.4608 s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .framing import FrameCodec
from .rnn import (
    AdamState,
    RnnReceiver,
    TrainConfig,
    extract_data_llrs,
    train_step,
)

LABEL_RECOVERY_BP_ITERS = 20


@dataclass
class AcceptancePolicy:
    """Quality gate for recovered-label batches."""

    min_syndrome_fraction: float = 0.82
    min_ebn0_db: float = 7.0

    def accepts(self, syndrome_fraction: float, ebn0_db: float) -> bool:
        return (syndrome_fraction >= self.min_syndrome_fraction
                and ebn0_db > self.min_ebn0_db)


@dataclass
class LabeledBatch:
    """Input tensors and recovered labels for one batch of frames."""

    inputs: np.ndarray            # (n_frames, n_t, n_f, 7) float32
    labels: np.ndarray            # (n_frames, n_frame_bits) uint8, interleaved
    ebn0_db: float
    syndrome_fraction: float      # mean over frames and codewords

    @property
    def n_frames(self) -> int:
        return self.inputs.shape[0]


@dataclass
class RetrainBuffer:
    """Accepted batches awaiting one retraining step; single-use items."""

    capacity: int = 32
    batches: list[LabeledBatch] = field(default_factory=list)

    @property
    def full(self) -> bool:
        return len(self.batches) >= self.capacity

    def append(self, batch: LabeledBatch) -> None:
        if self.full:
            raise ValueError("buffer already holds a full collection")
        self.batches.append(batch)

    def drain(self) -> list[LabeledBatch]:
        items, self.batches = self.batches, []
        return items


def collection_time_s(n_batches: int = 32, frames_per_batch: int = 50,
                      symbols_per_frame: int = 36,
                      symbol_duration_s: float = 8e-6) -> float:
    """Simulated air time spanned by one label collection."""
    return n_batches * frames_per_batch * symbols_per_frame * symbol_duration_s


def recover_labels(receiver: RnnReceiver, inputs: np.ndarray,
                   codec: FrameCodec,
                   bp_iters: int = LABEL_RECOVERY_BP_ITERS,
                   forward_chunk: int = 16
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Run the receiver and the outer code to get self-supervision labels.

    Returns ``(labels, syndrome_fractions)``: hard decoder decisions on the
    coded bits re-interleaved into the receiver's output order (filler
    positions zero, to be masked by ``codec.coded_mask``), and the fraction
    of satisfied parity checks per frame.
    """
    n_frames = inputs.shape[0]
    bit_map = codec.pattern.data_positions()
    logits = np.concatenate(
        [receiver.forward(inputs[lo:lo + forward_chunk], keep_cache=False)
         for lo in range(0, n_frames, forward_chunk)], axis=0)
    llrs = extract_data_llrs(logits, bit_map, codec.interleaver)
    cw_llrs = codec.codewords_from_ordered(llrs).reshape(-1, codec.code.n)
    result, _ = codec.code.bp_decode(cw_llrs, max_iters=bp_iters)
    hard = result.hard_coded.reshape(n_frames, codec.n_codewords,
                                     codec.code.n)
    labels = codec.frame_bits_from_codewords(hard)
    fractions = result.syndrome_satisfied.reshape(
        n_frames, codec.n_codewords).mean(axis=1)
    return labels, fractions


def accept_batch(batch: LabeledBatch,
                 policy: AcceptancePolicy | None = None) -> bool:
    policy = policy or AcceptancePolicy()
    return policy.accepts(batch.syndrome_fraction, batch.ebn0_db)


def retrain_step(receiver: RnnReceiver, buffer: RetrainBuffer,
                 state: AdamState, config: TrainConfig, codec: FrameCodec,
                 micro_batch: int = 8) -> list[float]:
    """Consume a full buffer: one Adam update per batch, in arrival order."""
    if not buffer.full:
        raise ValueError(
            f"retraining requires {buffer.capacity} accepted batches, "
            f"have {len(buffer.batches)}")
    mask = codec.coded_mask
    bit_map = codec.pattern.data_positions()
    losses = []
    for batch in buffer.drain():
        losses.append(train_step(receiver, batch.inputs, batch.labels, mask,
                                 state, config, bit_map,
                                 micro_batch=micro_batch))
    return losses


@dataclass
class AdaptationReport:
    """Bookkeeping of one collect-gate-retrain pass."""

    batches_accepted: int = 0
    batches_rejected: int = 0
    updates_applied: int = 0
    losses: list[float] = field(default_factory=list)
    simulated_time_s: float = 0.0


def collect_and_retrain(receiver: RnnReceiver, codec: FrameCodec,
                        make_batch, ebn0_db: float, state: AdamState,
                        config: TrainConfig,
                        policy: AcceptancePolicy | None = None,
                        n_batches: int = 32, frames_per_batch: int = 50,
                        max_attempts: int | None = None) -> AdaptationReport:
    """Run one full retraining step at a fixed operating point.

    ``make_batch(n_frames)`` returns the input tensors of freshly received
    frames (the caller fixes channel conditions and interference). Batches
    are label-recovered, gated, and buffered until ``n_batches`` are
    accepted; the weight update then runs one Adam step per batch. If the
    gate rejects everything for ``max_attempts`` draws (default: 4x the
    buffer), collection stops with zero updates — weights stay untouched.
    """
    policy = policy or AcceptancePolicy()
    buffer = RetrainBuffer(capacity=n_batches)
    report = AdaptationReport()
    if ebn0_db <= policy.min_ebn0_db:
        # The SNR gate alone rules out every batch at this operating point;
        # skip collection entirely and leave the weights untouched.
        return report
    attempts = 0
    limit = max_attempts if max_attempts is not None else 4 * n_batches
    while not buffer.full and attempts < limit:
        attempts += 1
        inputs = make_batch(frames_per_batch)
        labels, fractions = recover_labels(receiver, inputs, codec)
        batch = LabeledBatch(inputs=inputs, labels=labels, ebn0_db=ebn0_db,
                             syndrome_fraction=float(fractions.mean()))
        if accept_batch(batch, policy):
            buffer.append(batch)
            report.batches_accepted += 1
        else:
            report.batches_rejected += 1
        report.simulated_time_s += collection_time_s(
            1, frames_per_batch, codec.geometry.n_symbols,
            codec.geometry.symbol_duration_s)
    if buffer.full:
        report.losses = retrain_step(receiver, buffer, state, config, codec)
        report.updates_applied = len(report.losses)
    return report
