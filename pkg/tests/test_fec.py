"""Quasi-cyclic LDPC code, BP decoder and the frame interleaver."""

import numpy as np
import pytest

from adaptrx.fec import (BLOCK_SIZE, Interleaver, LdpcCode, expand_base_matrix,
                         gf2_rank, read_alist, write_alist)


@pytest.fixture(scope="module")
def code():
    return LdpcCode.default()


def test_code_dimensions(code):
    assert code.n == 1296
    assert code.k == 648
    assert code.h.shape == (648, 1296)
    assert BLOCK_SIZE == 54
    # full-rank parity check: exactly n - k independent constraints
    assert gf2_rank(code.h) == 648


def test_alist_roundtrip(tmp_path, code):
    path = tmp_path / "code.alist"
    write_alist(code.h, path)
    again = read_alist(path)
    np.testing.assert_array_equal(code.h, again)


def test_expand_base_matrix_blocks():
    h = expand_base_matrix(np.array([[1, -1], [0, 2]]), 3)
    assert h.shape == (6, 6)
    eye = np.eye(3, dtype=np.uint8)
    np.testing.assert_array_equal(h[:3, :3], np.roll(eye, -1, axis=0))
    np.testing.assert_array_equal(h[:3, 3:], 0)
    np.testing.assert_array_equal(h[3:, :3], eye)
    np.testing.assert_array_equal(h[3:, 3:], np.roll(eye, -2, axis=0))


def test_encode_satisfies_all_checks(code, rng):
    info = rng.integers(0, 2, (50, code.k)).astype(np.uint8)
    coded = code.encode(info)
    assert coded.shape == (50, code.n)
    # systematic part first
    np.testing.assert_array_equal(coded[:, :code.k], info)
    np.testing.assert_array_equal(code.syndrome(coded), 0)
    np.testing.assert_allclose(code.syndrome_fraction(coded), 1.0)


def test_decode_clean_llrs_is_exact(code, rng):
    info = rng.integers(0, 2, (8, code.k)).astype(np.uint8)
    coded = code.encode(info)
    llr = 20.0 * (1.0 - 2.0 * coded.astype(float))  # log(P0/P1) signs
    result, _ = code.bp_decode(llr, max_iters=20, allow_early_exit=True)
    np.testing.assert_array_equal(result.hard_coded, coded)
    np.testing.assert_array_equal(result.hard_info, info)
    np.testing.assert_allclose(result.syndrome_satisfied, 1.0)
    # early exit: valid input needs no iteration beyond the first check
    assert result.iterations_run <= 1


def test_decode_corrects_moderate_noise(code, rng):
    """BPSK over AWGN at an operating point inside the waterfall."""
    info = rng.integers(0, 2, (12, code.k)).astype(np.uint8)
    coded = code.encode(info)
    snr_db = 2.0
    sigma = np.sqrt(0.5 / 10 ** (snr_db / 10))
    tx = 1.0 - 2.0 * coded.astype(float)
    noisy = tx + sigma * rng.standard_normal(tx.shape)
    llr = 2.0 * noisy / sigma ** 2
    result, _ = code.bp_decode(llr, max_iters=40)
    np.testing.assert_array_equal(result.hard_info, info)


def test_segmented_decode_equals_continuous(code, rng):
    """Four 5-iteration BP segments with carried state match 20 straight
    iterations — the receiver's outer loop relies on this."""
    info = rng.integers(0, 2, (4, code.k)).astype(np.uint8)
    coded = code.encode(info)
    sigma = 0.9
    tx = 1.0 - 2.0 * coded.astype(float)
    llr = 2.0 * (tx + sigma * rng.standard_normal(tx.shape)) / sigma ** 2

    straight, _ = code.bp_decode(llr, max_iters=20, allow_early_exit=False)
    state = None
    for _ in range(4):
        seg, state = code.bp_decode(llr, max_iters=5, state=state,
                                    allow_early_exit=False)
    np.testing.assert_allclose(seg.llr_posterior, straight.llr_posterior,
                               rtol=1e-10, atol=1e-10)


def test_extrinsic_is_posterior_minus_clipped_input(code, rng):
    llr = rng.normal(0.0, 30.0, (2, code.n))
    result, _ = code.bp_decode(llr, max_iters=3, allow_early_exit=False)
    clipped = np.clip(llr, -20.0, 20.0)
    np.testing.assert_allclose(result.llr_extrinsic,
                               result.llr_posterior - clipped,
                               atol=1e-12)


def test_priors_added_to_channel_llrs(code, rng):
    llr = rng.normal(0.0, 2.0, (2, code.n))
    priors = rng.normal(0.0, 2.0, (2, code.n))
    a, _ = code.bp_decode(llr + priors, max_iters=2, allow_early_exit=False)
    b, _ = code.bp_decode(llr, max_iters=2, priors=priors,
                          allow_early_exit=False)
    np.testing.assert_allclose(a.llr_posterior, b.llr_posterior, atol=1e-12)


def test_syndrome_fraction_counts_unsatisfied_rows(code):
    coded = code.encode(np.zeros((1, code.k), dtype=np.uint8))[0]
    assert code.syndrome_fraction(coded) == 1.0
    flipped = coded.copy()
    flipped[0] ^= 1
    frac = code.syndrome_fraction(flipped)
    assert frac < 1.0
    # flipping one variable unsatisfies exactly its column weight
    col_weight = int(code.h[:, 0].sum())
    assert frac == pytest.approx(1.0 - col_weight / code.h.shape[0])


def test_interleaver_roundtrip_and_identity(rng):
    perm = Interleaver(length=257, seed=9)
    x = rng.standard_normal((3, 257))
    np.testing.assert_array_equal(perm.deinterleave(perm.interleave(x)), x)
    np.testing.assert_array_equal(perm.interleave(perm.deinterleave(x)), x)
    assert not np.array_equal(perm.interleave(x), x)
    ident = Interleaver.identity(64)
    y = rng.standard_normal(64)
    np.testing.assert_array_equal(ident.interleave(y), y)


def test_interleaver_deterministic():
    a = Interleaver(length=100, seed=4)
    b = Interleaver(length=100, seed=4)
    x = np.arange(100.0)
    np.testing.assert_array_equal(a.interleave(x), b.interleave(x))
