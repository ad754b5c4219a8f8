"""OFDM frame geometry, pilots, 16-QAM mapping and the AWGN budget."""

import numpy as np
import pytest

from adaptrx.link import (FrameGeometry, apply_channel, build_pilot_pattern,
                          ebn0_to_sigma, hard_demap_frame,
                          ls_estimate_at_pilots, map_bits_to_frame,
                          qam16_bit_table, qam16_constellation)


def test_geometry_constants():
    geom = FrameGeometry()
    assert geom.n_symbols == 36
    assert geom.n_subcarriers == 64
    assert geom.grid_size == 2304
    assert geom.symbol_duration_s == 8e-6
    assert geom.subcarrier_spacing_hz == pytest.approx(10e6 / 64)


def test_pilot_pattern_layout():
    geom = FrameGeometry()
    pattern = build_pilot_pattern(geom)
    assert pattern.num_pilots == 39
    rows, cols = np.nonzero(pattern.mask)
    assert set(rows) == {0, 15, 30}
    assert set(cols) == set(range(0, 64, 5))
    # QPSK pilots at unit power
    vals = pattern.values[pattern.mask]
    np.testing.assert_allclose(np.abs(vals), 1.0, atol=1e-12)
    data = pattern.data_positions()
    assert data.shape == (2304 - 39, 2)
    # deterministic across constructions
    again = build_pilot_pattern(geom)
    np.testing.assert_array_equal(pattern.values, again.values)


def test_constellation_properties():
    points = qam16_constellation()
    bits = qam16_bit_table()
    assert points.shape == (16,)
    assert len(set(np.round(points, 12))) == 16
    # unit average energy
    assert abs(np.mean(np.abs(points) ** 2) - 1.0) < 1e-12
    # Gray property: nearest neighbours differ in exactly one bit
    for i in range(16):
        d = np.abs(points - points[i])
        d[i] = np.inf
        near = np.nonzero(np.abs(d - d.min()) < 1e-9)[0]
        for j in near:
            assert (bits[i] != bits[j]).sum() == 1


def test_map_demap_roundtrip(rng):
    geom = FrameGeometry()
    pattern = build_pilot_pattern(geom)
    n_bits = (geom.grid_size - pattern.num_pilots) * 4
    bits = rng.integers(0, 2, n_bits).astype(np.uint8)
    grid = map_bits_to_frame(bits, pattern, geom)
    assert grid.x.shape == (36, 64)
    assert grid.n_data == 2265
    # pilots in place
    np.testing.assert_array_equal(grid.x[pattern.mask],
                                  pattern.values[pattern.mask])
    demapped = hard_demap_frame(grid.x, np.ones_like(grid.x), grid.bit_map)
    np.testing.assert_array_equal(demapped, bits)


def test_unit_average_power_of_data_symbols(rng):
    geom = FrameGeometry()
    pattern = build_pilot_pattern(geom)
    n_bits = 2265 * 4
    bits = rng.integers(0, 2, (200, n_bits)).astype(np.uint8)
    power = 0.0
    for row in bits:
        x = map_bits_to_frame(row, pattern, geom).x
        power += np.mean(np.abs(x[~pattern.mask]) ** 2)
    assert abs(power / 200 - 1.0) < 0.01


def test_ebn0_to_sigma_closed_form():
    # sigma^2 = 1 / (m R 10^(x/10)) with m=4, R=1/2
    assert ebn0_to_sigma(0.0) == pytest.approx(np.sqrt(0.5))
    assert ebn0_to_sigma(10.0) == pytest.approx(np.sqrt(0.05))
    assert ebn0_to_sigma(30.0) == pytest.approx(np.sqrt(5e-4))


def test_apply_channel_noiseless_and_awgn_power(rng):
    x = rng.standard_normal((3, 6, 8)) + 1j * rng.standard_normal((3, 6, 8))
    h = rng.standard_normal((3, 6, 8)) + 1j * rng.standard_normal((3, 6, 8))
    y = apply_channel(x, h, 0.0, rng)
    np.testing.assert_allclose(y, h * x, atol=1e-15)
    big = np.ones((2000, 6, 8), dtype=complex)
    noise = apply_channel(big, big, 0.3, rng) - big
    assert abs(np.mean(np.abs(noise) ** 2) - 0.09) < 0.005


def test_ls_estimate_matches_channel_at_pilots(rng):
    geom = FrameGeometry()
    pattern = build_pilot_pattern(geom)
    bits = rng.integers(0, 2, 2265 * 4).astype(np.uint8)
    x = map_bits_to_frame(bits, pattern, geom).x
    h = rng.standard_normal((36, 64)) + 1j * rng.standard_normal((36, 64))
    y = h * x
    ls = ls_estimate_at_pilots(y[None], pattern)[0]
    np.testing.assert_allclose(ls[pattern.mask], h[pattern.mask], atol=1e-12)
