"""Hexagonal coverage geometry and power-response tests."""
from __future__ import annotations

import math

import numpy as np
import pytest

from icisim.coverage import (
    BaseStation,
    Hexagon,
    build_coverage,
    clip_segment_to_hex,
    coverage_fraction,
    coverage_from_lengths,
    hex_tiling,
)
from icisim.errors import OverlapError
from icisim.traffic import make_street

from oracles import clip_length_sequential

SQ3 = math.sqrt(3.0)


def _station(sid: int, center, radius=1.0) -> BaseStation:
    return BaseStation(sid, center, radius, 100.0, 200.0)


# ---------------------------------------------------------------------------
# Tiling


def test_tiny_area_keeps_a_handful_of_cells():
    centers = hex_tiling(((0.0, 0.0), (0.5, 0.5)), 1.0)
    assert 1 <= len(centers) <= 3
    # One returned center must be the nearest cell to the area center.
    target = min(centers, key=lambda c: (c[0] - 0.25) ** 2 + (c[1] - 0.25) ** 2)
    assert math.hypot(target[0] - 0.25, target[1] - 0.25) <= 1.0


def test_tiling_covers_every_sample_point_once():
    bounds = ((0.0, 0.0), (10.0, 10.0))
    centers = hex_tiling(bounds, 1.0)
    arr = np.array(centers)
    xs = np.linspace(0.0, 10.0, 100)
    for x in xs:
        d2 = (arr[:, 0] - x) ** 2
        for y in xs:
            nearest = int(np.argmin(d2 + (arr[:, 1] - y) ** 2))
            assert Hexagon(centers[nearest], 1.0).contains((x, y), tol=1e-9)


def test_doubling_radius_shrinks_center_count_about_fourfold():
    bounds = ((0.0, 0.0), (10.0, 10.0))
    small = len(hex_tiling(bounds, 0.5))
    large = len(hex_tiling(bounds, 1.0))
    ring = 2.0 * (10.0 + 10.0) / (SQ3 * 1.0) + 8  # generous one-ring estimate
    assert abs(large - small / 4.0) <= ring


def test_tiling_validates_inputs():
    with pytest.raises(ValueError):
        hex_tiling(((0.0, 0.0), (1.0, 1.0)), 0.0)
    with pytest.raises(ValueError):
        hex_tiling(((1.0, 0.0), (0.0, 1.0)), 1.0)


# ---------------------------------------------------------------------------
# Clipping


def test_clip_segment_fully_inside():
    hexagon = Hexagon((0.0, 0.0), 1.0)
    seg = ((-0.3, 0.0), (0.4, 0.1))
    assert clip_segment_to_hex(seg, hexagon) == pytest.approx(math.hypot(0.7, 0.1), abs=1e-15)


def test_clip_segment_fully_outside():
    hexagon = Hexagon((0.0, 0.0), 1.0)
    assert clip_segment_to_hex(((5.0, 5.0), (6.0, 5.0)), hexagon) == 0.0


def test_clip_crossing_edge_matches_sequential_oracle():
    hexagon = Hexagon((0.0, 0.0), 1.0)
    # Unit segment leaving through the upper-right edge at a known angle.
    seg = ((0.2, 0.3), (0.2 + math.cos(0.7), 0.3 + math.sin(0.7)))
    ours = clip_segment_to_hex(seg, hexagon)
    assert ours == pytest.approx(clip_length_sequential(seg, hexagon), abs=1e-12)
    assert 0.0 < ours < 1.0


def test_clip_random_segments_match_oracle_and_never_exceed_length():
    rng = np.random.default_rng(3)
    hexagon = Hexagon((0.5, -0.25), 0.8)
    for _ in range(200):
        p0 = tuple(rng.uniform(-2.0, 2.0, 2))
        p1 = tuple(rng.uniform(-2.0, 2.0, 2))
        ours = clip_segment_to_hex((p0, p1), hexagon)
        assert ours == pytest.approx(clip_length_sequential((p0, p1), hexagon), abs=1e-12)
        assert ours <= math.hypot(p1[0] - p0[0], p1[1] - p0[1]) + 1e-12


# ---------------------------------------------------------------------------
# Coverage maps


def test_street_inside_single_cell_is_a_unit_row():
    stations = [_station(0, (0.0, 0.0)), _station(1, (0.0, SQ3))]
    street = make_street(0, 0, 1, ((-0.4, 0.0), (0.4, 0.0)))
    cov = build_coverage([street], stations)
    assert np.allclose(cov.C[0], [1.0, 0.0])


def test_street_split_evenly_on_shared_edge():
    # Vertical neighbours share the horizontal edge y = sqrt(3)/2; a street
    # crossing it symmetrically is covered half and half.
    stations = [_station(0, (0.0, 0.0)), _station(1, (0.0, SQ3))]
    street = make_street(0, 0, 1, ((0.0, SQ3 / 2 - 0.3), (0.0, SQ3 / 2 + 0.3)))
    cov = build_coverage([street], stations)
    assert np.allclose(cov.C[0], [0.5, 0.5])


def test_no_stations_gives_zero_map():
    street = make_street(0, 0, 1, ((0.0, 0.0), (1.0, 0.0)))
    cov = build_coverage([street], [])
    assert cov.C.shape == (1, 0)
    assert cov.covered_lengths.sum() == 0.0


def test_overlapping_cells_raise():
    stations = [_station(0, (0.0, 0.0)), _station(1, (0.05, 0.0))]
    street = make_street(0, 0, 1, ((-0.4, 0.0), (0.4, 0.0)))
    with pytest.raises(OverlapError):
        build_coverage([street], stations)


def test_partition_of_streets_inside_tiling(grid3_scenario):
    cov = grid3_scenario.coverage
    lengths = np.array([s.length for s in grid3_scenario.network.streets])
    assert np.allclose(cov.covered_lengths.sum(axis=1), lengths, rtol=1e-6)
    assert np.all(cov.C.sum(axis=1) <= 1.0 + 1e-9)


def test_directed_pair_shares_geometry_coverage(grid3_scenario):
    cov = grid3_scenario.coverage
    for e in range(grid3_scenario.network.n // 2):
        assert np.array_equal(cov.covered_lengths[2 * e], cov.covered_lengths[2 * e + 1])


def test_coverage_from_lengths_validates_totals():
    street = make_street(0, 0, 1, ((0.0, 0.0), (1.0, 0.0)))
    with pytest.raises(OverlapError):
        coverage_from_lengths([street], np.array([[0.8, 0.8]]))
    cov = coverage_from_lengths([street], np.array([[0.25, 0.5]]))
    assert np.allclose(cov.C[0], [0.25, 0.5])


# ---------------------------------------------------------------------------
# Power response


def test_fraction_at_full_power():
    assert coverage_fraction(_station(0, (0.0, 0.0)), 200.0) == 1.0


def test_fraction_at_activation_threshold():
    assert coverage_fraction(_station(0, (0.0, 0.0)), 100.0) == 0.0


def test_fraction_linear_midpoint():
    assert coverage_fraction(_station(0, (0.0, 0.0)), 150.0) == 0.5


def test_fraction_is_clamped_monotone_piecewise():
    bs = _station(0, (0.0, 0.0))
    powers = np.linspace(0.0, 300.0, 61)
    values = [coverage_fraction(bs, p) for p in powers]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert all(v == 0.0 for p, v in zip(powers, values) if p <= 100.0)
    assert all(v == 1.0 for p, v in zip(powers, values) if p >= 200.0)
    mid = (powers >= 100.0) & (powers <= 200.0)
    assert np.allclose(np.array(values)[mid], (powers[mid] - 100.0) / 100.0)


def test_station_parameter_validation():
    with pytest.raises(ValueError):
        BaseStation(0, (0.0, 0.0), 1.0, 200.0, 100.0)
    with pytest.raises(ValueError):
        BaseStation(0, (0.0, 0.0), -1.0, 100.0, 200.0)
    with pytest.raises(ValueError):
        coverage_fraction(_station(0, (0.0, 0.0)), -5.0)
