import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfloquet.driving import (
    DrivingConfig,
    OmegaPoint,
    advance,
    coefficient_path,
    fourier_field,
    orbit_coords,
    sample_omega,
)
from pfloquet.errors import ConfigurationError

times = st.fractions(min_value=-50, max_value=50, max_denominator=512)
coords = st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=2, max_size=2)
QUASI = (1.0, math.sqrt(2.0))


def test_advance_half_step():
    w = DrivingConfig().point([0.25])
    assert advance(w, 0.5).coords[0] == 0.75


def test_advance_zero_is_identity():
    w = DrivingConfig(alpha=QUASI).point([0.9, 0.1])
    assert advance(w, 0) == w


def test_advance_two_frequencies():
    w = DrivingConfig(alpha=QUASI).point([0.9, 0.1])
    out = advance(w, Fraction(1, 5)).coords
    assert out[0] == pytest.approx(0.1, abs=1e-15)
    assert out[1] == pytest.approx(0.38284271247461906, abs=1e-15)


def test_periodic_has_period_one():
    w = DrivingConfig(kind="periodic").point([0.37])
    assert advance(w, 1) == w
    assert advance(w, -7) == w


@given(coords, times, times)
def test_group_law_is_exact(c, s, t):
    w = DrivingConfig(alpha=QUASI).point(c)
    assert advance(advance(w, s), t) == advance(w, s + t)


@given(coords, times)
def test_advance_is_invertible(c, t):
    w = DrivingConfig(alpha=QUASI).point(c)
    assert advance(advance(w, t), -t) == w


@given(coords, st.lists(times, min_size=1, max_size=8))
def test_orbit_coords_match_advance_bitwise(c, ts):
    w = DrivingConfig(alpha=QUASI).point(c)
    batch = orbit_coords(w, ts)
    single = np.array([advance(w, t).coords for t in ts])
    assert np.array_equal(batch, single)


@given(coords, times)
def test_coordinates_stay_in_unit_interval(c, t):
    w = DrivingConfig(alpha=QUASI).point(c)
    x = advance(w, t).coords
    assert np.all((x >= 0) & (x < 1))


def test_sample_is_deterministic():
    cfg = DrivingConfig(alpha=QUASI)
    assert sample_omega(cfg, 42) == sample_omega(cfg, 42)
    assert sample_omega(cfg, 1) != sample_omega(cfg, 2)


def test_sample_mean_is_uniform():
    cfg = DrivingConfig(alpha=QUASI)
    pts = np.array([sample_omega(cfg, s).coords for s in range(10_000)])
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) <= 0.02)


def test_rationally_dependent_frequencies_rejected():
    with pytest.raises(ConfigurationError):
        DrivingConfig(alpha=(1.0, 0.5))
    with pytest.raises(ConfigurationError):
        DrivingConfig(alpha=(1.0, 2.0 / 3.0 + 1e-12))


def test_bad_configs_rejected():
    with pytest.raises(ConfigurationError):
        DrivingConfig(kind="periodic", alpha=QUASI)
    with pytest.raises(ConfigurationError):
        DrivingConfig(kind="brownian")
    with pytest.raises(ConfigurationError):
        DrivingConfig(kind="random-fourier", modes=0)
    with pytest.raises(ConfigurationError):
        OmegaPoint((Fraction(3, 2),), (Fraction(1),))


def test_from_coords_wraps_mod_one():
    assert OmegaPoint.from_coords([1.25], [1.0]).coords[0] == 0.25


def test_constant_path():
    cfg = DrivingConfig()
    path = coefficient_path(cfg, cfg.point([0.2]), lambda th: 3.0)
    assert path(0.7) == 3.0 and path(-4) == 3.0


def test_path_is_composition():
    cfg = DrivingConfig()
    w = cfg.point([0.2])
    path = coefficient_path(cfg, w, lambda th: np.sin(2 * np.pi * th[0]))
    for t in (Fraction(1, 3), Fraction(-5, 4), Fraction(7, 2)):
        assert path(t) == pytest.approx(math.sin(2 * math.pi * (0.2 + float(t))), abs=1e-12)


def test_path_rejects_foreign_point():
    with pytest.raises(ConfigurationError):
        coefficient_path(DrivingConfig(), DrivingConfig(alpha=(2.0,)).point([0.1]), lambda th: 1.0)


def test_random_fourier_path_reproducible():
    cfg = DrivingConfig(kind="random-fourier", alpha=QUASI, seed=7)
    w = sample_omega(cfg, 3)
    first = coefficient_path(cfg, w, fourier_field(cfg, 0))
    again = coefficient_path(cfg, w, fourier_field(DrivingConfig(kind="random-fourier", alpha=QUASI, seed=7), 0))
    for t in (Fraction(5, 2), Fraction(-5, 2)):
        assert first(t) == again(t)


@given(coords)
def test_fourier_field_bounded(c):
    cfg = DrivingConfig(kind="random-fourier", alpha=QUASI, seed=1)
    for index in range(4):
        assert abs(float(fourier_field(cfg, index)(np.array(c)))) <= 1.0 + 1e-12
