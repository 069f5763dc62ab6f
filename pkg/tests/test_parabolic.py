import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfloquet import parabolic
from pfloquet.driving import DrivingConfig, advance
from pfloquet.errors import ConfigurationError, ContractError, DomainError, EllipticityError
from pfloquet.parabolic import GridFunction, ParabolicCoefficients

W0 = DrivingConfig().point([0.3])
N = 24


def heat(boundary="dirichlet", **kw):
    return ParabolicCoefficients(diffusion=1.0, boundary=boundary, autonomous=True, **kw)


@pytest.fixture(scope="module")
def moving(preset_setup):
    """Coefficients, driving point and step count of the quasi-periodic preset."""
    cfg, omega, prop = preset_setup("quasiperiodic-parabolic")
    return prop.coeffs, omega, prop.per_unit


vectors = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).random(N))
base_times = st.integers(0, 2 * N).map(lambda k: Fraction(k, N))


# assembly


def test_heat_stencil_quarter_spacing():
    op = parabolic.assemble(heat(), W0, 0, 3)
    assert op.h == 0.25
    np.testing.assert_array_equal(op.diag, [-32.0, -32.0, -32.0])
    np.testing.assert_array_equal(op.lower[1:], [16.0, 16.0])
    np.testing.assert_array_equal(op.upper[:-1], [16.0, 16.0])


def test_constant_zero_order_shifts_by_identity():
    base = ParabolicCoefficients(diffusion=lambda th, x: 1 + 0.5 * x, drift=0.3, advection=-0.2, autonomous=True)
    a = parabolic.assemble(base, W0, 0, 10).matrix()
    b = parabolic.assemble(base.shifted(2.5), W0, 0, 10).matrix()
    np.testing.assert_array_equal(b - a, 2.5 * np.eye(10))


def test_neumann_rows_sum_to_zero():
    op = parabolic.assemble(heat("neumann"), W0, 0, 12)
    np.testing.assert_allclose(op.row_sums(), 0.0, atol=1e-12)


def test_pure_diffusion_is_symmetric():
    coeffs = ParabolicCoefficients(diffusion=lambda th, x: 1 + x**2, boundary="robin", robin_left=1.0, robin_right=2.0)
    mat = parabolic.assemble(coeffs, W0, 0, 15).matrix()
    np.testing.assert_allclose(mat, mat.T, atol=1e-12)


def test_ellipticity_violation():
    coeffs = ParabolicCoefficients(diffusion=lambda th, x: x - 0.5)
    with pytest.raises(EllipticityError):
        parabolic.assemble(coeffs, W0, 0, 10)


def test_negative_robin_rejected():
    with pytest.raises(ConfigurationError):
        ParabolicCoefficients(boundary="robin", robin_left=-1.0)
    with pytest.raises(ConfigurationError):
        ParabolicCoefficients(boundary="dirichlet", robin_left=1.0)


def test_grid_function_reference_has_unit_norm():
    for boundary in ("dirichlet", "neumann", "robin"):
        e = GridFunction.reference(20, boundary)
        assert e.norm() == pytest.approx(1.0, abs=1e-14)
        assert e.in_cone()


# propagation


def test_zero_stays_zero(moving):
    coeffs, omega, per_unit = moving
    assert np.all(parabolic.propagate(coeffs, omega, 2, np.zeros(N), per_unit) == 0)


def test_heat_eigenvector_decays_at_crank_nicolson_rate():
    n = 9
    h = 1.0 / (n + 1)
    lam = -(4 / h**2) * math.sin(math.pi * h / 2) ** 2
    # dt = h = 0.1 and the diagonal is -200, so dt/2 * 200 <= 1 first holds after 2**4 substeps.
    dt = h / 2**4
    factor = ((1 + dt / 2 * lam) / (1 - dt / 2 * lam)) ** 2**4
    phi = GridFunction.from_function(lambda x: np.sin(np.pi * x), n)
    out = parabolic.propagate(heat(), W0, h, phi)
    np.testing.assert_allclose(out.values, factor * phi.values, rtol=1e-12, atol=0)


def test_gauge_shift_multiplies_by_exponential(moving):
    coeffs, omega, per_unit = moving
    u = np.random.default_rng(0).random(N)
    a = parabolic.propagate(coeffs, omega, 2, u, per_unit)
    b = parabolic.propagate(coeffs.shifted(0.7), omega, 2, u, per_unit)
    np.testing.assert_allclose(b, math.exp(1.4) * a, rtol=1e-12)


def test_negative_and_misaligned_times(moving):
    coeffs, omega, per_unit = moving
    with pytest.raises(DomainError):
        parabolic.propagate(coeffs, omega, -1, np.ones(N), per_unit)
    with pytest.raises(DomainError):
        parabolic.propagate(coeffs, omega, Fraction(1, 7 * N), np.ones(N), per_unit)


def test_boundary_mismatch():
    with pytest.raises(ContractError):
        parabolic.propagate(heat(), W0, 1, GridFunction.reference(10, "neumann"))


# property suites


@given(vectors, base_times)
def test_positivity(moving, u, t):
    coeffs, omega, per_unit = moving
    out = parabolic.propagate(coeffs, omega, t, u, per_unit)
    assert out.min() >= -1e-12 * np.linalg.norm(u)


@given(vectors, vectors, base_times)
def test_monotonicity(moving, u, extra, t):
    coeffs, omega, per_unit = moving
    lo = parabolic.propagate(coeffs, omega, t, u, per_unit)
    hi = parabolic.propagate(coeffs, omega, t, u + extra, per_unit)
    assert np.all(hi - lo >= -1e-10)


@given(vectors, vectors, st.floats(-3, 3), st.floats(-3, 3), base_times)
def test_linearity(moving, u, v, alpha, beta, t):
    coeffs, omega, per_unit = moving
    left = parabolic.propagate(coeffs, omega, t, alpha * u + beta * v, per_unit)
    right = alpha * parabolic.propagate(coeffs, omega, t, u, per_unit) + beta * parabolic.propagate(
        coeffs, omega, t, v, per_unit
    )
    assert np.abs(left - right).max() <= 1e-13 * (abs(alpha) + abs(beta) + 1) * max(1.0, np.abs(right).max())


@given(vectors, base_times, base_times)
def test_cocycle_identity_bitwise(moving, u, s, t):
    coeffs, omega, per_unit = moving
    whole = parabolic.propagate(coeffs, omega, s + t, u, per_unit)
    split = parabolic.propagate(coeffs, advance(omega, s), t, parabolic.propagate(coeffs, omega, s, u, per_unit), per_unit)
    assert np.array_equal(whole, split)


@given(vectors)
def test_time_zero_is_identity(moving, u):
    coeffs, omega, per_unit = moving
    assert np.array_equal(parabolic.propagate(coeffs, omega, 0, u, per_unit), u)
    assert np.array_equal(parabolic.propagate_adjoint(coeffs, omega, 0, u, per_unit), u)


@given(vectors, vectors, base_times)
def test_duality(moving, u, v, t):
    coeffs, omega, per_unit = moving
    h = 1.0 / N
    left = parabolic.inner_h(parabolic.propagate(coeffs, advance(omega, -t), t, u, per_unit), v, h)
    right = parabolic.inner_h(u, parabolic.propagate_adjoint(coeffs, omega, t, v, per_unit), h)
    assert abs(left - right) <= 1e-12 * parabolic.norm_h(u, h) * parabolic.norm_h(v, h)


# adjoint


def test_adjoint_of_symmetric_problem_runs_backward():
    coeffs = ParabolicCoefficients(
        diffusion=lambda th, x: 1 + 0.5 * np.cos(2 * np.pi * th[:, :1]) * np.ones_like(x),
        zero_order=lambda th, x: np.sin(2 * np.pi * th[:, :1]) * np.ones_like(x),
        boundary="neumann",
    )
    v = np.random.default_rng(1).random(16)
    a = parabolic.propagate_adjoint(coeffs, W0, 1, v)
    b = parabolic.propagate_adjoint_stencil(coeffs, W0, 1, v)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_independent_adjoint_stencil_agrees(moving):
    coeffs, omega, per_unit = moving
    v = np.random.default_rng(2).random(N)
    a = parabolic.propagate_adjoint(coeffs, omega, 1, v, per_unit)
    b = parabolic.propagate_adjoint_stencil(coeffs, omega, 1, v, per_unit)
    assert np.abs(a - b).max() <= 1e-3 * np.abs(a).max()


def test_autonomous_symmetric_adjoint_equals_forward():
    v = np.random.default_rng(3).random(20)
    np.testing.assert_allclose(parabolic.propagate_adjoint(heat(), W0, 1, v), parabolic.propagate(heat(), W0, 1, v), rtol=1e-13)


# zero-order-free problem


def test_zero_order_free_matches_when_c0_vanishes(moving):
    coeffs, omega, per_unit = moving
    free = coeffs.without_zero_order()
    u = np.random.default_rng(4).random(N)
    assert np.array_equal(
        parabolic.propagate_zero_order_free(coeffs, omega, 1, u, per_unit), parabolic.propagate(free, omega, 1, u, per_unit)
    )


def test_neumann_diffusion_preserves_constants():
    out = parabolic.propagate_zero_order_free(heat("neumann", zero_order=3.0), W0, 5, np.ones(20))
    np.testing.assert_allclose(out, 1.0, atol=1e-12)


def test_zero_order_free_growth_is_log_linear(moving):
    coeffs, omega, per_unit = moving
    report = parabolic.zero_order_free_growth(coeffs, omega, N, [1, 2, 3, 4, 5], per_unit)
    assert math.isfinite(report.sup_norm)
    ts, logs = np.array(report.times), np.array(report.log_norms)
    assert np.all(logs <= report.gamma * ts + report.offset + 1e-12)


# comparison, sandwich and Harnack


def test_comparison_equal_problems(moving):
    coeffs, omega, per_unit = moving
    assert parabolic.check_comparison(coeffs, coeffs, omega, 1, np.ones(N), per_unit).margin >= -1e-12


def test_comparison_shift_by_one(moving):
    coeffs, omega, per_unit = moving
    res = parabolic.check_comparison(coeffs, coeffs.shifted(1.0), omega, 1, np.random.default_rng(5).random(N), per_unit)
    assert res.margin > 0 and res.passed


def test_comparison_preconditions(moving):
    coeffs, omega, per_unit = moving
    with pytest.raises(ContractError):
        parabolic.check_comparison(coeffs.shifted(1.0), coeffs, omega, 1, np.ones(N), per_unit)
    with pytest.raises(ContractError):
        parabolic.check_comparison(heat("robin"), coeffs, omega, 1, np.ones(N), per_unit)
    with pytest.raises(ContractError):
        parabolic.check_comparison(coeffs, coeffs, omega, 1, -np.ones(N), per_unit)


def test_sandwich_equality_for_space_independent_c0():
    coeffs = ParabolicCoefficients(
        diffusion=lambda th, x: 1 + 0.3 * np.cos(2 * np.pi * (th[:, :1] + x)),
        drift=0.2,
        zero_order=lambda th, x: np.cos(2 * np.pi * th[:, :1]) * np.ones_like(x),
        boundary="robin",
        robin_left=1.0,
    )
    res = parabolic.check_sandwich(coeffs, W0, 1, np.random.default_rng(6).random(N))
    assert res.passed
    assert res.equality_gap <= 1e-12


def test_sandwich_holds_for_moving_c0(moving):
    coeffs, omega, per_unit = moving
    assert parabolic.check_sandwich(coeffs, omega, 2, np.random.default_rng(7).random(N), per_unit).passed


def test_harnack_reference_is_one(moving):
    coeffs, omega, per_unit = moving
    assert parabolic.harnack_quotient(coeffs, omega, GridFunction.reference(N, "robin"), 1, per_unit) == pytest.approx(1.0, abs=1e-14)


def test_harnack_point_masses_stable():
    n = 39
    values = []
    for node in (5, 12, 19, 26, 33):
        u0 = np.zeros(n)
        u0[node] = 1.0
        values.append(parabolic.harnack_quotient(heat(), W0, u0))
    assert all(math.isfinite(v) for v in values)
    assert max(values) / min(values) <= 2.0


def test_harnack_random_samples_bounded(moving):
    coeffs, omega, per_unit = moving
    rng = np.random.default_rng(8)
    worst = max(parabolic.harnack_quotient(coeffs, omega, rng.random(N), 1, per_unit) for _ in range(50))
    assert 1.0 <= worst < 10.0


def test_harnack_rejects_zero(moving):
    coeffs, omega, per_unit = moving
    with pytest.raises(ContractError):
        parabolic.harnack_quotient(coeffs, omega, np.zeros(N), 1, per_unit)
