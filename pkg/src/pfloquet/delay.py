"""Cooperative linear delay systems ``u' = A(theta_t w) u(t) + B(theta_t w) u(t - 1)``.

The state is a segment of the solution on a window of length one, sampled on
``m + 1`` equally spaced nodes.  Integration is by the method of steps with
classical Runge-Kutta and step ``1/m``, so the delayed argument of every
stage except the midpoint is a stored node.  Midpoint values of the delayed
term use the average of the two neighbouring nodes, i.e. the history is read
as its piecewise-linear interpolant.  That keeps every weight nonnegative,
which is what makes the discrete semiflow order preserving.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .driving import OmegaPoint, advance, as_fraction, orbit_coords
from .errors import ContractError, DomainError, NumericalError

VARIANTS = ("OA3", "OA4")

# Gauss-Legendre nodes on [0, 1] used by the integral-form residual.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True, eq=False)
class Segment:
    """Discretized element of C([-1, 0], R^N); node k holds u(-1 + k/m)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValueError("segment values must have shape (N, m + 1)")
        if values.shape[1] < 9:
            raise ValueError("segment grid size m must be at least 8")
        if not np.all(np.isfinite(values)):
            raise ValueError("segment values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, n_components: int, grid_size: int, value=1.0) -> "Segment":
        vals = np.empty((n_components, grid_size + 1))
        vals[:] = np.reshape(value, (-1, 1)) if np.ndim(value) else value
        return cls(vals)

    @classmethod
    def from_function(cls, func: Callable, n_components: int, grid_size: int) -> "Segment":
        """Sample ``func(tau) -> R^N`` on the nodes of [-1, 0]."""
        tau = np.linspace(-1.0, 0.0, grid_size + 1)
        vals = np.array([np.broadcast_to(func(t), (n_components,)) for t in tau]).T
        return cls(vals)

    @property
    def n_components(self) -> int:
        return self.values.shape[0]

    @property
    def grid_size(self) -> int:
        return self.values.shape[1] - 1

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(-1.0, 0.0, self.grid_size + 1)

    def norm(self) -> float:
        """Sup over nodes of the Euclidean norm."""
        return float(np.sqrt((self.values**2).sum(axis=0)).max())

    def l1_norm(self) -> float:
        """Sup over nodes of the l1 norm of the N components."""
        return float(np.abs(self.values).sum(axis=0).max())

    def in_cone(self) -> bool:
        return bool(np.all(self.values >= 0.0))

    def head(self) -> np.ndarray:
        """Value at tau = 0."""
        return self.values[:, -1].copy()


def _as_matrix_table(value, n: int) -> Callable:
    if callable(value):
        return value
    mat = np.array(value, dtype=float).reshape(n, n)

    def table(theta):
        theta = np.asarray(theta)
        return np.broadcast_to(mat, theta.shape[:-1] + (n, n))

    table.constant = mat
    return table


@dataclass(frozen=True, eq=False)
class DelayCoefficients:
    """Coefficient tables of a delay system.

    ``A`` and ``B`` map torus coordinates (last axis of length d) to N x N
    matrices (two trailing axes).  Constant matrices are accepted directly.
    """

    A: Callable
    B: Callable
    n_components: int
    autonomous: bool = field(default=False)

    @classmethod
    def constant(cls, A, B) -> "DelayCoefficients":
        A = np.atleast_2d(np.array(A, dtype=float))
        B = np.atleast_2d(np.array(B, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape != (n, n):
            raise ValueError("A and B must be square matrices of the same size")
        return cls(_as_matrix_table(A, n), _as_matrix_table(B, n), n, autonomous=True)

    def matrices(self, omega: OmegaPoint, times) -> tuple[np.ndarray, np.ndarray]:
        """A and B along the orbit, each of shape (len(times), N, N)."""
        n = self.n_components
        k = len(times)
        if self.autonomous:
            theta = omega.coords[None, :]
            a = np.broadcast_to(np.asarray(self.A(theta), dtype=float).reshape(1, n, n), (k, n, n))
            b = np.broadcast_to(np.asarray(self.B(theta), dtype=float).reshape(1, n, n), (k, n, n))
            return a, b
        theta = orbit_coords(omega, times)
        a = np.asarray(self.A(theta), dtype=float).reshape(k, n, n)
        b = np.asarray(self.B(theta), dtype=float).reshape(k, n, n)
        return a, b

    def matrices_at(self, omega: OmegaPoint, t: float):
        a, b = self.matrices(omega, [t])
        return a[0], b[0]


# ---------------------------------------------------------------------------
# integration


def _grid_steps(t, m: int) -> int:
    tf = as_fraction(t)
    if tf < 0:
        raise DomainError("the delay semiflow is forward only; t must be nonnegative")
    steps = tf * m
    if steps.denominator != 1:
        rounded = round(float(steps))
        if abs(float(steps) - rounded) > 1e-9 * max(1.0, abs(float(steps))):
            raise DomainError(f"t = {t} is not a multiple of the grid step 1/{m}")
        steps = Fraction(rounded)
    return int(steps)


def march(coeffs: DelayCoefficients, omega: OmegaPoint, steps: int, history: np.ndarray) -> np.ndarray:
    """Integrate ``steps`` grid steps from the history block.

    ``history`` has shape (N, m + 1, ncols).  Returns the full trajectory of
    shape (N, m + 1 + steps, ncols); columns are independent solutions.
    """
    n, width, ncols = history.shape
    m = width - 1
    traj = np.empty((n, width + steps, ncols))
    traj[:, :width] = history
    if steps == 0:
        return traj
    h = 1.0 / m
    times = [Fraction(j, 2 * m) for j in range(2 * steps + 1)]
    a, b = coeffs.matrices(omega, times)
    for k in range(steps):
        a0, am, a1 = a[2 * k], a[2 * k + 1], a[2 * k + 2]
        lag0 = traj[:, k]
        lag1 = traj[:, k + 1]
        f0 = b[2 * k] @ lag0
        fm = b[2 * k + 1] @ (0.5 * (lag0 + lag1))
        f1 = b[2 * k + 2] @ lag1
        y = traj[:, m + k]
        k1 = a0 @ y + f0
        k2 = am @ (y + 0.5 * h * k1) + fm
        k3 = am @ (y + 0.5 * h * k2) + fm
        k4 = a1 @ (y + h * k3) + f1
        traj[:, m + k + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return traj


def propagate(coeffs: DelayCoefficients, omega: OmegaPoint, t, u0: Segment) -> Segment:
    """Return the segment ``U_omega(t) u0``; ``t`` must be a multiple of ``1/m``."""
    if u0.n_components != coeffs.n_components:
        raise ContractError("segment and coefficients disagree on N")
    m = u0.grid_size
    steps = _grid_steps(t, m)
    traj = march(coeffs, omega, steps, u0.values[:, :, None])
    return Segment(traj[:, steps:steps + m + 1, 0])


def propagate_many(coeffs: DelayCoefficients, omega: OmegaPoint, t, block: np.ndarray) -> np.ndarray:
    """Propagate a stack of segment values of shape (N, m + 1, ncols)."""
    m = block.shape[1] - 1
    steps = _grid_steps(t, m)
    traj = march(coeffs, omega, steps, np.asarray(block, dtype=float))
    return traj[:, steps:steps + m + 1]


def verify_integral_form(coeffs: DelayCoefficients, omega: OmegaPoint, t, u0: Segment) -> float:
    """Residual of the variation-of-constants representation on the computed trajectory.

    The reference side is built independently: the fundamental matrix of
    ``v' = A v`` comes from an adaptive high-order ODE solve, and the
    history integral is evaluated by Gauss-Legendre quadrature on each grid
    cell with the history read as its piecewise-linear interpolant.  Returns
    the max-norm discrepancy over all nodes in (0, t].
    """
    m = u0.grid_size
    steps = _grid_steps(t, m)
    if steps < 1 or steps > m:
        raise DomainError("t must lie in (0, 1]")
    n = coeffs.n_components
    traj = march(coeffs, omega, steps, u0.values[:, :, None])[:, :, 0]
    h = 1.0 / m
    tend = steps * h

    def a_at(s):
        return coeffs.matrices(omega, [s])[0][0]

    if coeffs.autonomous:
        a_const = a_at(0.0)

        def fundamental(s):
            return expm(a_const * s)
    else:
        sol = solve_ivp(
            lambda s, y: (a_at(s) @ y.reshape(n, n)).ravel(),
            (0.0, tend),
            np.eye(n).ravel(),
            method="DOP853",
            rtol=1e-13,
            atol=1e-15,
            dense_output=True,
        )
        if not sol.success:
            raise NumericalError(sol.message)

        def fundamental(s):
            return sol.sol(s).reshape(n, n)

    hist = u0.values
    head = hist[:, -1]
    total = np.zeros(n)
    worst = 0.0
    for j in range(steps):
        for x, w in zip(_GL_X, _GL_W):
            s = (j + x) * h
            lagged = (1.0 - x) * hist[:, j] + x * hist[:, j + 1]
            _, b = coeffs.matrices(omega, [s])
            phi = fundamental(s)
            total += w * h * np.linalg.solve(phi, b[0] @ lagged)
        exact = fundamental((j + 1) * h) @ (head + total)
        worst = max(worst, float(np.abs(traj[:, m + j + 1] - exact).max()))
    return worst


# ---------------------------------------------------------------------------
# assumption checkers


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a sampled check; ``margin`` is the worst slack (negative on failure)."""

    name: str
    passed: bool
    margin: float
    witness: tuple | None = None


def _sample_times(horizon, per_unit: int) -> list[Fraction]:
    total = int(math.ceil(float(horizon) * per_unit))
    return [Fraction(j, per_unit) for j in range(total + 1)]


def check_cooperativity(coeffs: DelayCoefficients, omega: OmegaPoint, horizon=1.0, per_unit: int = 256) -> CheckResult:
    """Off-diagonal entries of A and all entries of B nonnegative on a grid of [0, horizon]."""
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    times = _sample_times(horizon, per_unit)
    a, b = coeffs.matrices(omega, times)
    n = coeffs.n_components
    off = ~np.eye(n, dtype=bool)
    a_off = np.where(off, a, np.inf)
    margin = float(min(a_off.min(), b.min())) if n > 1 else float(b.min())
    witness = None
    if margin < 0:
        for k, t in enumerate(times):
            bad_a = np.argwhere(a_off[k] < 0)
            if bad_a.size:
                i, j = bad_a[0]
                witness = ("A", int(i), int(j), float(t))
                break
            bad_b = np.argwhere(b[k] < 0)
            if bad_b.size:
                i, j = bad_b[0]
                witness = ("B", int(i), int(j), float(t))
                break
    return CheckResult("cooperativity", margin >= 0, margin, witness)


def _grid_extreme(values: np.ndarray, axis: int = 0, lower: bool = True) -> np.ndarray:
    """Grid min (or max) corrected by half the largest jump between neighbours."""
    if values.shape[axis] > 1:
        jump = np.abs(np.diff(values, axis=axis)).max(axis=axis) / 2.0
    else:
        jump = 0.0
    if lower:
        return values.min(axis=axis) - jump
    return values.max(axis=axis) + jump


@dataclass(frozen=True)
class IrreducibilityResult:
    passed: bool
    delta_lower: float
    chains: tuple[tuple[int, ...], ...]

    @property
    def margin(self) -> float:
        return self.delta_lower


def check_irreducibility(coeffs: DelayCoefficients, omega: OmegaPoint, per_unit: int = 256) -> IrreducibilityResult:
    """Search, for every start index, the transfer chain with the largest minimal weight.

    A chain ``j0 = i, j1, ..., j_{N-1}`` visits every component once; its
    weight is the minimum over the chain links and over t in [0, N + 2] of
    ``b[j_{l+1}, j_l]``.  Indices are zero based.  For N = 1 the only link is
    the self-transfer ``b[0, 0]``.
    """
    n = coeffs.n_components
    _, b = coeffs.matrices(omega, _sample_times(n + 2, per_unit))
    bmin = _grid_extreme(b, lower=True)
    if n == 1:
        d = float(bmin[0, 0])
        return IrreducibilityResult(d > 0, d, ((0,),))
    chains = []
    worst = math.inf
    for start in range(n):
        best, best_chain = -math.inf, None
        rest = [j for j in range(n) if j != start]
        for perm in itertools.permutations(rest):
            chain = (start,) + perm
            weight = min(bmin[chain[l + 1], chain[l]] for l in range(n - 1))
            if weight > best:
                best, best_chain = weight, chain
        chains.append(best_chain)
        worst = min(worst, best)
    return IrreducibilityResult(worst > 0, float(worst), tuple(chains))


def check_positivity_oa4(coeffs: DelayCoefficients, omega: OmegaPoint, per_unit: int = 256) -> CheckResult:
    """All entries of B bounded below by a positive constant on [0, 2]."""
    _, b = coeffs.matrices(omega, _sample_times(2, per_unit))
    delta = float(_grid_extreme(b, lower=True).min())
    return CheckResult("positivity", delta > 0, delta)


def check_nonsingular(coeffs: DelayCoefficients, omega: OmegaPoint, horizon=1.0, per_unit: int = 64) -> CheckResult:
    """Smallest |det B| on a grid; used for the backward-extension hypothesis."""
    _, b = coeffs.matrices(omega, _sample_times(horizon, per_unit))
    det = float(np.abs(np.linalg.det(b)).min())
    return CheckResult("nonsingular-B", det > 0, det)


@dataclass(frozen=True)
class AssumptionConstants:
    variant: str
    horizon: int
    a_lower_diag: tuple[float, ...]
    a_lower: float
    delta_lower: float
    delta_upper: float
    a_upper: float
    beta_lower: float
    beta_upper: float
    kappa: float

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "horizon": self.horizon,
            "a_lower_diag": list(self.a_lower_diag),
            "a_lower": self.a_lower,
            "delta_lower": self.delta_lower,
            "delta_upper": self.delta_upper,
            "a_upper": self.a_upper,
            "beta_lower": self.beta_lower,
            "beta_upper": self.beta_upper,
            "kappa": self.kappa,
        }


def _cumulative_trapezoid(values: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * dx * (values[1:] + values[:-1]), axis=0)
    return out


def compute_assumption_constants(
    coeffs: DelayCoefficients,
    omega: OmegaPoint,
    variant: str = "OA3",
    resolution: int = 64,
    refine: int = 8,
) -> AssumptionConstants:
    """Evaluate the explicit focusing constants along the orbit of ``omega``.

    The lower exponent of each diagonal entry is the smallest integral of
    ``a_ii`` over a sub-window ``[k + s, k + t]`` with ``0 <= s < t <= 1`` on a
    ``resolution`` grid, ``k = 0..N+1``, lowered by the quadrature error
    estimate and by the worst-case gap between grid windows.  Upper
    quantities are raised by the same kind of allowances, so the resulting
    sandwich is conservative.
    """
    if variant not in VARIANTS:
        raise ContractError(f"variant must be one of {VARIANTS}")
    n = coeffs.n_components
    if variant == "OA3":
        structural = check_irreducibility(coeffs, omega)
        delta_lower = structural.delta_lower
        horizon = n + 2
    else:
        structural = check_positivity_oa4(coeffs, omega)
        delta_lower = structural.margin
        horizon = 2
    if not structural.passed:
        raise ContractError(f"{variant} structural check failed (delta = {delta_lower:g})")

    fine = resolution * refine
    times = [Fraction(j, fine) for j in range((n + 2) * fine + 1)]
    a, b = coeffs.matrices(omega, times)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite coefficient values")

    diag = np.diagonal(a, axis1=1, axis2=2)  # (K, N)
    cum_fine = _cumulative_trapezoid(diag, 1.0 / fine)
    cum_coarse = _cumulative_trapezoid(diag[::2], 2.0 / fine)
    quad_err = np.abs(cum_fine[::2] - cum_coarse).max(axis=0) / 3.0
    nodes = cum_fine[::refine]  # values at multiples of 1/resolution
    a_lower_diag = []
    for i in range(n):
        best = 0.0
        for k in range(n + 2):
            window = nodes[k * resolution:(k + 1) * resolution + 1, i]
            diffs = window[None, :] - window[:, None]
            upper = np.triu(diffs, k=1)
            best = min(best, float(upper.min()))
        allowance = float(np.abs(diag[:, i]).max()) / resolution
        a_lower_diag.append(best - 2.0 * quad_err[i] - allowance)
    a_lower = min(math.exp(v) for v in a_lower_diag)

    stop = horizon * fine + 1
    row_max = a[:stop].max(axis=2).sum(axis=1)
    row_max = np.maximum(row_max, 0.0)
    integral = float(_cumulative_trapezoid(row_max, 1.0 / fine)[-1])
    integral_coarse = float(_cumulative_trapezoid(row_max[::2], 2.0 / fine)[-1])
    a_upper = math.exp(integral + abs(integral - integral_coarse) / 3.0)
    delta_upper = float(_grid_extreme(b[:stop], lower=False).max())

    if variant == "OA3":
        lows = []
        for k in range(1, n + 1):
            lows.append(a_lower ** (n + 2) * delta_lower**k / math.factorial(k))
            lows.append(a_lower ** (n + 3) * delta_lower**k / math.factorial(k))
        beta_lower = min(lows)
        growth = (1.0 + n * delta_upper) ** (n + 1)
        beta_upper = max(a_upper ** (n + 2) * growth, a_upper ** (n + 2) * n * delta_upper * growth)
    else:
        beta_lower = a_lower**2 * delta_lower
        growth = 1.0 + n * delta_upper
        beta_upper = max(a_upper**2 * growth, a_upper**2 * n * delta_upper * growth)
    kappa = beta_upper / beta_lower if beta_lower > 0 else math.inf
    return AssumptionConstants(
        variant=variant,
        horizon=horizon,
        a_lower_diag=tuple(a_lower_diag),
        a_lower=a_lower,
        delta_lower=delta_lower,
        delta_upper=delta_upper,
        a_upper=a_upper,
        beta_lower=beta_lower,
        beta_upper=beta_upper,
        kappa=kappa,
    )


@dataclass(frozen=True)
class FocusingReport:
    n_samples: int
    lower_margin: float
    upper_margin: float
    passed: bool
    unit_vector: np.ndarray
    tolerance: float


def focusing_factor(values: np.ndarray) -> np.ndarray:
    """``|u(0)|_1 + int_{-1}^{0} |u(s)|_1 ds`` (trapezoid) for a stack (N, m + 1, S)."""
    m = values.shape[1] - 1
    l1 = np.abs(values).sum(axis=0)
    integral = (l1[1:-1].sum(axis=0) + 0.5 * (l1[0] + l1[-1])) / m
    return l1[-1] + integral


def cone_samples(n_components: int, grid_size: int, n_samples: int, seed=0) -> np.ndarray:
    """Random cone segments, stacked as (N, m + 1, S).

    Uniform i.i.d. entries plus adversarial members: each component zeroed
    in turn, a history-only sample and a single-component history spike.
    """
    rng = np.random.default_rng(seed)
    n, m = n_components, grid_size
    block = rng.random((n, m + 1, n_samples))
    extra = []
    # With a single component, zeroing it would just repeat the zero segment.
    for i in range(n if n > 1 else 0):
        s = rng.random((n, m + 1))
        s[i] = 0.0
        extra.append(s)
    s = rng.random((n, m + 1))
    s[:, -1] = 0.0
    extra.append(s)
    s = np.zeros((n, m + 1))
    s[0, m // 3] = 1.0
    extra.append(s)
    count = min(len(extra), n_samples)
    if count:
        block[:, :, :count] = np.stack(extra[:count], axis=-1)
    return block


def verify_focusing(
    coeffs: DelayCoefficients,
    omega: OmegaPoint,
    constants: AssumptionConstants,
    n_samples: int = 100,
    grid_size: int = 100,
    seed=0,
    tolerance: float = 1e-9,
) -> FocusingReport:
    """Check the two-sided focusing sandwich at the variant's horizon.

    For each sample ``u0`` (plus ``u0 = 0``) the segment ``U(T*) u0`` must lie
    between ``beta_lower * F(u0) * e`` and ``beta_upper * F(u0) * e`` where
    ``F`` is :func:`focusing_factor` and ``e`` the all-ones vector.  Margins
    are the worst signed gaps.  For the pairwise-positive variant the lower
    bound only holds at the end of the window (at its left node a component
    has had no time to feel the others), so it is checked at the final node.
    """
    n = coeffs.n_components
    expected = n + 2 if constants.variant == "OA3" else 2
    if constants.horizon != expected:
        raise ContractError("constants were computed for a different variant or system size")
    block = cone_samples(n, grid_size, n_samples, seed)
    block = np.concatenate([block, np.zeros((n, grid_size + 1, 1))], axis=2)
    out = propagate_many(coeffs, omega, constants.horizon, block)
    factor = focusing_factor(block)
    lower_part = out[:, -1:, :] if constants.variant == "OA4" else out
    lower_gap = (lower_part - constants.beta_lower * factor).min(axis=(0, 1))
    upper_gap = (constants.beta_upper * factor - out).min(axis=(0, 1))
    # The zero sample must map to zero; margins are reported over the others.
    zero_ok = bool(np.all(out[:, :, -1] == 0))
    lower = float(lower_gap[:-1].min())
    upper = float(upper_gap[:-1].min())
    passed = zero_ok and lower >= -tolerance and upper >= -tolerance
    return FocusingReport(block.shape[2], lower, upper, passed, np.ones(n), tolerance)


def norm_growth_bound(coeffs: DelayCoefficients, omega: OmegaPoint, per_unit: int = 512) -> float:
    """Explicit bound on ``|U(t)|`` in the l1 segment norm for 0 <= t <= 1."""
    times = _sample_times(1, per_unit)
    a, b = coeffs.matrices(omega, times)
    row_a = a.max(axis=2).sum(axis=1)
    row_b = b.max(axis=2).sum(axis=1)
    ia = float(_cumulative_trapezoid(row_a, 1.0 / per_unit)[-1])
    ib = float(_cumulative_trapezoid(row_b, 1.0 / per_unit)[-1])
    return 2.0 * math.exp(ia) * (1.0 + ib)


def exponent_floor(coeffs: DelayCoefficients, omega: OmegaPoint, blocks: int = 10) -> float:
    """Lower bound for the top exponent from ``U(N+2) e >= 2 N beta_lower e``.

    Averages ``log(2 N beta_lower)`` over ``blocks`` consecutive windows of
    length N + 2 along the orbit and divides by the window length.
    """
    n = coeffs.n_components
    logs = []
    for j in range(blocks):
        c = compute_assumption_constants(coeffs, advance(omega, j * (n + 2)), "OA3")
        logs.append(math.log(2 * n * c.beta_lower))
    return float(np.mean(logs)) / (n + 2)
