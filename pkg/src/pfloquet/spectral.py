"""Growth rates, Floquet vectors and exponential separation for positive cocycles.

Everything here works through a :class:`ConePropagator`, which exposes the
time-one maps ``U_{theta_k omega}(1)`` of a delay or parabolic problem as
linear maps on flat state vectors.  Estimators iterate these maps with
renormalization and keep magnitudes as logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import delay, parabolic
from .driving import OmegaPoint, advance
from .errors import (
    ContractError,
    ConvergenceError,
    DegeneratePairingError,
    DomainError,
    UnsupportedOperation,
)

MINUS_INFINITY_FLOOR = -1e6
DEFAULT_TOLERANCE = 1e-10
DUAL_REFRESH = 10


def default_burn_in(horizon: int) -> int:
    return max(10, horizon // 10)


# ---------------------------------------------------------------------------
# propagators


class ConePropagator:
    """Time-one maps of a positive cocycle on flat state vectors.

    Subclasses provide ``dim``, ``horizon`` (the focusing time in units),
    :meth:`unit_step`, :meth:`unit_matrix`, :meth:`norm`, :meth:`pairing`,
    :meth:`reference` and :meth:`as_state`.  ``unit_step`` accepts a vector
    of shape (dim,) or a block of shape (dim, B).
    """

    dim: int
    horizon: int = 1
    supports_adjoint: bool = False

    def unit_step(self, omega: OmegaPoint, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def unit_matrix(self, omega: OmegaPoint) -> np.ndarray:
        return self.unit_step(omega, np.eye(self.dim))

    def adjoint_unit_step(self, omega: OmegaPoint, v: np.ndarray) -> np.ndarray:
        """``U_omega(1)^T v``, the dual map from the fibre over ``theta_1 omega`` back to ``omega``."""
        raise UnsupportedOperation(f"{type(self).__name__} has no adjoint")

    def norm(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def column_norms(self, block: np.ndarray) -> np.ndarray:
        return np.array([self.norm(block[:, j]) for j in range(block.shape[1])])

    def pairing(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u, v))

    def in_cone(self, u: np.ndarray) -> bool:
        return bool(np.all(np.asarray(u) >= 0))

    def reference(self) -> np.ndarray:
        raise NotImplementedError

    def dual_reference(self) -> np.ndarray:
        return self.reference()

    def operator_norm(self, matrix: np.ndarray) -> float:
        raise NotImplementedError

    def as_state(self, u: np.ndarray):
        return np.asarray(u)

    def as_vector(self, state) -> np.ndarray:
        return np.asarray(getattr(state, "values", state), dtype=float).reshape(-1)


class DelayPropagator(ConePropagator):
    """Time-one maps of a cooperative delay system on segments with ``m + 1`` nodes.

    A state vector is the segment array of shape (N, m + 1) flattened row by
    row; its norm is the largest Euclidean norm over nodes.
    """

    supports_adjoint = False

    def __init__(self, coeffs: delay.DelayCoefficients, grid_size: int = 200):
        self.coeffs = coeffs
        self.grid_size = grid_size
        self.n_components = coeffs.n_components
        self.dim = coeffs.n_components * (grid_size + 1)
        self.horizon = coeffs.n_components + 2

    def _segments(self, u: np.ndarray) -> tuple[np.ndarray, bool]:
        u = np.asarray(u, dtype=float)
        squeeze = u.ndim == 1
        block = u.reshape(self.n_components, self.grid_size + 1, -1)
        return block, squeeze

    def unit_step(self, omega, u):
        block, squeeze = self._segments(u)
        out = delay.propagate_many(self.coeffs, omega, 1, block).reshape(self.dim, -1)
        return out[:, 0] if squeeze else out

    def norm(self, u):
        seg = np.asarray(u, dtype=float).reshape(self.n_components, self.grid_size + 1)
        return float(np.sqrt((seg * seg).sum(axis=0)).max())

    def column_norms(self, block):
        seg = np.asarray(block, dtype=float).reshape(self.n_components, self.grid_size + 1, -1)
        return np.sqrt((seg * seg).sum(axis=0)).max(axis=0)

    def reference(self):
        return np.full(self.dim, 1.0 / math.sqrt(self.n_components))

    def operator_norm(self, matrix):
        # For a positive map the sup-type segment norm is attained on the
        # constant segment, up to the factor sqrt(N) between node norms.
        ones = np.ones(self.dim)
        return self.norm(matrix @ ones) / self.norm(ones)

    def as_state(self, u):
        return delay.Segment(np.asarray(u, dtype=float).reshape(self.n_components, self.grid_size + 1))


class ParabolicPropagator(ConePropagator):
    """Time-one maps of a parabolic problem on ``n`` grid nodes.

    Unit matrices are cached by driving point (a single matrix when the
    coefficients are autonomous).  Norm and pairing are the discrete L2 ones.
    """

    supports_adjoint = True
    horizon = 1

    def __init__(self, coeffs: parabolic.ParabolicCoefficients, n: int, per_unit: int | None = None):
        self.coeffs = coeffs
        self.n = n
        self.dim = n
        self.h = parabolic.grid_spacing(n, coeffs.boundary)
        self.per_unit = per_unit or parabolic.default_steps_per_unit(n, coeffs.boundary)
        self._cache: dict = {}

    def unit_matrix(self, omega):
        key = None if self.coeffs.autonomous else omega
        mat = self._cache.get(key)
        if mat is None:
            mat = parabolic.unit_matrix(self.coeffs, omega, self.n, self.per_unit)
            mat.flags.writeable = False
            self._cache[key] = mat
        return mat

    def unit_step(self, omega, u):
        return self.unit_matrix(omega) @ u

    def adjoint_unit_step(self, omega, v):
        return self.unit_matrix(omega).T @ v

    def norm(self, u):
        return parabolic.norm_h(np.asarray(u, dtype=float), self.h)

    def column_norms(self, block):
        return math.sqrt(self.h) * np.linalg.norm(block, axis=0)

    def pairing(self, u, v):
        return parabolic.inner_h(u, v, self.h)

    def reference(self):
        return parabolic.GridFunction.reference(self.n, self.coeffs.boundary).values.copy()

    def operator_norm(self, matrix):
        return parabolic.operator_norm(matrix)

    def as_state(self, u):
        return parabolic.GridFunction(u, self.coeffs.boundary)


# ---------------------------------------------------------------------------
# Hilbert projective metric


def hilbert_metric(u, v) -> float:
    """Hilbert projective distance ``ln(max(u/v) * max(v/u))`` between cone vectors.

    Nodes where both vectors vanish are ignored; the distance is infinite
    when one vector is positive where the other is zero, or when either has a
    negative entry.
    """
    u = np.asarray(getattr(u, "values", u), dtype=float).reshape(-1)
    v = np.asarray(getattr(v, "values", v), dtype=float).reshape(-1)
    if u.shape != v.shape:
        raise ContractError("vectors differ in length")
    if np.any(u < 0) or np.any(v < 0):
        return math.inf
    support = (u > 0) | (v > 0)
    if not support.any():
        return 0.0
    us, vs = u[support], v[support]
    if np.any(us == 0) or np.any(vs == 0):
        return math.inf
    r = us / vs
    return max(0.0, float(math.log(r.max()) - math.log(r.min())))


# ---------------------------------------------------------------------------
# top exponent


@dataclass(frozen=True)
class ExponentEstimate:
    """Renormalized growth-rate estimate.

    ``trace`` holds ``(k, accumulated log growth, running average)`` after
    each of the ``horizon`` unit steps; its last running average is ``value``.
    """

    value: float
    horizon: int
    cadence: int
    burn_in: int
    trace: tuple
    minus_infinity: bool


def _unit_columns(prop: ConePropagator, block: np.ndarray) -> np.ndarray:
    norms = prop.column_norms(block)
    safe = np.where(norms > 0, norms, 1.0)
    return block / safe, norms


def _check_start(prop: ConePropagator, block: np.ndarray) -> None:
    if block.shape[0] != prop.dim:
        raise ContractError("state length does not match the propagator")
    if np.any(block < 0):
        raise ContractError("initial states must lie in the cone")
    if np.any(prop.column_norms(block) == 0):
        raise ContractError("initial states must be nonzero")


def top_exponents(prop: ConePropagator, omega: OmegaPoint, block, horizon: int, burn_in: int | None = None) -> list:
    """Top-exponent estimates for each column of ``block`` (shape (dim, B)).

    Each start is placed at ``theta_{-burn_in} omega`` and pushed to
    ``omega`` without accumulation; the logs of the renormalization factors
    over the following ``horizon`` unit steps are then summed in extended
    precision.  A column whose norm vanishes or whose running average drops
    below ``MINUS_INFINITY_FLOOR`` is reported as ``-inf``.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise DomainError("horizon must be a positive integer")
    burn_in = default_burn_in(horizon) if burn_in is None else int(burn_in)
    block = np.array(block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    _check_start(prop, block)
    state, _ = _unit_columns(prop, block)
    start = advance(omega, -burn_in)
    for j in range(burn_in):
        state, _ = _unit_columns(prop, prop.unit_step(advance(start, j), state))
    ncols = state.shape[1]
    logs = np.zeros((horizon, ncols))
    dead = np.zeros(ncols, dtype=bool)
    dead_at = np.full(ncols, horizon)
    running = np.zeros(ncols, dtype=np.longdouble)
    for k in range(horizon):
        state, norms = _unit_columns(prop, prop.unit_step(advance(omega, k), state))
        with np.errstate(divide="ignore"):
            step_logs = np.where(norms > 0, np.log(np.where(norms > 0, norms, 1.0)), -np.inf)
        step_logs[dead] = 0.0
        logs[k] = step_logs
        running += np.where(np.isfinite(step_logs), step_logs, 0.0)
        newly = ~dead & (~np.isfinite(step_logs) | (running / (k + 1) < MINUS_INFINITY_FLOOR))
        dead_at[newly] = k + 1
        dead |= newly
    cumulative = np.cumsum(logs.astype(np.longdouble), axis=0)
    results = []
    for j in range(ncols):
        if dead[j]:
            stop = int(dead_at[j])
            trace = tuple(
                (k + 1, float(cumulative[k, j]), float(cumulative[k, j] / (k + 1))) for k in range(stop)
            )
            results.append(ExponentEstimate(-math.inf, horizon, 1, burn_in, trace, True))
            continue
        trace = tuple((k + 1, float(cumulative[k, j]), float(cumulative[k, j] / (k + 1))) for k in range(horizon))
        results.append(ExponentEstimate(float(cumulative[-1, j] / horizon), horizon, 1, burn_in, trace, False))
    return results


def top_exponent(prop: ConePropagator, omega: OmegaPoint, u0, horizon: int, burn_in: int | None = None) -> ExponentEstimate:
    """Top Lyapunov exponent estimate from a single nonzero cone state."""
    return top_exponents(prop, omega, prop.as_vector(u0)[:, None], horizon, burn_in)[0]


def adjoint_exponent(
    prop: ConePropagator, omega: OmegaPoint, v0, horizon: int, burn_in: int | None = None
) -> ExponentEstimate:
    """Growth rate of the dual cocycle, iterated backward along the orbit of ``omega``."""
    if not prop.supports_adjoint:
        raise UnsupportedOperation(f"{type(prop).__name__} has no adjoint")
    horizon = int(horizon)
    burn_in = default_burn_in(horizon) if burn_in is None else int(burn_in)
    v = prop.as_vector(v0)
    _check_start(prop, v[:, None])
    v = v / prop.norm(v)
    for j in range(burn_in, 0, -1):
        v = prop.adjoint_unit_step(advance(omega, j - 1), v)
        v = v / prop.norm(v)
    logs = []
    for k in range(horizon):
        v = prop.adjoint_unit_step(advance(omega, -k - 1), v)
        size = prop.norm(v)
        if size == 0:
            trace = _trace(logs + [-math.inf])
            return ExponentEstimate(-math.inf, horizon, 1, burn_in, trace, True)
        logs.append(math.log(size))
        v = v / size
    trace = _trace(logs)
    flagged = any(avg < MINUS_INFINITY_FLOOR for _, _, avg in trace)
    value = -math.inf if flagged else trace[-1][2]
    return ExponentEstimate(value, horizon, 1, burn_in, trace, flagged)


def _trace(logs: Sequence[float]) -> tuple:
    cumulative = np.cumsum(np.asarray(logs, dtype=np.longdouble))
    return tuple((k + 1, float(c), float(c / (k + 1))) for k, c in enumerate(cumulative))


@dataclass(frozen=True)
class ExponentAgreement:
    forward: ExponentEstimate
    adjoint: ExponentEstimate

    @property
    def gap(self) -> float:
        return abs(self.forward.value - self.adjoint.value)


def exponent_agreement(prop: ConePropagator, omega: OmegaPoint, horizon: int, burn_in: int | None = None) -> ExponentAgreement:
    """Forward and dual growth rates from the reference vectors at the same ``omega``."""
    forward = top_exponent(prop, omega, prop.reference(), horizon, burn_in)
    adjoint = adjoint_exponent(prop, omega, prop.dual_reference(), horizon, burn_in)
    return ExponentAgreement(forward, adjoint)


@dataclass(frozen=True)
class OperatorNormRate:
    """Slope of ``ln |U_omega(t)|`` over the second half of the horizon."""

    rate: float
    trace: tuple


def operator_norm_rate(prop: ConePropagator, omega: OmegaPoint, horizon: int) -> OperatorNormRate:
    horizon = int(horizon)
    if horizon < 2:
        raise DomainError("horizon must be at least 2")
    mat = np.eye(prop.dim)
    log_scale = 0.0
    trace = []
    for k in range(horizon):
        mat = prop.unit_step(advance(omega, k), mat)
        size = float(np.abs(mat).max())
        mat = mat / size
        log_scale += math.log(size)
        trace.append((k + 1, log_scale + math.log(prop.operator_norm(mat))))
    tail = [(t, v) for t, v in trace if t >= horizon / 2]
    ts, vs = np.array(tail).T
    return OperatorNormRate(float(np.polyfit(ts, vs, 1)[0]), tuple(trace))


# ---------------------------------------------------------------------------
# Floquet vectors


@dataclass(frozen=True)
class PullbackResult:
    """Normalized pullback vector with the depth used and the residual trace."""

    vector: np.ndarray
    depth: int
    residual: float
    residual_trace: tuple


def _pullback(
    prop: ConePropagator,
    matrix_at: Callable[[int], np.ndarray],
    seed: np.ndarray,
    max_depth: int,
    tol: float,
) -> PullbackResult:
    """Iterate ``P_T = P_{T-1} matrix_at(T)`` until ``P_T seed`` settles projectively."""
    seed = np.asarray(seed, dtype=float)
    if max_depth < 0:
        raise DomainError("pullback depth must be nonnegative")
    if max_depth == 0:
        return PullbackResult(seed / prop.norm(seed), 0, 0.0, ())
    product = None
    previous = seed
    trace = []
    for depth in range(1, max_depth + 1):
        mat = matrix_at(depth)
        product = mat if product is None else product @ mat
        product = product / float(np.abs(product).max())
        current = product @ seed
        residual = hilbert_metric(current, previous)
        trace.append(residual)
        if residual <= tol:
            return PullbackResult(current / prop.norm(current), depth, residual, tuple(trace))
        previous = current
    raise ConvergenceError(
        f"pullback did not reach Hilbert distance {tol:g} within depth {max_depth}", trace
    )


def pullback_floquet(
    prop: ConePropagator, omega: OmegaPoint, max_depth: int = 200, tol: float = DEFAULT_TOLERANCE
) -> PullbackResult:
    """Principal Floquet vector at ``omega``: normalized ``U_{theta_{-T} omega}(T) e``.

    ``T`` is the smallest depth at which the approximants for ``T`` and
    ``T - 1`` are within ``tol`` in the Hilbert metric.
    """
    return _pullback(
        prop, lambda t: prop.unit_matrix(advance(omega, -t)), prop.reference(), max_depth, tol
    )


def dual_floquet(
    prop: ConePropagator, omega: OmegaPoint, max_depth: int = 200, tol: float = DEFAULT_TOLERANCE
) -> PullbackResult:
    """Dual Floquet vector at ``omega``: normalized ``U_omega(T)^T e*``."""
    if not prop.supports_adjoint:
        raise UnsupportedOperation(f"{type(prop).__name__} has no adjoint")
    return _pullback(
        prop, lambda t: prop.unit_matrix(advance(omega, t - 1)).T, prop.dual_reference(), max_depth, tol
    )


@dataclass(frozen=True)
class FloquetSample:
    omega: OmegaPoint
    w: np.ndarray
    w_star: np.ndarray
    pairing: float
    depth: int
    residual: float


def floquet_sample(
    prop: ConePropagator, omega: OmegaPoint, max_depth: int = 200, tol: float = DEFAULT_TOLERANCE
) -> FloquetSample:
    forward = pullback_floquet(prop, omega, max_depth, tol)
    dual = dual_floquet(prop, omega, max_depth, tol)
    pairing = prop.pairing(forward.vector, dual.vector)
    if not pairing > 0:
        raise DegeneratePairingError(f"pairing of Floquet vectors is {pairing:g}")
    return FloquetSample(
        omega,
        forward.vector,
        dual.vector,
        pairing,
        max(forward.depth, dual.depth),
        max(forward.residual, dual.residual),
    )


# ---------------------------------------------------------------------------
# projections and separation


@dataclass(frozen=True, eq=False)
class Projection:
    """``P u = u - (<u, w*> / <w, w*>) w``: projection onto the annihilator of ``w*`` along ``w``."""

    w: np.ndarray
    w_star: np.ndarray
    pairing_value: float
    inner: Callable = field(default=np.dot)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim == 2:
            coef = np.array([self.inner(u[:, j], self.w_star) for j in range(u.shape[1])])
            return u - np.outer(self.w, coef / self.pairing_value)
        return u - (self.inner(u, self.w_star) / self.pairing_value) * self.w


def make_projection(w, w_star, inner: Callable | None = None) -> Projection:
    inner = inner or (lambda a, b: float(np.dot(a, b)))
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    value = float(inner(w, w_star))
    if not value > 0:
        raise DegeneratePairingError(f"<w, w*> = {value:g} is not positive")
    return Projection(w, w_star, value, inner)


@dataclass(frozen=True)
class SeparationEstimate:
    """Top two exponents, their gap, and the projection-norm temperedness trace."""

    lambda1: float
    lambda2: float
    sigma: float
    temperedness: tuple
    temperedness_slope: float
    horizon: int


def _dual_along_orbit(
    prop: ConePropagator, omega: OmegaPoint, horizon: int, refresh: int, max_depth: int, tol: float
) -> list:
    """Dual Floquet vectors at ``theta_k omega`` for k = 0..horizon.

    Fresh dual pullbacks at every ``refresh``-th index (and at the end);
    intermediate indices by backward recursion ``w*_k ~ U(theta_k)^T w*_{k+1}``.
    """
    stars: list = [None] * (horizon + 1)
    anchors = sorted(set(range(0, horizon + 1, refresh)) | {horizon})
    for a in anchors:
        stars[a] = dual_floquet(prop, advance(omega, a), max_depth, tol).vector
    for left, right in zip(anchors, anchors[1:]):
        v = stars[right]
        for k in range(right - 1, left, -1):
            v = prop.adjoint_unit_step(advance(omega, k), v)
            v = v / prop.norm(v)
            stars[k] = v
    return stars


def separation(
    prop: ConePropagator,
    omega: OmegaPoint,
    horizon: int,
    burn_in: int | None = None,
    refresh: int = DUAL_REFRESH,
    max_depth: int = 200,
    tol: float = DEFAULT_TOLERANCE,
    seed: int = 0,
) -> SeparationEstimate:
    """Estimate the top two exponents and the separation gap along one orbit.

    The iteration starts at ``theta_{-burn_in} omega`` and logs are summed
    over the ``horizon`` unit steps after ``omega``.  The Floquet vector is
    carried forward by the cocycle; the dual vector is refreshed by pullback
    every ``refresh`` steps.  A random state projected onto the complement is
    iterated with re-projection after every step.
    """
    if not prop.supports_adjoint:
        raise UnsupportedOperation(f"{type(prop).__name__} has no adjoint")
    horizon = int(horizon)
    if horizon < 2:
        raise DomainError("horizon must be at least 2")
    burn_in = default_burn_in(horizon) if burn_in is None else int(burn_in)
    start = advance(omega, -burn_in)
    w = pullback_floquet(prop, start, max_depth, tol).vector
    stars = _dual_along_orbit(prop, start, burn_in + horizon, refresh, max_depth, tol)
    rng = np.random.default_rng(seed)
    proj = make_projection(w, stars[0], prop.pairing)
    v = proj(rng.random(prop.dim))
    v = v / prop.norm(v)
    logs1, logs2, tempered = [], [], []
    for j in range(burn_in + horizon):
        here = advance(start, j)
        w = prop.unit_step(here, w)
        size1 = prop.norm(w)
        w = w / size1
        proj = make_projection(w, stars[j + 1], prop.pairing)
        v = proj(prop.unit_step(here, v))
        size2 = prop.norm(v)
        v = v / size2
        t = j + 1 - burn_in
        if t >= 1:
            logs1.append(math.log(size1))
            logs2.append(math.log(size2))
            norm_p = prop.norm(w) * prop.norm(stars[j + 1]) / proj.pairing_value
            tempered.append((t, math.log(norm_p) / t))
    lambda1 = float(np.sum(np.asarray(logs1, dtype=np.longdouble)) / horizon)
    lambda2 = float(np.sum(np.asarray(logs2, dtype=np.longdouble)) / horizon)
    tail = np.array([(t, val) for t, val in tempered if t >= horizon / 2])
    slope = float(np.polyfit(tail[:, 0], tail[:, 1], 1)[0])
    return SeparationEstimate(lambda1, lambda2, lambda1 - lambda2, tuple(tempered), slope, horizon)


# ---------------------------------------------------------------------------
# entire orbits


@dataclass(frozen=True)
class EntireOrbit:
    """Positive entire orbit through the Floquet vector at ``omega``.

    The state at integer time ``t`` is ``exp(log_scales[t]) * unit_states[t]``,
    normalized so that the state at ``t = 0`` is the unit Floquet vector.
    """

    times: tuple
    unit_states: dict
    log_scales: dict

    def state(self, t: int) -> np.ndarray:
        return math.exp(self.log_scales[t]) * self.unit_states[t]


def entire_orbit(
    prop: ConePropagator,
    omega: OmegaPoint,
    times: Sequence[int],
    depth: int = 200,
    tol: float = DEFAULT_TOLERANCE,
) -> EntireOrbit:
    """States of the entire positive orbit at the integer query ``times``.

    The Floquet vector is obtained by pullback at ``theta_{t_min} omega``
    using at most ``depth`` unit steps and then pushed forward to the
    largest query time, accumulating the log normalizers.
    """
    times = tuple(sorted({int(t) for t in times}))
    if not times:
        raise DomainError("no query times")
    t_min = min(times[0], 0)
    t_max = max(times[-1], 0)
    if depth < 1:
        raise DomainError("pullback depth must be positive")
    try:
        w = pullback_floquet(prop, advance(omega, t_min), depth, tol).vector
    except ConvergenceError as exc:
        raise DomainError(f"pullback depth {depth} is insufficient: {exc}") from exc
    units = {t_min: w}
    logs = {t_min: 0.0}
    for t in range(t_min, t_max):
        nxt = prop.unit_step(advance(omega, t), units[t])
        size = prop.norm(nxt)
        units[t + 1] = nxt / size
        logs[t + 1] = logs[t] + math.log(size)
    offset = logs[0]
    return EntireOrbit(
        times,
        {t: units[t] for t in times},
        {t: logs[t] - offset for t in times},
    )


# ---------------------------------------------------------------------------
# contraction


@dataclass(frozen=True)
class ContractionReport:
    """Hilbert distances of pairs along repeated focusing-horizon maps."""

    traces: tuple
    kappa: float
    diameter: float
    monotone: bool
    within_diameter: bool

    @property
    def passed(self) -> bool:
        return self.monotone and self.within_diameter


def measured_kappa(prop: ConePropagator, omega: OmegaPoint, samples: np.ndarray) -> float:
    """Largest ``exp(d(U u, U e))`` over the sample columns at the focusing horizon."""
    ref = _horizon_map(prop, omega, prop.reference())
    images = _horizon_map(prop, omega, samples)
    return max(math.exp(hilbert_metric(images[:, j], ref)) for j in range(images.shape[1]))


def _horizon_map(prop: ConePropagator, omega: OmegaPoint, u: np.ndarray, start: int = 0) -> np.ndarray:
    for k in range(prop.horizon):
        u = prop.unit_step(advance(omega, start + k), u)
    return u


def contraction_diagnostic(
    prop: ConePropagator,
    omega: OmegaPoint,
    pairs: Sequence[tuple],
    steps: int = 3,
    kappa: float | None = None,
) -> ContractionReport:
    """Check that focusing-horizon maps do not expand Hilbert distances.

    For each pair the distance is recorded before and after each of
    ``steps`` applications of ``U(horizon)``.  After the first application
    every distance must be at most ``2 ln kappa``.  When ``kappa`` is not
    given it is measured from the first members of the pairs.
    """
    if kappa is None:
        firsts = np.column_stack([np.asarray(u, dtype=float) for u, _ in pairs])
        kappa = measured_kappa(prop, omega, firsts)
    diameter = 2.0 * math.log(kappa)
    traces = []
    monotone = True
    worst = 0.0
    for u, v in pairs:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        trace = [hilbert_metric(u, v)]
        for s in range(steps):
            u = _horizon_map(prop, omega, u, s * prop.horizon)
            v = _horizon_map(prop, omega, v, s * prop.horizon)
            u = u / prop.norm(u)
            v = v / prop.norm(v)
            trace.append(hilbert_metric(u, v))
        monotone &= all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
        worst = max(worst, trace[1] if steps else 0.0)
        traces.append(tuple(trace))
    return ContractionReport(tuple(traces), float(kappa), diameter, bool(monotone), worst <= diameter + 1e-12)
