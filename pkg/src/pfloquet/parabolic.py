"""Random linear parabolic equations on the unit interval.

The equation is taken in divergence form

    u_t = (a u_x + a1 u)_x + b u_x + c0 u,

with Dirichlet, Neumann or Robin boundary conditions, all coefficients
depending on the driving point ``theta_t(omega)`` and on ``x``.  Space is
discretized by a conservative finite-volume stencil; time by Crank-Nicolson
applied to the transport part, with the zero-order term entering through
exact exponential half-step factors on each side of the transport step.
Dirichlet problems live on the vertex grid ``x_i = i h``, ``h = 1/(n + 1)``;
Neumann and Robin problems on the cell-centred grid ``x_i = (i - 1/2) h``,
``h = 1/n``.  In both cases the discrete inner product is ``h * sum(u v)``.

The time step is ``1/K`` (``K`` base steps per unit time) refined by a
power of two on every base step whose Crank-Nicolson step would not be
order preserving.  The refinement depends only on the coefficients of that
base step, so compositions split at base-step multiples reproduce the
single run bit for bit.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator

import numpy as np
from scipy.linalg.lapack import dgtsv

from .driving import OmegaPoint, advance, as_fraction, orbit_coords
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateSolutionError,
    DomainError,
    EllipticityError,
    NumericalError,
)

BOUNDARIES = ("dirichlet", "neumann", "robin")

# Largest refinement exponent the positivity watchdog may choose.
MAX_REFINEMENT = 24

# Substeps generated per block of coefficient evaluations.
_BLOCK_SUBSTEPS = 4096


# ---------------------------------------------------------------------------
# grid


def grid_spacing(n: int, boundary: str) -> float:
    return 1.0 / (n + 1) if boundary == "dirichlet" else 1.0 / n


def grid_nodes(n: int, boundary: str) -> np.ndarray:
    if boundary == "dirichlet":
        return np.arange(1, n + 1) / (n + 1)
    return (np.arange(n) + 0.5) / n


def grid_faces(n: int, boundary: str) -> np.ndarray:
    """Cell faces: ``n + 1`` points, the outer two on the boundary for cell grids."""
    if boundary == "dirichlet":
        return (np.arange(n + 1) + 0.5) / (n + 1)
    return np.arange(n + 1) / n


def _check_grid(n: int, boundary: str) -> None:
    if boundary not in BOUNDARIES:
        raise ConfigurationError(f"unknown boundary kind {boundary!r}; expected one of {BOUNDARIES}")
    if n < 2:
        raise ConfigurationError("at least two grid nodes are required")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nodal values of a function on the interior grid of (0, 1)."""

    values: np.ndarray
    boundary: str = "dirichlet"

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        _check_grid(values.size, self.boundary)
        if not np.all(np.isfinite(values)):
            raise NumericalError("grid function has non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, func: Callable, n: int, boundary: str = "dirichlet") -> "GridFunction":
        return cls(np.asarray(func(grid_nodes(n, boundary)), dtype=float) * np.ones(n), boundary)

    @classmethod
    def reference(cls, n: int, boundary: str = "dirichlet") -> "GridFunction":
        """Unit-norm positive reference profile: sine for Dirichlet, constant otherwise."""
        x = grid_nodes(n, boundary)
        values = np.sin(np.pi * x) if boundary == "dirichlet" else np.ones(n)
        values = values / math.sqrt(grid_spacing(n, boundary) * float(values @ values))
        return cls(values, boundary)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return grid_spacing(self.n, self.boundary)

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.n, self.boundary)

    def inner(self, other: "GridFunction") -> float:
        return self.h * float(self.values @ other.values)

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def in_cone(self) -> bool:
        return bool(np.all(self.values >= 0))


def inner_h(u: np.ndarray, v: np.ndarray, h: float) -> float:
    return h * float(np.dot(u, v))


def norm_h(u: np.ndarray, h: float) -> float:
    return math.sqrt(h) * float(np.linalg.norm(u))


# ---------------------------------------------------------------------------
# coefficients


def _as_field(value) -> Callable:
    if callable(value):
        return value
    c = float(value)

    def constant_field(theta, x):
        return np.full((np.shape(theta)[0], np.size(x)), c)

    constant_field.constant = c
    return constant_field


def _as_boundary_value(value) -> Callable:
    if callable(value):
        return value
    c = float(value)
    if c < 0:
        raise ConfigurationError("Robin coefficients must be nonnegative")

    def constant_value(theta):
        return np.full(np.shape(theta)[0], c)

    constant_value.constant = c
    return constant_value


def _negated(f: Callable) -> Callable:
    if hasattr(f, "constant"):
        return _as_field(-f.constant)
    return lambda theta, x: -np.asarray(f(theta, x), dtype=float)


def _shifted(f: Callable, c: float) -> Callable:
    if hasattr(f, "constant"):
        return _as_field(f.constant + c)
    return lambda theta, *rest: np.asarray(f(theta, *rest), dtype=float) + c


def evaluate_field(f: Callable, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values of a coefficient field on torus points (K, d) and nodes (M,), shape (K, M)."""
    return np.broadcast_to(np.asarray(f(theta, x), dtype=float), (theta.shape[0], x.size))


@dataclass(frozen=True, eq=False)
class ParabolicCoefficients:
    """Coefficients of the parabolic problem.

    ``diffusion``, ``drift`` (the flux term ``a1``), ``advection`` (``b``)
    and ``zero_order`` (``c0``) are constants or callables ``f(theta, x)``
    taking torus coordinates of shape (K, d) and nodes of shape (M,) and
    returning values broadcastable to (K, M).  ``robin_left`` and
    ``robin_right`` are the nonnegative boundary coefficients ``d0``
    (constants or callables of ``theta`` returning shape (K,)).  The optional
    envelopes ``zero_order_lower``/``zero_order_upper`` are callables of
    ``theta`` bounding ``c0`` from below and above; by default the nodewise
    extremes of ``c0`` are used.
    """

    diffusion: Callable = 1.0
    drift: Callable = 0.0
    advection: Callable = 0.0
    zero_order: Callable = 0.0
    boundary: str = "dirichlet"
    robin_left: Callable = 0.0
    robin_right: Callable = 0.0
    ellipticity: float = 1e-6
    zero_order_lower: Callable | None = None
    zero_order_upper: Callable | None = None
    autonomous: bool = field(default=False)

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary kind {self.boundary!r}; expected one of {BOUNDARIES}")
        if not self.ellipticity > 0:
            raise ConfigurationError("the ellipticity floor must be positive")
        for name in ("diffusion", "drift", "advection", "zero_order"):
            object.__setattr__(self, name, _as_field(getattr(self, name)))
        if self.boundary != "robin":
            for side in ("robin_left", "robin_right"):
                value = getattr(self, side)
                if getattr(value, "constant", value) != 0:
                    raise ConfigurationError("Robin coefficients are only meaningful with a Robin boundary")
        for side in ("robin_left", "robin_right"):
            object.__setattr__(self, side, _as_boundary_value(getattr(self, side)))

    def with_zero_order(self, zero_order, lower=None, upper=None) -> "ParabolicCoefficients":
        return replace(self, zero_order=zero_order, zero_order_lower=lower, zero_order_upper=upper)

    def without_zero_order(self) -> "ParabolicCoefficients":
        return self.with_zero_order(0.0)

    def shifted(self, c: float) -> "ParabolicCoefficients":
        """Coefficients with ``c0`` replaced by ``c0 + c``."""
        lower = None if self.zero_order_lower is None else _shifted(self.zero_order_lower, c)
        upper = None if self.zero_order_upper is None else _shifted(self.zero_order_upper, c)
        return self.with_zero_order(_shifted(self.zero_order, c), lower, upper)

    def adjoint(self) -> "ParabolicCoefficients":
        """Coefficients of the formal adjoint: drift and advection swap roles with a sign."""
        return replace(self, drift=_negated(self.advection), advection=_negated(self.drift))

    def same_transport(self, other: "ParabolicCoefficients") -> bool:
        """True when everything except the zero-order term is shared."""
        names = ("diffusion", "drift", "advection", "robin_left", "robin_right")
        return (
            all(getattr(self, k) is getattr(other, k) or _same_constant(getattr(self, k), getattr(other, k)) for k in names)
            and self.boundary == other.boundary
            and self.ellipticity == other.ellipticity
            and self.autonomous == other.autonomous
        )


def _same_constant(f, g) -> bool:
    return hasattr(f, "constant") and hasattr(g, "constant") and f.constant == g.constant


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class Stencil:
    """Tridiagonal transport operator and zero-order values at K times.

    ``lower[k, i]`` multiplies ``u[i - 1]`` in row ``i`` and ``upper[k, i]``
    multiplies ``u[i + 1]``; ``lower[:, 0]`` and ``upper[:, -1]`` are zero.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    zero_order: np.ndarray


def _stencil(coeffs: ParabolicCoefficients, n: int, theta: np.ndarray) -> Stencil:
    boundary = coeffs.boundary
    h = grid_spacing(n, boundary)
    x = grid_nodes(n, boundary)
    xf = grid_faces(n, boundary)
    a = evaluate_field(coeffs.diffusion, theta, xf)
    low = a.min()
    if not low >= coeffs.ellipticity:
        k, i = np.unravel_index(int(np.argmin(a)), a.shape)
        raise EllipticityError(
            f"diffusion {a[k, i]:.3g} below the floor {coeffs.ellipticity:.3g} at x = {xf[i]:.4g}"
        )
    a1 = evaluate_field(coeffs.drift, theta, xf)
    b = evaluate_field(coeffs.advection, theta, x)
    c = np.array(evaluate_field(coeffs.zero_order, theta, x))
    h2 = h * h
    upper = a[:, 1:] / h2 + a1[:, 1:] / (2 * h) + b / (2 * h)
    lower = a[:, :-1] / h2 - a1[:, :-1] / (2 * h) - b / (2 * h)
    diag = -(a[:, 1:] + a[:, :-1]) / h2 + (a1[:, 1:] - a1[:, :-1]) / (2 * h)
    if boundary != "dirichlet":
        d_left = np.asarray(coeffs.robin_left(theta), dtype=float).reshape(-1) * np.ones(theta.shape[0])
        d_right = np.asarray(coeffs.robin_right(theta), dtype=float).reshape(-1) * np.ones(theta.shape[0])
        if d_left.min() < 0 or d_right.min() < 0:
            raise ContractError("Robin coefficients must be nonnegative")
        den_left = d_left + 2 * a[:, 0] / h - a1[:, 0]
        den_right = d_right + 2 * a[:, n] / h + a1[:, n]
        if den_left.min() <= 0 or den_right.min() <= 0:
            raise ContractError("boundary drift too strong for the grid; refine the grid")
        g_left = (2 * a[:, 0] / h) / den_left
        g_right = (2 * a[:, n] / h) / den_right
        diag[:, 0] = (
            -a[:, 1] / h2 + a1[:, 1] / (2 * h) - d_left * g_left / h + b[:, 0] * (0.5 - g_left) / h
        )
        diag[:, -1] = (
            -a[:, n - 1] / h2 - a1[:, n - 1] / (2 * h) - d_right * g_right / h + b[:, -1] * (g_right - 0.5) / h
        )
    lower[:, 0] = 0.0
    upper[:, -1] = 0.0
    return Stencil(lower, diag, upper, c)


@dataclass(frozen=True)
class DiscreteOperator:
    """Tridiagonal operator assembled at one time, zero-order term included."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    zero_order: np.ndarray
    boundary: str

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def h(self) -> float:
        return grid_spacing(self.n, self.boundary)

    def transport_matrix(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)

    def matrix(self) -> np.ndarray:
        return self.transport_matrix() + np.diag(self.zero_order)

    def row_sums(self) -> np.ndarray:
        return self.matrix().sum(axis=1)


def assemble(coeffs: ParabolicCoefficients, omega: OmegaPoint, t, n: int) -> DiscreteOperator:
    """Discrete operator at time ``t`` along the orbit of ``omega`` with ``n`` nodes."""
    _check_grid(n, coeffs.boundary)
    theta = advance(omega, t).coords[None, :]
    st = _stencil(coeffs, n, theta)
    return DiscreteOperator(st.lower[0], st.diag[0], st.upper[0], st.zero_order[0], coeffs.boundary)


# ---------------------------------------------------------------------------
# time stepping


def default_steps_per_unit(n: int, boundary: str) -> int:
    """Base steps per unit time for the default step ``dt = h``."""
    return int(round(1.0 / grid_spacing(n, boundary)))


def _steps(t, per_unit: int) -> int:
    tf = as_fraction(t)
    if tf < 0:
        raise DomainError("t must be nonnegative")
    steps = tf * per_unit
    if steps.denominator != 1:
        rounded = round(float(steps))
        if abs(float(steps) - rounded) > 1e-9 * max(1.0, abs(float(steps))):
            raise DomainError(f"t = {t} is not a multiple of the base step 1/{per_unit}")
        steps = Fraction(rounded)
    return int(steps)


@dataclass(frozen=True)
class _Block:
    """Consecutive substeps: step sizes and per-substep coefficient arrays."""

    dt: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    zero_order: np.ndarray
    zero_lower: np.ndarray
    zero_upper: np.ndarray


def _refinement_needed(st: Stencil, dt: np.ndarray) -> np.ndarray:
    """Boolean per row: Crank-Nicolson with step ``dt`` is not order preserving."""
    half = 0.5 * dt
    neg_diag = np.maximum(-st.diag, 0.0).max(axis=1)
    row_sum = (st.lower + st.diag + st.upper).max(axis=1)
    return (half * neg_diag > 1.0) | (half * row_sum >= 1.0)


def _check_off_diagonals(st: Stencil) -> None:
    worst = min(st.lower[:, 1:].min(), st.upper[:, :-1].min())
    if worst < 0:
        raise NumericalError(
            "negative off-diagonal in the transport stencil (cell Peclet number above 2); refine the grid"
        )


def _envelopes(coeffs: ParabolicCoefficients, theta: np.ndarray, c: np.ndarray):
    if coeffs.zero_order_lower is None:
        lo = c.min(axis=1)
    else:
        lo = np.asarray(coeffs.zero_order_lower(theta), dtype=float).reshape(-1) * np.ones(c.shape[0])
    if coeffs.zero_order_upper is None:
        hi = c.max(axis=1)
    else:
        hi = np.asarray(coeffs.zero_order_upper(theta), dtype=float).reshape(-1) * np.ones(c.shape[0])
    if np.any(lo[:, None] > c) or np.any(hi[:, None] < c):
        raise ContractError("zero-order envelopes do not bound the zero-order coefficient")
    return lo, hi


def _base_blocks(
    coeffs: ParabolicCoefficients,
    n: int,
    omega: OmegaPoint,
    first: int,
    count: int,
    per_unit: int,
    sign: int = 1,
) -> Iterator[_Block]:
    """Blocks of substeps for base steps ``first .. first + count - 1``.

    Base step ``j`` covers local times ``[j, j + 1] / per_unit`` (times are
    negated when ``sign`` is -1, i.e. the coefficients are read backward in
    time).  Each base step is split into ``2**p`` equal substeps with ``p``
    the smallest value, starting from an estimate made at the base midpoint,
    for which every substep is order preserving.
    """
    base = 1.0 / per_unit
    if count <= 0:
        return
    if coeffs.autonomous:
        theta = omega.coords[None, :]
        st = _stencil(coeffs, n, theta)
        _check_off_diagonals(st)
        p = 0
        while _refinement_needed(st, np.array([base / 2**p]))[0]:
            p += 1
            if p > MAX_REFINEMENT:
                raise NumericalError("positivity watchdog exceeded its refinement limit")
        lo, hi = _envelopes(coeffs, theta, st.zero_order)
        sub = 2**p
        chunk = max(1, _BLOCK_SUBSTEPS // sub)
        done = 0
        while done < count:
            k = min(chunk, count - done) * sub
            yield _Block(
                np.full(k, base / sub),
                np.broadcast_to(st.lower, (k, n)),
                np.broadcast_to(st.diag, (k, n)),
                np.broadcast_to(st.upper, (k, n)),
                np.broadcast_to(st.zero_order, (k, n)),
                np.broadcast_to(lo, (k,)),
                np.broadcast_to(hi, (k,)),
            )
            done += k // sub
        return
    group = 16
    for start in range(first, first + count, group):
        idx = np.arange(start, min(start + group, first + count))
        mids = [sign * Fraction(2 * j + 1, 2 * per_unit) for j in idx]
        st = _stencil(coeffs, n, orbit_coords(omega, mids))
        need = 0.5 * base * np.maximum(
            np.maximum(-st.diag, 0.0).max(axis=1), (st.lower + st.diag + st.upper).max(axis=1)
        )
        p = np.maximum(0, np.ceil(np.log2(np.maximum(need, 1e-300)))).astype(int)
        while True:
            times, owner = [], []
            for row, (j, pj) in enumerate(zip(idx, p)):
                sub = 2 ** int(pj)
                den = 2 * sub * per_unit
                times.extend(sign * Fraction(2 * sub * int(j) + 2 * i + 1, den) for i in range(sub))
                owner.extend([row] * sub)
            owner = np.array(owner)
            dt = base / 2.0 ** p[owner]
            theta = orbit_coords(omega, times)
            st = _stencil(coeffs, n, theta)
            _check_off_diagonals(st)
            bad = _refinement_needed(st, dt)
            if not bad.any():
                break
            failing = np.unique(owner[bad])
            p[failing] += 1
            if p.max() > MAX_REFINEMENT:
                raise NumericalError("positivity watchdog exceeded its refinement limit")
        lo, hi = _envelopes(coeffs, theta, st.zero_order)
        yield _Block(dt, st.lower, st.diag, st.upper, st.zero_order, lo, hi)


@dataclass(frozen=True)
class _Factors:
    """Per-substep arrays of a block in the form the step loop consumes.

    ``explicit_*`` are the bands of ``I + dt/2 L``, ``implicit_*`` those of
    ``I - dt/2 L`` and ``scale`` is ``exp(dt/2 c0)``.
    """

    scale: np.ndarray
    explicit_lower: np.ndarray
    explicit_diag: np.ndarray
    explicit_upper: np.ndarray
    implicit_lower: np.ndarray
    implicit_diag: np.ndarray
    implicit_upper: np.ndarray

    @property
    def size(self) -> int:
        return self.scale.shape[0]


def _factors(blk: _Block) -> _Factors:
    half = 0.5 * blk.dt[:, None]
    lo = half * blk.lower[:, 1:]
    di = half * blk.diag
    up = half * blk.upper[:, :-1]
    return _Factors(np.exp(half * blk.zero_order), lo, 1.0 + di, up, -lo, 1.0 - di, -up)


def _substep(f: _Factors, k: int, u: np.ndarray) -> np.ndarray:
    """One step ``E (I - dt/2 L)^-1 (I + dt/2 L) E`` with ``E = exp(dt/2 c0)``."""
    e = f.scale[k][:, None]
    y = e * u
    r = f.explicit_diag[k][:, None] * y
    r[1:] += f.explicit_lower[k][:, None] * y[:-1]
    r[:-1] += f.explicit_upper[k][:, None] * y[1:]
    _, _, _, z, info = dgtsv(f.implicit_lower[k], f.implicit_diag[k], f.implicit_upper[k], r, overwrite_b=1)
    if info != 0:
        raise NumericalError("singular tridiagonal system in a Crank-Nicolson step")
    return e * z


def _substep_transpose(f: _Factors, k: int, v: np.ndarray) -> np.ndarray:
    """Transpose of :func:`_substep`: ``E (I + dt/2 L)^T (I - dt/2 L)^-T E``."""
    e = f.scale[k][:, None]
    y = e * v
    _, _, _, z, info = dgtsv(f.implicit_upper[k], f.implicit_diag[k], f.implicit_lower[k], y, overwrite_b=1)
    if info != 0:
        raise NumericalError("singular tridiagonal system in a Crank-Nicolson step")
    w = f.explicit_diag[k][:, None] * z
    w[1:] += f.explicit_upper[k][:, None] * z[:-1]
    w[:-1] += f.explicit_lower[k][:, None] * z[1:]
    return e * w


def _autonomous_step(coeffs: ParabolicCoefficients, n: int, per_unit: int, sign: int, omega: OmegaPoint):
    """Matrix of one base step for autonomous coefficients, with its envelope sums.

    Built by pushing the identity through the substeps of a single base
    step; it is the same for every base step and every driving point, so
    propagation reduces to repeated products with it.
    """
    return _cached_step(coeffs, n, per_unit, sign, omega.dimension)


@lru_cache(maxsize=32)
def _cached_step(coeffs: ParabolicCoefficients, n: int, per_unit: int, sign: int, dimension: int):
    origin = OmegaPoint.from_coords([0.0] * dimension, [1.0] * dimension)
    blk = next(_base_blocks(coeffs, n, origin, 0, 1, per_unit, sign))
    f = _factors(blk)
    step = np.asfortranarray(np.eye(n))
    for k in range(f.size):
        step = _substep(f, k, step)
    step = np.ascontiguousarray(step)
    step.flags.writeable = False
    return step, math.fsum(blk.dt * blk.zero_lower), math.fsum(blk.dt * blk.zero_upper)


def _as_block(u: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    arr = np.array(u, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
        squeeze = True
    else:
        squeeze = False
    if arr.shape[0] != n:
        raise ContractError("state length does not match the grid")
    return np.asfortranarray(arr), squeeze


def _run(
    coeffs: ParabolicCoefficients,
    omega: OmegaPoint,
    t,
    u: np.ndarray,
    per_unit: int | None = None,
    sign: int = 1,
    transpose: bool = False,
    envelopes: bool = False,
):
    """Apply the discrete propagator over [0, t] to the columns of ``u``.

    With ``transpose`` the transposed step sequence is applied (last step
    first).  With ``envelopes`` also returns the sums of ``dt * c0_lower``
    and ``dt * c0_upper`` over the substeps.
    """
    n = np.shape(u)[0]
    _check_grid(n, coeffs.boundary)
    per_unit = per_unit or default_steps_per_unit(n, coeffs.boundary)
    steps = _steps(t, per_unit)
    state, squeeze = _as_block(u, n)
    lo_sum = hi_sum = 0.0
    if coeffs.autonomous:
        step, lo_step, hi_step = _autonomous_step(coeffs, n, per_unit, sign, omega)
        mat = step.T if transpose else step
        for _ in range(steps):
            state = mat @ state
        lo_sum, hi_sum = steps * lo_step, steps * hi_step
    elif transpose:
        for blk in reversed(list(_base_blocks(coeffs, n, omega, 0, steps, per_unit, sign))):
            f = _factors(blk)
            for k in range(f.size - 1, -1, -1):
                state = _substep_transpose(f, k, state)
            lo_sum += math.fsum(blk.dt * blk.zero_lower)
            hi_sum += math.fsum(blk.dt * blk.zero_upper)
    else:
        for blk in _base_blocks(coeffs, n, omega, 0, steps, per_unit, sign):
            f = _factors(blk)
            for k in range(f.size):
                state = _substep(f, k, state)
            lo_sum += math.fsum(blk.dt * blk.zero_lower)
            hi_sum += math.fsum(blk.dt * blk.zero_upper)
    if not np.all(np.isfinite(state)):
        raise NumericalError("propagation produced non-finite values")
    out = state[:, 0] if squeeze else state
    if envelopes:
        return out, lo_sum, hi_sum
    return out


def _grid_arg(u0) -> tuple[np.ndarray, str | None]:
    if isinstance(u0, GridFunction):
        return u0.values, u0.boundary
    return np.asarray(u0, dtype=float), None


def _wrap(values: np.ndarray, coeffs: ParabolicCoefficients, like) -> GridFunction | np.ndarray:
    if isinstance(like, GridFunction):
        return GridFunction(values, coeffs.boundary)
    return values


def _check_boundary(coeffs: ParabolicCoefficients, kind: str | None) -> None:
    if kind is not None and kind != coeffs.boundary:
        raise ContractError("grid function and coefficients use different boundary conditions")


def propagate(coeffs: ParabolicCoefficients, omega: OmegaPoint, t, u0, per_unit: int | None = None):
    """``U_omega(t) u0``.  ``u0`` is a GridFunction or an array of shape (n,) or (n, B)."""
    values, kind = _grid_arg(u0)
    _check_boundary(coeffs, kind)
    return _wrap(_run(coeffs, omega, t, values, per_unit), coeffs, u0)


def propagate_adjoint(coeffs: ParabolicCoefficients, omega: OmegaPoint, t, v0, per_unit: int | None = None):
    """``U*_omega(t) v0``: the transpose of ``U_{theta_{-t} omega}(t)``."""
    values, kind = _grid_arg(v0)
    _check_boundary(coeffs, kind)
    start = advance(omega, -as_fraction(t))
    return _wrap(_run(coeffs, start, t, values, per_unit, transpose=True), coeffs, v0)


def propagate_adjoint_stencil(coeffs: ParabolicCoefficients, omega: OmegaPoint, t, v0, per_unit: int | None = None):
    """Adjoint propagator from the separately assembled adjoint equation.

    Solves the formal adjoint problem backward in time from ``omega`` with
    its own stencil.  Agrees with :func:`propagate_adjoint` only up to
    discretization error and serves as an independent cross-check.
    """
    values, kind = _grid_arg(v0)
    _check_boundary(coeffs, kind)
    return _wrap(_run(coeffs.adjoint(), omega, t, values, per_unit, sign=-1), coeffs, v0)


def propagate_zero_order_free(coeffs: ParabolicCoefficients, omega: OmegaPoint, t, u0, per_unit: int | None = None):
    """Propagator of the same problem with the zero-order term removed."""
    return propagate(coeffs.without_zero_order(), omega, t, u0, per_unit)


def unit_matrix(coeffs: ParabolicCoefficients, omega: OmegaPoint, n: int, per_unit: int | None = None) -> np.ndarray:
    """Dense matrix of ``U_omega(1)`` on the grid with ``n`` nodes."""
    _check_grid(n, coeffs.boundary)
    per_unit = per_unit or default_steps_per_unit(n, coeffs.boundary)
    eye = np.eye(n)
    if coeffs.autonomous:
        step, _, _ = _autonomous_step(coeffs, n, per_unit, 1, omega)
        return np.linalg.matrix_power(step, per_unit)
    return _run(coeffs, omega, 1, eye, per_unit)


# ---------------------------------------------------------------------------
# checkers


@dataclass(frozen=True)
class SandwichResult:
    """Signed slack of ``exp(int c-) U0 u0 <= U u0 <= exp(int c+) U0 u0``.

    ``equality_gap`` is the largest distance of ``U u0`` from the nearer of
    the two bounds relative to ``max |U u0|``; it vanishes when ``c0`` does
    not depend on ``x``.
    """

    lower_margin: float
    upper_margin: float
    equality_gap: float
    log_lower: float
    log_upper: float

    @property
    def passed(self) -> bool:
        return self.lower_margin >= -1e-12 and self.upper_margin >= -1e-12


def check_sandwich(coeffs: ParabolicCoefficients, omega: OmegaPoint, t, u0, per_unit: int | None = None) -> SandwichResult:
    values, kind = _grid_arg(u0)
    _check_boundary(coeffs, kind)
    if np.any(values < 0):
        raise ContractError("initial value must lie in the cone")
    full, lo_sum, hi_sum = _run(coeffs, omega, t, values, per_unit, envelopes=True)
    free = _run(coeffs.without_zero_order(), omega, t, values, per_unit)
    below = math.exp(lo_sum) * free
    above = math.exp(hi_sum) * free
    scale = max(float(np.abs(full).max()), 1e-300)
    gap = float(np.minimum(np.abs(full - below), np.abs(above - full)).max()) / scale
    return SandwichResult(
        float((full - below).min()), float((above - full).min()), gap, lo_sum, hi_sum
    )


@dataclass(frozen=True)
class ComparisonResult:
    """Worst nodewise slack of ``U2 u0 - U1 u0`` and of both sandwiches."""

    margin: float
    sandwich_margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= -1e-12 and self.sandwich_margin >= -1e-12


def check_comparison(
    first: ParabolicCoefficients,
    second: ParabolicCoefficients,
    omega: OmegaPoint,
    t,
    u0,
    per_unit: int | None = None,
    samples_per_unit: int = 64,
) -> ComparisonResult:
    """Compare solutions of two problems whose zero-order terms are ordered.

    Requires ``first.zero_order <= second.zero_order`` (checked on a sample
    grid) and all other coefficients shared.
    """
    values, kind = _grid_arg(u0)
    _check_boundary(first, kind)
    if not first.same_transport(second):
        raise ContractError("the two problems must differ only in the zero-order term")
    if np.any(values < 0):
        raise ContractError("initial value must lie in the cone")
    n = values.shape[0]
    span = max(1, int(math.ceil(float(as_fraction(t)) * samples_per_unit)))
    times = [Fraction(j, samples_per_unit) for j in range(span + 1)]
    theta = orbit_coords(omega, times)
    x = grid_nodes(n, first.boundary)
    if np.any(evaluate_field(first.zero_order, theta, x) > evaluate_field(second.zero_order, theta, x)):
        raise ContractError("zero-order terms are not ordered")
    one = _run(first, omega, t, values, per_unit)
    two = _run(second, omega, t, values, per_unit)
    sandwich = min(
        min(r.lower_margin, r.upper_margin)
        for r in (check_sandwich(c, omega, t, values, per_unit) for c in (first, second))
    )
    return ComparisonResult(float((two - one).min()), sandwich)


def harnack_quotient(coeffs: ParabolicCoefficients, omega: OmegaPoint, u0, t=1, per_unit: int | None = None) -> float:
    """``sup(u / u_e) / inf(u / u_e)`` at time ``t`` over the interior nodes.

    ``u`` is the solution from ``u0`` and ``u_e`` the solution from the
    reference profile of :meth:`GridFunction.reference`.
    """
    values, kind = _grid_arg(u0)
    _check_boundary(coeffs, kind)
    if np.any(values < 0) or not np.any(values > 0):
        raise ContractError("initial value must be a nonzero element of the cone")
    n = values.shape[0]
    ref = GridFunction.reference(n, coeffs.boundary).values
    out = _run(coeffs, omega, t, np.column_stack([values, ref]), per_unit)
    u, ue = out[:, 0], out[:, 1]
    if np.min(np.abs(ue)) < 1e-300 or np.min(np.abs(u)) < 1e-300:
        raise DegenerateSolutionError("solution vanishes at a node; the quotient is undefined")
    q = u / ue
    return float(q.max() / q.min())


def operator_norm(matrix: np.ndarray, iterations: int = 500, tol: float = 1e-12) -> float:
    """Spectral norm by power iteration on ``M^T M`` (equals the discrete L2 operator norm)."""
    m = np.asarray(matrix, dtype=float)
    v = np.ones(m.shape[1]) / math.sqrt(m.shape[1])
    sigma = 0.0
    for _ in range(iterations):
        w = m.T @ (m @ v)
        size = float(np.linalg.norm(w))
        if size == 0.0:
            return 0.0
        v = w / size
        new = math.sqrt(size)
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma


@dataclass(frozen=True)
class GrowthReport:
    """Operator norms of the zero-order-free propagator and a fitted log-linear bound."""

    times: tuple[float, ...]
    log_norms: tuple[float, ...]
    gamma: float
    offset: float

    @property
    def sup_norm(self) -> float:
        return math.exp(max(self.log_norms))


def zero_order_free_growth(
    coeffs: ParabolicCoefficients, omega: OmegaPoint, n: int, times, per_unit: int | None = None
) -> GrowthReport:
    """Norms of the zero-order-free propagator at increasing times.

    ``gamma`` is the least-squares slope of the log norms and ``offset`` the
    smallest constant with ``log |U0(t)| <= gamma t + offset`` at the samples.
    """
    free = coeffs.without_zero_order()
    per_unit = per_unit or default_steps_per_unit(n, coeffs.boundary)
    fr = sorted(as_fraction(t) for t in times)
    if not fr or fr[0] < 0:
        raise DomainError("times must be nonnegative and nonempty")
    mat = np.eye(n)
    now = Fraction(0)
    logs = []
    for t in fr:
        mat = _run(free, advance(omega, now), t - now, mat, per_unit)
        now = t
        norm = operator_norm(mat)
        logs.append(math.log(norm) if norm > 0 else -math.inf)
    ts = np.array([float(t) for t in fr])
    ls = np.array(logs)
    gamma = float(np.polyfit(ts, ls, 1)[0]) if len(ts) > 1 else 0.0
    offset = float((ls - gamma * ts).max())
    return GrowthReport(tuple(ts.tolist()), tuple(ls.tolist()), gamma, offset)
