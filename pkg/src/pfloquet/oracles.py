"""Reference solvers for constant and periodic special cases.

These are deliberately separate from the propagators: the characteristic
root works on the characteristic equation, the elliptic eigenpair on the
frozen operator, and the monodromy exponent on the period map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dgtsv

from .driving import OmegaPoint, advance
from .errors import OracleFailure

BRACKET = (-50.0, 50.0)
NEWTON_TOL = 1e-14
MONODROMY_DIMENSION_CAP = 2000


@dataclass(frozen=True)
class CharacteristicRoot:
    """Dominant real root of ``det(lambda I - A - B exp(-lambda)) = 0``."""

    value: complex
    residual: float
    iterations: int
    perron_vector: np.ndarray


def _abscissa(mat: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest real eigenvalue with right and left eigenvectors."""
    vals, right = np.linalg.eig(mat)
    k = int(np.argmax(vals.real))
    lam = float(vals[k].real)
    x = np.real(right[:, k])
    lvals, left = np.linalg.eig(mat.T)
    y = np.real(left[:, int(np.argmax(lvals.real))])
    return lam, x, y


def dde_characteristic_root(A, B) -> CharacteristicRoot:
    """Real dominant root for the constant-coefficient delay system.

    Solves ``g(lam) = s(A + B exp(-lam)) - lam = 0`` with ``s`` the largest
    real eigenvalue (the Perron root of the Metzler matrix), first by
    bisection on a bracket inside [-50, 50] and then by Newton steps with
    the derivative from the left and right Perron vectors.
    """
    a = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_2d(np.asarray(B, dtype=float))
    n = a.shape[0]
    if not np.any(b):
        lam, x, _ = _abscissa(a)
        return CharacteristicRoot(complex(lam), 0.0, 0, _positive(x))

    def g(lam: float) -> float:
        return _abscissa(a + b * math.exp(-lam))[0] - lam

    lo, hi = BRACKET
    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0 > g_hi):
        raise OracleFailure("no sign change of the characteristic function on [-50, 50]")
    iterations = 0
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        iterations += 1
    lam = 0.5 * (lo + hi)
    for _ in range(100):
        iterations += 1
        s, x, y = _abscissa(a + b * math.exp(-lam))
        slope = -math.exp(-lam) * float(y @ b @ x) / float(y @ x) - 1.0
        step = (s - lam) / slope
        new = lam - step
        if not lo <= new <= hi:
            new = 0.5 * (lo + hi)
        if g(new) > 0:
            lo = max(lo, new)
        else:
            hi = min(hi, new)
        lam, done = new, abs(step) <= NEWTON_TOL * max(1.0, abs(new))
        if done:
            break
    else:
        raise OracleFailure("Newton iteration did not converge")
    _, x, _ = _abscissa(a + b * math.exp(-lam))
    residual = abs(float(np.linalg.det(lam * np.eye(n) - a - b * math.exp(-lam))))
    return CharacteristicRoot(complex(lam), residual, iterations, _positive(x))


def _positive(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x if x.sum() >= 0 else -x
    return x / x.sum()


def elliptic_principal_eig(op, tol: float = 1e-13, max_iter: int = 10_000) -> tuple[float, np.ndarray]:
    """Principal eigenpair of an assembled tridiagonal operator.

    Shifted inverse iteration in which the shift is the upper Collatz-Wielandt
    bound ``max (L x)_i / x_i``; for an irreducible operator with nonnegative
    off-diagonals the shifted matrix stays inverse-positive, the iterates stay
    positive, and the two Collatz-Wielandt bounds close in on the principal
    eigenvalue.  ``op`` is a DiscreteOperator; the returned vector has unit
    discrete L2 norm.
    """
    lower = np.asarray(op.lower, dtype=float)
    diag = np.asarray(op.diag, dtype=float) + np.asarray(op.zero_order, dtype=float)
    upper = np.asarray(op.upper, dtype=float)
    n = diag.size
    scale = max(1.0, float(np.abs(diag).max()))

    def apply(x):
        y = diag * x
        y[1:] += lower[1:] * x[:-1]
        y[:-1] += upper[:-1] * x[1:]
        return y

    x = np.ones(n)
    for _ in range(max_iter):
        ratio = apply(x) / x
        low, high = float(ratio.min()), float(ratio.max())
        if high - low <= tol * scale:
            lam = 0.5 * (low + high)
            break
        shift = high + 1e-12 * scale
        _, _, _, y, info = dgtsv(-lower[1:], shift - diag, -upper[:-1], x[:, None])
        if info != 0:
            raise OracleFailure("singular shifted system in inverse iteration")
        x = y[:, 0]
        if not np.all(x > 0):
            raise OracleFailure("inverse iteration lost positivity; operator is not irreducible")
        x = x / x.max()
    else:
        raise OracleFailure("inverse iteration did not converge")
    phi = x / math.sqrt(op.h * float(x @ x))
    return lam, phi


def power_spectral_radius(mat: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """Spectral radius of a nonnegative matrix by power iteration from the ones vector."""
    x = np.ones(mat.shape[0])
    x = x / np.abs(x).max()
    radius = 0.0
    for _ in range(max_iter):
        y = mat @ x
        size = float(np.abs(y).max())
        if size == 0.0:
            return 0.0, x
        y = y / size
        if abs(size - radius) <= tol * size and float(np.abs(y - x).max()) <= 1e-10:
            return size, y
        x, radius = y, size
    raise OracleFailure("power iteration did not converge")


def periodic_monodromy(prop, omega: OmegaPoint, period: int) -> float:
    """Top exponent ``ln(spectral radius of U(period)) / period`` for periodic drivers.

    ``prop`` is a cone propagator exposing ``dim`` and ``unit_matrix``; the
    monodromy matrix is the product of its unit matrices over one period.
    """
    if period < 1 or int(period) != period:
        raise OracleFailure("the period must be a positive integer")
    if prop.dim > MONODROMY_DIMENSION_CAP:
        raise OracleFailure(
            f"state dimension {prop.dim} exceeds the monodromy cap {MONODROMY_DIMENSION_CAP}; use top_exponent"
        )
    period = int(period)
    mono = np.eye(prop.dim)
    log_scale = 0.0
    for k in range(period):
        mono = prop.unit_matrix(advance(omega, k)) @ mono
        size = float(np.abs(mono).max())
        mono /= size
        log_scale += math.log(size)
    radius, _ = power_spectral_radius(mono)
    return (math.log(radius) + log_scale) / period
