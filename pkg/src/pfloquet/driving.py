"""Quasi-periodic driving flows on the torus.

A driving point is stored as exact rationals so that the flow
``theta_t(omega) = omega + t * alpha (mod 1)`` satisfies the group law
bit for bit.  Floating-point coordinates are produced on demand by a
single correctly rounded division, so two routes to the same rational
time always give identical coefficient values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError

KINDS = ("torus", "periodic", "random-fourier")


def as_fraction(t) -> Fraction:
    """Exact rational value of an int, float or Fraction time."""
    if isinstance(t, Fraction):
        return t
    if isinstance(t, (int, np.integer)):
        return Fraction(int(t))
    if isinstance(t, Rational):
        return Fraction(t.numerator, t.denominator)
    value = float(t)
    if not math.isfinite(value):
        raise ValueError(f"time must be finite, got {t!r}")
    return Fraction(value)


def _frac(x: Fraction) -> Fraction:
    return x - math.floor(x)


def _to_unit_float(num: int, den: int) -> float:
    value = num / den
    return 0.0 if value >= 1.0 else value


@dataclass(frozen=True)
class OmegaPoint:
    """Point of the driving torus together with the rotation acting on it.

    ``position`` and ``frequencies`` are exact rationals; ``coords`` gives the
    floating-point torus coordinates in [0, 1).
    """

    position: tuple[Fraction, ...]
    frequencies: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.position) == 0:
            raise ConfigurationError("driving dimension must be at least 1")
        if len(self.position) != len(self.frequencies):
            raise ConfigurationError("position and frequency vectors differ in length")
        for p in self.position:
            if not 0 <= p < 1:
                raise ConfigurationError(f"torus coordinate {p} outside [0, 1)")

    @classmethod
    def from_coords(cls, coords: Sequence[float], alpha: Sequence[float]) -> "OmegaPoint":
        position = tuple(_frac(as_fraction(c)) for c in coords)
        frequencies = tuple(as_fraction(a) for a in alpha)
        return cls(position, frequencies)

    @property
    def dimension(self) -> int:
        return len(self.position)

    @property
    def coords(self) -> np.ndarray:
        return np.array(
            [_to_unit_float(p.numerator, p.denominator) for p in self.position]
        )

    def __repr__(self) -> str:
        coords = ", ".join(f"{c:.6g}" for c in self.coords)
        return f"OmegaPoint(coords=({coords}))"


def advance(omega: OmegaPoint, t) -> OmegaPoint:
    """Flow the point for time ``t`` (any sign): ``omega + t * alpha mod 1``."""
    tf = as_fraction(t)
    if tf == 0:
        return omega
    position = tuple(
        _frac(p + tf * a) for p, a in zip(omega.position, omega.frequencies)
    )
    return OmegaPoint(position, omega.frequencies)


def orbit_coords(omega: OmegaPoint, times: Sequence) -> np.ndarray:
    """Torus coordinates of ``advance(omega, t)`` for every ``t`` in ``times``.

    Returns an array of shape ``(len(times), d)``.  Each entry is bitwise equal
    to ``advance(omega, t).coords``.
    """
    fr = [as_fraction(t) for t in times]
    out = np.empty((len(fr), omega.dimension))
    if not fr:
        return out
    den_t = 1
    for t in fr:
        den_t = den_t * t.denominator // math.gcd(den_t, t.denominator)
    nums = [t.numerator * (den_t // t.denominator) for t in fr]
    for j, (p, a) in enumerate(zip(omega.position, omega.frequencies)):
        step = a / den_t
        q = step.denominator * p.denominator // math.gcd(step.denominator, p.denominator)
        base = p.numerator * (q // p.denominator)
        inc = step.numerator * (q // step.denominator)
        out[:, j] = [_to_unit_float((base + n * inc) % q, q) for n in nums]
    return out


def _near_small_rational(r: float, max_den: int = 64, tol: float = 1e-9) -> bool:
    for q in range(1, max_den + 1):
        if abs(r - round(r * q) / q) < tol:
            return True
    return False


@dataclass(frozen=True)
class DrivingConfig:
    """Parameters of the driving flow.

    ``modes``, ``decay`` and ``seed`` only matter for the ``random-fourier``
    kind, where they define the random trigonometric fields returned by
    :func:`fourier_field`.
    """

    kind: str = "torus"
    alpha: tuple[float, ...] = (1.0,)
    modes: int = 6
    decay: float = 0.6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        self.validate()

    @property
    def dimension(self) -> int:
        return len(self.alpha)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown driving kind {self.kind!r}; expected one of {KINDS}")
        if self.dimension < 1:
            raise ConfigurationError("driving dimension must be at least 1")
        if not all(math.isfinite(a) for a in self.alpha):
            raise ConfigurationError("frequencies must be finite")
        if self.kind == "periodic" and self.dimension != 1:
            raise ConfigurationError("periodic driving requires dimension 1")
        if self.kind in ("torus", "random-fourier") and self.dimension > 1:
            for i in range(self.dimension):
                for j in range(i + 1, self.dimension):
                    if self.alpha[j] == 0 or _near_small_rational(self.alpha[i] / self.alpha[j]):
                        raise ConfigurationError(
                            f"frequencies {self.alpha[i]} and {self.alpha[j]} are rationally dependent"
                        )
        if self.kind == "random-fourier":
            if self.modes < 1:
                raise ConfigurationError("random-fourier needs at least one mode")
            if not 0 < self.decay <= 1:
                raise ConfigurationError("random-fourier decay must lie in (0, 1]")

    def point(self, coords: Sequence[float]) -> OmegaPoint:
        if len(coords) != self.dimension:
            raise ConfigurationError("coordinate vector has the wrong dimension")
        return OmegaPoint.from_coords(coords, self.alpha)


def sample_omega(config: DrivingConfig, seed) -> OmegaPoint:
    """Draw a point from the invariant (uniform) measure of the torus."""
    config.validate()
    rng = np.random.default_rng(seed)
    return config.point(rng.random(config.dimension))


def coefficient_path(config: DrivingConfig, omega: OmegaPoint, table: Callable) -> Callable:
    """Return ``t -> table(coords of advance(omega, t))``.

    ``table`` maps torus coordinates (last axis of length d) to a value.
    """
    if omega.frequencies != tuple(as_fraction(a) for a in config.alpha):
        raise ConfigurationError("omega was not sampled from this driving configuration")

    def path(t):
        return table(advance(omega, t).coords)

    return path


@dataclass(frozen=True, eq=False)
class FourierField:
    """Finite trigonometric sum on the torus with values in [-1, 1]."""

    wavevectors: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        arg = 2.0 * np.pi * np.tensordot(theta, self.wavevectors.T, axes=1) + self.phases
        return np.cos(arg) @ self.amplitudes


def fourier_field(config: DrivingConfig, index: int) -> FourierField:
    """Deterministic field number ``index`` for the given driving system.

    For ``random-fourier`` the wavevectors, amplitudes and phases are drawn
    from ``(seed, index)``; amplitudes decay geometrically in the wavevector
    size and are scaled so that the field stays in [-1, 1].  For the other
    kinds the field is a single cosine in one coordinate.
    """
    d = config.dimension
    if config.kind != "random-fourier":
        k = np.zeros((1, d), dtype=int)
        k[0, index % d] = 1
        phase = np.array([2.0 * np.pi * ((index * 0.6180339887498949) % 1.0)])
        return FourierField(k, np.ones(1), phase)
    rng = np.random.default_rng([int(config.seed), int(index)])
    waves = []
    while len(waves) < config.modes:
        k = rng.integers(-2, 3, size=d)
        if np.any(k):
            waves.append(k)
    waves = np.array(waves)
    size = np.abs(waves).sum(axis=1)
    amps = rng.normal(size=config.modes) * config.decay ** (size - 1)
    amps /= np.abs(amps).sum()
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.modes)
    return FourierField(waves, amps, phases)
