"""Coefficient profiles: turn a system section into delay or parabolic coefficients.

Delay profiles
  ``constant``  A, B constant matrices.
  ``fourier``   A, B mean matrices; the diagonal of A oscillates with
                amplitude ``diagonal_amplitude`` and every nonzero entry of
                the off-diagonal of A and of B is scaled by
                ``1 + relative_amplitude * F(theta)``, so the sign pattern
                (and hence cooperativity) is preserved for amplitudes below 1.

Parabolic profiles
  ``heat``      constant ``diffusion`` and ``zero_order``, Dirichlet unless
                ``boundary`` says otherwise.
  ``field``     each of diffusion, drift, advection, zero_order is
                ``mean + wave cos(2 pi x) + amplitude F(theta) + mixed G(theta) cos(2 pi x)``
                with keys ``<name>``, ``<name>_wave``, ``<name>_amplitude``,
                ``<name>_mixed``; Robin coefficients ``robin_left``/``robin_right``
                with optional ``robin_amplitude``.

``F`` and ``G`` are the deterministic fields of :func:`driving.fourier_field`.
"""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig, SystemConfig, parse_matrix
from .delay import DelayCoefficients
from .driving import DrivingConfig, fourier_field
from .errors import ConfigurationError
from .parabolic import ParabolicCoefficients
from .spectral import ConePropagator, DelayPropagator, ParabolicPropagator

_PARABOLIC_TERMS = ("diffusion", "drift", "advection", "zero_order")
_TERM_INDEX = {name: 2 * i for i, name in enumerate(_PARABOLIC_TERMS)}
_ROBIN_INDEX = 8


def _float(params: dict, key: str, default: float) -> float:
    try:
        return float(params.get(key, default))
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {params[key]!r}") from exc


def _matrix(params: dict, key: str) -> np.ndarray:
    if key not in params:
        raise ConfigurationError(f"delay profile needs the matrix {key}")
    try:
        return np.array(parse_matrix(params[key]))
    except ValueError as exc:
        raise ConfigurationError(f"bad matrix {key}: {exc}") from exc


def _check_used(params: dict, allowed: set, profile: str) -> None:
    extra = set(params) - allowed
    if extra:
        raise ConfigurationError(f"unknown keys for profile {profile!r}: {sorted(extra)}")


def delay_coefficients(system: SystemConfig, driving: DrivingConfig) -> DelayCoefficients:
    params = system.params
    a = _matrix(params, "a")
    b = _matrix(params, "b")
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ConfigurationError("A and B must be square matrices of equal size")
    if system.profile == "constant":
        _check_used(params, {"a", "b"}, "constant")
        return DelayCoefficients.constant(a, b)
    if system.profile != "fourier":
        raise ConfigurationError(f"unknown delay profile {system.profile!r}")
    _check_used(params, {"a", "b", "diagonal_amplitude", "relative_amplitude"}, "fourier")
    diag_amp = _float(params, "diagonal_amplitude", 0.0)
    rel_amp = _float(params, "relative_amplitude", 0.0)
    if not 0 <= rel_amp < 1:
        raise ConfigurationError("relative_amplitude must lie in [0, 1)")
    if diag_amp == 0 and rel_amp == 0:
        return DelayCoefficients.constant(a, b)
    n = a.shape[0]
    diag_fields = [fourier_field(driving, 10 + i) for i in range(n)]
    a_fields = {(i, j): fourier_field(driving, 100 + i * n + j) for i in range(n) for j in range(n) if i != j}
    b_fields = {(i, j): fourier_field(driving, 200 + i * n + j) for i in range(n) for j in range(n)}

    def table_a(theta):
        theta = np.atleast_2d(theta)
        out = np.empty((theta.shape[0], n, n))
        for i in range(n):
            out[:, i, i] = a[i, i] + diag_amp * diag_fields[i](theta)
        for (i, j), f in a_fields.items():
            out[:, i, j] = a[i, j] * (1.0 + rel_amp * f(theta))
        return out

    def table_b(theta):
        theta = np.atleast_2d(theta)
        out = np.empty((theta.shape[0], n, n))
        for (i, j), f in b_fields.items():
            out[:, i, j] = b[i, j] * (1.0 + rel_amp * f(theta))
        return out

    return DelayCoefficients(table_a, table_b, n)


def _term(params: dict, name: str, driving: DrivingConfig, default_mean: float):
    mean = _float(params, name, default_mean)
    wave = _float(params, f"{name}_wave", 0.0)
    amp = _float(params, f"{name}_amplitude", 0.0)
    mixed = _float(params, f"{name}_mixed", 0.0)
    moving = amp != 0 or mixed != 0
    if not moving and wave == 0:
        return mean, False
    f_time = fourier_field(driving, _TERM_INDEX[name])
    f_mixed = fourier_field(driving, _TERM_INDEX[name] + 1)

    def term(theta, x):
        shape = np.cos(2.0 * np.pi * np.asarray(x))
        out = mean + wave * shape[None, :] * np.ones((np.shape(theta)[0], 1))
        if amp:
            out = out + amp * f_time(theta)[:, None]
        if mixed:
            out = out + mixed * np.outer(f_mixed(theta), shape)
        return out

    return term, moving


def parabolic_coefficients(system: SystemConfig, driving: DrivingConfig) -> ParabolicCoefficients:
    params = system.params
    boundary = params.get("boundary", "dirichlet")
    ellipticity = _float(params, "ellipticity", 1e-6)
    if system.profile == "heat":
        _check_used(params, {"diffusion", "zero_order", "boundary", "ellipticity"}, "heat")
        return ParabolicCoefficients(
            diffusion=_float(params, "diffusion", 1.0),
            zero_order=_float(params, "zero_order", 0.0),
            boundary=boundary,
            ellipticity=ellipticity,
            autonomous=True,
        )
    if system.profile != "field":
        raise ConfigurationError(f"unknown parabolic profile {system.profile!r}")
    allowed = {"boundary", "ellipticity", "robin_left", "robin_right", "robin_amplitude"}
    for name in _PARABOLIC_TERMS:
        allowed |= {name, f"{name}_wave", f"{name}_amplitude", f"{name}_mixed"}
    _check_used(params, allowed, "field")
    terms = {}
    moving = False
    for name in _PARABOLIC_TERMS:
        terms[name], m = _term(params, name, driving, 1.0 if name == "diffusion" else 0.0)
        moving |= m
    robin = {}
    if boundary == "robin":
        left = _float(params, "robin_left", 0.0)
        right = _float(params, "robin_right", 0.0)
        amp = _float(params, "robin_amplitude", 0.0)
        if min(left, right, amp) < 0 or amp > min(left, right):
            raise ConfigurationError("Robin coefficients must stay nonnegative")
        if amp:
            f_left = fourier_field(driving, _ROBIN_INDEX)
            f_right = fourier_field(driving, _ROBIN_INDEX + 1)
            robin = {
                "robin_left": lambda theta: left + amp * f_left(theta),
                "robin_right": lambda theta: right + amp * f_right(theta),
            }
            moving = True
        else:
            robin = {"robin_left": left, "robin_right": right}
    elif any(k in params for k in ("robin_left", "robin_right", "robin_amplitude")):
        raise ConfigurationError("Robin keys require boundary = robin")
    return ParabolicCoefficients(
        boundary=boundary, ellipticity=ellipticity, autonomous=not moving, **terms, **robin
    )


def build_propagator(config: ExperimentConfig) -> ConePropagator:
    system = config.system
    if system.type == "delay":
        return DelayPropagator(delay_coefficients(system, config.driving), system.grid)
    return ParabolicPropagator(parabolic_coefficients(system, config.driving), system.grid, system.per_unit)
