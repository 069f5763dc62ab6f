"""Command-line experiment runner.

Each subcommand builds the driving system and the cocycle from a config file
or a shipped preset, runs estimators and checkers, and writes a JSON summary
(always) plus CSV traces (unless ``--json-only``).  Exit codes: 0 when every
check passes, 1 on a failed check, 2 on a configuration error, 3 when the
output cannot be written.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import delay, oracles, parabolic, spectral
from .config import ExperimentConfig, load_config, load_preset, preset_names
from .driving import OmegaPoint, advance, orbit_coords, sample_omega
from .errors import ConfigurationError, ContractError, PfloquetError, UnsupportedOperation
from .presets import build_propagator, delay_coefficients
from .report import RunResults, emit_report

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

SPREAD_TOLERANCE = 1e-3
DUALITY_TOLERANCE = 1e-12
ORDER_TOLERANCE = 1e-12
FOCUSING_TOLERANCE = 1e-9
TEMPEREDNESS_TOLERANCE = 1e-2
EQUIVARIANCE_TOLERANCE = 1e-8
ORBIT_TIMES = tuple(range(-5, 6))


class _Run:
    """Config, driving point and propagator shared by the subcommand bodies."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.run = config.run
        self.seed = config.run.seed
        self.omega: OmegaPoint = sample_omega(config.driving, self.seed)
        self.prop = build_propagator(config)
        self.results = RunResults(system=config.name, omega_seed=self.seed)
        self.results.extras["system_type"] = config.system.type
        self.results.extras["omega"] = [float(c) for c in self.omega.coords]

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    @property
    def is_delay(self) -> bool:
        return self.config.system.type == "delay"


def _trace_table(trace) -> tuple:
    return ("step", "log_growth", "running_average"), list(trace)


# ---------------------------------------------------------------------------
# subcommands


def estimate_lyapunov(ctx: _Run) -> RunResults:
    res, prop, run = ctx.results, ctx.prop, ctx.run
    starts = np.column_stack([prop.reference(), ctx.rng(1).random((prop.dim, run.samples))])
    estimates = spectral.top_exponents(prop, ctx.omega, starts, run.horizon, run.burn_in)
    main = estimates[0]
    res.lambda1 = main.value
    values = np.array([e.value for e in estimates])
    spread = float(values.max() - values.min()) if np.all(np.isfinite(values)) else math.inf
    res.add_check("initial-condition-spread", spread <= SPREAD_TOLERANCE, SPREAD_TOLERANCE - spread)
    res.extras["spread"] = spread
    res.extras["sample_exponents"] = values
    res.extras["burn_in"] = main.burn_in
    res.tables["lyapunov_trace.csv"] = _trace_table(main.trace)
    if prop.supports_adjoint:
        dual = spectral.adjoint_exponent(prop, ctx.omega, prop.dual_reference(), run.horizon, run.burn_in)
        res.lambda1_adjoint = dual.value
        gap = abs(main.value - dual.value)
        res.add_check("forward-adjoint-agreement", gap <= run.oracle_tolerance, run.oracle_tolerance - gap)
        res.tables["adjoint_trace.csv"] = _trace_table(dual.trace)
    return res


def floquet(ctx: _Run) -> RunResults:
    res, prop, run = ctx.results, ctx.prop, ctx.run
    forward = spectral.pullback_floquet(prop, ctx.omega, run.pullback_depth, run.tolerance)
    w = forward.vector
    res.add_check("pullback-converged", forward.residual <= run.tolerance, run.tolerance - forward.residual)
    res.add_check("floquet-positive", bool(np.all(w >= 0)), float(w.min()))
    res.extras["pullback_depth"] = forward.depth
    columns = {"w": w}
    if prop.supports_adjoint:
        dual = spectral.dual_floquet(prop, ctx.omega, run.pullback_depth, run.tolerance)
        pairing = prop.pairing(w, dual.vector)
        res.add_check("dual-pullback-converged", dual.residual <= run.tolerance, run.tolerance - dual.residual)
        res.add_check("floquet-pairing-positive", pairing > 0, pairing)
        res.extras["dual_pullback_depth"] = dual.depth
        res.extras["pairing"] = pairing
        columns["w_star"] = dual.vector
    orbit = spectral.entire_orbit(prop, ctx.omega, ORBIT_TIMES, run.pullback_depth, run.tolerance)
    later = spectral.pullback_floquet(prop, advance(ctx.omega, 1), run.pullback_depth, run.tolerance)
    drift = spectral.hilbert_metric(orbit.unit_states[1], later.vector)
    res.add_check("floquet-equivariance", drift <= EQUIVARIANCE_TOLERANCE, EQUIVARIANCE_TOLERANCE - drift)
    names = list(columns)
    res.tables["floquet_vector.csv"] = (
        ["index"] + names,
        [[i] + [float(columns[k][i]) for k in names] for i in range(prop.dim)],
    )
    res.tables["entire_orbit.csv"] = (
        ("time", "log_scale", "state_min", "state_max"),
        [(t, orbit.log_scales[t], float(orbit.unit_states[t].min()), float(orbit.unit_states[t].max())) for t in orbit.times],
    )
    res.tables["pullback_residuals.csv"] = (("depth", "hilbert_residual"), list(enumerate(forward.residual_trace, 1)))
    return res


def separation(ctx: _Run) -> RunResults:
    res, prop, run = ctx.results, ctx.prop, ctx.run
    est = spectral.separation(
        prop, ctx.omega, run.horizon, run.burn_in, run.refresh, run.pullback_depth, run.tolerance, ctx.seed
    )
    res.lambda1, res.lambda2 = est.lambda1, est.lambda2
    res.sigma = est.lambda1 - est.lambda2
    res.add_check("separation-positive", res.sigma > 0, res.sigma)
    slope = abs(est.temperedness_slope)
    res.add_check("temperedness", slope <= TEMPEREDNESS_TOLERANCE, TEMPEREDNESS_TOLERANCE - slope)
    res.extras["temperedness_slope"] = est.temperedness_slope
    res.tables["temperedness.csv"] = (("time", "log_projection_norm_over_t"), list(est.temperedness))
    return res


def _delay_assumptions(ctx: _Run) -> None:
    res, run = ctx.results, ctx.run
    coeffs = delay_coefficients(ctx.config.system, ctx.config.driving)
    coop = delay.check_cooperativity(coeffs, ctx.omega, horizon=coeffs.n_components + 2)
    res.add_check("cooperativity", coop.passed, coop.margin)
    variants = ("OA3", "OA4") if run.variant == "both" else (run.variant,)
    all_constants = {}
    for variant in variants:
        if variant == "OA3":
            irr = delay.check_irreducibility(coeffs, ctx.omega)
            res.add_check("irreducibility", irr.passed, irr.margin)
            res.extras["chains"] = [list(c) for c in irr.chains]
        else:
            pos = delay.check_positivity_oa4(coeffs, ctx.omega)
            res.add_check("delayed-positivity", pos.passed, pos.margin)
        try:
            constants = delay.compute_assumption_constants(coeffs, ctx.omega, variant)
        except ContractError as exc:
            res.add_check(f"constants-{variant}", False, math.nan)
            res.extras[f"constants_{variant}_error"] = str(exc)
            continue
        all_constants[variant] = constants.as_dict()
        report = delay.verify_focusing(
            coeffs, ctx.omega, constants, run.focusing_samples, ctx.config.system.grid, ctx.seed, FOCUSING_TOLERANCE
        )
        res.add_check(f"focusing-{variant}", report.passed, min(report.lower_margin, report.upper_margin))
    if all_constants:
        first = all_constants[variants[0]] if variants[0] in all_constants else next(iter(all_constants.values()))
        res.extras["beta_lower"] = first["beta_lower"]
        res.extras["beta_upper"] = first["beta_upper"]
        res.extras["kappa"] = first["kappa"]
        res.extras["constants"] = all_constants
        res.tables["constants.csv"] = (
            ("variant", "horizon", "delta_lower", "delta_upper", "a_lower", "a_upper", "beta_lower", "beta_upper", "kappa"),
            [
                (v, c["horizon"], c["delta_lower"], c["delta_upper"], c["a_lower"], c["a_upper"],
                 c["beta_lower"], c["beta_upper"], c["kappa"])
                for v, c in all_constants.items()
            ],
        )


def _ordered_perturbation(rng: np.random.Generator):
    """Nonnegative space-dependent bump added to ``c0`` to build an ordered pair."""
    base, amp = rng.random(2)
    freq = int(rng.integers(1, 4))
    phase = float(rng.random())

    def bump(theta, x):
        shape = 0.5 * (1.0 + np.cos(2.0 * np.pi * (freq * np.asarray(x) + phase)))
        return np.broadcast_to(base + amp * shape, (np.shape(theta)[0], np.size(x)))

    return bump


def _plus(f, g):
    def total(theta, x):
        return parabolic.evaluate_field(f, theta, x) + g(theta, x)

    return total


def _space_independent_c0(coeffs: parabolic.ParabolicCoefficients, omega: OmegaPoint, n: int) -> bool:
    times = [Fraction(j, 16) for j in range(17)]
    values = parabolic.evaluate_field(coeffs.zero_order, orbit_coords(omega, times), parabolic.grid_nodes(n, coeffs.boundary))
    return bool(np.all(np.ptp(values, axis=1) == 0))


def _parabolic_assumptions(ctx: _Run) -> None:
    res, run, prop = ctx.results, ctx.run, ctx.prop
    coeffs, n, per_unit = prop.coeffs, prop.n, prop.per_unit
    omega = ctx.omega

    mat = prop.unit_matrix(omega)
    res.add_check("positivity", bool(mat.min() >= 0), float(mat.min()))

    rng = ctx.rng(2)
    u = rng.standard_normal((n, run.duality_pairs))
    v = rng.standard_normal((n, run.duality_pairs))
    forward = parabolic.propagate(coeffs, omega, 1, u, per_unit)
    backward = parabolic.propagate_adjoint(coeffs, advance(omega, 1), 1, v, per_unit)
    h = prop.h
    lhs = h * np.einsum("ij,ij->j", forward, v)
    rhs = h * np.einsum("ij,ij->j", u, backward)
    scale = np.sqrt(h * (u * u).sum(axis=0)) * np.sqrt(h * (v * v).sum(axis=0))
    duality = float((np.abs(lhs - rhs) / scale).max())
    res.add_check("duality", duality <= DUALITY_TOLERANCE, DUALITY_TOLERANCE - duality)
    res.extras["duality_relative_error"] = duality

    rng = ctx.rng(3)
    worst_cmp, worst_sandwich = math.inf, math.inf
    rows = []
    for k in range(run.comparison_pairs):
        second = coeffs.with_zero_order(_plus(coeffs.zero_order, _ordered_perturbation(rng)))
        u0 = rng.random(n)
        result = parabolic.check_comparison(coeffs, second, omega, 1, u0, per_unit)
        worst_cmp = min(worst_cmp, result.margin)
        worst_sandwich = min(worst_sandwich, result.sandwich_margin)
        rows.append((k, result.margin, result.sandwich_margin))
    res.add_check("comparison", worst_cmp >= -ORDER_TOLERANCE, worst_cmp)
    res.add_check("sandwich", worst_sandwich >= -ORDER_TOLERANCE, worst_sandwich)
    res.tables["comparison.csv"] = (("pair", "comparison_margin", "sandwich_margin"), rows)

    if _space_independent_c0(coeffs, omega, n):
        gap = parabolic.check_sandwich(coeffs, omega, 1, prop.reference(), per_unit).equality_gap
        res.add_check("sandwich-equality", gap <= ORDER_TOLERANCE, ORDER_TOLERANCE - gap)

    rng = ctx.rng(4)
    quotients = [parabolic.harnack_quotient(coeffs, omega, prop.reference(), 1, per_unit)]
    quotients += [parabolic.harnack_quotient(coeffs, omega, rng.random(n), 1, per_unit) for _ in range(run.samples)]
    worst = max(quotients)
    res.add_check("harnack-finite", math.isfinite(worst), 1.0 / worst)
    res.extras["harnack_max"] = worst


def verify_assumptions(ctx: _Run) -> RunResults:
    if ctx.is_delay:
        _delay_assumptions(ctx)
    else:
        _parabolic_assumptions(ctx)
    return ctx.results


def _periodic_period(ctx: _Run) -> int | None:
    driving = ctx.config.driving
    if driving.kind != "periodic":
        return None
    period = 1.0 / driving.alpha[0]
    if abs(period - round(period)) > 1e-12 or round(period) < 1:
        raise ConfigurationError("the monodromy oracle needs an integer period")
    return int(round(period))


def oracle_compare(ctx: _Run) -> RunResults:
    res, prop, run = ctx.results, ctx.prop, ctx.run
    references = {}
    period = _periodic_period(ctx)
    system = ctx.config.system
    if ctx.is_delay and system.profile == "constant":
        coeffs = delay_coefficients(system, ctx.config.driving)
        a, b = coeffs.matrices(ctx.omega, [0])
        root = oracles.dde_characteristic_root(a[0], b[0])
        references["characteristic-root"] = root.value.real
        res.extras["characteristic_residual"] = root.residual
        res.extras["perron_vector"] = root.perron_vector
    elif not ctx.is_delay and prop.coeffs.autonomous:
        op = parabolic.assemble(prop.coeffs, ctx.omega, 0, prop.n)
        references["elliptic-eigenvalue"], _ = oracles.elliptic_principal_eig(op)
        if system.profile == "heat" and prop.coeffs.boundary == "dirichlet":
            d = prop.coeffs.diffusion.constant
            c = prop.coeffs.zero_order.constant
            references["closed-form"] = c - d * (4.0 / prop.h**2) * math.sin(math.pi * prop.h / 2) ** 2
    if period is not None:
        references["monodromy"] = oracles.periodic_monodromy(prop, ctx.omega, period)
    if not references:
        raise ConfigurationError(
            "no oracle applies: need constant delay coefficients, an autonomous parabolic problem or periodic driving"
        )
    estimate = spectral.top_exponent(prop, ctx.omega, prop.reference(), run.horizon, run.burn_in)
    res.lambda1 = estimate.value
    res.tables["lyapunov_trace.csv"] = _trace_table(estimate.trace)
    for name, value in references.items():
        gap = abs(estimate.value - value)
        res.add_check(f"oracle-{name}", gap <= run.oracle_tolerance, run.oracle_tolerance - gap)
    res.extras["oracle_values"] = references
    return res


COMMANDS = {
    "estimate-lyapunov": estimate_lyapunov,
    "floquet": floquet,
    "separation": separation,
    "verify-assumptions": verify_assumptions,
    "oracle-compare": oracle_compare,
}


# ---------------------------------------------------------------------------
# argument handling


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", metavar="PATH", help="experiment config file")
    source.add_argument("--preset", metavar="NAME", help="shipped preset name")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=_seed, metavar="U64", help="override the run seed")
    common.add_argument("--json-only", action="store_true", help="skip CSV traces")

    parser = argparse.ArgumentParser(prog="pfloquet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("_", " "))
    sub.add_parser("list-presets", help="print the shipped preset names")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else load_preset(args.preset)
    if args.seed is not None:
        config = replace(config, run=replace(config.run, seed=args.seed))
    return config


def _output_dir(args, config: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.outputs.directory) / config.name / args.command


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command == "list-presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    ctx = None
    try:
        config = _load(args)
        ctx = _Run(config)
        results = COMMANDS[args.command](ctx)
    except (ConfigurationError, ContractError, UnsupportedOperation) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PfloquetError as exc:
        if ctx is None:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        results = ctx.results
        results.add_check(args.command, False, math.nan)
        results.extras["error"] = f"{type(exc).__name__}: {exc}"
    write_csv = "csv" in config.outputs.formats and not args.json_only
    try:
        path = emit_report(results, _output_dir(args, config), write_traces=write_csv)
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    for check in results.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name} margin={check.margin:.3e}")
    print(f"summary written to {path}")
    if not results.passed:
        print(f"failing checks: {', '.join(results.failing())}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
