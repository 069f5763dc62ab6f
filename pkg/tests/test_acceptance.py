"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line before asserting.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pfloquet import cli, oracles, spectral
from pfloquet.config import load_preset, preset_names
from pfloquet.delay import DelayCoefficients
from pfloquet.driving import DrivingConfig
from pfloquet.parabolic import ParabolicCoefficients
from pfloquet.spectral import DelayPropagator, ParabolicPropagator

TESTS = Path(__file__).parent
OMEGA = DrivingConfig().point([0.3])


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def run_cli(tmp_path, command, preset, *extra):
    out = tmp_path / preset / command
    code = cli.main([command, "--preset", preset, "--out", str(out), "--json-only", *extra])
    return code, json.loads((out / "summary.json").read_text())


def checks(summary):
    return {c["name"]: c for c in summary["checks"]}


def heat_exponent(n, horizon=20):
    prop = ParabolicPropagator(ParabolicCoefficients(diffusion=1.0, autonomous=True), n)
    return spectral.top_exponent(prop, OMEGA, prop.reference(), horizon).value


def test_scalar_delay_exponent(capsys):
    start = time.perf_counter()
    prop = DelayPropagator(DelayCoefficients.constant([[0.0]], [[1.0]]), 200)
    value = spectral.top_exponent(prop, OMEGA, prop.reference(), 200).value
    elapsed = time.perf_counter() - start
    root = oracles.dde_characteristic_root([[0.0]], [[1.0]]).value.real
    gap = abs(value - 0.5671432904)
    ok = gap <= 1e-3 and abs(root - 0.5671432904) <= 1e-10 and elapsed < 10
    verdict(capsys, 1, ok, f"lambda={value:.10f} gap={gap:.2e} time={elapsed:.2f}s")


def test_scalar_ode_limit(capsys):
    a = -0.7
    start = time.perf_counter()
    prop = DelayPropagator(DelayCoefficients.constant([[a]], [[0.0]]), 200)
    value = spectral.top_exponent(prop, OMEGA, prop.reference(), 20).value
    elapsed = time.perf_counter() - start
    gap = abs(value - a)
    verdict(capsys, 2, gap <= 1e-10 and elapsed < 1, f"lambda={value!r} gap={gap:.2e} time={elapsed:.3f}s")


def test_coupled_delay_exponent_and_floquet_segment(capsys, coupled_prop):
    root = oracles.dde_characteristic_root(np.zeros((2, 2)), np.ones((2, 2))).value.real
    value = spectral.top_exponent(coupled_prop, OMEGA, coupled_prop.reference(), 200).value
    w = spectral.pullback_floquet(coupled_prop, OMEGA).vector.reshape(2, -1)
    s = np.linspace(-1.0, 0.0, coupled_prop.grid_size + 1)
    profile = np.vstack([np.exp(root * s)] * 2)
    w = w / w[:, -1:].mean()
    seg_gap = float(np.abs(w - profile).max())
    gap = abs(value - root)
    ok = gap <= 1e-3 and seg_gap <= 1e-4
    verdict(capsys, 3, ok, f"lambda={value:.8f} root={root:.8f} gap={gap:.2e} segment_gap={seg_gap:.2e}")


def test_heat_exponent_richardson_and_separation(capsys, omega, heat_prop):
    h = 1.0 / 100
    closed = -(4 / h**2) * math.sin(math.pi * h / 2) ** 2
    coarse, mid, fine = heat_exponent(49), heat_exponent(99), heat_exponent(199)
    extrapolated = (4 * fine - mid) / 3
    sep = spectral.separation(heat_prop, omega, 40)
    closed_gap = abs(mid - closed)
    rich_gap = abs(extrapolated - (-math.pi**2))
    rel = abs(sep.sigma - 3 * math.pi**2) / (3 * math.pi**2)
    ok = closed_gap <= 1e-6 and rich_gap <= 1e-2 and rel <= 0.05 and abs((4 * mid - coarse) / 3 + math.pi**2) <= 1e-2
    verdict(
        capsys,
        4,
        ok,
        f"closed_form_gap={closed_gap:.2e} richardson={extrapolated:.6f} gap={rich_gap:.2e} sigma={sep.sigma:.4f} rel={rel:.2e}",
    )


@pytest.fixture(scope="module")
def quasi_assumptions(tmp_path_factory):
    return run_cli(tmp_path_factory.mktemp("quasi"), "verify-assumptions", "quasiperiodic-parabolic")


def test_duality(capsys, quasi_assumptions):
    code, summary = quasi_assumptions
    err = summary["duality_relative_error"]
    ok = checks(summary)["duality"]["pass"] and err <= 1e-12 and load_preset("quasiperiodic-parabolic").run.duality_pairs == 100
    verdict(capsys, 5, ok, f"max relative error over 100 pairs={err:.2e}")


def test_forward_adjoint_equality(capsys, quasi_prop):
    _, omega, prop = quasi_prop
    agreement = spectral.exponent_agreement(prop, omega, 200)
    verdict(
        capsys,
        6,
        agreement.gap <= 1e-3,
        f"forward={agreement.forward.value:.8f} adjoint={agreement.adjoint.value:.8f} gap={agreement.gap:.2e}",
    )


def test_focusing_sandwich(capsys, tmp_path):
    margins = {}
    for preset in ("coupled-dde-N2", "cyclic-dde-N3", "positive-dde-N2"):
        code, summary = run_cli(tmp_path, "verify-assumptions", preset)
        assert load_preset(preset).run.focusing_samples == 100
        for name, check in checks(summary).items():
            if name.startswith("focusing-"):
                margins[f"{preset}:{name[9:]}"] = check["margin"]
    variants = {key.split(":")[1] for key in margins}
    ok = variants == {"OA3", "OA4"} and min(margins.values()) >= -1e-9
    detail = " ".join(f"{k}={v:.2e}" for k, v in margins.items())
    verdict(capsys, 7, ok, detail)


def test_initial_condition_independence(capsys, tmp_path):
    spreads = {}
    for preset in preset_names():
        code, summary = run_cli(tmp_path, "estimate-lyapunov", preset)
        assert len(summary["sample_exponents"]) == 11
        spreads[preset] = summary["spread"]
    worst = max(spreads.values())
    verdict(capsys, 8, worst <= 1e-3, f"worst spread={worst:.2e} over {len(spreads)} presets")


def test_comparison_and_sandwich(capsys, tmp_path, quasi_assumptions):
    _, quasi = quasi_assumptions
    _, heat = run_cli(tmp_path, "verify-assumptions", "heat-dirichlet")
    q, hc = checks(quasi), checks(heat)
    worst = min(q["comparison"]["margin"], q["sandwich"]["margin"], hc["comparison"]["margin"], hc["sandwich"]["margin"])
    equality = hc["sandwich-equality"]
    ok = worst >= -1e-12 and equality["pass"] and "sandwich-equality" not in q
    verdict(capsys, 9, ok, f"worst margin over 50 pairs={worst:.2e} equality_gap={1e-12 - equality['margin']:.2e}")


def test_property_suites(capsys):
    start = time.perf_counter()
    proc = subprocess.run(
        [
            sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
            str(TESTS / "test_driving.py"), str(TESTS / "test_delay.py"), str(TESTS / "test_parabolic.py"),
            "-k", "positivity or monotonicity or linearity or cocycle or identity or group_law",
        ],
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - start
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    verdict(capsys, 10, proc.returncode == 0 and elapsed < 120, f"{last} wall={elapsed:.1f}s")


def gauge_gaps(prop, omega, horizon):
    shifted = ParabolicPropagator(prop.coeffs.shifted(1.0), prop.n, prop.per_unit)
    a = spectral.separation(prop, omega, horizon)
    b = spectral.separation(shifted, omega, horizon)
    fa, fb = spectral.floquet_sample(prop, omega), spectral.floquet_sample(shifted, omega)
    return max(
        abs(b.lambda1 - a.lambda1 - 1),
        abs(b.lambda2 - a.lambda2 - 1),
        abs(b.sigma - a.sigma),
        float(np.abs(fb.w - fa.w).max()),
        float(np.abs(fb.w_star - fa.w_star).max()),
    )


def test_gauge_covariance(capsys, preset_setup):
    _, omega, prop = preset_setup("advection-robin")
    robin = gauge_gaps(prop, omega, 200)
    _, omega, prop = preset_setup("quasiperiodic-parabolic")
    quasi = gauge_gaps(prop, omega, 60)
    verdict(capsys, 11, max(robin, quasi) <= 1e-10, f"advection-robin gap={robin:.2e} quasiperiodic gap={quasi:.2e}")


def test_temperedness(capsys, quasi_prop):
    _, omega, prop = quasi_prop
    est = spectral.separation(prop, omega, 200)
    slope = abs(est.temperedness_slope)
    verdict(capsys, 12, slope <= 0.01 and est.sigma > 0, f"|slope|={slope:.2e} sigma={est.sigma:.4f}")
