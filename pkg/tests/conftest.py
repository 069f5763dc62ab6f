import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pfloquet.config import load_preset
from pfloquet.delay import DelayCoefficients
from pfloquet.driving import DrivingConfig, sample_omega
from pfloquet.parabolic import ParabolicCoefficients
from pfloquet.presets import build_propagator
from pfloquet.spectral import DelayPropagator, ParabolicPropagator

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def omega():
    return DrivingConfig().point([0.3])


@pytest.fixture(scope="session")
def quasi_driving():
    return DrivingConfig(kind="random-fourier", alpha=(1.0, np.sqrt(2.0)), modes=6, decay=0.6, seed=3)


@pytest.fixture(scope="session")
def quasi_omega(quasi_driving):
    return sample_omega(quasi_driving, 0)


@pytest.fixture(scope="session")
def scalar_prop():
    return DelayPropagator(DelayCoefficients.constant([[0.0]], [[1.0]]), 200)


@pytest.fixture(scope="session")
def coupled_prop():
    return DelayPropagator(DelayCoefficients.constant(np.zeros((2, 2)), np.ones((2, 2))), 200)


@pytest.fixture(scope="session")
def heat_prop():
    return ParabolicPropagator(ParabolicCoefficients(diffusion=1.0, autonomous=True), 99)


@pytest.fixture(scope="session")
def preset_setup():
    """Config, driving point and propagator per preset, built once per session."""
    cache = {}

    def get(name):
        if name not in cache:
            cfg = load_preset(name)
            cache[name] = (cfg, sample_omega(cfg.driving, cfg.run.seed), build_propagator(cfg))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def quasi_prop(preset_setup):
    return preset_setup("quasiperiodic-parabolic")
