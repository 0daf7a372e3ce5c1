from pathlib import Path

import numpy as np
import pytest

from burgerslab.characteristics import IntegratorConfig, integrate_ensemble
from burgerslab.fields import FieldSpec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def make_spec(b, u0=(1.0, 0.0), rho0=None):
    data = {"b": b, "u0": u0 if isinstance(u0, dict) else {"family": "constant",
                                                             "value": list(u0)}}
    if rho0 is not None:
        data["rho0"] = rho0
    return FieldSpec.from_dict(data)


CONSTANT_B = {"family": "constant", "b0": 2.0}
SINUSOIDAL_B = {"family": "sinusoidal", "b0": 2.0, "a": 0.5, "k": [1.0, 0.0]}
EXPONENTIAL_B = {"family": "exponential", "b0": 2.0, "lambda": 1.0,
                 "window": [[-1.5, 1.5], [-1.5, 1.5]]}
GAUSSIAN_B = {"family": "gaussian", "b0": 2.0, "a": 0.6, "center": [0.3, -0.2], "sigma": 1.2}


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timings measure integration only."""
    spec = make_spec(SINUSOIDAL_B)
    for mode in ("reduced", "full"):
        integrate_ensemble([[0.0, 0.0]], spec, 0.1, 0.01, IntegratorConfig(), mode=mode)


@pytest.fixture
def sinusoidal():
    return make_spec(SINUSOIDAL_B, (0.6, 0.8))


@pytest.fixture
def constant():
    return make_spec(CONSTANT_B, (1.0, 0.0))


@pytest.fixture
def exponential():
    return make_spec(EXPONENTIAL_B, (1.0, 0.0))


@pytest.fixture
def all_specs():
    return [
        make_spec(CONSTANT_B, (1.0, 0.5)),
        make_spec(SINUSOIDAL_B, (0.6, 0.8)),
        make_spec({"family": "sinusoidal", "b0": 3.0, "a": -1.0, "k": [0.7, -1.3]},
                  {"family": "rotation", "omega": 0.8, "center": [0.1, 0.2]}),
        make_spec(GAUSSIAN_B, {"family": "modulated", "value": [0.5, -1.0],
                               "center": [0.0, 0.5], "sigma": 1.5, "offset": 0.2}),
        make_spec(EXPONENTIAL_B, (0.3, 0.9)),
    ]


def random_points(rng, n, lo=-1.4, hi=1.4):
    return rng.uniform(lo, hi, size=(n, 2))
