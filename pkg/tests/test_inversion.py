import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burgerslab.characteristics import IntegratorConfig, integrate_ensemble
from burgerslab.errors import ConfigurationError, InversionError
from burgerslab.fields import DomainSample
from burgerslab.inversion import eulerian_fields, invert_many, invert_X

from conftest import EXPONENTIAL_B, make_spec


def test_constant_b_preimage_closed_form(constant):
    x, t, eps = np.array([0.2, 0.1]), 0.7, 0.05
    a = 2.0 * t / eps
    expected = x - eps / 2.0 * np.array([math.sin(a), 1 - math.cos(a)])
    np.testing.assert_allclose(invert_X(constant, x, t, eps), expected, atol=1e-10)


def test_time_zero_is_identity(sinusoidal):
    x = np.array([[0.1, 0.2], [-1.0, 0.5]])
    res = invert_many(sinusoidal, x, 0.0, 0.1)
    np.testing.assert_array_equal(res.preimages, x)
    assert res.converged.all()


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2), st.floats(0.05, 0.8),
       st.sampled_from([0.05, 0.02, 0.01]))
def test_round_trip(y1, y2, t, eps):
    spec = make_spec(EXPONENTIAL_B, (0.3, 0.9))
    y = np.array([[y1, y2]])
    cfg = IntegratorConfig()
    x = integrate_ensemble(y, spec, eps, t, cfg, times=[t]).X[-1]
    res = invert_many(spec, x, t, eps, cfg)
    assert not res.failures
    assert res.residuals[0] <= 1e-10
    # before the caustic time the flow is injective, so the preimage is y
    np.testing.assert_allclose(res.preimages, y, atol=1e-8)


def test_failures_are_recorded_not_raised(sinusoidal):
    x = np.array([[0.1, 0.2], [0.3, -0.4]])
    res = invert_many(sinusoidal, x, 0.5, 0.01, max_iter=1, tol=1e-300)
    assert set(res.failures) == {0, 1}
    assert np.isnan(res.preimages).all()
    with pytest.raises(InversionError) as info:
        invert_X(sinusoidal, x[0], 0.5, 0.01, tol=1e-300)
    assert info.value.node == (0.1, 0.2)


def test_node_results_do_not_depend_on_batch(sinusoidal):
    x = np.array([[0.1, 0.2], [0.3, -0.4], [-0.9, 0.7]])
    batch = invert_many(sinusoidal, x, 0.6, 0.02)
    alone = invert_many(sinusoidal, x[1:2], 0.6, 0.02)
    np.testing.assert_array_equal(batch.preimages[1], alone.preimages[0])
    assert batch.newton_iters[1] == alone.newton_iters[0]


def test_eulerian_constant_b(constant):
    grid = DomainSample(((-0.5, 0.5), (-0.5, 0.5)), 3)
    t, eps = 0.4, 0.05
    fr = eulerian_fields(constant, grid, t, eps)
    a = 2.0 * t / eps
    np.testing.assert_allclose(fr.u_values, np.tile([math.cos(a), math.sin(a)], (9, 1)),
                               atol=1e-9)
    np.testing.assert_allclose(fr.rho_values, 1.0, atol=1e-12)
    assert fr.converged_fraction == 1.0 and not fr.partial


def test_eulerian_density_conventions():
    rho0 = {"family": "gaussian", "b0": 1.0, "a": 0.5, "center": [0.0, 0.0], "sigma": 1.0}
    spec = make_spec(EXPONENTIAL_B, (0.3, 0.9), rho0)
    grid = DomainSample(((-0.5, 0.5), (-0.5, 0.5)), 3)
    cons = eulerian_fields(spec, grid, 0.5, 0.02, convention="conservative")
    lit = eulerian_fields(spec, grid, 0.5, 0.02, convention="paper_literal")
    r0 = spec.rho0.value(cons.preimages)
    np.testing.assert_allclose(cons.rho_values, r0 / cons.jacobians, rtol=1e-13)
    np.testing.assert_allclose(lit.rho_values * cons.rho_values, r0 ** 2, rtol=1e-12)
    with pytest.raises(ConfigurationError):
        eulerian_fields(spec, grid, 0.5, 0.02, convention="mass")


def test_eulerian_csv(tmp_path, sinusoidal):
    grid = DomainSample(((-0.5, 0.5), (-0.5, 0.5)), 2)
    fr = eulerian_fields(sinusoidal, grid, 0.3, 0.05)
    path = tmp_path / "e.csv"
    fr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,u1,u2,rho,preimage1,preimage2,newton_iters"
    assert len(lines) == 5
