import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from burgerslab import asymptotics as asy
from burgerslab.characteristics import IntegratorConfig, integrate_ensemble
from burgerslab.errors import ConfigurationError, PhaseSolveError
from burgerslab.fields import FieldSpec
from burgerslab.harness import fit_order

from conftest import CONSTANT_B, EXPONENTIAL_B, SINUSOIDAL_B, make_spec, random_points


def bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def oblique_spec(b0, a, k1, k2, u1, u2):
    return FieldSpec.from_dict({"b": {"family": "sinusoidal", "b0": b0, "a": a, "k": [k1, k2]},
                                "u0": {"family": "constant", "value": [u1, u2]}})


def test_phase_tilde_constant_b():
    spec = make_spec(CONSTANT_B, (1.0, 0.0))
    assert asy.phase_tilde(spec, [0.3, 0.4], 0.5, 0.1) == pytest.approx(10.0)


def test_theta_constant_b_is_explicit():
    spec = make_spec(CONSTANT_B, (1.0, 0.0))
    sol = asy.solve_theta(spec, [0.0, 0.0], 1.0, 0.1)
    assert sol.theta == pytest.approx(20.0, abs=1e-14)
    assert sol.contraction_factor == 0.0
    assert sol.iterations <= 2


def test_theta_matches_brentq(sinusoidal):
    x, t, eps = np.array([0.4, -0.3]), 0.6, 0.02
    for variant in asy.THETA_VARIANTS:
        sol = asy.solve_theta(sinusoidal, x, t, eps, variant=variant)
        g = lambda th: th - asy.theta_rhs(sinusoidal, x, t, eps, th, variant)
        root = brentq(g, sol.theta - 2, sol.theta + 2, xtol=1e-13)
        assert sol.theta == pytest.approx(root, abs=1e-10)


def test_theta_variants_differ_only_through_B():
    x, t, eps = np.array([0.4, -0.3]), 0.6, 0.02
    along = make_spec(SINUSOIDAL_B, (1.0, 0.0))   # B = 0
    a = asy.solve_theta(along, x, t, eps, variant="derived").theta
    b = asy.solve_theta(along, x, t, eps, variant="paper").theta
    assert a == pytest.approx(b, abs=1e-12)
    across = make_spec(SINUSOIDAL_B, (0.0, 1.0))  # A = 0
    a = asy.solve_theta(across, x, t, eps, variant="derived").theta
    b = asy.solve_theta(across, x, t, eps, variant="paper").theta
    assert abs(a - b) > 1e-3


def test_theta_uniqueness_from_far_start(sinusoidal):
    x, t, eps = np.array([0.1, 0.2]), 0.8, 0.01
    ref = asy.solve_theta(sinusoidal, x, t, eps).theta
    for offset in (-5.0, 3.0, 40.0):
        sol = asy.solve_theta(sinusoidal, x, t, eps, theta0=ref + offset)
        assert sol.theta == pytest.approx(ref, abs=1e-11)


def test_theta_newton_branch_above_switch():
    spec = make_spec({"family": "exponential", "b0": 2.0, "lambda": 1.0}, (1.0, 0.0))
    sol = asy.solve_theta(spec, [0.0, 0.0], 0.95, 1e-2)   # L = 0.95
    assert sol.method == "newton"
    g = lambda th: th - asy.theta_rhs(spec, [0.0, 0.0], 0.95, 1e-2, th)
    assert abs(g(sol.theta)) <= 1e-12


def test_theta_failure_raises():
    spec = make_spec(SINUSOIDAL_B, (0.6, 0.8))
    with pytest.raises(PhaseSolveError) as info:
        asy.solve_theta(spec, [0.0, 0.0], 0.5, 1e-2, max_iter=1, tol=1e-300)
    assert info.value.contraction_factor >= 0
    with pytest.raises(ConfigurationError):
        asy.solve_theta(spec, [0.0, 0.0], 0.5, 1e-2, variant="printed")


def test_solve_theta_many_matches_scalar(sinusoidal):
    x = random_points(np.random.default_rng(9), 12)
    th, iters, res, L = asy.solve_theta_many(sinusoidal, x, 0.7, 0.05)
    for i in (0, 5, 11):
        assert th[i] == pytest.approx(asy.solve_theta(sinusoidal, x[i], 0.7, 0.05).theta,
                                      abs=1e-11)
    assert np.all(res <= 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.5, 4.0), st.floats(-1.0, 1.0), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 1.0), st.floats(1e-3, 0.5),
       st.floats(-2, 2), st.floats(-2, 2), st.sampled_from(asy.THETA_VARIANTS))
def test_theta_agrees_with_bisection(b0, a, k1, k2, u1, u2, t, eps, x1, x2, variant):
    spec = oblique_spec(b0, a, k1, k2, u1, u2)
    x = np.array([x1, x2])
    _, _, _, _, A, B = asy._local(spec, x)
    L = t * (abs(A) + abs(B))
    assume(L < 0.9)
    sol = asy.solve_theta(spec, x, t, eps, variant=variant)
    c = spec.b.value(x) * t / eps
    g = lambda th: th - asy.theta_rhs(spec, x, t, eps, th, variant)
    R = t * math.hypot(A, B)
    root = bisect(g, c - R - 1e-9, c + R + 1e-9)
    assert sol.theta == pytest.approx(root, abs=1e-9 * max(1.0, abs(c)))


def test_prediction_order_labels(sinusoidal):
    p = asy.predict(sinusoidal, [0.0, 0.0], 0.5, 0.01)
    assert p.order == "eps" and p.phase_used == "tilde"
    q = asy.predict(sinusoidal, [0.0, 0.0], 0.5, 0.01, phi=1.0)
    assert q.order == "eps^2" and q.phase_used == "numeric"


def test_velocity_prediction_keeps_speed(all_specs):
    x = random_points(np.random.default_rng(10), 50)
    for spec in all_specs:
        u0, _ = spec.u0.evaluate(x)
        for frame in asy.FRAMES:
            u = asy.predict_u(spec, x, 0.3, 0.05, frame)
            np.testing.assert_allclose(np.linalg.norm(u, axis=1), np.linalg.norm(u0, axis=1),
                                       rtol=1e-13, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-1.4, 1.4), st.floats(0, 2), st.floats(1e-3, 1),
       st.floats(-100, 100))
def test_jacobian_prediction_lower_bound(x1, x2, t, eps, phi):
    spec = make_spec(EXPONENTIAL_B, (0.3, 0.9))
    x = np.array([x1, x2])
    _, J = asy.approx_DX_J(spec, x, t, eps, phi)
    bound = 1.0 - t * asy.lifespan_prediction(spec, x) ** -1
    assert J >= bound - 1e-12


def test_lifespan_prediction():
    assert asy.lifespan_prediction(make_spec(EXPONENTIAL_B, (1.0, 0.0)), [0.3, 0.0]) == 1.0
    assert asy.lifespan_prediction(make_spec(CONSTANT_B), [0.0, 0.0]) == math.inf


def test_rho_variants():
    A, B, t = 0.3, -0.2, 0.5
    assert asy.rho_factor(A, B, t, 0.0, "theorem_form") == pytest.approx(1 + t * A)
    assert asy.rho_factor(A, B, t, 0.0, "prop_form") == pytest.approx(1 - t * B)
    with pytest.raises(ConfigurationError):
        asy.rho_factor(A, B, t, 0.0, "other")


def test_trajectory_expansion_is_second_order(sinusoidal):
    seeds = random_points(np.random.default_rng(11), 6, -1.0, 1.0)
    eps_list = [0.04, 0.02, 0.01, 0.005]
    errs = []
    for eps in eps_list:
        ens = integrate_ensemble(seeds, sinusoidal, eps, 0.5, IntegratorConfig(eta=40))
        pred = asy.approx_X(sinusoidal, seeds[None], ens.times[:, None], eps, ens.phi)
        errs.append(np.abs(ens.X - pred).max())
    assert fit_order(errs, eps_list).slope == pytest.approx(2.0, abs=0.3)


def test_jacobian_expansion_is_first_order(sinusoidal):
    seeds = random_points(np.random.default_rng(12), 6, -1.0, 1.0)
    eps_list = [0.04, 0.02, 0.01, 0.005]
    errs = []
    for eps in eps_list:
        ens = integrate_ensemble(seeds, sinusoidal, eps, 0.5, IntegratorConfig())
        DX, J = asy.approx_DX_J(sinusoidal, seeds[None], ens.times[:, None], eps, ens.phi)
        errs.append(max(np.abs(ens.DX - DX).max(), np.abs(ens.jacobian - J).max()))
    assert fit_order(errs, eps_list).slope == pytest.approx(1.0, abs=0.2)
