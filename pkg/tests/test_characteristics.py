import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burgerslab import characteristics as ch
from burgerslab.characteristics import (IntegratorConfig, detect_caustic, integrate,
                                        integrate_ensemble, jacobian_det, rho_along, rho_direct)
from burgerslab.errors import CausticCrossedError, ConfigurationError, DomainExitError
from burgerslab.fields import DomainSample, perp

from conftest import CONSTANT_B, EXPONENTIAL_B, make_spec, random_points


def closed_form_constant(x0, t, eps, b0=2.0):
    # u0 = (1, 0): X' = (cos, sin) of b0 t / eps
    a = b0 * t / eps
    return np.column_stack([x0[0] + eps / b0 * np.sin(a), x0[1] + eps / b0 * (1 - np.cos(a))])


def test_constant_b_matches_closed_form(constant):
    x0 = np.array([0.3, -0.2])
    tr = integrate(x0, constant, 1e-2, 1.0, IntegratorConfig())
    np.testing.assert_allclose(tr.X, closed_form_constant(x0, tr.times, 1e-2), atol=1e-9)
    np.testing.assert_allclose(tr.phi, 2.0 * tr.times, rtol=1e-12)
    np.testing.assert_allclose(tr.jacobian, 1.0, atol=1e-12)


def test_kernel_matches_numpy_reference(all_specs):
    eps, h, n = 0.05, 1e-3, 200
    cfg = IntegratorConfig(h_max=h, eta=1e-6)  # h_max sets the step
    x0 = random_points(np.random.default_rng(5), 4, -1.0, 1.0)
    for spec in all_specs:
        for mode, rhs in (("reduced", ch.rhs_reduced_batch), ("full", ch.rhs_full_batch)):
            data = ch._SeedData(spec, x0)
            s = ch._initial_state(data, mode)
            for _ in range(n):
                s = ch._rk_step(rhs, s, h, ch._TABLEAUS["rk4"], data, eps)
            ens = integrate_ensemble(x0, spec, eps, n * h, cfg, mode=mode, times=[n * h])
            np.testing.assert_allclose(ens.X[-1], s[0:2].T, rtol=0, atol=1e-12)
            np.testing.assert_allclose(ens.rho_ratio[-1], np.exp(s[-1]), rtol=1e-11)


def test_rhs_reduced_single_particle(sinusoidal):
    st0 = ch.ParticleState(np.zeros(2), 0.0, np.zeros(2), 0.0, np.eye(2), np.zeros(2),
                           np.array([0.6, 0.8]))
    d = ch.rhs_reduced(st0, sinusoidal, 0.1)
    np.testing.assert_allclose(d["X"], [0.6, 0.8])
    assert d["phi"] == pytest.approx(2.0)
    np.testing.assert_allclose(d["Dphi"], [0.5, 0.0])


def test_batch_independence(sinusoidal):
    seeds = random_points(np.random.default_rng(6), 7)
    cfg = IntegratorConfig()
    ens = integrate_ensemble(seeds, sinusoidal, 0.02, 0.5, cfg)
    for i in (0, 3, 6):
        alone = integrate(seeds[i], sinusoidal, 0.02, 0.5, cfg)
        np.testing.assert_array_equal(alone.X, ens.X[:, i])
        np.testing.assert_array_equal(alone.DX, ens.DX[:, i])


def test_reduced_and_full_agree(sinusoidal):
    seeds = random_points(np.random.default_rng(7), 5)
    cfg = IntegratorConfig(eta=40)
    red = integrate_ensemble(seeds, sinusoidal, 0.02, 0.8, cfg, mode="reduced")
    full = integrate_ensemble(seeds, sinusoidal, 0.02, 0.8, cfg, mode="full")
    np.testing.assert_allclose(full.X, red.X, atol=1e-7)
    np.testing.assert_allclose(full.DX, red.DX, atol=1e-5)
    np.testing.assert_allclose(full.u, red.u, atol=1e-6)


def test_rk4_converges_at_fourth_order(sinusoidal):
    x0 = np.array([0.2, 0.1])
    ref = integrate(x0, sinusoidal, 0.05, 0.5, IntegratorConfig(eta=1280)).X[-1]
    errs = [np.abs(integrate(x0, sinusoidal, 0.05, 0.5, IntegratorConfig(eta=e)).X[-1] - ref).max()
            for e in (20, 40, 80)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.5), rates


def test_rk38_agrees_with_rk4(sinusoidal):
    x0 = np.array([0.2, 0.1])
    a = integrate(x0, sinusoidal, 0.05, 0.5, IntegratorConfig(method="rk4", eta=80)).X
    b = integrate(x0, sinusoidal, 0.05, 0.5, IntegratorConfig(method="rk38", eta=80)).X
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_speed_is_conserved_in_full_mode(sinusoidal):
    seeds = random_points(np.random.default_rng(8), 16)
    ens = integrate_ensemble(seeds, sinusoidal, 1e-2, 1.0, IntegratorConfig(eta=40), mode="full")
    assert ens.speed_drift(sinusoidal).max() <= 1e-7


def test_direct_density_matches_conservative_jacobian(sinusoidal):
    rho0 = {"family": "gaussian", "b0": 1.0, "a": 0.5, "center": [0.0, 0.0], "sigma": 1.0}
    spec = make_spec({"family": "sinusoidal", "b0": 2.0, "a": 0.5, "k": [1.0, 0.0]},
                     (0.6, 0.8), rho0)
    tr = integrate([0.1, 0.4], spec, 1e-2, 1.0, IntegratorConfig())
    np.testing.assert_allclose(rho_direct(tr, spec), rho_along(tr, spec, "conservative"),
                               rtol=1e-9)
    assert np.abs(rho_along(tr, spec, "paper_literal")
                  - rho_along(tr, spec, "conservative")).max() > 1e-3


def test_rho_along_stops_at_caustic(exponential):
    tr = integrate([0.0, 0.0], exponential, 1e-3, 1.2, IntegratorConfig())
    assert tr.jacobian.min() < 0
    with pytest.raises(CausticCrossedError):
        rho_along(tr, exponential)
    with pytest.raises(ConfigurationError):
        ch.rho_from_jacobian(1.0, 1.0, "mass")


def test_domain_exit_reports_time(constant):
    spec = make_spec(CONSTANT_B, (1.0, 0.0))
    dom = DomainSample(((-1, 1), (-1, 1)), 5)
    with pytest.raises(DomainExitError) as info:
        integrate([0.995, 0.0], spec, 0.1, 1.0, IntegratorConfig(), domain=dom)
    assert 0 < info.value.exit_time < 0.1
    with pytest.raises(DomainExitError) as info:
        integrate([2.0, 0.0], spec, 0.1, 1.0, IntegratorConfig(), domain=dom)
    assert info.value.exit_time == 0.0


def test_invalid_inputs(constant):
    with pytest.raises(ValueError):
        integrate([0, 0], constant, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        integrate([0, 0], constant, 0.1, 1.0, mode="lagrange")
    with pytest.raises(ConfigurationError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        integrate([0, 0], constant, 0.1, 1.0, times=[0.5, 0.2])


def test_drift_matches_guiding_centre_average():
    # guiding centre G = X - (eps/b(X)) u^perp removes the fast rotation
    # exactly for constant b; its mean velocity should be -eps * v
    for u0 in ((0.0, 1.0), (1.0, 0.0)):
        spec = make_spec(EXPONENTIAL_B, u0)
        eps = 1e-3
        tr = integrate([0.0, 0.0], spec, eps, 0.2, IntegratorConfig(),
                       times=np.linspace(0, 0.2, 2001))
        b = spec.b.value(tr.X)
        G = tr.X - (eps / b)[:, None] * perp(tr.u)
        slope = np.polyfit(tr.times, G, 1)[0]
        np.testing.assert_allclose(slope / -eps, [0.0, 0.25], atol=1e-3)


def test_caustic_exponential_matches_prediction(exponential):
    res = detect_caustic([[0.0, 0.0]], exponential, 1e-3, IntegratorConfig(), 2.0)
    assert res.t_eps == pytest.approx(1.0, rel=0.01)
    assert res.argmin_seed == (0.0, 0.0)


def test_caustic_picks_earliest_seed():
    spec = make_spec({"family": "sinusoidal", "b0": 2.0, "a": 1.5, "k": [1.0, 0.0]}, (1.0, 0.0))
    seeds = [[math.pi / 2, 0.0], [0.0, 0.0], [2.5, 0.3]]
    res = detect_caustic(seeds, spec, 1e-2, IntegratorConfig(), 3.0)
    # |grad log b| = 1.5/2 at x1 = 0 is the largest, so that seed folds first
    assert res.argmin_seed == (0.0, 0.0)
    assert res.t_eps == pytest.approx(2.0 / 1.5, rel=0.05)


def test_no_caustic_for_constant_b(constant):
    res = detect_caustic([[0.0, 0.0], [1.0, 1.0]], constant, 1e-2, IntegratorConfig(), 1.0)
    assert res.t_eps is None
    assert res.min_jacobian == pytest.approx(1.0, abs=1e-10)


def test_jacobian_det():
    assert jacobian_det(np.array([[2.0, 1.0], [1.0, 3.0]])) == 5.0
    stack = np.broadcast_to(np.eye(2), (3, 4, 2, 2))
    assert jacobian_det(stack).shape == (3, 4)


def test_trajectory_csv(tmp_path, constant):
    tr = integrate([0, 0], constant, 0.1, 0.5, times=np.linspace(0, 0.5, 11))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,X1,X2,phi,DX11,DX12,DX21,DX22,J,u1,u2"
    assert len(lines) == 12


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-1.4, 1.4), st.floats(5e-3, 0.2))
def test_reduced_mode_speed_and_confinement(x1, x2, eps):
    spec = make_spec(EXPONENTIAL_B, (0.3, 0.9))
    tr = integrate([x1, x2], spec, eps, 0.3, IntegratorConfig(eta=10))
    speed = math.hypot(0.3, 0.9)
    np.testing.assert_allclose(np.linalg.norm(tr.u, axis=1), speed, rtol=1e-14)
    # |X - x| <= |u0| t always; the oscillation alone is <= 2 eps |u0| / b_min
    assert np.all(np.linalg.norm(tr.X - [x1, x2], axis=1) <= speed * tr.times + 1e-12)
