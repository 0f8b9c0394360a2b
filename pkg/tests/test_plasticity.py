import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from engramlab.errors import DivergenceError, InputError, SingularityError
from engramlab.plasticity import (HEBBIAN, SPASS, PlasticityParams, SynapseState,
                                  fixed_point_activity, fixed_point_weight, hebbian_derivative,
                                  integrate, spass_derivative, spass_derivative_kappa_form,
                                  spass_fixed_point_activity, spass_fixed_point_weight)

GOLDEN = 0.5 + math.sqrt(1.25)


def positive_root(u, kappa, vt):
    """Oracle: largest real root of u*w^2 - vt*w - kappa*u^2 via numpy.roots."""
    roots = np.roots([u, -vt, -kappa * u * u])
    return float(max(r.real for r in roots if abs(r.imag) < 1e-12))


def test_params_kappa_and_warning_flag():
    p = PlasticityParams(mu=0.1, gamma=0.01)
    assert p.kappa == 0.1 / 0.01
    assert not p.scaling_too_fast
    assert PlasticityParams(mu=0.1, gamma=0.1).scaling_too_fast
    with pytest.raises(InputError):
        PlasticityParams(mu=0, gamma=1)


@pytest.mark.parametrize("u,v,mu,expected", [(1, 1, 0.1, 0.1), (0, 5, 0.1, 0.0), (2, 3, 0.5, 3.0)])
def test_hebbian_derivative(u, v, mu, expected):
    s = SynapseState(w=0.3, u_pre=u, v_post=v)
    assert hebbian_derivative(s, PlasticityParams(mu=mu, gamma=0.01)) == pytest.approx(expected, abs=1e-15)


def test_spass_derivative_examples():
    p = PlasticityParams(mu=0.1, gamma=0.01, v_target=1.0)
    assert spass_derivative(SynapseState(0.0, 1.3, 0.7), p) == pytest.approx(0.1 * 1.3 * 0.7)
    assert spass_derivative(SynapseState(2.0, 1.3, 1.0), p) == pytest.approx(0.1 * 1.3 * 1.0)
    assert spass_derivative(SynapseState(1.0, 1.0, 2.0), p) == pytest.approx(0.19, abs=1e-15)


@settings(max_examples=300)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(1e-3, 2),
       st.floats(1e-3, 2), st.floats(0, 3))
def test_rate_forms_agree(w, u, v, mu, gamma, vt):
    p = PlasticityParams(mu, gamma, vt)
    s = SynapseState(w, u, v)
    a, b = spass_derivative(s, p), spass_derivative_kappa_form(s, p)
    scale = abs(mu * u * v) + abs(gamma * (vt - v) * w * w)
    assert abs(a - b) <= 4 * np.finfo(float).eps * max(scale, 1e-300)


def test_fixed_point_weight_examples():
    assert fixed_point_weight(1.0, 1.0, 0.0) == pytest.approx(1.0)
    assert fixed_point_weight(2.0, 3.0, 0.0) == pytest.approx(math.sqrt(6.0))
    assert fixed_point_weight(1.0, 0.0, 2.0) == 2.0
    assert fixed_point_weight(1.0, 1.0, 1.0) == pytest.approx(GOLDEN, abs=1e-6)
    assert spass_fixed_point_weight(1.0, PlasticityParams.from_kappa(1.0, 1.0)) == pytest.approx(1.618034, abs=1e-6)


def test_fixed_point_weight_singular_at_zero_input():
    with pytest.raises(SingularityError):
        fixed_point_weight(0.0, 1.0, 1.0)


def test_fixed_point_activity_examples():
    assert fixed_point_activity(0.0, 2.0, 1.7) == pytest.approx(1.7)
    assert fixed_point_activity(1.0, 1.0, 0.0) == 1.0
    assert spass_fixed_point_activity(1.0, PlasticityParams.from_kappa(1.0, 1.0)) == pytest.approx(1.618034, abs=1e-6)


@pytest.mark.parametrize("u,vt,kappa", list(itertools.product([0.5, 1, 2], repeat=3)))
def test_fixed_points_are_roots_and_consistent(u, vt, kappa):
    w_star = fixed_point_weight(u, kappa, vt)
    assert w_star == pytest.approx(positive_root(u, kappa, vt), rel=1e-12)
    p = PlasticityParams.from_kappa(kappa, vt)
    rate = spass_derivative(SynapseState(w_star, u, w_star * u), p)
    assert abs(rate) < 1e-12 * max(1.0, p.mu * u * u * w_star)
    v_star = fixed_point_activity(u, kappa, vt)
    assert abs(w_star * u - v_star) / v_star < 1e-12


def test_hebbian_fixed_activity_grows_linearly():
    p = PlasticityParams(mu=0.1, gamma=0.01)
    traj = integrate(HEBBIAN, SynapseState(0.5, 1.0, 1.0), p, dt=0.01, t_max=10.0)
    assert not traj.converged
    np.testing.assert_allclose(traj.w, 0.5 + 0.1 * traj.t, rtol=0, atol=1e-12)


def test_hebbian_linear_neuron_diverges_monotonically():
    p = PlasticityParams(mu=1.0, gamma=0.1)
    with pytest.raises(DivergenceError) as info:
        integrate(HEBBIAN, SynapseState(0.1, 1.0), p, dt=1e-3, t_max=1e6, linear_neuron=True)
    w = info.value.trajectory.w
    assert info.value.step > 0
    assert np.all(np.diff(w) > 0)
    assert w[-1] > 1e11


def test_spass_converges_to_fixed_point():
    p = PlasticityParams.from_kappa(1.0, 1.0)
    traj = integrate(SPASS, SynapseState(0.2, 1.0), p, dt=1e-3, t_max=200.0, linear_neuron=True)
    assert traj.converged
    assert abs(traj.w_final - GOLDEN) < 1e-6


def test_spass_rk4_agrees_with_scipy_oracle():
    p = PlasticityParams(mu=0.3, gamma=0.2, v_target=0.8)
    u, w0, T = 1.5, 0.3, 5.0
    ours = integrate(SPASS, SynapseState(w0, u), p, dt=1e-3, t_max=T, linear_neuron=True,
                     method="rk4", stop_on_convergence=False)
    ref = solve_ivp(lambda t, w: p.mu * u * u * w + p.gamma * (p.v_target - w * u) * w * w,
                    (0, T), [w0], rtol=1e-11, atol=1e-13)
    assert ours.w_final == pytest.approx(ref.y[0, -1], rel=1e-8)


def test_spass_started_at_fixed_point_stays():
    p = PlasticityParams.from_kappa(2.0, 0.5)
    w_star = spass_fixed_point_weight(0.5, p)
    traj = integrate(SPASS, SynapseState(w_star, 0.5), p, dt=1e-3, t_max=1.0,
                     linear_neuron=True, stop_on_convergence=False)
    assert np.max(np.abs(traj.w - w_star)) < 1e-12 * traj.steps


@pytest.mark.parametrize("factor", [0.1, 0.5, 2.0, 10.0])
def test_spass_stable_from_both_sides(factor):
    p = PlasticityParams.from_kappa(1.0, 1.0)
    w_star = spass_fixed_point_weight(1.0, p)
    traj = integrate(SPASS, SynapseState(factor * w_star, 1.0), p, dt=1e-3, t_max=500.0,
                     linear_neuron=True)
    assert traj.converged
    assert abs(traj.w_final - w_star) / w_star < 1e-4


def test_trajectory_csv(tmp_path):
    p = PlasticityParams(mu=0.1, gamma=0.01)
    traj = integrate(HEBBIAN, SynapseState(0.0, 1.0, 1.0), p, dt=0.5, t_max=1.0)
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,w,v"
    assert len(lines) == 1 + 3


def test_integrate_rejects_bad_arguments():
    p = PlasticityParams(mu=0.1, gamma=0.01)
    with pytest.raises(InputError):
        integrate("oja", SynapseState(0, 1), p, 0.1, 1.0)
    with pytest.raises(InputError):
        integrate(SPASS, SynapseState(0, 1), p, 0.0, 1.0)
