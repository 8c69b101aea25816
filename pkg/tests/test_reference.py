import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from upinn import reference as ref


def decay(t1=10.0):
    return ref.OdeProblem(lambda t, y: -y, 0.0, t1, [1.0])


def test_rk45_exponential_decay():
    traj = ref.rk45(decay(), rtol=1e-9, atol=1e-12)
    assert traj.t[-1] == 10.0
    assert abs(traj.y[-1, 0] - math.exp(-10)) / math.exp(-10) < 1e-6
    assert np.allclose(traj(np.linspace(0, 10, 50))[:, 0], np.exp(-np.linspace(0, 10, 50)), atol=1e-8)


def test_rk45_endpoint_tight():
    traj = ref.rk45(decay(), rtol=1e-12, atol=1e-16)
    assert abs(traj.y[-1, 0] - math.exp(-10)) / math.exp(-10) < 1e-10


def test_rk4_order_four():
    p = ref.OdeProblem(lambda t, y: y, 0.0, 1.0, [1.0])
    e1 = abs(ref.rk4(p, 0.1).y[-1, 0] - math.e)
    e2 = abs(ref.rk4(p, 0.05).y[-1, 0] - math.e)
    assert 14 < e1 / e2 < 18


def test_zero_length_interval_and_bad_args():
    p = ref.OdeProblem(lambda t, y: y, 1.0, 1.0, [2.0])
    assert ref.rk45(p).y.shape == (1, 1)
    with pytest.raises(ValueError):
        ref.OdeProblem(lambda t, y: y, 1.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        ref.rk4(p, 0.0)
    with pytest.raises(ValueError):
        ref.rk45(p, rtol=0.0)


def test_non_finite_rhs_raises():
    p = ref.OdeProblem(lambda t, y: y * y, 0.0, 2.0, [1.0])  # blows up at t = 1
    with pytest.raises(ref.IntegrationError):
        ref.rk45(p, max_steps=100_000)


def test_step_budget():
    with pytest.raises(ref.IntegrationError):
        ref.rk45(decay(), rtol=1e-12, atol=1e-14, max_steps=5)


@pytest.mark.parametrize("delta", [0.02, 0.03, 0.04])
def test_flame_matches_scipy(delta):
    p = ref.flame_problem(delta)
    ours = ref.rk45(p, rtol=1e-10, atol=1e-12)
    t = np.linspace(0, p.t1, 400)
    other = solve_ivp(p.rhs, (0, p.t1), p.y0, method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    assert np.max(np.abs(ours(t)[:, 0] - other.sol(t)[0])) < 1e-6


def test_flame_rk4_and_rk45_agree():
    p = ref.flame_problem(0.02)
    a = ref.rk45(p, rtol=1e-10, atol=1e-12)
    b = ref.rk4(p, p.t1 / 20000)
    assert np.max(np.abs(a(b.t)[:, 0] - b.y[:, 0])) < 1e-6


@pytest.mark.parametrize("a", [0.0, 0.75, 1.5])
def test_vdp_oracles_agree(a):
    p = ref.vdp_problem(a)
    x = ref.rk45(p, rtol=1e-10, atol=1e-12)
    y = ref.rk4(p, 1e-4)
    assert np.max(np.abs(x(y.t) - y.y)) < 1e-6


def test_vdp_harmonic_limit():
    # a = 0: x'' = -rho^2 x, so x = cos(rho t)
    traj = ref.rk45(ref.vdp_problem(0.0), rtol=1e-11, atol=1e-13)
    assert np.allclose(traj.y[:, 0], np.cos(10 * traj.t), atol=1e-8)


def test_implicit_check_identity_and_domain():
    assert ref.flame_implicit_check(0.0, 0.02, 0.02, 300) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        ref.flame_implicit_check(0.1, 1.0, 0.02, 300)
    with pytest.raises(ValueError):
        ref.flame_implicit_check(0.1, 0.5, 1.5, 300)


def test_implicit_check_on_well_conditioned_nodes():
    # away from saturation the implicit relation is well conditioned
    traj = ref.rk45(ref.flame_problem(0.02), rtol=1e-9, atol=1e-12)
    keep = 1 - traj.y[:, 0] > 1e-4
    r = ref.flame_implicit_check(traj.t[keep], traj.y[keep, 0], 0.02, 300)
    assert np.max(np.abs(r)) < 1e-5


def test_relative_error_and_rms():
    re = ref.relative_error([0.0, 1.0], [0.5, 1.5])
    assert np.allclose(re, [50.0, 25.0])
    assert ref.rms(re) == pytest.approx(math.sqrt((2500 + 625) / 2))
    assert ref.rms(ref.relative_error([1.0, 2.0], [1.0, 2.0])) == 0.0
    with pytest.raises(ValueError):
        ref.relative_error([1.0], [1.0, 2.0])


def test_trajectory_csv(tmp_path):
    traj = ref.rk4(decay(1.0), 0.5)
    traj.to_csv(tmp_path / "t.csv", ["y"])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,y" and len(lines) == 4
