import math

import numpy as np
import pytest

from upinn import autodiff as ad
from upinn import problems as pb


def test_flame_residual_examples():
    assert pb.flame_residual(0.0, 0.02, 1.0, 0.0) == 0.0
    assert pb.flame_residual(0.0, 0.02, 0.0, 0.0) == 0.0
    assert pb.flame_residual(0.0, 0.02, 0.5, 0.0) == pytest.approx(-37.5)


def test_flame_constraint(rng):
    raw = rng.normal(size=5)
    assert np.all(pb.flame_constraint(np.zeros(5), 0.02, raw) == 0.02)
    t = np.linspace(0, 0.3, 5)
    assert np.all(pb.flame_constraint(t, 0.02, np.zeros(5)) == 0.02)


def test_flame_constraint_derivative_matches_fd(rng):
    # raw(t) = sin(3t): check dy/dt against finite differences
    t = rng.uniform(0, 0.3, 7)
    h = 1e-6
    _, dy = pb.flame_constraint(t, 0.02, np.sin(3 * t), 3 * np.cos(3 * t))
    fd = (pb.flame_constraint(t + h, 0.02, np.sin(3 * (t + h))) - pb.flame_constraint(t - h, 0.02, np.sin(3 * (t - h)))) / (2 * h)
    assert np.allclose(dy, fd, atol=1e-8)


def test_flame_domain_shrinks_with_delta():
    p = pb.FlameProblem()
    assert p.domain(0.02) == (0.0, pytest.approx(1 / 3))
    ends = [p.domain(d)[1] for d in (0.02, 0.03, 0.04)]
    assert ends == sorted(ends, reverse=True)
    assert np.allclose(p.head_grid, [0.02, 0.02 + 0.02 / 3, 0.02 + 0.04 / 3, 0.04])


def test_sampler_jitter_stays_in_domain(rng):
    p = pb.FlameProblem()
    x = p.sample(0.03, rng, domain_value=0.02)
    assert x.shape == (100, 2)
    assert np.all((x[:, 0] >= 0) & (x[:, 0] <= 1 / 3)) and np.all(x[:, 1] == 0.03)
    assert np.all(np.diff(x[:, 0]) >= 0)  # half-spacing jitter keeps order
    plain = p.sample(0.03, None, domain_value=0.02)
    assert np.allclose(plain[:, 0], np.linspace(0, 1 / 3, 100))


def test_normalization_maps_training_box_to_unit_square():
    p = pb.FlameProblem()
    corners = np.array([[0.0, 0.02], [1 / 3, 0.04]])
    assert np.allclose(p.normalize(corners), [[-1, -1], [1, 1]])


def test_vdp_residual_examples():
    assert pb.vdp_residuals(0.0, 0.0, 1.0, 0.0, 0.0, -10.0) == (0.0, 0.0)
    assert pb.vdp_residuals(0.0, 0.7, 1.0, 0.0, 0.0, 0.0)[1] == 10.0
    assert pb.vdp_residuals(0.0, 0.3, 0.0, 0.0, 0.0, 0.0) == (0.0, 0.0)


def test_vdp_constraint():
    x, y = pb.vdp_constraint(0.0, 0.5, 3.0, -2.0)
    assert (x, y) == (1.0, 0.0)
    x, y = pb.vdp_constraint(1.0, 0.5, 0.5, -0.2)
    m = 1 - math.exp(-1)
    assert x == pytest.approx(1 + m * 0.5) and y == pytest.approx(-0.2 * m)


def test_efe_r4_and_constant_state():
    u = 0.4
    psi = (1.0, 1.0, 0.0, u, 0.0, 1.0)
    dpsi = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    r = pb.efe_residuals(u, 0.0, 0.0, psi, dpsi)
    assert abs(r[3] - 5.0 / 3.0) < 1e-12
    const = pb.efe_residuals(u, 0.0, 0.0, (1.0, 1.0, 0.0, 0.0, 0.0, 0.0), (0.0,) * 6)
    assert const[:4] == (0.0, 0.0, 0.0, 0.0)
    assert const[4] == pytest.approx(8.0)


def test_efe_residuals_are_tape_aware(rng):
    vals = rng.uniform(0.5, 1.5, 6)
    psi = ad.lift(vals)
    r = pb.efe_residuals(0.3, 0.2, 0.1, [psi[i] for i in range(6)], [0.1] * 6)
    total = r[0]
    for term in r[1:]:
        total = total + term
    assert np.all(np.isfinite(ad.grad(total, psi)))


def test_efe_boundary_conditions_exact(rng):
    point = pb.BundlePoint(0, 0.3, 25.0)
    raws = {k: rng.normal(size=3) for k in pb.EFE_FUNCTIONS}
    at0 = pb.efe_constraint(np.zeros(3), point, raws)
    at1 = pb.efe_constraint(np.ones(3), point, raws)
    assert np.all(at0["sigma"] == 1) and np.all(at0["a"] == 1)
    assert np.all(at0["phi"] == 0) and np.all(at0["nu_phi"] == 1)
    assert np.allclose(at1["sigma"], (25.0 / math.pi) ** (1 / 3), rtol=0, atol=1e-15)
    assert np.all(at1["a"] == 0) and np.all(at1["nu_a"] == -4 * math.pi * 0.3)


def test_bundle_point_examples():
    assert pb.BundlePoint(0, 1.0, math.pi).sigma_h == pytest.approx(1.0)
    assert pb.BundlePoint(0, 1 / (4 * math.pi), 1.0).nu_a_h == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        pb.BundlePoint(0, -0.1, 1.0)


def test_bundle_csv_roundtrip(tmp_path):
    pts = pb.toy_bundle(1.5, n=5)
    pb.write_bundle(tmp_path / "b.csv", pts)
    assert pb.read_bundle(tmp_path / "b.csv") == pts
    (tmp_path / "bad.csv").write_text("i,T,S\n0,0.2,0.0\n")
    with pytest.raises(ValueError):
        pb.read_bundle(tmp_path / "bad.csv")
    (tmp_path / "cols.csv").write_text("i,T\n0,0.2\n")
    with pytest.raises(ValueError):
        pb.read_bundle(tmp_path / "cols.csv")


def test_efe_sampler_shape_and_chebyshev_nodes():
    p = pb.EFEProblem(bundle_size=4, n_points=9)
    x = p.sample(2.0, None)
    assert x.shape == (36, 3)
    u = x[:9, 0]
    assert u[0] == 0.0 and u[-1] == 1.0
    assert np.allclose(u, 0.5 * (1 - np.cos(np.pi * np.arange(9) / 8)))
    pts, k = p.point_index(2.0, x)
    assert np.array_equal(k, np.repeat(np.arange(4), 9)) and len(pts) == 4


def test_toy_entropy_positive_and_conformal_at_high_t():
    T = np.linspace(0.05, 2.0, 50)
    s = pb.toy_entropy(T, 1.0)
    assert np.all(s > 0)
    assert s[-1] == pytest.approx(math.pi**4 * 8.0, rel=1e-6)


def test_make_problem():
    assert pb.make_problem("vdp").unknowns == ("x", "y")
    with pytest.raises(ValueError):
        pb.make_problem("heat")
