import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilevelcert.cones import (Cone, ConeError, cone_membership, default_directions,
                               double_description, finitely_generated, full_space, normal_cone_of_D,
                               orthant, polar, pos_hull, sample_members, star_shaped_sample,
                               tangent_cone_sample, weak_feasible_sample, with_hrep, with_vrep)


def random_dirs(n, dim, seed):
    v = np.random.default_rng(seed).normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_membership_examples():
    assert cone_membership(orthant("--"), (-1, -3))
    assert not cone_membership(finitely_generated([(1, 0)]), (0, 1))
    assert cone_membership(finitely_generated([(1, 2), (2, 1)]), (1, 1))
    assert not cone_membership(finitely_generated([(1, 2), (2, 1)]), (1, 3))


def test_membership_errors():
    with pytest.raises(ConeError):
        Cone(2)
    with pytest.raises(ConeError):
        cone_membership(orthant("++"), (1, 2, 3))


def test_polar_examples():
    P = polar(orthant("--"))
    for u in random_dirs(200, 2, 0):
        assert cone_membership(P, u) == cone_membership(orthant("++"), u)
    xi = polar([(-1, 0), (0, 1), (0, -1), (0, 0)], orthant("--"))
    np.testing.assert_allclose(xi.generators, [[1, 0]], atol=1e-12)
    Z = polar(full_space(2))
    assert len(Z.generators) == 0
    assert cone_membership(Z, (0, 0)) and not cone_membership(Z, (1e-3, 0))


def test_polar_rows_are_inputs():
    pts = [(1, 2), (-3, 1)]
    np.testing.assert_array_equal(polar(pts).inequalities, pts)


def test_polar_dimension_limit():
    with pytest.raises(ConeError):
        polar([(1, 0, 0, 0, 0)])
    # H-rep only is fine at any dimension
    c = polar([(1, 0, 0, 0, 0)], vrep=False)
    assert cone_membership(c, (-1, 5, 0, 0, 0))


def test_pos_hull_examples():
    c = pos_hull([(-1, 0), (0, 1), (0, -1), (0, 0), (-1, 0), (0, -1)])
    ref = orthant("-*")
    for u in np.random.default_rng(2).uniform(-1, 1, size=(500, 2)):
        assert cone_membership(c, u) == cone_membership(ref, u)
    z = pos_hull([(0, 0)])
    assert cone_membership(z, (0, 0)) and not cone_membership(z, (0, 1))
    line = pos_hull([(1, 0), (-1, 0)])
    assert cone_membership(line, (-5, 0)) and not cone_membership(line, (0, 1))


def test_normal_cone_examples():
    N = normal_cone_of_D(orthant("++"))
    assert N.tag == "orthant-product"
    for u in random_dirs(100, 2, 3):
        assert cone_membership(N, u) == cone_membership(orthant("--"), u)
    Z = normal_cone_of_D(full_space(2))
    assert cone_membership(Z, (0, 0)) and not cone_membership(Z, (0, 1))
    N = normal_cone_of_D(orthant("+*"))
    assert cone_membership(N, (-3, 0)) and not cone_membership(N, (-1, 0.1))
    N = normal_cone_of_D(finitely_generated([(1, 0), (1, 1)]))
    assert cone_membership(N, (-1, 0.5)) and not cone_membership(N, (-1, 1.5))


def test_representations_agree():
    for seed in range(20):
        G = np.random.default_rng(seed).normal(size=(3, 2))
        c = with_hrep(finitely_generated(G))
        for g in G:
            assert np.all(c.inequalities @ g <= 1e-9)
        h_only = Cone(2, None, c.inequalities)
        for u in random_dirs(500, 2, seed):
            assert cone_membership(h_only, u) == cone_membership(finitely_generated(G), u) or \
                abs(min(np.min(c.inequalities @ u), 0)) < 1e-6


def test_scaling_closure():
    c = finitely_generated([(1, 2, 0), (0, 1, 1), (-1, 0, 1)])
    for u in sample_members(c, 100, seed=4):
        assert cone_membership(c, u) and cone_membership(c, 2 * u)


def test_double_description_box():
    R = double_description([(-1, 0, 0), (0, -1, 0), (0, 0, -1)], 3)
    assert sorted(map(tuple, np.round(R, 12).tolist())) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


def brute_force_member(A, u, tol=1e-9):
    return np.all(np.asarray(A) @ u <= tol)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.integers(1, 5), st.integers(0, 10_000))
def test_double_description_against_inequalities(dim, m, seed):
    A = np.random.default_rng(seed).integers(-3, 4, size=(m, dim)).astype(float)
    R = double_description(A, dim)
    # generators satisfy every inequality
    assert np.all(A @ R.T <= 1e-9) if len(R) else True
    gen = finitely_generated(R, dim) if len(R) else orthant("0" * dim)
    for u in random_dirs(100, dim, seed):
        if abs(np.max(A @ u)) > 1e-6:  # keep clear of the boundary
            assert cone_membership(gen, u, 1e-7) == brute_force_member(A, u)


def test_double_polar():
    rng = np.random.default_rng(5)
    for i in range(50):
        dim = int(rng.integers(1, 4))
        G = rng.normal(size=(int(rng.integers(1, 5)), dim))
        c = finitely_generated(G)
        cc = polar(polar(c, vrep=True), vrep=False)
        for u in random_dirs(200, dim, i):
            slack = np.max(cc.inequalities @ u) if len(cc.inequalities) else -1.0
            if abs(slack) > 1e-7:
                assert cone_membership(c, u) == cone_membership(cc, u)


def test_anti_monotone():
    rng = np.random.default_rng(6)
    for i in range(20):
        B = rng.normal(size=(4, 3))
        A = B[:2]
        PA, PB = polar(A), polar(B)
        for u in sample_members(PB, 50, seed=i):
            assert cone_membership(PA, u)


def test_intersection_duality_orthants():
    S1, S2 = orthant("+*"), orthant("*+")
    inter = orthant("++")
    lhs = polar(inter)
    rhs = pos_hull(np.vstack([with_vrep(polar(S1)).generators, with_vrep(polar(S2)).generators]))
    for u in random_dirs(300, 2, 7):
        assert cone_membership(lhs, u) == cone_membership(rhs, u)


def test_default_directions():
    D = default_directions(2)
    assert D.shape == (64, 2)
    np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1)
    D3 = default_directions(3, seed=1)
    np.testing.assert_array_equal(D3, default_directions(3, seed=1))


def half_line(p):
    return p[0] >= -1e-12 and abs(p[1]) <= 1e-12


def test_tangent_examples():
    out = tangent_cone_sample(half_line, (0, 0), [(1, 0), (0, 1), (-1, 0)])
    assert out == [True, False, False]


def test_tangent_of_parabola_region():
    # {y >= x^2}: the tangent cone at 0 is the closed upper half plane
    member = lambda p: p[1] >= p[0] ** 2
    out = tangent_cone_sample(member, (0, 0), [(1, 0), (0, 1), (0, -1)])
    assert out == [True, True, False]
    # (1, 0) is tangent but not a weak feasible direction
    assert weak_feasible_sample(member, (0, 0), [(1, 0)]) == [False]


def test_weak_feasible_inside_tangent():
    members = [half_line, lambda p: p[1] >= abs(p[0]), lambda p: p[0] * p[1] >= 0]
    dirs = default_directions(2, 32)
    for m in members:
        W = weak_feasible_sample(m, (0, 0), dirs)
        T = tangent_cone_sample(m, (0, 0), dirs)
        assert all(t for w, t in zip(W, T) if w)


def test_tangent_schedule_must_decrease():
    with pytest.raises(ConeError):
        tangent_cone_sample(half_line, (0, 0), [(1, 0)], schedule=(0.1, 0.2))


def test_star_shaped_examples():
    pool = [(x, y) for x in np.linspace(-1, 1, 21) for y in np.linspace(-1, 1, 21)]
    r = star_shaped_sample(half_line, (0, 0), pool, samples=10)
    assert r.verdict == "SUPPORTED"
    two = lambda p: min(abs(p[0]), abs(p[0] - 1)) < 1e-12
    r = star_shaped_sample(two, (0,), [(0.0,), (1.0,)], samples=2)
    assert r.verdict == "VIOLATED"
    assert r.witness[0] == (1.0,)
    # the first segment point checked is lambda = 0.1 * 0.5
    assert r.witness[1] == pytest.approx(0.05)


def test_star_shaped_errors():
    with pytest.raises(ConeError):
        star_shaped_sample(half_line, (0, 1), [(1, 0)], samples=1)
    with pytest.raises(ConeError):
        star_shaped_sample(half_line, (0, 0), [(1, 0)], samples=5)
