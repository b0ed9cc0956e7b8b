"""Acceptance criteria, one marker per criterion.

The terminal summary (see conftest) prints one PASS/FAIL line per criterion.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from bilevelcert.certify import (check_ACQ, check_generalized_convexity, convexity_suite,
                                 find_certificate, stationary_data, verify_certificate)
from bilevelcert.cones import (cone_membership, finitely_generated, full_space, polar,
                               sample_members, tangent_cone_sample)
from bilevelcert.duality import DualPoint, dual_feasible, weak_duality_scan
from bilevelcert.nonsmooth import (Convexificator, dini, validate_convexificator,
                                   validation_directions)
from bilevelcert.single_level import (E_oracle, lower_level_solutions, scalarize,
                                      signed_distance_orthant, weak_pareto_oracle)

from test_certify import no_cone_system, perturbed


def unit(n, dim, seed):
    v = np.random.default_rng(seed).normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# 1-3: published certificates

@pytest.mark.acceptance(1)
def test_certificate_first_example(q1_sec3, corpus_cert):
    data = stationary_data(q1_sec3)
    cert = corpus_cert("q1_sec3.cert")
    t0 = time.perf_counter()
    rep = verify_certificate(data, cert, "rational")
    elapsed = time.perf_counter() - t0
    assert data.constraints == {"H1": ((-1, 0),), "phi1": ((0, 1),), "phi2": ((0, -1),),
                                "Psi": ((0, 0),)}
    assert data.objectives == {"varphi1": ((1, -2),), "varphi2": ((1, 1),)}
    assert rep.passed
    assert rep.residual == (0, 0)
    assert rep.complementarity and all(v == 0 for v in rep.complementarity.values())
    assert elapsed < 0.1


@pytest.mark.acceptance(2)
def test_certificate_second_example(q1_sec4, corpus_cert):
    cert = corpus_cert("q1_sec4.cert")
    assert cert.upsilon() == (Fraction(3, 2), Fraction(1, 4), Fraction(2, 5), 1, Fraction(7, 2),
                              Fraction(1, 3))
    assert cert.z == (Fraction(-3, 5), Fraction(-7, 20))
    rep = verify_certificate(stationary_data(q1_sec4), cert, "rational")
    assert rep.passed and rep.residual == (0, 0)


@pytest.mark.acceptance(3)
def test_dual_certificate(mq_sec5, corpus_cert):
    cert = corpus_cert("mq_dual.cert")
    assert cert.point == (-1, 0)
    assert cert.upsilon() == (Fraction(1, 2), Fraction(3, 2), Fraction(1, 4), Fraction(1, 2), 1,
                              Fraction(1, 6))
    assert cert.z == (Fraction(-13, 4), Fraction(-11, 4))
    rep = dual_feasible(mq_sec5, DualPoint(cert), "rational")
    assert rep.feasible, rep.reasons()
    assert rep.verify.residual == (0, 0)
    # H1(-1, 0) = 1, so the product is tau1 itself
    assert rep.signs["tau1*H1"] == Fraction(1, 4)
    assert all(float(v) >= 0 for v in rep.signs.values())


# --------------------------------------------------------------------------
# 4: certificate search

@pytest.mark.acceptance(4)
@pytest.mark.parametrize("name,anchor", [("q1_sec3", None), ("q1_sec4", None), ("mq_sec5", "m1")])
def test_search_corpus(name, anchor, request):
    prob = request.getfixturevalue(name)
    data = stationary_data(prob, anchor)
    t0 = time.perf_counter()
    fc = find_certificate(data, "float")
    fr = verify_certificate(data, fc, "float")
    rc = find_certificate(data, "rational")
    rr = verify_certificate(data, rc, "rational")
    elapsed = time.perf_counter() - t0
    assert fc is not None and rc is not None
    assert fr.passed and max(abs(float(v)) for v in fr.residual) <= 1e-9
    assert rr.passed and rr.residual == (0, 0)
    assert elapsed < 1.0


# --------------------------------------------------------------------------
# 5: ACQ

@pytest.mark.acceptance(5)
def test_acq_first_example(q1_sec3):
    t0 = time.perf_counter()
    rep = check_ACQ(q1_sec3, stationary_data(q1_sec3))
    P = rep.polar
    for u in np.random.default_rng(5).uniform(-1, 1, size=(500, 2)):
        assert cone_membership(P, u, 1e-9) == (u[0] >= 0 and abs(u[1]) <= 1e-9)
    members = sample_members(P, 50, seed=5)
    in_T = tangent_cone_sample(E_oracle(q1_sec3), (0, 0), members)
    elapsed = time.perf_counter() - t0
    np.testing.assert_allclose(P.generators, [[1, 0]], atol=1e-12)
    assert rep.verdict == "SUPPORTED"
    assert all(in_T)
    assert elapsed < 5.0


# --------------------------------------------------------------------------
# 6: signed distance

def grid_signed_distance(u, n=400, lim=3.0):
    """Nearest-point signed distance to -R^2_+ on an n x n grid."""
    ax = np.linspace(-lim, lim, n)
    G = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    inside = np.all(G <= 0, axis=1)
    d = np.linalg.norm(G - u, axis=1)
    if np.all(u <= 0):
        return -d[~inside].min()
    return d[inside].min()


@pytest.mark.acceptance(6)
def test_signed_distance_suite():
    rng = np.random.default_rng(6)
    # sign trichotomy on 300 classified points
    interior = -rng.uniform(1e-3, 3, size=(100, 2))
    exterior = rng.uniform(-3, 3, size=(100, 2))
    k = rng.integers(0, 2, 100)
    exterior[np.arange(100), k] = rng.uniform(1e-3, 3, 100)
    boundary = -rng.uniform(0, 3, size=(100, 2))
    boundary[np.arange(100), rng.integers(0, 2, 100)] = 0.0
    assert np.all(signed_distance_orthant(interior) < 0)
    assert np.all(signed_distance_orthant(exterior) > 0)
    assert np.all(np.abs(signed_distance_orthant(boundary)) <= 1e-12)
    # 1-Lipschitz on 1000 pairs
    U, V = rng.normal(scale=2, size=(2, 1000, 2))
    gap = np.abs(signed_distance_orthant(U) - signed_distance_orthant(V))
    assert np.all(gap <= np.linalg.norm(U - V, axis=1) + 1e-12)
    # positive homogeneity
    for t in (0.5, 2.0, 10.0):
        np.testing.assert_allclose(signed_distance_orthant(t * U), t * signed_distance_orthant(U),
                                   atol=1e-9)
    # closed form against the grid oracle
    step = 6.0 / 399
    for u in rng.uniform(-2, 2, size=(100, 2)):
        assert abs(signed_distance_orthant(u) - grid_signed_distance(u)) <= 2 * step


# --------------------------------------------------------------------------
# 7: lower-level map

@pytest.mark.acceptance(7)
def test_lower_level_map(q1_sec3, q1_sec4):
    f = lambda x, y: np.cbrt(x) + np.sqrt(x) + y ** 2 - y ** 3
    for x in (0.0, 0.5, 1.0, 2.0):
        ll = lower_level_solutions(q1_sec4, [x], step=Fraction(1, 100))
        ys = np.sort(ll.solutions[:, 0])
        assert len(ys) == 2
        assert abs(ys[0] - 0) <= 0.01 and abs(ys[1] - 1) <= 0.01
        for y in ys:
            assert abs(f(x, y) - f(x, 0)) <= 1e-6
    for x in (-1.0, -0.25, 0.0, 0.5, 1.0):
        assert lower_level_solutions(q1_sec3, [x]).solutions[:, 0].tolist() == [0.0]


# --------------------------------------------------------------------------
# 8: weak-Pareto oracle

@pytest.mark.acceptance(8)
def test_oracle_second_example(q1_sec4):
    assert (q1_sec4.x_box[0].lo, q1_sec4.x_box[0].hi) == (0, 2)
    assert (q1_sec4.y_box[0].lo, q1_sec4.y_box[0].hi) == (-1, 1)
    t0 = time.perf_counter()
    r = weak_pareto_oracle(q1_sec4, (0, 0), step=Fraction(1, 20), jobs=1)
    elapsed = time.perf_counter() - t0
    assert r.verdict == "WEAK-PARETO"
    assert r.step == pytest.approx(0.05)
    assert elapsed < 30.0


# --------------------------------------------------------------------------
# 9: generalized convexity

@pytest.mark.acceptance(9)
def test_generalized_convexity(q1_sec4):
    reports = convexity_suite(q1_sec4, stationary_data(q1_sec4), samples=500)
    kinds = {lab: r.kind for lab, r in reports.items()}
    assert kinds == {"varphi1": "pseudo", "varphi2": "pseudo", "H1": "quasi", "H2": "quasi",
                     "phi1": "quasi", "Psi": "quasi"}
    for lab, r in reports.items():
        assert r.verdict == "SUPPORTED", (lab, r.witness)
        assert r.checked + r.skipped == 500 and r.witness is None
    bad = check_generalized_convexity(lambda p: -p[0] ** 2, [(0,)], (0,), "pseudo", samples=500)
    assert bad.verdict == "VIOLATED" and bad.witness is not None


# --------------------------------------------------------------------------
# 10: weak duality

@pytest.mark.acceptance(10)
def test_weak_duality(mq_sec5, corpus_cert):
    scan = weak_duality_scan(mq_sec5, [DualPoint(corpus_cert("mq_dual.cert"))], primal_samples=200)
    assert scan.n_primal == 200
    assert scan.violations == []


# --------------------------------------------------------------------------
# 11: property suite

@pytest.mark.acceptance(11)
def test_double_polar_property():
    rng = np.random.default_rng(11)
    for i in range(50):
        dim = int(rng.integers(1, 4))
        c = finitely_generated(rng.normal(size=(int(rng.integers(1, 5)), dim)))
        cc = polar(polar(c), vrep=False)
        for u in unit(200, dim, i):
            # directions on a face are decided by rounding, so stay 1e-7 away
            slack = np.max(cc.inequalities @ u) if len(cc.inequalities) else -1.0
            if abs(slack) > 1e-7:
                assert cone_membership(c, u, 1e-9) == cone_membership(cc, u, 1e-9)


@pytest.mark.acceptance(11)
def test_validation_ordering_property():
    rng = np.random.default_rng(12)
    dirs = validation_directions(None, 2)
    for i in range(20):
        A = rng.normal(size=(int(rng.integers(1, 4)), 2))
        h = lambda p, A=A: float(np.max(A @ p))
        pts = tuple(map(tuple, rng.normal(size=(int(rng.integers(1, 4)), 2))))
        if i % 2 == 0:
            pts += tuple(map(tuple, A))
        sr = validate_convexificator(Convexificator(pts, "semiregular"), h, [0.0, 0.0], dirs)
        up = validate_convexificator(Convexificator(pts, "upper"), h, [0.0, 0.0], dirs)
        assert not sr.passed or up.passed
        assert len(up.violations) <= len(sr.violations)


@pytest.mark.acceptance(11)
def test_scaling_invariance_property(q1_sec3, q1_sec4, mq_sec5):
    base = [stationary_data(q1_sec3), stationary_data(q1_sec4), stationary_data(mq_sec5, "m1")]
    rng = np.random.default_rng(13)
    for i in range(20):
        data = perturbed(base[i % 3], rng)
        c = Fraction(int(rng.integers(1, 30)), int(rng.integers(1, 30)))
        a, b = find_certificate(data, "rational"), find_certificate(data.scaled(c), "rational")
        assert (a is None) == (b is None)


@pytest.mark.acceptance(11)
def test_full_space_reduction_property(q1_sec3, q1_sec4, mq_sec5):
    for data in (stationary_data(q1_sec3), stationary_data(q1_sec4),
                 stationary_data(mq_sec5, "m1")):
        full = data.with_D(full_space(2))
        assert full.normal_generators() == []
        assert (find_certificate(full, "rational") is not None) == no_cone_system(data)
        assert (find_certificate(full, "float") is not None) == no_cone_system(data)


# --------------------------------------------------------------------------
# 12: Dini derivatives

def dini_cases(q1_sec3, q1_sec4):
    s3 = {s.k: s.fn for s in scalarize(q1_sec3, (0, 0))}
    s4 = {s.k: s.fn for s in scalarize(q1_sec4, (0, 0))}
    o = [0.0, 0.0]
    return [
        ("abs at 0, d=+1", lambda p: abs(p[0]), [0.0], [1.0], 1.0),
        ("abs at 0, d=-1", lambda p: abs(p[0]), [0.0], [-1.0], 1.0),
        ("abs at -2, d=+1", lambda p: abs(p[0]), [-2.0], [1.0], -1.0),
        ("square at 0", lambda p: p[0] ** 2, [0.0], [1.0], 0.0),
        ("square at 1", lambda p: p[0] ** 2, [1.0], [1.0], 2.0),
        ("varphi1 second example, d=(1,0)", s4[1], o, [1.0, 0.0], 1.0),
        ("varphi1 second example, d=(0,1)", s4[1], o, [0.0, 1.0], 2.0),
        ("F1 second example, d=(1,0)", q1_sec4.F[0], o, [1.0, 0.0], 2.0),
        ("varphi2 first example, d=(1,1)", s3[2], o, [1.0, 1.0], 2.0),
        ("F2 first example, d=(1,1)", q1_sec3.F[1], o, [1.0, 1.0], 3.5),
        ("H1 second example, d=(1,1)", q1_sec4.H[0], o, [1.0, 1.0], -2.0),
        ("H1 first example, d=(1,0)", q1_sec3.H[0], o, [1.0, 0.0], -1.0),
    ]


@pytest.mark.acceptance(12)
def test_dini_closed_forms(q1_sec3, q1_sec4):
    cases = dini_cases(q1_sec3, q1_sec4)
    assert len(cases) == 12
    for label, h, x, d, exact in cases:
        e = dini(h, x, d)
        assert abs(e.lower - exact) <= 1e-4, label
        assert abs(e.upper - exact) <= 1e-4, label
