import numpy as np
import pytest

from bilevelcert.cones import orthant
from bilevelcert.nonsmooth import (DINI_SCHEDULE, Convexificator, continuity_directions_sample,
                                   dini, is_continuity_direction, validate_convexificator,
                                   validation_directions)
from bilevelcert.single_level import scalarize


def test_dini_simple():
    e = dini(lambda p: abs(p[0]), [0.0], [1.0])
    assert e.lower == pytest.approx(1) and e.upper == pytest.approx(1) and e.converged
    e = dini(lambda p: p[0] ** 2, [0.0], [1.0])
    assert abs(e.lower) < 1e-4 and abs(e.upper) < 1e-4


def test_dini_oscillating():
    # x sin(log x) style oscillation never settles
    h = lambda p: p[0] * np.sin(np.log(abs(p[0]))) if p[0] else 0.0
    e = dini(h, [0.0], [1.0])
    assert e.lower <= e.upper
    assert not e.converged


def test_dini_corpus_branch(q1_sec4):
    varphi1 = scalarize(q1_sec4, (0, 0))[0].fn
    e = dini(varphi1, [0.0, 0.0], [1.0, 0.0])
    assert e.lower == pytest.approx(1, abs=1e-4)
    assert e.upper == pytest.approx(1, abs=1e-4)


def test_dini_homogeneous_in_direction():
    h = lambda p: abs(p[0]) + max(p[1], 0) ** 2 + 3 * p[0] * p[1]
    half = tuple(t / 2 for t in DINI_SCHEDULE)
    for d in np.random.default_rng(0).normal(size=(20, 2)):
        # halving the steps visits the same points along the doubled direction
        a, b = dini(h, [0.2, -0.1], d), dini(h, [0.2, -0.1], 2 * d, schedule=half)
        assert b.lower == pytest.approx(2 * a.lower, abs=1e-6)
        assert b.upper == pytest.approx(2 * a.upper, abs=1e-6)


def test_smooth_agreement():
    rng = np.random.default_rng(1)
    h = lambda p: p[0] ** 3 - 2 * p[0] * p[1] + p[1] ** 2
    grad = lambda p: np.array([3 * p[0] ** 2 - 2 * p[1], -2 * p[0] + 2 * p[1]])
    for _ in range(100):
        x, d = rng.uniform(-1, 1, 2), rng.normal(size=2)
        e = dini(h, x, d)
        assert e.lower == pytest.approx(grad(x) @ d, abs=1e-4)
        assert e.upper == pytest.approx(grad(x) @ d, abs=1e-4)


def test_continuity_examples(q1_sec3):
    varphi2 = scalarize(q1_sec3, (0, 0))[1].fn
    assert is_continuity_direction(varphi2, [0, 0], [1, 1])
    assert not is_continuity_direction(varphi2, [0, 0], [0, -1])
    dirs = np.random.default_rng(2).normal(size=(30, 2))
    kept = continuity_directions_sample(lambda p: np.hypot(*p), [0, 0], dirs)
    assert len(kept) == len(dirs)


def test_continuity_sample_of_first_example(q1_sec3):
    varphi2 = scalarize(q1_sec3, (0, 0))[1].fn
    th = np.linspace(0, 2 * np.pi, 72, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    kept = continuity_directions_sample(varphi2, [0, 0], dirs)
    # only the closed first quadrant survives
    assert kept and all(d[0] >= -1e-12 and d[1] >= -1e-12 for d in kept)


def test_validation_examples():
    D = orthant("++")
    c = Convexificator(((1, -2),), "semiregular", D, "varphi1")
    rep = validate_convexificator(c, lambda p: p[0] - 2 * p[1], [0, 0])
    assert rep.verdict == "SUPPORTED" and len(rep.checks) >= 16
    c = Convexificator(((0, 0),), "upper", D, "Psi")
    rep = validate_convexificator(c, lambda p: min(-p[1] ** 3, 0), [0, 0])
    assert rep.passed
    c = Convexificator(((0,),), "upper", None, "abs")
    rep = validate_convexificator(c, lambda p: abs(p[0]), [0.0], dirs=[[1.0]])
    assert rep.verdict == "VIOLATED"
    assert rep.violations[0].margin == pytest.approx(1)


def test_validation_directions_respect_cone():
    dirs = validation_directions(orthant("+*"), 2)
    assert np.all(dirs[:, 0] >= -1e-12)
    assert any(np.allclose(d, (0, 1)) for d in dirs)


def test_carrier_invariants():
    with pytest.raises(ValueError):
        Convexificator((), "upper")
    with pytest.raises(ValueError):
        Convexificator(((1, 2), (1,)), "upper")
    with pytest.raises(ValueError):
        Convexificator(((1, 2),), "regular")
    with pytest.raises(ValueError):
        Convexificator(((1, 2),), "upper", orthant("+++"))


def test_semiregular_implies_upper():
    rng = np.random.default_rng(3)
    dirs = validation_directions(None, 2, count=32)
    for i in range(20):
        a, b = rng.normal(size=2), rng.normal(size=2)
        h = lambda p, a=a, b=b: max(a @ p, b @ p) - 0.1 * abs(p[1])
        pts = tuple(map(tuple, rng.normal(size=(int(rng.integers(1, 4)), 2))))
        if i % 2:
            pts = pts + (tuple(a), tuple(b))
        x = [0.0, 0.0]
        sr = validate_convexificator(Convexificator(pts, "semiregular"), h, x, dirs)
        up = validate_convexificator(Convexificator(pts, "upper"), h, x, dirs)
        if sr.passed:
            assert up.passed
        assert all(u.estimate <= s.estimate + 1e-9 for u, s in zip(up.checks, sr.checks))
