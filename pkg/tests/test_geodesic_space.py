from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csck_lab.errors import GridMismatch
from csck_lab.polytope import named_polytope
from csck_lab.stability import PLConvexFn, lp_functional
from csck_lab.toric_energy import grid_weights, guillemin_potential, make_grid, potential_from_function
from csck_lab.geodesic_space import (GeodesicRay, are_parallel, classify_ray, classify_rays,
                                     dp_distance, dpG_distance, geodesic_point, load_ray,
                                     pair_profile, transplant_ray, yen_invariant)

INTERVAL = named_polytope("interval")
SQUARE = named_polytope("square")
TRAPEZOID = named_polytope("trapezoid")


def _x(N):
    return make_grid(INTERVAL, N).axes()[0]


def test_dp_examples():
    u0 = guillemin_potential(INTERVAL, 64)
    x = _x(64)
    assert dp_distance(INTERVAL, u0, u0) == 0
    assert dp_distance(INTERVAL, u0, u0 + (x - 0.5), 1) == pytest.approx(0.25, abs=1e-15)
    uS = guillemin_potential(TRAPEZOID, 16)
    for p in (1, 2, 3):
        d = dp_distance(TRAPEZOID, uS, uS + np.full(uS.v.shape, -0.3), p)
        assert d == pytest.approx(0.3 * 1.5 ** (1 / p), rel=1e-13)
    assert dp_distance(TRAPEZOID, uS, uS + np.full(uS.v.shape, -0.3), np.inf) == pytest.approx(0.3)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        dp_distance(INTERVAL, guillemin_potential(INTERVAL, 32), guillemin_potential(INTERVAL, 64))
    with pytest.raises(GridMismatch):
        transplant_ray(GeodesicRay(guillemin_potential(INTERVAL, 32), _x(32) ** 2),
                       guillemin_potential(INTERVAL, 64))


def _grid_search(P, N, g, p, span=1.0, n=201):
    """Dense scan over affine ``a x + b`` followed by a local refinement."""
    x = _x(N)
    best = (np.inf, 0, 0)
    ca, cb = 0.0, 0.0
    for width in (span, span / 20, span / 400, span / 8000):
        a_s = ca + np.linspace(-width, width, n)
        b_s = cb + np.linspace(-width, width, n)
        for a in a_s:
            r = g[None, :] - a * x[None, :] - b_s[:, None]
            w, _ = grid_weights(P, N)
            norms = np.sum(w * np.abs(r) ** p, axis=1) ** (1 / p)
            j = int(np.argmin(norms))
            if norms[j] < best[0]:
                best = (norms[j], a, b_s[j])
        ca, cb = best[1], best[2]
    return best[0]


@pytest.mark.parametrize("p", [1, 2, 3])
def test_dpG_against_grid_search(p):
    N = 64
    u0 = guillemin_potential(INTERVAL, N)
    g = np.abs(_x(N) - 0.5) + 0.3 * _x(N) ** 3
    value, ell = dpG_distance(INTERVAL, u0 + g, u0, p)
    assert abs(value - _grid_search(INTERVAL, N, g, p)) < 1e-6
    assert value <= dp_distance(INTERVAL, u0 + g, u0, p) + 1e-15


def test_dpG_of_affine_difference_vanishes():
    u0 = guillemin_potential(SQUARE, 16)
    pts = make_grid(SQUARE, 16).points()
    for p in (1, 2, 3, np.inf):
        value, ell = dpG_distance(SQUARE, u0 + (pts @ np.array([0.3, -0.7]) + 0.1), u0, p)
        assert value < 1e-8
        assert ell.gradient == pytest.approx((0.3, -0.7), abs=1e-7)


def test_dpG_equals_dp_when_projection_vanishes():
    N = 64
    u0 = guillemin_potential(INTERVAL, N)
    g = np.cos(2 * np.pi * _x(N))
    # cos(2πx) is L²-orthogonal to affines on [0,1] only up to quadrature; compare at p = 2
    value, ell = dpG_distance(INTERVAL, u0 + g, u0, 2)
    assert abs(value - dp_distance(INTERVAL, u0 + g, u0, 2)) < 1e-6
    assert abs(ell.constant) < 1e-3


def test_geodesic_point():
    N = 64
    u0 = guillemin_potential(INTERVAL, N)
    u1 = potential_from_function(INTERVAL, N, lambda x: x[..., 0] ** 2, gauge=False)
    assert geodesic_point(u0, u1, 0) is u0 and geodesic_point(u0, u1, 1) is u1
    mid = geodesic_point(u0, u1, 0.5)
    assert np.allclose(mid.v, _x(N) ** 2 / 2, atol=1e-15)
    for t in (0.2, 0.7):
        d = dp_distance(INTERVAL, geodesic_point(u0, u1, t), u0, 1)
        assert abs(d - t * dp_distance(INTERVAL, u0, u1, 1)) < 1e-10


def test_ray_validation_and_unit_speed():
    u0 = guillemin_potential(INTERVAL, 64)
    with pytest.raises(ValueError):
        GeodesicRay(u0, -_x(64) ** 2)
    ray = GeodesicRay(u0, _x(64) ** 2, p=2, unit_speed=True)
    for s, t in ((0, 1), (2, 5)):
        assert abs(dp_distance(INTERVAL, ray.point(s), ray.point(t), 2) - abs(s - t)) < 1e-12
    assert ray.speed > 0
    assert GeodesicRay(u0, 2 * _x(64) - 1).speed < 1e-12


def test_yen_examples():
    uS = guillemin_potential(SQUARE, 16)
    res = yen_invariant(SQUARE, GeodesicRay.from_pl(uS, PLConvexFn.affine([1, 2], 3)), 4)
    assert abs(res.yen) < 1e-12
    errs = []
    for N in (256, 512):
        ray = GeodesicRay.from_pl(guillemin_potential(INTERVAL, N), PLConvexFn.crease([1], Fr(1, 2)))
        yen, inc = yen_invariant(INTERVAL, ray, 8)
        assert np.min(np.diff(inc)) >= -1e-8
        errs.append(abs(yen - 0.25))
    assert errs[1] < errs[0] < 1e-3
    with pytest.raises(ValueError):
        yen_invariant(INTERVAL, ray, 3)


def test_classification_examples():
    ray = GeodesicRay.from_pl(guillemin_potential(INTERVAL, 128), PLConvexFn.crease([1], Fr(1, 2)))
    assert classify_ray(INTERVAL, ray).verdict == "strictly_stable"
    uS = guillemin_potential(SQUARE, 16)
    assert classify_ray(SQUARE, GeodesicRay.from_pl(uS, PLConvexFn.affine([1, -1], 0))).verdict \
        == "borderline_holomorphic"
    uT = guillemin_potential(TRAPEZOID, 16)
    ell = PLConvexFn.affine([1, 0], 0)
    if lp_functional(TRAPEZOID, ell) > 0:
        ell = PLConvexFn.affine([-1, 0], 0)
    assert lp_functional(TRAPEZOID, ell) < 0
    res = classify_ray(TRAPEZOID, GeodesicRay.from_pl(uT, ell))
    assert res.verdict == "destabilizing" and res.yen < 0
    assert abs(res.yen - float(lp_functional(TRAPEZOID, ell))) < 1e-10


def test_batch_classification_is_ordered():
    u = guillemin_potential(INTERVAL, 64)
    rays = [GeodesicRay.from_pl(u, PLConvexFn.crease([1], Fr(k, 4))) for k in (1, 2, 3)]
    serial = classify_rays(INTERVAL, rays)
    parallel = classify_rays(INTERVAL, rays, jobs=2)
    assert [r.yen for r in serial] == [r.yen for r in parallel]


def test_transplant_same_base_is_identical():
    ray = GeodesicRay(guillemin_potential(INTERVAL, 64), _x(64) ** 2)
    again = transplant_ray(ray, ray.base)
    assert np.array_equal(again.direction, ray.direction) and again.base is ray.base


def test_ray_spec_loading():
    ray = load_ray({"polytope": "interval", "N": 64, "pieces": [{"a": ["1"], "b": "-1/2"}, {"a": ["0"], "b": "0"}]})
    assert ray.direction[-1] == 0.5 and ray.direction[0] == 0


# -- properties ------------------------------------------------------------------

def _random_potential(rng, N):
    c = rng.uniform(-0.02, 0.02, 3)
    return potential_from_function(INTERVAL, N, lambda x: c[0] * np.sin(np.pi * x[..., 0])
                                   + c[1] * x[..., 0] ** 3 + c[2] * np.exp(x[..., 0]), gauge=False)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2, 3]), st.floats(0, 1))
def test_endpoint_convexity(seed, p, t):
    rng = np.random.default_rng(seed)
    u0, u1, v0, v1 = (_random_potential(rng, 32) for _ in range(4))
    lhs = dp_distance(INTERVAL, geodesic_point(u0, v0, t), geodesic_point(u1, v1, t), p)
    rhs = (1 - t) * dp_distance(INTERVAL, u0, u1, p) + t * dp_distance(INTERVAL, v0, v1, p)
    assert lhs <= rhs + 1e-12


def _random_direction(rng, N):
    x = _x(N)
    kinks = rng.uniform(0, 1, 2)
    return (rng.uniform(0, 1) * np.maximum(0, x - kinks[0]) + rng.uniform(0, 1) * np.maximum(0, kinks[1] - x)
            + rng.uniform(0, 0.5) * x ** 2 + rng.uniform(-1, 1) * x)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_ray_pair_convexity_and_dichotomy(seed, same):
    rng = np.random.default_rng(seed)
    N = 32
    f1 = _random_direction(rng, N)
    f2 = f1 if same else _random_direction(rng, N)
    r1 = GeodesicRay(_random_potential(rng, N), f1)
    r2 = GeodesicRay(_random_potential(rng, N), f2)
    prof = pair_profile(INTERVAL, r1, r2, 1)
    assert prof.convexity_defect >= -1e-8
    assert prof.grows_linearly != prof.nonincreasing
    assert prof.nonincreasing == same


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 0.5))
def test_recentring(seed, eps):
    rng = np.random.default_rng(seed)
    N = 32
    u0, u1 = _random_potential(rng, N), _random_potential(rng, N)
    d1 = dp_distance(INTERVAL, u0, u1, 1)
    d1G = dpG_distance(INTERVAL, u0, u1, 1).value
    if d1 > d1G + eps:
        return
    for t in (0.25, 0.5, 1.0):
        ut = geodesic_point(u0, u1, t)
        assert dpG_distance(INTERVAL, u0, ut, 1).value >= dp_distance(INTERVAL, u0, ut, 1) - eps - 1e-8


def test_yen_lower_semicontinuity():
    N = 256
    u = guillemin_potential(INTERVAL, N)
    target = yen_invariant(INTERVAL, GeodesicRay.from_pl(u, PLConvexFn.crease([1], Fr(1, 2)))).yen
    diffs = []
    for k in range(4, 34, 6):
        c = Fr(1, 2) + Fr(1, 2 ** (k + 8))
        diffs.append(abs(yen_invariant(INTERVAL, GeodesicRay.from_pl(u, PLConvexFn.crease([1], c))).yen - target))
    assert diffs[-1] <= 1e-6
    assert all(a >= b for a, b in zip(diffs, diffs[1:]))


def test_parallelism_is_an_equivalence():
    rng = np.random.default_rng(7)
    N = 32
    f = _random_direction(rng, N)
    rays = [GeodesicRay(_random_potential(rng, N), f) for _ in range(3)]
    other = GeodesicRay(rays[0].base, f + _x(N) ** 2)
    for a in rays:
        assert are_parallel(INTERVAL, a, a)
        for b in rays:
            assert are_parallel(INTERVAL, a, b) == are_parallel(INTERVAL, b, a) is True
    assert not are_parallel(INTERVAL, rays[0], other)
    assert not are_parallel(INTERVAL, other, rays[1])


def test_transplanted_rays_share_gap_and_yen():
    rng = np.random.default_rng(11)
    N = 1024
    for _ in range(3):
        c = Fr(int(rng.integers(N // 4, 3 * N // 4)), N)
        ray = GeodesicRay.from_pl(_random_potential(rng, N), PLConvexFn.crease([1], c))
        moved = transplant_ray(ray, _random_potential(rng, N))
        gaps = [dp_distance(INTERVAL, ray.point(t), moved.point(t), 1) for t in (0, 1, 5, 10)]
        assert max(gaps) - min(gaps) <= 1e-10
        assert abs(yen_invariant(INTERVAL, ray, 16).yen - yen_invariant(INTERVAL, moved, 16).yen) <= 1e-8
