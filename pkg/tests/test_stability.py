from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings, strategies as st

from csck_lab.errors import EmptyFamily
from csck_lab.exact import Poly
from csck_lab.polytope import integrate, named_polytope
from csck_lab.stability import (CreaseFamily, PLConvexFn, futaki, lp_functional, normalize_pl,
                                stability_scan)

from oracles import lp_crease_sum, lp_interval_crease, lp_symbolic, x, y

SQUARE = named_polytope("square")
SIMPLEX = named_polytope("simplex")
INTERVAL = named_polytope("interval")
TRAPEZOID = named_polytope("trapezoid")


def test_lp_of_affine_on_simplex_vanishes():
    assert lp_functional(SIMPLEX, PLConvexFn.affine([1, 0])) == 0


def test_lp_of_square_crease():
    assert lp_functional(SQUARE, PLConvexFn.crease([1, 0], Fr(1, 2))) == Fr(1, 4)


def test_lp_of_interval_crease():
    assert lp_functional(INTERVAL, PLConvexFn.crease([1], Fr(1, 2))) == Fr(1, 4)


def test_normalize_interval_crease():
    f = PLConvexFn.crease([1], Fr(1, 2))
    tilde, affine = normalize_pl(INTERVAL, f)
    assert affine == Poly.linear([Fr(1, 2)], Fr(-1, 8))
    assert integrate(INTERVAL, tilde) == 0
    assert integrate(INTERVAL, tilde.times(Poly.variable(1, 0))) == 0


def test_normalize_affine_gives_zero():
    tilde, affine = normalize_pl(SQUARE, PLConvexFn.affine([2, -1], 3))
    assert affine == Poly.linear([2, -1], 3)
    assert all(c.poly.is_zero() for c in tilde.cells)


def test_futaki_values():
    assert futaki(SQUARE) == ((0, 0), 0)
    assert futaki(SIMPLEX) == ((0, 0), 0)
    grad, const = futaki(TRAPEZOID)
    assert const == 0
    assert grad != (0, 0)
    assert grad == (lp_symbolic("trapezoid", x), lp_symbolic("trapezoid", y))


def test_interval_scan():
    family = CreaseFamily(([1], [-1]), [Fr(1, 4), Fr(1, 2), Fr(3, 4)])
    report = stability_scan(INTERVAL, family, "K")
    expected = min(lp_interval_crease(c) for c in family.offsets)
    assert report.min_value == expected == Fr(3, 16)
    # tie between offsets 1/4 and 3/4 resolved lexicographically
    assert report.witness == PLConvexFn.crease([1], Fr(1, 4))
    # max(0, -x - c) vanishes on [0,1] for c > 0
    assert report.skipped_zero == 3
    assert report.scan_size == 6


def test_square_single_crease_scan():
    report = stability_scan(SQUARE, CreaseFamily(([1, 0],), [Fr(1, 2)]), "K")
    assert report.min_value == Fr(1, 4) > 0
    assert report.margin is None


def test_affine_family_scan_is_zero():
    extra = (PLConvexFn.affine([1, 0], 1), PLConvexFn.affine([0, 1], 2), PLConvexFn.affine([1, 1], 1))
    report = stability_scan(SQUARE, CreaseFamily((), (), extra=extra), "K")
    assert report.min_value == 0


def test_uniform_scan_on_interval():
    report = stability_scan(INTERVAL, CreaseFamily(([1],), [Fr(1, 4), Fr(1, 2)]), "uniform")
    for row in report.rows:
        assert row.ratio == row.lp / row.abs_normalized
    assert report.min_value == min(r.ratio for r in report.rows)
    assert report.margin == report.min_value > 0


def test_empty_family():
    with pytest.raises(EmptyFamily):
        stability_scan(SQUARE, CreaseFamily(([1, 0],), []), "K")
    with pytest.raises(EmptyFamily):
        stability_scan(INTERVAL, CreaseFamily(([-1],), [Fr(1, 2)]), "K")


def test_scan_spec_parsing():
    family, criterion = CreaseFamily.from_mapping({
        "directions": [[1, 0], [0, 1]],
        "offset_range": {"start": "0", "stop": "1", "step": "1/4"},
        "pairs": True, "criterion": "uniform"})
    assert criterion == "uniform"
    assert family.offsets == tuple(Fr(k, 4) for k in range(5))
    assert len(family.candidates()) == 10 + 45


def test_parallel_scan_matches_serial():
    family = CreaseFamily(([1, 0], [1, 1]), [Fr(1, 4), Fr(1, 2), Fr(3, 4)], pairs=True)
    a = stability_scan(SIMPLEX, family, "K", jobs=1)
    b = stability_scan(SIMPLEX, family, "K", jobs=2)
    assert (a.min_value, a.witness, a.csv_rows()) == (b.min_value, b.witness, b.csv_rows())


def test_pl_json_round_trip_and_float_rejection():
    f = PLConvexFn.crease([1, -1], Fr(1, 3)) + PLConvexFn.crease([0, 1], Fr(1, 2))
    assert PLConvexFn.from_json(f.to_json()) == f
    with pytest.raises(TypeError):
        PLConvexFn.from_json({"pieces": [{"a": [0.5], "b": "0"}]})


# -- properties ------------------------------------------------------------------

small = st.integers(-2, 2)
direction = st.tuples(small, small).filter(lambda d: d != (0, 0))
offset = st.fractions(min_value=-1, max_value=2, max_denominator=6)
crease = st.tuples(direction, offset)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["square", "simplex", "trapezoid"]), st.lists(crease, min_size=1, max_size=2))
def test_lp_matches_symbolic_oracle(name, creases):
    P = named_polytope(name)
    f = PLConvexFn.crease(*creases[0])
    for c in creases[1:]:
        f = f + PLConvexFn.crease(*c)
    assert lp_functional(P, f) == lp_crease_sum(name, creases)


@settings(max_examples=15, deadline=None)
@given(crease, crease, st.fractions(0, 3, max_denominator=4), st.fractions(0, 3, max_denominator=4))
def test_linearity(c1, c2, alpha, beta):
    f, g = PLConvexFn.crease(*c1), PLConvexFn.crease(*c2)
    combo = f.scale(alpha) + g.scale(beta)
    assert lp_functional(SQUARE, combo) == alpha * lp_functional(SQUARE, f) + beta * lp_functional(SQUARE, g)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["square", "simplex", "trapezoid", "interval"]),
       st.lists(st.fractions(-3, 3, max_denominator=5), min_size=3, max_size=3))
def test_lp_on_affines_is_futaki(name, coeffs):
    P = named_polytope(name)
    a, b = coeffs[:P.dim], coeffs[2]
    grad, const = futaki(P)
    assert const == 0
    assert lp_functional(P, PLConvexFn.affine(a, b)) == sum(g * c for g, c in zip(grad, a))


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["square", "trapezoid"]), crease)
def test_normalization_invariance_and_idempotence(name, c):
    P = named_polytope(name)
    f = PLConvexFn.crease(*c)
    tilde, affine = normalize_pl(P, f)
    assert lp_functional(P, f) == lp_functional(P, tilde) + lp_functional(P, affine)
    if futaki(P)[0] == (0, 0):
        assert lp_functional(P, f) == lp_functional(P, tilde)
    again, zero = normalize_pl(P, tilde)
    assert zero.is_zero()
    assert [cell.poly for cell in again.cells] == [cell.poly for cell in tilde.cells]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.fractions(-3, 3, max_denominator=6), st.fractions(-3, 3, max_denominator=6)),
                min_size=1, max_size=5))
def test_one_dimensional_positivity(pieces):
    f = PLConvexFn(tuple(((a,), b) for a, b in pieces))
    value = lp_functional(INTERVAL, f)
    assert value >= 0
    tilde, _ = normalize_pl(INTERVAL, f)
    if value == 0:
        assert integrate(INTERVAL, tilde.abs()) == 0
