from fractions import Fraction as Fr

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from csck_lab.errors import (EmptyInterior, NonPrimitiveNormal, NotDelzant, RedundantFacet,
                             SchemaError, SubdivisionGap, Unbounded)
from csck_lab.exact import Poly
from csck_lab.polytope import (Cell, PiecewisePolynomial, integrate, load_polytope,
                               make_polytope, measure, named_polytope)

SQUARE = named_polytope("square")
SIMPLEX = named_polytope("simplex")
INTERVAL = named_polytope("interval")


def test_interval_loads_with_vertices():
    P = load_polytope({"name": "I", "dim": 1,
                       "facets": [{"normal": [1], "offset": "0"}, {"normal": [-1], "offset": "1"}]})
    assert P.vertices == ((Fr(0),), (Fr(1),))


def test_simplex_vertices():
    assert set(SIMPLEX.vertices) == {(0, 0), (1, 0), (0, 1)}


def test_non_primitive_normal_rejected():
    with pytest.raises(NonPrimitiveNormal):
        make_polytope([((2, 0), 0), ((-1, 0), 1), ((0, 1), 0), ((0, -1), 1)])


def test_other_validation_errors():
    with pytest.raises(Unbounded):
        make_polytope([((1, 0), 0), ((0, 1), 0)])
    with pytest.raises(EmptyInterior):
        make_polytope([((1,), 0), ((-1,), -1)])
    with pytest.raises(NotDelzant):
        # at (0,1) the normals (1,0), (-1,-2) span an index-2 sublattice
        make_polytope([((1, 0), 0), ((0, 1), 0), ((-1, -2), 2)])
    with pytest.raises(RedundantFacet):
        make_polytope([((1,), 0), ((-1,), 1), ((-1,), 5)])


def test_float_offsets_rejected():
    with pytest.raises(SchemaError):
        load_polytope({"name": "I", "dim": 1,
                       "facets": [{"normal": [1], "offset": 0.0}, {"normal": [-1], "offset": "1"}]})


def test_json_round_trip():
    P = named_polytope("trapezoid")
    assert load_polytope(P.to_json()) == P


@pytest.mark.parametrize("name,vol,mass,A", [
    ("square", 1, 4, 4), ("simplex", Fr(1, 2), 3, 6), ("interval", 1, 2, 2),
    ("cube", 1, 6, 6), ("simplex3", Fr(1, 6), 2, 12),
])
def test_measures(name, vol, mass, A):
    P = named_polytope(name)
    assert measure(P, "volume") == vol
    assert measure(P, "boundary_mass") == mass
    assert measure(P, "average_A") == A


def test_boundary_integral_of_x_on_simplex():
    x = Poly.variable(2, 0)
    assert integrate(SIMPLEX, x, "boundary") == 1
    # per facet: y=0 gives 1/2, x=0 gives 0, hypotenuse gives 1/2
    from csck_lab.polytope import integrate_region
    per = {tuple(f.normal): integrate_region(SIMPLEX, (), x, "boundary", [k])
           for k, f in enumerate(SIMPLEX.facets)}
    assert per == {(1, 0): 0, (0, 1): Fr(1, 2), (-1, -1): Fr(1, 2)}


def test_crease_on_interval():
    f = PiecewisePolynomial(1, (
        Cell((((-1,), Fr(1, 2)),), Poly.constant(1, 0)),
        Cell((((1,), Fr(-1, 2)),), Poly.linear([1], Fr(-1, 2))),
    ))
    assert integrate(INTERVAL, f) == Fr(1, 8)


def test_subdivision_gap():
    half = PiecewisePolynomial(2, (Cell((((-1, 0), Fr(1, 2)),), Poly.constant(2, 1)),))
    with pytest.raises(SubdivisionGap):
        integrate(SQUARE, half)


X, Y = sp.symbols("x y")
coeff = st.integers(-5, 5)
monomials = [(i, j) for i in range(5) for j in range(5 - i)]


def _random_poly(coeffs):
    terms = {m: Fr(c) for m, c in zip(monomials, coeffs)}
    expr = sum(c * X**i * Y**j for (i, j), c in zip(monomials, coeffs))
    return Poly(2, terms), expr


@settings(max_examples=25, deadline=None)
@given(st.lists(coeff, min_size=len(monomials), max_size=len(monomials)))
def test_exact_against_symbolic_antiderivative(coeffs):
    p, expr = _random_poly(coeffs)
    square = sp.integrate(expr, (X, 0, 1), (Y, 0, 1))
    simplex = sp.integrate(expr, (Y, 0, 1 - X), (X, 0, 1))
    assert integrate(SQUARE, p) == Fr(int(square.p), int(square.q))
    assert integrate(SIMPLEX, p) == Fr(int(simplex.p), int(simplex.q))


@settings(max_examples=25, deadline=None)
@given(st.lists(coeff, min_size=len(monomials), max_size=len(monomials)),
       st.lists(coeff, min_size=len(monomials), max_size=len(monomials)),
       st.sampled_from(["interior", "boundary"]))
def test_additivity(c1, c2, region):
    p, _ = _random_poly(c1)
    q, _ = _random_poly(c2)
    for P in (SQUARE, SIMPLEX):
        assert integrate(P, p + q, region) == integrate(P, p, region) + integrate(P, q, region)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["square", "simplex", "trapezoid", "interval", "simplex3"]),
       st.lists(st.integers(-4, 4), min_size=3, max_size=3))
def test_translation_covariance(name, shift):
    P = named_polytope(name)
    s = shift[:P.dim]
    Q = P.translate(s)
    assert Q.volume == P.volume
    assert Q.boundary_mass == P.boundary_mass
    assert Q.average_A == P.average_A
    assert Q.barycenter == tuple(b + t for b, t in zip(P.barycenter, s))
