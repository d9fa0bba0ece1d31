"""Delzant polytopes in dimensions 1-3 with exact rational measures.

A polytope is presented by facets ``<x, nu_k> + c_k >= 0`` with primitive
integer normals. The boundary measure on facet ``k`` is the Euclidean facet
measure divided by ``|nu_k|``, which makes every boundary mass rational; in
dimension one each endpoint carries unit mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import combinations
from math import gcd
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (EmptyInterior, NonPrimitiveNormal, NotDelzant, RedundantFacet,
                     SchemaError, SubdivisionGap, Unbounded)
from .exact import (Poly, Vector, as_fraction, as_vector, cross, det, dot,
                    integrate_standard_simplex, nullspace, rank, solve)

Halfspace = tuple  # (a: Vector, b: Fraction) meaning <a, x> + b >= 0


@dataclass(frozen=True)
class Facet:
    normal: tuple[int, ...]
    offset: Fraction

    def value(self, x: Sequence) -> Fraction:
        return dot(self.normal, x) + self.offset

    @property
    def halfspace(self) -> Halfspace:
        return (tuple(Fraction(n) for n in self.normal), self.offset)


def _hs_value(h: Halfspace, x: Sequence):
    return dot(h[0], x) + h[1]


def region_vertices(halfspaces: Sequence[Halfspace], dim: int) -> list[Vector]:
    """Vertices of ``{x : <a,x> + b >= 0}`` by exact enumeration of
    ``dim``-subsets of tight constraints."""
    found: set = set()
    for combo in combinations(range(len(halfspaces)), dim):
        mat = [halfspaces[i][0] for i in combo]
        rhs = [-halfspaces[i][1] for i in combo]
        x = solve(mat, rhs)
        if x is None:
            continue
        if all(_hs_value(h, x) >= 0 for h in halfspaces):
            found.add(x)
    return sorted(found)


def affine_dimension(points: Sequence[Vector]) -> int:
    if len(points) <= 1:
        return 0 if points else -1
    base = points[0]
    return rank([[a - b for a, b in zip(p, base)] for p in points[1:]])


def triangulate(points: Sequence[Vector], halfspaces: Sequence[Halfspace], k: int) -> list[tuple]:
    """Pulling triangulation of the ``k``-dimensional face with vertex set
    ``points``; faces are cut out by the tight constraints in ``halfspaces``."""
    pts = sorted(set(points))
    if k == 0:
        return [(pts[0],)]
    if k == 1:
        # endpoints of a segment: extreme along its direction
        d = [a - b for a, b in zip(pts[-1], pts[0])]
        proj = sorted(pts, key=lambda p: dot(p, d))
        return [(proj[0], proj[-1])]
    apex = pts[0]
    out = []
    seen = set()
    for h in halfspaces:
        face = tuple(p for p in pts if _hs_value(h, p) == 0)
        if apex in face or face in seen:
            continue
        if affine_dimension(list(face)) != k - 1:
            continue
        seen.add(face)
        for simplex in triangulate(face, halfspaces, k - 1):
            out.append((apex,) + simplex)
    return out


def simplex_volume(simplex: Sequence[Vector]) -> Fraction:
    v0 = simplex[0]
    edges = [[a - b for a, b in zip(v, v0)] for v in simplex[1:]]
    return abs(det(edges)) / _factorial(len(edges))


def _factorial(n: int) -> int:
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


@dataclass(frozen=True, eq=False)
class Polytope:
    dim: int
    facets: tuple[Facet, ...]
    name: str = "P"
    vertices: tuple[Vector, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(_validate(self.dim, self.facets)))

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return (self.dim, self.facets, self.name) == (other.dim, other.facets, other.name)

    def __hash__(self):
        return hash((self.dim, self.facets, self.name))

    # -- combinatorics --------------------------------------------------------

    @property
    def halfspaces(self) -> tuple[Halfspace, ...]:
        return tuple(f.halfspace for f in self.facets)

    def contains(self, x: Sequence) -> bool:
        return all(f.value(x) >= 0 for f in self.facets)

    def bounding_box(self) -> tuple[Vector, Vector]:
        lo = tuple(min(v[i] for v in self.vertices) for i in range(self.dim))
        hi = tuple(max(v[i] for v in self.vertices) for i in range(self.dim))
        return lo, hi

    @cached_property
    def simplices(self) -> list[tuple]:
        return triangulate(list(self.vertices), self.halfspaces, self.dim)

    # -- measures ---------------------------------------------------------------

    @cached_property
    def volume(self) -> Fraction:
        return sum((simplex_volume(s) for s in self.simplices), Fraction(0))

    def facet_mass(self, k: int) -> Fraction:
        return integrate_region(self, (), Poly.constant(self.dim, 1), "boundary", facets=[k])

    @cached_property
    def boundary_mass(self) -> Fraction:
        return sum((self.facet_mass(k) for k in range(len(self.facets))), Fraction(0))

    @cached_property
    def average_A(self) -> Fraction:
        return self.boundary_mass / self.volume

    @cached_property
    def barycenter(self) -> Vector:
        return tuple(integrate_region(self, (), Poly.variable(self.dim, i), "interior") / self.volume
                     for i in range(self.dim))

    def translate(self, shift: Sequence[int]) -> "Polytope":
        """Translate by an integer vector."""
        shift = tuple(int(s) for s in shift)
        facets = tuple(Facet(f.normal, f.offset - dot(f.normal, shift)) for f in self.facets)
        return Polytope(self.dim, facets, f"{self.name}+{list(shift)}")

    def to_json(self) -> dict:
        return {"name": self.name, "dim": self.dim,
                "facets": [{"normal": list(f.normal), "offset": str(f.offset)} for f in self.facets]}


def _validate(dim: int, facets: Sequence[Facet]) -> list[Vector]:
    if not 1 <= dim <= 3:
        raise SchemaError(f"dimension must be 1, 2 or 3 (got {dim})")
    if len(facets) < dim + 1:
        raise Unbounded(f"{len(facets)} facets cannot bound a {dim}-dimensional polytope")
    for f in facets:
        if len(f.normal) != dim:
            raise SchemaError(f"normal {f.normal} has wrong length for dim {dim}")
        g = 0
        for n in f.normal:
            g = gcd(g, abs(n))
        if g != 1:
            raise NonPrimitiveNormal(f"normal {list(f.normal)} is not primitive")
    normals = [f.normal for f in facets]
    if rank(normals) < dim:
        raise Unbounded("facet normals do not span; the region contains a line")
    # recession cone {y : <nu_k, y> >= 0} must be trivial; test its candidate rays
    for combo in combinations(range(len(facets)), dim - 1):
        rows = [normals[i] for i in combo]
        if rank(rows) != dim - 1:
            continue
        for y in nullspace(rows, dim):
            for sgn in (1, -1):
                ray = tuple(sgn * c for c in y)
                if all(dot(n, ray) >= 0 for n in normals):
                    raise Unbounded(f"unbounded along direction {[str(c) for c in ray]}")
    hs = [f.halfspace for f in facets]
    verts = region_vertices(hs, dim)
    if affine_dimension(verts) < dim:
        raise EmptyInterior("polytope has empty interior")
    for k, f in enumerate(facets):
        on = [v for v in verts if f.value(v) == 0]
        if affine_dimension(on) < dim - 1:
            raise RedundantFacet(f"facet {k} ({list(f.normal)}, {f.offset}) does not support a facet")
    for v in verts:
        tight = [f.normal for f in facets if f.value(v) == 0]
        if len(tight) != dim:
            raise NotDelzant(f"vertex {[str(c) for c in v]} lies on {len(tight)} facets, not {dim}")
        if abs(det(tight)) != 1:
            raise NotDelzant(f"normals at vertex {[str(c) for c in v]} are not a lattice basis")
    return verts


def make_polytope(facets: Iterable[tuple[Sequence[int], object]], name: str = "P") -> Polytope:
    fs = tuple(Facet(tuple(int(n) for n in normal), as_fraction(offset)) for normal, offset in facets)
    dim = len(fs[0].normal) if fs else 0
    return Polytope(dim, fs, name)


def load_polytope(spec: Mapping | str | Path) -> Polytope:
    """Build a validated polytope from the JSON document
    ``{"name", "dim", "facets": [{"normal": [...], "offset": "p/q"}]}``."""
    if isinstance(spec, (str, Path)) and not str(spec).lstrip().startswith("{"):
        spec = json.loads(Path(spec).read_text())
    elif isinstance(spec, str):
        spec = json.loads(spec)
    try:
        dim = spec["dim"]
        raw = spec["facets"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"polytope document missing field: {exc}") from None
    if not isinstance(dim, int) or isinstance(dim, bool):
        raise SchemaError("dim must be an integer")
    facets = []
    for entry in raw:
        normal = entry.get("normal")
        offset = entry.get("offset")
        if not isinstance(normal, list) or not all(isinstance(n, int) and not isinstance(n, bool)
                                                   for n in normal):
            raise SchemaError(f"normal must be a list of integers: {normal!r}")
        if isinstance(offset, float):
            raise SchemaError(f"offset must be a rational string, got float {offset!r}")
        try:
            off = as_fraction(offset)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise SchemaError(f"bad offset {offset!r}: {exc}") from None
        facets.append(Facet(tuple(normal), off))
    if any(len(f.normal) != dim for f in facets):
        raise SchemaError("normal length disagrees with dim")
    return Polytope(dim, tuple(facets), str(spec.get("name", "P")))


def named_polytope(name: str) -> Polytope:
    """The model polytopes used throughout the tests and the CLI."""
    table = {
        "interval": [((1,), 0), ((-1,), 1)],
        "square": [((1, 0), 0), ((0, 1), 0), ((-1, 0), 1), ((0, -1), 1)],
        "simplex": [((1, 0), 0), ((0, 1), 0), ((-1, -1), 1)],
        "trapezoid": [((1, 0), 0), ((0, 1), 0), ((0, -1), 1), ((-1, -1), 2)],
        "cube": [((1, 0, 0), 0), ((0, 1, 0), 0), ((0, 0, 1), 0),
                 ((-1, 0, 0), 1), ((0, -1, 0), 1), ((0, 0, -1), 1)],
        "simplex3": [((1, 0, 0), 0), ((0, 1, 0), 0), ((0, 0, 1), 0), ((-1, -1, -1), 1)],
    }
    if name not in table:
        raise SchemaError(f"unknown named polytope {name!r}; choose from {sorted(table)}")
    return make_polytope(table[name], name)


# --- piecewise polynomial integration -----------------------------------------

@dataclass(frozen=True)
class Cell:
    """Polynomial ``poly`` on ``P ∩ {<a,x> + b >= 0 for (a, b) in halfspaces}``."""
    halfspaces: tuple
    poly: Poly


@dataclass(frozen=True)
class PiecewisePolynomial:
    dim: int
    cells: tuple[Cell, ...]

    @classmethod
    def single(cls, poly: Poly) -> "PiecewisePolynomial":
        return cls(poly.nvars, (Cell((), poly),))

    def __call__(self, x: Sequence):
        for cell in self.cells:
            if all(_hs_value(h, x) >= 0 for h in cell.halfspaces):
                return cell.poly(x)
        raise SubdivisionGap(f"point {x} is not covered by any cell")

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        cells = []
        for c1 in self.cells:
            for c2 in other.cells:
                cells.append(Cell(c1.halfspaces + c2.halfspaces, c1.poly + c2.poly))
        return PiecewisePolynomial(self.dim, tuple(cells))

    def scale(self, c) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.dim, tuple(Cell(x.halfspaces, x.poly * c) for x in self.cells))

    def __sub__(self, other):
        return self + other.scale(-1)

    def abs(self) -> "PiecewisePolynomial":
        """|f| for piecewise affine f: each cell split along its zero set."""
        cells = []
        for c in self.cells:
            a, b = c.poly.linear_part()
            if all(x == 0 for x in a):
                cells.append(Cell(c.halfspaces, c.poly if b >= 0 else -c.poly))
                continue
            pos = (a, b)
            neg = (tuple(-x for x in a), -b)
            cells.append(Cell(c.halfspaces + (pos,), c.poly))
            cells.append(Cell(c.halfspaces + (neg,), -c.poly))
        return PiecewisePolynomial(self.dim, tuple(cells))

    def times(self, poly: Poly) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.dim, tuple(Cell(c.halfspaces, c.poly * poly) for c in self.cells))


@lru_cache(maxsize=8192)
def _cell_vertices(P: Polytope, extra: tuple) -> list[Vector]:
    return region_vertices(list(P.halfspaces) + list(extra), P.dim)


@lru_cache(maxsize=8192)
def _cell_simplices(P: Polytope, extra: tuple, region: str, facet: int | None):
    hs = list(P.halfspaces) + list(extra)
    verts = _cell_vertices(P, extra)
    # measure-zero cells contribute nothing, on the boundary either
    if affine_dimension(verts) < P.dim:
        return ()
    if region == "interior":
        return tuple(triangulate(verts, hs, P.dim))
    f = P.facets[facet]
    on = [v for v in verts if f.value(v) == 0]
    if affine_dimension(on) < P.dim - 1:
        return ()
    return tuple(triangulate(on, hs, P.dim - 1))


def integrate_region(P: Polytope, extra: tuple, poly: Poly, region: str = "interior",
                     facets: Sequence[int] | None = None) -> Fraction:
    """Exact integral of ``poly`` over ``P ∩ extra`` (``region="interior"``, dμ)
    or over its intersection with the boundary (``region="boundary"``, dσ)."""
    if region == "interior":
        total = Fraction(0)
        for s in _cell_simplices(P, extra, "interior", None):
            v0 = s[0]
            cols = [tuple(a - b for a, b in zip(v, v0)) for v in s[1:]]
            jac = abs(det(cols))
            total += jac * integrate_standard_simplex(poly.compose_affine(v0, cols))
        return total
    if region != "boundary":
        raise ValueError(f"region must be 'interior' or 'boundary', not {region!r}")
    total = Fraction(0)
    for k in (range(len(P.facets)) if facets is None else facets):
        for s in _cell_simplices(P, extra, "boundary", k):
            if P.dim == 1:
                total += poly(s[0])
                continue
            v0 = s[0]
            cols = [tuple(a - b for a, b in zip(v, v0)) for v in s[1:]]
            n = cross(cols)
            normal = P.facets[k].normal
            j = next(i for i, c in enumerate(normal) if c != 0)
            scale = abs(n[j] / normal[j])
            total += scale * integrate_standard_simplex(poly.compose_affine(v0, cols))
    return total


def integrate(P: Polytope, f: PiecewisePolynomial | Poly, region: str = "interior",
              check: bool = True) -> Fraction:
    """Exact integral of a piecewise polynomial over ``P`` (``interior``) or
    ``∂P`` (``boundary``). With ``check`` the cells must tile the region."""
    if isinstance(f, Poly):
        f = PiecewisePolynomial.single(f)
    if f.dim != P.dim:
        raise ValueError("function and polytope dimensions differ")
    if any(c.poly.degree > 6 for c in f.cells):
        raise ValueError("cell polynomials are limited to degree 6")
    one = Poly.constant(P.dim, 1)
    total = Fraction(0)
    covered = Fraction(0)
    for cell in f.cells:
        total += integrate_region(P, cell.halfspaces, cell.poly, region)
        if check:
            covered += integrate_region(P, cell.halfspaces, one, region)
    if check:
        expected = P.volume if region == "interior" else P.boundary_mass
        if covered != expected:
            raise SubdivisionGap(f"cells cover {covered} of the {region} measure {expected}")
    return total


def measure(P: Polytope, kind: str):
    if kind == "volume":
        return P.volume
    if kind == "boundary_mass":
        return P.boundary_mass
    if kind == "barycenter":
        return P.barycenter
    if kind == "average_A":
        return P.average_A
    raise ValueError(f"unknown measure kind {kind!r}")
