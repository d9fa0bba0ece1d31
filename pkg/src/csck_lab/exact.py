"""Exact rational helpers: sparse multivariate polynomials and small dense
linear algebra over :class:`fractions.Fraction`."""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from math import factorial
from typing import Iterable, Mapping, Sequence

Vector = tuple  # tuple[Fraction, ...]


def as_fraction(value) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings; reject floats."""
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"expected an exact rational, got {type(value).__name__}: {value!r}")


def as_vector(values: Iterable) -> Vector:
    return tuple(as_fraction(v) for v in values)


def dot(a: Sequence, b: Sequence):
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


# --- linear algebra ---------------------------------------------------------

def _rref(rows: list[list[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    m = [list(r) for r in rows]
    pivots = []
    r = 0
    ncols = len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m, pivots


def rank(rows: Sequence[Sequence]) -> int:
    if not rows:
        return 0
    return len(_rref([[as_fraction(x) for x in r] for r in rows])[1])


def det(matrix: Sequence[Sequence]) -> Fraction:
    n = len(matrix)
    m = [[as_fraction(x) for x in row] for row in matrix]
    sign = 1
    result = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if m[i][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            sign = -sign
        result *= m[c][c]
        for i in range(c + 1, n):
            if m[i][c] != 0:
                f = m[i][c] / m[c][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[c])]
    return sign * result


def solve(matrix: Sequence[Sequence], rhs: Sequence) -> Vector | None:
    """Unique solution of a square system, or ``None`` when singular."""
    n = len(matrix)
    aug = [[as_fraction(x) for x in row] + [as_fraction(b)] for row, b in zip(matrix, rhs)]
    red, pivots = _rref(aug)
    if pivots != list(range(n)):
        return None
    return tuple(red[i][n] for i in range(n))


def nullspace(rows: Sequence[Sequence], ncols: int) -> list[Vector]:
    if not rows:
        return [tuple(Fraction(int(i == j)) for j in range(ncols)) for i in range(ncols)]
    red, pivots = _rref([[as_fraction(x) for x in r] for r in rows])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, p in enumerate(pivots):
            v[p] = -red[i][f]
        basis.append(tuple(v))
    return basis


def cross(vectors: Sequence[Sequence]) -> Vector:
    """Generalized cross product of ``d-1`` vectors in dimension ``d``."""
    d = len(vectors) + 1
    out = []
    for i in range(d):
        minor = [[v[j] for j in range(d) if j != i] for v in vectors]
        out.append((-1) ** i * det(minor) if minor else Fraction((-1) ** i))
    return tuple(out)


# --- polynomials -------------------------------------------------------------

class Poly:
    """Sparse polynomial with Fraction coefficients, keyed by exponent tuples."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple, Fraction] | None = None):
        self.nvars = nvars
        self.terms = {k: Fraction(v) for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def constant(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: as_fraction(c)})

    @classmethod
    def linear(cls, coeffs: Sequence, const=0) -> "Poly":
        n = len(coeffs)
        terms = {(0,) * n: as_fraction(const)}
        for i, a in enumerate(coeffs):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = terms.get(tuple(e), Fraction(0)) + as_fraction(a)
        return cls(n, terms)

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.constant(self.nvars, other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, Fraction(0)) + c
        return Poly(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else -as_fraction(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            c = as_fraction(other)
            return Poly(self.nvars, {e: c * v for e, v in self.terms.items()})
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, Fraction(0)) + c1 * c2
        return Poly(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Poly.constant(self.nvars, 1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Poly):
            other = Poly.constant(self.nvars, other)
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"Poly({self.nvars}, {self.terms})"

    def __call__(self, point: Sequence):
        total = Fraction(0) if all(isinstance(p, (int, Fraction)) for p in point) else 0.0
        for e, c in self.terms.items():
            term = c
            for x, k in zip(point, e):
                if k:
                    term = term * x ** k
            total = total + term
        return total

    def linear_part(self) -> tuple[Vector, Fraction]:
        """``(a, b)`` with ``self = <a, x> + b``; raises if nonlinear."""
        if self.degree > 1:
            raise ValueError("polynomial is not affine")
        zero = (0,) * self.nvars
        b = self.terms.get(zero, Fraction(0))
        a = []
        for i in range(self.nvars):
            e = [0] * self.nvars
            e[i] = 1
            a.append(self.terms.get(tuple(e), Fraction(0)))
        return tuple(a), b

    def compose_affine(self, origin: Sequence, columns: Sequence[Sequence]) -> "Poly":
        """Substitute ``x = origin + sum_j lam_j * columns[j]``."""
        k = len(columns)
        images = []
        for i in range(self.nvars):
            images.append(Poly.linear([col[i] for col in columns], origin[i]) if k
                          else Poly.constant(0, origin[i]))
        out = Poly(k)
        powers: dict = {}
        for e, c in self.terms.items():
            term = Poly.constant(k, c)
            for i, p in enumerate(e):
                if p:
                    key = (i, p)
                    if key not in powers:
                        powers[key] = images[i] ** p
                    term = term * powers[key]
            out = out + term
        return out


def simplex_moment(exponent: Sequence[int]) -> Fraction:
    """Integral of ``lam^exponent`` over the standard simplex in R^k."""
    k = len(exponent)
    num = 1
    for a in exponent:
        num *= factorial(a)
    return Fraction(num, factorial(sum(exponent) + k))


def integrate_standard_simplex(poly: Poly) -> Fraction:
    return sum((c * simplex_moment(e) for e, c in poly.terms.items()), Fraction(0))


def lattice_points_box(lo: Sequence[int], hi: Sequence[int]):
    return product(*(range(a, b + 1) for a, b in zip(lo, hi)))
