"""Donaldson's functional L_P and toric stability scans.

``L_P(f) = ∫_∂P f dσ - A ∫_P f dμ`` is evaluated exactly on piecewise linear
convex functions. Scans search crease families ``max(0, <a,x> - c)`` (and sums
of two creases) for the minimum of ``L_P`` (K criterion) or of
``L_P(f) / ∫_P |f̃| dμ`` with ``f̃`` the normalized part of ``f`` (uniform
criterion). A negative minimum certifies instability; a positive one is
evidence, not proof, of stability over the cone of all convex functions.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

from .errors import DegenerateGram, EmptyFamily
from .exact import Poly, Vector, as_fraction, as_vector, dot, solve
from .polytope import Cell, PiecewisePolynomial, Polytope, integrate


@dataclass(frozen=True)
class PLConvexFn:
    """``f(x) = max_i (<a_i, x> + b_i)``."""

    pieces: tuple[tuple[Vector, Fraction], ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("a PL function needs at least one piece")
        uniq = []
        for a, b in self.pieces:
            item = (as_vector(a), as_fraction(b))
            if item not in uniq:
                uniq.append(item)
        dims = {len(a) for a, _ in uniq}
        if len(dims) != 1:
            raise ValueError("pieces have inconsistent dimensions")
        object.__setattr__(self, "pieces", tuple(uniq))

    @property
    def dim(self) -> int:
        return len(self.pieces[0][0])

    @classmethod
    def crease(cls, direction: Sequence, offset) -> "PLConvexFn":
        a = as_vector(direction)
        return cls(((tuple(Fraction(0) for _ in a), Fraction(0)), (a, -as_fraction(offset))))

    @classmethod
    def affine(cls, gradient: Sequence, constant=0) -> "PLConvexFn":
        return cls(((as_vector(gradient), as_fraction(constant)),))

    @classmethod
    def from_json(cls, doc: Mapping) -> "PLConvexFn":
        pieces = []
        for p in doc["pieces"]:
            if isinstance(p["b"], float) or any(isinstance(x, float) for x in p["a"]):
                raise TypeError("PL coefficients must be rational strings, not floats")
            pieces.append((as_vector(p["a"]), as_fraction(p["b"])))
        return cls(tuple(pieces))

    def to_json(self) -> dict:
        return {"pieces": [{"a": [str(x) for x in a], "b": str(b)} for a, b in self.pieces]}

    def __call__(self, x: Sequence):
        return max(dot(a, x) + b for a, b in self.pieces)

    def evaluate(self, points):
        """Vectorized float evaluation on an ``(n, dim)`` array."""
        import numpy as np
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = [pts @ np.array([float(c) for c in a]) + float(b) for a, b in self.pieces]
        return np.max(vals, axis=0)

    def __add__(self, other: "PLConvexFn") -> "PLConvexFn":
        return PLConvexFn(tuple((tuple(x + y for x, y in zip(a1, a2)), b1 + b2)
                                for a1, b1 in self.pieces for a2, b2 in other.pieces))

    def scale(self, c) -> "PLConvexFn":
        c = as_fraction(c)
        if c < 0:
            raise ValueError("negative multiples of convex functions are not convex")
        return PLConvexFn(tuple((tuple(c * x for x in a), c * b) for a, b in self.pieces))

    def is_affine(self) -> bool:
        return len(self.pieces) == 1

    def piecewise(self) -> PiecewisePolynomial:
        """Linearity subdivision: piece ``i`` on ``{piece_i >= piece_j for all j}``."""
        cells = []
        for i, (ai, bi) in enumerate(self.pieces):
            hs = tuple((tuple(x - y for x, y in zip(ai, aj)), bi - bj)
                       for j, (aj, bj) in enumerate(self.pieces) if j != i)
            cells.append(Cell(hs, Poly.linear(ai, bi)))
        return PiecewisePolynomial(self.dim, tuple(cells))


def _as_piecewise(f) -> PiecewisePolynomial:
    if isinstance(f, PLConvexFn):
        return f.piecewise()
    if isinstance(f, Poly):
        return PiecewisePolynomial.single(f)
    return f


def lp_functional(P: Polytope, f, check: bool = True) -> Fraction:
    """Exact ``L_P(f)`` for a PL convex function or piecewise polynomial."""
    pw = _as_piecewise(f)
    return (integrate(P, pw, "boundary", check=check)
            - P.average_A * integrate(P, pw, "interior", check=check))


def _affine_basis(dim: int) -> list[Poly]:
    return [Poly.constant(dim, 1)] + [Poly.variable(dim, i) for i in range(dim)]


def normalize_pl(P: Polytope, f, check: bool = True) -> tuple[PiecewisePolynomial, Poly]:
    """Split ``f = f̃ + affine_part`` with ``f̃`` L²(P, dμ)-orthogonal to affines."""
    pw = _as_piecewise(f)
    basis = _affine_basis(P.dim)
    gram = [[integrate(P, e * g, check=False) for g in basis] for e in basis]
    rhs = [integrate(P, pw.times(e), check=check) for e in basis]
    coeffs = solve(gram, rhs)
    if coeffs is None:
        raise DegenerateGram(f"affine Gram matrix of {P.name} is singular")
    affine = Poly.linear(coeffs[1:], coeffs[0])
    tilde = PiecewisePolynomial(pw.dim, tuple(Cell(c.halfspaces, c.poly - affine) for c in pw.cells))
    return tilde, affine


def futaki(P: Polytope) -> tuple[Vector, Fraction]:
    """Coefficients of the linear map ``ℓ ↦ L_P(ℓ)`` on affine functions."""
    constant = lp_functional(P, Poly.constant(P.dim, 1))
    gradient = tuple(lp_functional(P, Poly.variable(P.dim, i)) for i in range(P.dim))
    return gradient, constant


# --- scans ---------------------------------------------------------------------

@dataclass(frozen=True)
class CreaseFamily:
    """Crease candidates ``max(0, <a,x> - c)``.

    ``offsets`` is either one list shared by all directions or a mapping from
    direction index to its own list. ``pairs`` adds sums of two distinct
    creases; ``extra`` appends arbitrary PL candidates.
    """

    directions: tuple
    offsets: object
    pairs: bool = False
    extra: tuple = ()

    @classmethod
    def from_mapping(cls, doc: Mapping) -> tuple["CreaseFamily", str]:
        """Parse a scan spec: ``directions``, then ``offsets`` (list) or
        ``offset_range = {start, stop, step}`` (inclusive), ``pairs``,
        ``criterion``. Numbers are integers or rational strings."""
        directions = tuple(as_vector(d) for d in doc["directions"])
        if "offsets" in doc:
            offs = doc["offsets"]
            if isinstance(offs, Mapping):
                offsets = {int(k): tuple(as_fraction(c) for c in v) for k, v in offs.items()}
            else:
                offsets = tuple(as_fraction(c) for c in offs)
        elif "offset_range" in doc:
            r = doc["offset_range"]
            start, stop, step = (as_fraction(r[k]) for k in ("start", "stop", "step"))
            if step <= 0:
                raise ValueError("offset_range step must be positive")
            offsets, c = [], start
            while c <= stop:
                offsets.append(c)
                c += step
            offsets = tuple(offsets)
        else:
            raise ValueError("scan spec needs 'offsets' or 'offset_range'")
        extra = tuple(PLConvexFn.from_json(e) for e in doc.get("extra", ()))
        criterion = doc.get("criterion", "K")
        return cls(directions, offsets, bool(doc.get("pairs", False)), extra), criterion

    def candidates(self) -> list[tuple[tuple, PLConvexFn]]:
        dirs = [as_vector(d) for d in self.directions]
        singles = []
        for i, d in enumerate(dirs):
            offs = self.offsets.get(i, ()) if isinstance(self.offsets, Mapping) else self.offsets
            for c in offs:
                c = as_fraction(c)
                singles.append(((d, c), PLConvexFn.crease(d, c)))
        out = [((0,) + key, f) for key, f in singles]
        if self.pairs:
            for (k1, f1), (k2, f2) in combinations(singles, 2):
                out.append(((1, k1, k2), f1 + f2))
        for i, f in enumerate(self.extra):
            out.append(((2, i), f))
        return out


@dataclass
class ScanRow:
    key: tuple
    function: PLConvexFn
    lp: Fraction
    abs_normalized: Fraction | None
    ratio: Fraction | None

    @property
    def label(self) -> tuple[str, str]:
        kind = self.key[0]
        if kind == 0:
            d, c = self.key[1], self.key[2]
            return " ".join(str(x) for x in d), str(c)
        if kind == 1:
            (d1, c1), (d2, c2) = self.key[1], self.key[2]
            return (" ".join(str(x) for x in d1) + ";" + " ".join(str(x) for x in d2),
                    f"{c1};{c2}")
        return f"extra[{self.key[1]}]", ""


@dataclass
class StabilityReport:
    criterion: str
    min_value: Fraction
    margin: Fraction | None
    witness: PLConvexFn
    scan_size: int
    skipped_zero: int = 0
    skipped_affine: int = 0
    rows: list[ScanRow] = field(default_factory=list)

    @property
    def stable_evidence(self) -> bool:
        return self.min_value > 0

    def csv_rows(self) -> list[list[str]]:
        """Header plus one row per scanned candidate, sorted by ``L_P`` then key."""
        out = [["direction", "offset", "L_P", "abs_normalized", "ratio"]]
        for r in sorted(self.rows, key=lambda r: (r.lp, r.key)):
            d, c = r.label
            out.append([d, c, repr(float(r.lp)),
                        "" if r.abs_normalized is None else repr(float(r.abs_normalized)),
                        "" if r.ratio is None else repr(float(r.ratio))])
        return out


def vanishes_on(P: Polytope, f: PLConvexFn) -> bool:
    """``f ≡ 0`` on ``P``; for convex ``f`` this is ``max_vertices f = 0 = ∫_P f``."""
    if max(f(v) for v in P.vertices) != 0:
        return False
    return integrate(P, f.piecewise(), check=False) == 0


def _evaluate_candidate(args):
    P, key, f, criterion = args
    if vanishes_on(P, f):
        return key, None
    pw = f.piecewise()
    lp = lp_functional(P, pw, check=False)
    if criterion == "K":
        return key, (lp, None, None)
    tilde, _ = normalize_pl(P, pw, check=False)
    l1 = integrate(P, tilde.abs(), check=False)
    ratio = lp / l1 if l1 != 0 else None
    return key, (lp, l1, ratio)


def stability_scan(P: Polytope, family: CreaseFamily, criterion: str = "K",
                   jobs: int = 1) -> StabilityReport:
    if criterion not in ("K", "uniform"):
        raise ValueError(f"criterion must be 'K' or 'uniform', not {criterion!r}")
    cands = family.candidates()
    if not cands:
        raise EmptyFamily("the candidate family is empty")
    work = [(P, key, f, criterion) for key, f in cands]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_candidate, work))
    else:
        results = [_evaluate_candidate(w) for w in work]
    fn = dict(cands)
    rows, zero, affine = [], 0, 0
    for key, res in results:
        if res is None:
            zero += 1
            continue
        lp, l1, ratio = res
        if criterion == "uniform" and ratio is None:
            affine += 1
            continue
        rows.append(ScanRow(key, fn[key], lp, l1, ratio))
    if not rows:
        raise EmptyFamily(f"all {len(cands)} candidates vanish on {P.name} or are affine")
    value = (lambda r: r.lp) if criterion == "K" else (lambda r: r.ratio)
    best = min(rows, key=lambda r: (value(r), r.key))
    margin = max(best.ratio, Fraction(0)) if criterion == "uniform" else None
    return StabilityReport(criterion, value(best), margin, best.function, len(cands),
                           zero, affine, rows)
