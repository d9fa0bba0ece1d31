"""Flat toric geodesic geometry: d_p, d_{p,G}, rays and the ¥ invariant.

Torus-invariant geodesics are straight lines ``u_t = (1-t)u₀ + t u₁`` in the
symplectic potential, ``d_p`` is the ``L^p(P, dμ)`` distance between
potentials and the group orbit of ``u`` is ``{u + affine}``. A ray is
``ρ(s) = base + s·f`` with ``f`` convex; ``¥[ρ]`` is read off the last increment
``K(ρ(k_max)) - K(ρ(k_max - 1))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize

from .errors import GridMismatch, NoConvergence
from .polytope import Polytope, named_polytope
from .stability import PLConvexFn
from .toric_energy import (SymplecticPotential, grid_weights, guillemin_potential, load_potential,
                           mabuchi_energy, make_grid)

GROWTH_SLOPE_TOL = 1e-4
NONINCREASING_TOL = 1e-10


def _difference(u0, u1) -> tuple[Polytope, int, np.ndarray]:
    a = u0.v if isinstance(u0, SymplecticPotential) else None
    b = u1.v if isinstance(u1, SymplecticPotential) else None
    if isinstance(u0, SymplecticPotential) and isinstance(u1, SymplecticPotential):
        if u0.polytope != u1.polytope or u0.N != u1.N:
            raise GridMismatch("potentials live on different polytopes or grids")
    ref = u0 if a is not None else u1
    if a is None:
        a = np.asarray(u0, dtype=float)
    if b is None:
        b = np.asarray(u1, dtype=float)
    if a.shape != b.shape:
        raise GridMismatch(f"grid shapes differ: {a.shape} vs {b.shape}")
    return ref.polytope, ref.N, a - b


def weighted_norm(P: Polytope, N: int, g: np.ndarray, p: float) -> float:
    """``‖I(g)‖_{L^p(P)}`` with the node weights of ``grid_weights`` (``p = inf``: max over nodes in P)."""
    w, _ = grid_weights(P, N)
    if np.isinf(p):
        return float(np.max(np.abs(g[w > 0])))
    if p < 1:
        raise ValueError("p must be at least 1")
    return float(np.sum(w * np.abs(g) ** p)) ** (1.0 / p)


def dp_distance(P: Polytope, u0, u1, p: float = 1.0) -> float:
    Q, N, d = _difference(u0, u1)
    if Q != P:
        raise GridMismatch("potentials live on a different polytope")
    return weighted_norm(P, N, d, p)


@dataclass(frozen=True)
class AffineFit:
    value: float
    gradient: tuple[float, ...]
    constant: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ np.array(self.gradient) + self.constant

    def __iter__(self):
        return iter((self.value, self))


def best_affine(P: Polytope, N: int, g: np.ndarray, p: float, tol: float = 1e-8) -> AffineFit:
    """``min_ℓ ‖g - ℓ‖_p`` over affine ``ℓ``."""
    w, _ = grid_weights(P, N)
    mask = w > 0
    X = make_grid(P, N).points()[mask]
    y = g[mask]
    wt = w[mask]
    A = np.hstack([X, np.ones((len(y), 1))])
    dim = P.dim
    if p == 2:
        sw = np.sqrt(wt)
        coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    elif p == 1 or np.isinf(p):
        n = len(y)
        if p == 1:
            c = np.concatenate([np.zeros(dim + 1), wt])
            eye = sparse.identity(n, format="csr")
            A_ub = sparse.bmat([[sparse.csr_matrix(A), -eye], [sparse.csr_matrix(-A), -eye]], format="csr")
        else:
            c = np.concatenate([np.zeros(dim + 1), [1.0]])
            ones = np.ones((n, 1))
            A_ub = np.block([[A, -ones], [-A, -ones]])
        b_ub = np.concatenate([y, -y])
        bounds = [(None, None)] * (dim + 1) + [(0, None)] * (len(c) - dim - 1)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise NoConvergence(f"linear program failed: {res.message}", best=None)
        coef = res.x[:dim + 1]
    else:
        sw = np.sqrt(wt)
        start, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)

        def obj(c):
            r = y - A @ c
            return float(np.sum(wt * np.abs(r) ** p)), -(A.T @ (wt * p * np.abs(r) ** (p - 1) * np.sign(r)))

        res = minimize(obj, start, jac=True, method="BFGS", options={"gtol": tol * 1e-2, "maxiter": 2000})
        if not res.success and np.linalg.norm(res.jac) > tol:
            best = AffineFit(weighted_norm(P, N, g - (make_grid(P, N).points() @ res.x[:dim] + res.x[dim]), p),
                             tuple(map(float, res.x[:dim])), float(res.x[dim]))
            raise NoConvergence(f"affine L^{p} fit did not converge: {res.message}", best=best)
        coef = res.x
    grad, const = tuple(float(c) for c in coef[:dim]), float(coef[dim])
    resid = g - (make_grid(P, N).points() @ np.array(grad) + const)
    return AffineFit(weighted_norm(P, N, resid, p), grad, const)


def dpG_distance(P: Polytope, u0, u1, p: float = 1.0) -> AffineFit:
    """``min_ℓ d_p(u₀, u₁ + ℓ)``; the fit's value is the distance and its
    gradient/constant the minimizing affine function of ``u₀ - u₁``."""
    Q, N, d = _difference(u0, u1)
    if Q != P:
        raise GridMismatch("potentials live on a different polytope")
    return best_affine(P, N, d, p)


def geodesic_point(u0: SymplecticPotential, u1: SymplecticPotential, t: float) -> SymplecticPotential:
    if u0.polytope != u1.polytope or u0.N != u1.N:
        raise GridMismatch("potentials live on different polytopes or grids")
    if t == 0:
        return u0
    if t == 1:
        return u1
    return u0.with_correction((1 - t) * u0.v + t * u1.v)


# --- rays -----------------------------------------------------------------------

def _convexity_defect(f: np.ndarray, h: Sequence[float]) -> float:
    """Most negative second difference along grid axes and diagonals."""
    worst = 0.0
    dim = f.ndim
    steps = [tuple(int(i == j) for j in range(dim)) for i in range(dim)]
    if dim == 2:
        steps += [(1, 1), (1, -1)]
    n = f.shape[0]
    for st in steps:
        centre = tuple(slice(1, n - 1) if s else slice(None) for s in st)
        plus = tuple(slice(1 + s, n - 1 + s) if s else slice(None) for s in st)
        minus = tuple(slice(1 - s, n - 1 - s) if s else slice(None) for s in st)
        d2 = f[plus] - 2 * f[centre] + f[minus]
        scale = sum((hi * abs(s)) ** 2 for hi, s in zip(h, st))
        worst = min(worst, float(np.min(d2)) / scale)
    return worst


@dataclass(frozen=True)
class GeodesicRay:
    base: SymplecticPotential
    direction: np.ndarray = field(repr=False)
    p: float = 1.0
    unit_speed: bool = False
    source: PLConvexFn | None = None

    def __post_init__(self):
        f = np.array(self.direction, dtype=float)
        if f.shape != self.base.v.shape:
            raise GridMismatch(f"direction has shape {f.shape}, base grid {self.base.v.shape}")
        h = self.base.grid.h
        scale = max(1.0, float(np.max(np.abs(f))))
        if _convexity_defect(f, h) * min(h) ** 2 < -1e-12 * scale:
            raise ValueError("ray direction is not convex on the grid")
        if self.unit_speed:
            norm = weighted_norm(self.base.polytope, self.base.N, f, self.p)
            if norm == 0:
                raise ValueError("a zero direction cannot be normalized to unit speed")
            f = f / norm
        f.setflags(write=False)
        object.__setattr__(self, "direction", f)

    @classmethod
    def from_pl(cls, base: SymplecticPotential, f: PLConvexFn, p: float = 1.0,
                unit_speed: bool = False) -> "GeodesicRay":
        pts = base.grid.points()
        vals = f.evaluate(pts.reshape(-1, base.polytope.dim)).reshape(pts.shape[:-1])
        return cls(base, vals, p, unit_speed, f)

    @property
    def polytope(self) -> Polytope:
        return self.base.polytope

    @property
    def speed(self) -> float:
        """``‖f - ℓ_f‖_p`` with ``ℓ_f`` the best affine approximation."""
        return best_affine(self.polytope, self.base.N, self.direction, self.p).value

    def point(self, s: float) -> SymplecticPotential:
        return self.base.with_correction(self.base.v + s * self.direction)


@dataclass(frozen=True)
class YenResult:
    yen: float
    increments: np.ndarray
    monotonicity_defect: float  # min over k of increments[k+1] - increments[k]

    def __iter__(self):
        return iter((self.yen, self.increments))


def yen_invariant(P: Polytope, ray: GeodesicRay, k_max: int = 8) -> YenResult:
    if k_max < 4:
        raise ValueError("k_max must be at least 4")
    if ray.polytope != P:
        raise GridMismatch("ray lives on a different polytope")
    K = np.array([mabuchi_energy(P, ray.point(k)).k_energy for k in range(k_max + 1)])
    inc = np.diff(K)
    return YenResult(float(inc[-1]), inc, float(np.min(np.diff(inc))) if len(inc) > 1 else 0.0)


def transplant_ray(ray: GeodesicRay, new_base: SymplecticPotential) -> GeodesicRay:
    if new_base.polytope != ray.polytope or new_base.N != ray.base.N:
        raise GridMismatch("new base lives on a different polytope or grid")
    return GeodesicRay(new_base, ray.direction, ray.p, False, ray.source)


@dataclass(frozen=True)
class RayClassification:
    verdict: str
    yen: float
    affine_residual: float
    increments: np.ndarray = field(repr=False, default=None)

    def csv_row(self) -> list[str]:
        return [self.verdict, repr(self.yen), " ".join(repr(float(x)) for x in self.increments),
                repr(self.affine_residual)]


def classify_ray(P: Polytope, ray: GeodesicRay, tol: float = 1e-6, k_max: int = 8) -> RayClassification:
    if k_max < 8:
        raise ValueError("classification needs k_max >= 8")
    res = yen_invariant(P, ray, k_max)
    resid = best_affine(P, ray.base.N, ray.direction, 1).value
    if res.yen > tol:
        verdict = "strictly_stable"
    elif abs(res.yen) <= tol and resid <= tol:
        verdict = "borderline_holomorphic"
    else:
        verdict = "destabilizing"
    return RayClassification(verdict, res.yen, resid, res.increments)


def _classify_job(args):
    return classify_ray(*args)


def classify_rays(P: Polytope, rays: Sequence[GeodesicRay], tol: float = 1e-6, k_max: int = 8,
                  jobs: int = 1) -> list[RayClassification]:
    """Classify a batch of rays; results follow the input order."""
    args = [(P, r, tol, k_max) for r in rays]
    if jobs <= 1 or len(rays) < 2:
        return [_classify_job(a) for a in args]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_classify_job, args))


# --- pairs of rays ----------------------------------------------------------------

DEFAULT_TIMES = np.linspace(0.0, 100.0, 101)


@dataclass(frozen=True)
class PairProfile:
    times: np.ndarray
    distances: np.ndarray

    @property
    def convexity_defect(self) -> float:
        """Most negative second difference of ``t ↦ d_p`` (uniform ``t``-grid)."""
        return float(np.min(np.diff(self.distances, 2))) if len(self.distances) > 2 else 0.0

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.distances) / np.diff(self.times)

    @property
    def asymptotic_slope(self) -> float:
        """Secant slope over the last tenth of the ``t`` range (``[90, 100]`` by default)."""
        t = self.times
        j = int(np.searchsorted(t, t[-1] - 0.1 * (t[-1] - t[0])))
        return float((self.distances[-1] - self.distances[j]) / (t[-1] - t[j]))

    @property
    def grows_linearly(self) -> bool:
        return self.asymptotic_slope > GROWTH_SLOPE_TOL

    @property
    def nonincreasing(self) -> bool:
        return bool(np.all(self.slopes <= NONINCREASING_TOL))


def pair_profile(P: Polytope, ray1: GeodesicRay, ray2: GeodesicRay, p: float = 1.0,
                 times: np.ndarray = DEFAULT_TIMES) -> PairProfile:
    d = np.array([dp_distance(P, ray1.point(t), ray2.point(t), p) for t in times])
    return PairProfile(np.asarray(times, dtype=float), d)


def are_parallel(P: Polytope, ray1: GeodesicRay, ray2: GeodesicRay, tol: float = 1e-8) -> bool:
    """Bounded ``d₁`` along the rays: no asymptotic growth beyond ``tol``."""
    return pair_profile(P, ray1, ray2, 1.0).asymptotic_slope <= tol


# --- ray spec I/O -----------------------------------------------------------------

def load_ray(doc: Mapping | str | Path, base_dir: Path | None = None) -> GeodesicRay:
    """Ray spec: ``{"polytope", "N", "base": "guillemin" | potential file | inline,
    "pieces": [...] | "direction": [...], "unit_speed": bool, "p": number}``."""
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        base_dir = base_dir or path.parent
        doc = json.loads(path.read_text())
    base_spec = doc.get("base", "guillemin")
    if base_spec == "guillemin":
        P = named_polytope(doc["polytope"])
        base = guillemin_potential(P, int(doc["N"]))
    elif isinstance(base_spec, str):
        base = load_potential(Path(base_dir or ".") / base_spec)
    else:
        base = load_potential(base_spec)
    p = float(doc.get("p", 1))
    unit = bool(doc.get("unit_speed", False))
    if "pieces" in doc:
        return GeodesicRay.from_pl(base, PLConvexFn.from_json(doc), p, unit)
    f = np.array([float(x) for x in doc["direction"]]).reshape(base.v.shape)
    return GeodesicRay(base, f, p, unit)
