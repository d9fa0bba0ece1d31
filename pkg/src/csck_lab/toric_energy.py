"""Symplectic potentials, Abreu's scalar curvature and toric energy functionals.

A potential is ``u = u_G + v`` with the Guillemin potential
``u_G = ½ Σ_k ℓ_k log ℓ_k`` (``ℓ_k`` the facet functions) and a smooth
correction ``v`` sampled on a uniform tensor grid over the bounding box of
``P``. Grid values outside ``P`` only feed difference stencils.

Normalization. With this ``u_G`` the scalar curvature ``S(u) = -Σ ∂_ij u^{ij}``
has average ``R̄ = 2A`` and the functional whose first variation is
``½ ∫ (S - R̄) u̇ dμ`` is

    K(u) = -½ ∫_P log(det H_u / det H_{u_G}) dμ + L_P(u - u_G).

The complex-side functionals use the same factor: ``ω_φ`` corresponds to
``½ dμ``, so on the log-coordinate line ``J_{ω₀}(φ) = ½ ∫₀¹ ∫ ψ (φ₀'' - φ_λ'') dξ dλ``
with ``ψ = φ - φ₀`` and ``φ_λ = φ₀ + λψ``. The critical points of
``t K + (1-t) J_{ω₀}`` then solve ``t (S - R̄) φ'' = (1-t)(φ₀'' - φ'')``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import gcd
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.special import expit, log_expit

from .errors import GridMismatch, HessianDegenerate, LegendreFailure
from .exact import Poly
from .polytope import Polytope, integrate_region, named_polytope

DEFAULT_L = 12.0
DEFAULT_XI_POINTS = 4097


# --- grids and quadrature weights ---------------------------------------------

@dataclass(frozen=True)
class Grid:
    polytope: Polytope
    N: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def dim(self) -> int:
        return self.polytope.dim

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / self.N for a, b in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N + 1,) * self.dim

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, self.N + 1) for a, b in zip(self.lo, self.hi)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def facet_values(self) -> np.ndarray:
        """``ℓ_k`` at every node, shape ``(n_facets,) + shape``; clipped at 0
        only where rounding pushes an on-facet node slightly negative."""
        pts = self.points()
        vals = []
        for f in self.polytope.facets:
            ell = pts @ np.array([float(n) for n in f.normal]) + float(f.offset)
            ell[np.abs(ell) < 1e-14] = 0.0
            vals.append(ell)
        return np.array(vals)

    def inside(self) -> np.ndarray:
        return np.all(self.facet_values() >= 0, axis=0)


def make_grid(P: Polytope, N: int) -> Grid:
    lo, hi = P.bounding_box()
    return Grid(P, int(N), tuple(float(a) for a in lo), tuple(float(b) for b in hi))


def _hat_poly(dim: int, corner: tuple, bits: tuple, lo, h) -> Poly:
    """Multilinear hat of the cell corner ``corner + bits`` restricted to the
    cell with lower corner ``corner``."""
    out = Poly.constant(dim, 1)
    for i, b in enumerate(bits):
        x0 = lo[i] + corner[i] * h[i]
        t = (Poly.variable(dim, i) - x0) * (1 / h[i])
        out = out * (t if b else 1 - t)
    return out


@lru_cache(maxsize=32)
def grid_weights(P: Polytope, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Node weights ``(interior, boundary)`` with ``Σ w_i g_i = ∫_P I(g) dμ``
    and ``Σ b_i g_i = ∫_∂P I(g) dσ`` for the multilinear interpolant ``I(g)``.

    Cells inside ``P`` use the closed form; cells cut by ``∂P`` are integrated
    exactly in rational arithmetic.
    """
    lo, hi = P.bounding_box()
    h = tuple((b - a) / N for a, b in zip(lo, hi))
    dim = P.dim
    shape = (N + 1,) * dim
    w = np.zeros(shape)
    b = np.zeros(shape)
    cell_vol = float(np.prod([float(x) for x in h]))
    corners_bits = list(product((0, 1), repeat=dim))

    # exact signs of ℓ_k at the nodes, via a common integer denominator
    denom = 1
    for q in list(lo) + list(h) + [f.offset for f in P.facets]:
        denom = denom * q.denominator // gcd(denom, q.denominator)
    idx = np.indices(shape)
    signs = []
    for f in P.facets:
        val = np.full(shape, int(f.offset * denom), dtype=np.int64)
        for i, n in enumerate(f.normal):
            val += n * (int(lo[i] * denom) + idx[i] * int(h[i] * denom))
        signs.append(np.sign(val))

    def corner(arr, bit):
        return arr[tuple(slice(bb, N + bb) for bb in bit)]

    outside = np.zeros((N,) * dim, dtype=bool)
    inside = np.ones((N,) * dim, dtype=bool)
    for sg in signs:
        outside |= np.all([corner(sg, bit) <= 0 for bit in corners_bits], axis=0)
        inside &= np.all([corner(sg, bit) >= 0 for bit in corners_bits], axis=0)
    inside &= ~outside
    for bit in corners_bits:
        w[tuple(slice(bb, N + bb) for bb in bit)] += inside * (cell_vol / 2 ** dim)
    # boundary of inside cells: cell faces contained in a facet
    for sg in signs:
        for axis in range(dim):
            for side in (0, 1):
                face = [bit for bit in corners_bits if bit[axis] == side]
                on = inside & np.all([corner(sg, bit) == 0 for bit in face], axis=0)
                share = cell_vol / float(h[axis]) / 2 ** (dim - 1) if dim > 1 else 1.0
                for bit in face:
                    b[tuple(slice(bb, N + bb) for bb in bit)] += on * share
    for cell in map(tuple, np.argwhere(~inside & ~outside)):
        box = tuple(((tuple(int(i == j) for j in range(dim)), -(lo[i] + cell[i] * h[i])),
                     (tuple(-int(i == j) for j in range(dim)), lo[i] + (cell[i] + 1) * h[i]))
                    for i in range(dim))
        extra = tuple(hs for pair in box for hs in pair)
        for bit in corners_bits:
            node = tuple(c + bb for c, bb in zip(cell, bit))
            hat = _hat_poly(dim, cell, bit, lo, h)
            w[node] += float(integrate_region(P, extra, hat, "interior"))
            b[node] += float(integrate_region(P, extra, hat, "boundary"))
    w.setflags(write=False)
    b.setflags(write=False)
    return w, b


# --- potentials ---------------------------------------------------------------

@dataclass(frozen=True)
class SymplecticPotential:
    """``u = u_G + v`` with ``v`` sampled on ``make_grid(polytope, N)``."""

    polytope: Polytope
    N: int
    v: np.ndarray = field(repr=False)
    gauged: bool = False

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.shape != (self.N + 1,) * self.polytope.dim:
            raise ValueError(f"correction has shape {v.shape}, expected {(self.N + 1,) * self.polytope.dim}")
        if not np.all(np.isfinite(v)):
            raise ValueError("correction must be finite")
        if self.N < 16:
            raise ValueError("grid size N must be at least 16")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        if self.gauged:
            w, _ = grid_weights(self.polytope, self.N)
            mean = float(np.sum(w * v))
            if abs(mean) > 1e-12 * max(1.0, float(np.max(np.abs(v)))):
                raise ValueError(f"gauged potential has ∫v dμ = {mean}")

    @property
    def grid(self) -> Grid:
        return make_grid(self.polytope, self.N)

    def gauge(self) -> "SymplecticPotential":
        """Subtract the constant making ``∫_P v dμ = 0``."""
        w, _ = grid_weights(self.polytope, self.N)
        mean = float(np.sum(w * self.v)) / float(self.polytope.volume)
        return SymplecticPotential(self.polytope, self.N, self.v - mean, gauged=True)

    def with_correction(self, v: np.ndarray) -> "SymplecticPotential":
        return SymplecticPotential(self.polytope, self.N, v)

    def __add__(self, g) -> "SymplecticPotential":
        """Add a grid function (array) or another correction (un-gauged result)."""
        other = g.v if isinstance(g, SymplecticPotential) else np.asarray(g, dtype=float)
        return SymplecticPotential(self.polytope, self.N, self.v + other)

    def to_json(self) -> dict:
        return {"polytope": self.polytope.name, "N": self.N,
                "v": [repr(float(x)) for x in self.v.ravel()]}


def guillemin_potential(P: Polytope, N: int) -> SymplecticPotential:
    return SymplecticPotential(P, N, np.zeros((N + 1,) * P.dim), gauged=True)


def potential_from_function(P: Polytope, N: int, fn: Callable, gauge: bool = True) -> SymplecticPotential:
    """Sample ``v = fn(x)`` (``fn`` takes an array ``(..., dim)``) on the grid."""
    pts = make_grid(P, N).points()
    v = np.asarray(fn(pts), dtype=float)
    u = SymplecticPotential(P, N, v)
    return u.gauge() if gauge else u


def load_potential(doc: Mapping | str | Path, polytopes: Mapping[str, Polytope] | None = None) -> SymplecticPotential:
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text()) if not str(doc).lstrip().startswith("{") else json.loads(doc)
    name = doc["polytope"]
    P = (polytopes or {}).get(name) or named_polytope(name)
    N = int(doc["N"])
    v = np.array([float(x) for x in doc["v"]]).reshape((N + 1,) * P.dim)
    return SymplecticPotential(P, N, v)


def guillemin_value(P: Polytope, x: np.ndarray) -> np.ndarray:
    """``u_G`` at points ``x`` of shape ``(..., dim)`` (``0 log 0 = 0``)."""
    out = np.zeros(x.shape[:-1])
    for f in P.facets:
        ell = x @ np.array([float(n) for n in f.normal]) + float(f.offset)
        safe = np.where(ell > 0, ell, 1.0)
        out += 0.5 * np.where(ell > 0, ell * np.log(safe), 0.0)
    return out


def guillemin_gradient(P: Polytope, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape)
    for f in P.facets:
        nu = np.array([float(n) for n in f.normal])
        ell = x @ nu + float(f.offset)
        out += 0.5 * np.multiply.outer(np.log(ell) + 1.0, nu)
    return out


def guillemin_hessian(P: Polytope, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape + (x.shape[-1],))
    for f in P.facets:
        nu = np.array([float(n) for n in f.normal])
        ell = x @ nu + float(f.offset)
        out += 0.5 * np.multiply.outer(1.0 / ell, np.outer(nu, nu))
    return out


# --- discrete derivatives -------------------------------------------------------

def second_difference(v: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Three-point second difference; second-order one-sided at the ends."""
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h ** 2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h ** 2
    return np.moveaxis(out, 0, axis)


def grid_hessian(u: SymplecticPotential) -> np.ndarray:
    """Hessian of the correction, shape ``shape + (dim, dim)``."""
    g = u.grid
    dim = g.dim
    H = np.zeros(g.shape + (dim, dim))
    for i in range(dim):
        H[..., i, i] = second_difference(u.v, g.h[i], axis=i)
    for i in range(dim):
        for j in range(i + 1, dim):
            d = np.gradient(np.gradient(u.v, g.h[i], axis=i, edge_order=2), g.h[j], axis=j, edge_order=2)
            H[..., i, j] = H[..., j, i] = d
    return H


def _det_ratio(P: Polytope, ell: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``det(H_{u_G} + H) / det H_{u_G}`` at nodes, finite up to ``∂P``.

    With ``H_{u_G} = Σ ν_k ν_kᵀ / s_k`` and ``s_k = 2ℓ_k`` every term is
    multiplied through by ``Π_m s_m``.
    """
    s = 2.0 * ell
    normals = [np.array([float(n) for n in f.normal]) for f in P.facets]
    K = len(normals)

    def prod_except(skip):
        out = np.ones(s.shape[1:])
        for m in range(K):
            if m not in skip:
                out = out * s[m]
        return out

    if P.dim == 1:
        base = sum(prod_except({k}) for k in range(K))
        return 1.0 + H[..., 0, 0] * prod_except(set()) / base
    if P.dim != 2:
        raise ValueError("energy functionals are implemented for dim ≤ 2")
    base = np.zeros(s.shape[1:])
    for k in range(K):
        for l in range(k + 1, K):
            c = normals[k][0] * normals[l][1] - normals[k][1] * normals[l][0]
            base = base + c ** 2 * prod_except({k, l})
    trace = np.zeros(s.shape[1:])
    for k in range(K):
        perp = np.array([-normals[k][1], normals[k][0]])
        q = np.einsum("...ij,i,j->...", H, perp, perp)
        trace = trace + q * prod_except({k})
    detH = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] ** 2
    return (base + trace + detH * prod_except(set())) / base


# --- scalar curvature (dim 1) ---------------------------------------------------

@dataclass(frozen=True)
class CurvatureResult:
    nodes: np.ndarray
    values: np.ndarray
    average: float
    extended: np.ndarray = field(repr=False, default=None)  # all nodes, ends extrapolated


def _interval(P: Polytope) -> tuple[float, float]:
    (a,), (b,) = P.vertices
    return float(a), float(b)


def _inverse_second_derivative(u: SymplecticPotential, vpp: np.ndarray) -> np.ndarray:
    """``w = 1/u''`` at all nodes (``w = 0`` at the endpoints)."""
    a, b = _interval(u.polytope)
    x = u.grid.axes()[0]
    l1, l2 = x - a, b - x
    denom = l1 + l2 + 2 * l1 * l2 * vpp
    if np.any(denom[1:-1] <= 0):
        i = int(np.argmax(denom[1:-1] <= 0)) + 1
        raise HessianDegenerate(f"u'' <= 0 at x = {x[i]!r}", location=float(x[i]))
    return 2 * l1 * l2 / denom


def fourth_order_second_difference(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order second difference at nodes 1..N-1: five-point centered
    inside, six-point one-sided at nodes 1 and N-1; endpoints left as NaN."""
    out = np.full_like(v, np.nan)
    out[2:-2] = (-v[4:] + 16 * v[3:-1] - 30 * v[2:-2] + 16 * v[1:-3] - v[:-4]) / (12 * h ** 2)
    side = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / (12 * h ** 2)
    out[1] = side @ v[:6]
    out[-2] = side @ v[::-1][:6]
    return out


def abreu_scalar_curvature(u: SymplecticPotential) -> CurvatureResult:
    """``S = -(1/u'')''`` at interior nodes with its ``dμ``-average."""
    P = u.polytope
    if P.dim != 1:
        raise ValueError("scalar curvature is implemented in dimension 1")
    h = u.grid.h[0]
    vpp = fourth_order_second_difference(u.v, h)
    vpp[0] = vpp[-1] = 0.0  # irrelevant: w vanishes at the endpoints
    w = _inverse_second_derivative(u, vpp)
    S = -fourth_order_second_difference(w, h)
    x = u.grid.axes()[0]
    full = S.copy()
    # cubic extrapolation to the endpoints for the quadrature
    full[0] = 4 * S[1] - 6 * S[2] + 4 * S[3] - S[4]
    full[-1] = 4 * S[-2] - 6 * S[-3] + 4 * S[-4] - S[-5]
    vol = float(P.volume)
    return CurvatureResult(x[1:-1], S[1:-1], float(np.dot(_simpson_weights(u.N, h), full)) / vol,
                           full)


def _simpson_weights(N: int, h: float) -> np.ndarray:
    if N % 2 == 0:
        wts = np.ones(N + 1)
        wts[1:-1:2] = 4
        wts[2:-1:2] = 2
        return wts * (h / 3)
    wts = np.full(N + 1, h)
    wts[0] = wts[-1] = h / 2
    return wts


# --- energies -------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyRecord:
    entropy_term: float
    lp_term: float
    k_energy: float
    twisted_t: float | None = None
    twisted: float | None = None
    j_omega0: float | None = None
    aubin_j: float = float("nan")
    i_functional: float = 0.0

    FIELDS = ("entropy_term", "lp_term", "k_energy", "twisted_t", "twisted", "j_omega0",
              "aubin_j", "i_functional")

    def csv_row(self) -> list[str]:
        return ["" if getattr(self, k) is None else repr(float(getattr(self, k))) for k in self.FIELDS]


def entropy_term(u: SymplecticPotential) -> float:
    """``-½ ∫_P log(det H_u / det H_{u_G}) dμ``."""
    P = u.polytope
    g = u.grid
    ell = g.facet_values()
    inside = np.all(ell >= 0, axis=0)
    ratio = _det_ratio(P, np.where(inside, ell, 1.0), grid_hessian(u))
    ratio = np.where(inside, ratio, 1.0)
    w, _ = grid_weights(P, u.N)
    bad = (ratio <= 0) & (w > 0)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        loc = tuple(float(ax[i]) for ax, i in zip(g.axes(), idx))
        raise HessianDegenerate(f"Hess(u) not positive definite at {loc}", location=loc)
    return -0.5 * float(np.sum(w * np.log(np.where(w > 0, ratio, 1.0))))


def lp_quadrature(P: Polytope, N: int, g: np.ndarray) -> float:
    """``L_P`` of the multilinear interpolant of grid values ``g``."""
    w, b = grid_weights(P, N)
    return float(np.sum(b * g)) - float(P.average_A) * float(np.sum(w * g))


def mabuchi_energy(P: Polytope, u: SymplecticPotential, aubin: bool = False) -> EnergyRecord:
    """K-energy terms; ``aubin=True`` adds the Aubin functional (dim 1, needs a
    C² correction for the Legendre transform)."""
    if u.polytope != P:
        raise ValueError("potential lives on a different polytope")
    if P.dim > 2:
        raise ValueError("energy functionals are implemented for dim ≤ 2")
    ent = entropy_term(u)
    lp = lp_quadrature(P, u.N, u.v)
    w, _ = grid_weights(P, u.N)
    i_fun = -0.5 * float(np.sum(w * u.v))
    aubin_j = float("nan")
    if aubin and P.dim == 1:
        aubin_j = legendre_dual(u).aubin_j
    return EnergyRecord(ent, lp, ent + lp, aubin_j=aubin_j, i_functional=i_fun)


# --- Legendre duality (dim 1) ---------------------------------------------------

@dataclass(frozen=True)
class LegendreData:
    xi: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    phi_pp: np.ndarray
    phi0: np.ndarray
    phi0_pp: np.ndarray
    F: np.ndarray

    @property
    def psi(self) -> np.ndarray:
        return self.phi - self.phi0

    def trapezoid(self, g: np.ndarray) -> float:
        return float(trapezoid(g, self.xi))

    @property
    def aubin_j(self) -> float:
        """``½ ∫ ψ (φ₀'' - φ'') dξ``."""
        return 0.5 * self.trapezoid(self.psi * (self.phi0_pp - self.phi_pp))

    def j_omega0(self, order: int = 32) -> float:
        """``½ ∫₀¹ ∫ ψ (φ₀'' - φ_λ'') dξ dλ`` by Gauss–Legendre in ``λ``."""
        nodes, weights = np.polynomial.legendre.leggauss(order)
        lam = 0.5 * (nodes + 1)
        psi_pp = self.phi_pp - self.phi0_pp
        total = 0.0
        for l, wt in zip(lam, weights):
            total += 0.5 * wt * self.trapezoid(self.psi * (-l * psi_pp))
        return float(0.5 * total)

    def tail_bound(self) -> float:
        """Size of the neglected ``|ξ| > L`` contributions (exponential decay)."""
        return float(max(abs(self.psi[0] * (self.phi_pp - self.phi0_pp)[0]),
                         abs(self.psi[-1] * (self.phi_pp - self.phi0_pp)[-1])))


def _log_sigmoid(s):
    return log_expit(s)


def legendre_dual(u: SymplecticPotential, L: float = DEFAULT_L, M: int = DEFAULT_XI_POINTS) -> LegendreData:
    """Complex-side data on ``ξ ∈ [-L, L]``: ``ξ = u'(x)``, ``φ = xξ - u``.

    Solved in the logit variable ``s = log((x-a)/(b-x))`` where ``u_G' = s/2``.
    """
    P = u.polytope
    if P.dim != 1:
        raise ValueError("the Legendre transform is implemented in dimension 1")
    a, b = _interval(P)
    width = b - a
    xg = u.grid.axes()[0]
    spline = CubicSpline(xg, u.v)
    d1, d2 = spline.derivative(1), spline.derivative(2)
    xi = np.linspace(-L, L, M)

    def x_of(s):
        return a + width * expit(s)

    def residual(s):
        return 0.5 * s + d1(x_of(s)) - xi

    # ξ(x) = u'(x) must increase strictly between interior nodes
    inner = xg[1:-1]
    slope = np.diff(0.5 * np.log((inner - a) / (b - inner)) + d1(inner))
    if np.any(slope <= 0):
        raise LegendreFailure("ξ(x) = u'(x) is not monotone on the grid")
    # Newton in s from the Guillemin initial guess s = 2ξ, safeguarded by bisection
    s = 2 * xi
    lo = np.full(M, -4 * L - 50.0)
    hi = np.full(M, 4 * L + 50.0)
    for _ in range(100):
        r = residual(s)
        lo = np.where(r < 0, s, lo)
        hi = np.where(r > 0, s, hi)
        sig = expit(s)
        dr = 0.5 + d2(x_of(s)) * width * sig * (1 - sig)
        step = np.where(dr > 0, r / np.where(dr > 0, dr, 1.0), 0.0)
        new = s - step
        bad = (new <= lo) | (new >= hi) | (dr <= 0)
        new = np.where(bad, 0.5 * (lo + hi), new)
        if np.max(np.abs(new - s)) < 1e-14 * max(1.0, np.max(np.abs(s))):
            s = new
            break
        s = new
    else:
        raise LegendreFailure("Newton iteration for x(ξ) did not converge")
    if np.max(np.abs(residual(s))) > 1e-10:
        raise LegendreFailure("x(ξ) not resolved to 1e-10")
    x = x_of(s)
    log_l1 = np.log(width) + _log_sigmoid(s)
    log_l2 = np.log(width) + _log_sigmoid(-s)
    l1, l2 = np.exp(log_l1), np.exp(log_l2)
    vpp = d2(x)
    denom = l1 + l2 + 2 * l1 * l2 * vpp
    if np.any(denom <= 0):
        raise LegendreFailure("u'' is not positive along the ξ-grid")
    log_phi_pp = np.log(2.0) + log_l1 + log_l2 - np.log(denom)
    s0 = 2 * xi
    log_phi0_pp = np.log(2.0) + 2 * np.log(width) + _log_sigmoid(s0) + _log_sigmoid(-s0) - np.log(width)
    F = log_phi_pp - log_phi0_pp
    u_val = 0.5 * (l1 * log_l1 + l2 * log_l2) + spline(x)
    phi = x * xi - u_val
    x0 = x_of(s0)
    l1_0, l2_0 = width * expit(s0), width * expit(-s0)
    u0 = 0.5 * (l1_0 * (np.log(width) + _log_sigmoid(s0)) + l2_0 * (np.log(width) + _log_sigmoid(-s0)))
    phi0 = x0 * xi - u0
    return LegendreData(xi, x, phi, np.exp(log_phi_pp), phi0, np.exp(log_phi0_pp), F)


def j_omega0(u: SymplecticPotential, L: float = DEFAULT_L, M: int = DEFAULT_XI_POINTS) -> float:
    return legendre_dual(u, L, M).j_omega0()


def j_relative(leg: LegendreData, background: LegendreData) -> float:
    """``J_{ω_b}(φ) = ¼ ∫ (φ - φ_b)(φ_b'' - φ'') dξ`` for a second background ``φ_b``."""
    if leg.xi.shape != background.xi.shape or np.any(leg.xi != background.xi):
        raise GridMismatch("Legendre data live on different ξ-grids")
    return 0.25 * leg.trapezoid((leg.phi - background.phi) * (background.phi_pp - leg.phi_pp))


def twisted_energy(P: Polytope, u: SymplecticPotential, t: float,
                   L: float = DEFAULT_L, M: int = DEFAULT_XI_POINTS,
                   background: SymplecticPotential | None = None) -> EnergyRecord:
    """``t K(u) + (1-t) J_{ω₀}(u)``; with ``background`` the twisting form is
    that of the given potential instead of ``u_G``."""
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if P.dim != 1:
        raise ValueError("the twisted energy is implemented in dimension 1")
    rec = mabuchi_energy(P, u)
    leg = legendre_dual(u, L, M)
    j = leg.j_omega0() if background is None else j_relative(leg, legendre_dual(background, L, M))
    return EnergyRecord(rec.entropy_term, rec.lp_term, rec.k_energy, float(t),
                        float(t * rec.k_energy + (1 - t) * j), float(j), leg.aubin_j, rec.i_functional)


def twisted_first_variation(P: Polytope, u: SymplecticPotential, direction: np.ndarray, t: float,
                            L: float = DEFAULT_L, M: int = DEFAULT_XI_POINTS) -> float:
    """``d/ds [t K + (1-t) J_{ω₀}](u + s·direction)`` at ``s = 0`` from the
    first-variation integrands ``½ ∫ (S - R̄) u̇ dμ`` and
    ``½ ∫ φ̇ (φ₀'' - φ'') dξ`` with ``φ̇(ξ) = -u̇(x(ξ))``."""
    if P.dim != 1:
        raise ValueError("the twisted energy is implemented in dimension 1")
    direction = np.asarray(direction, dtype=float)
    curv = abreu_scalar_curvature(u)
    rbar = 2 * float(P.average_A)
    h = u.grid.h[0]
    dk = 0.5 * float(np.dot(_simpson_weights(u.N, h), (curv.extended - rbar) * direction))
    leg = legendre_dual(u, L, M)
    udot = CubicSpline(u.grid.axes()[0], direction)(leg.x)
    dj = 0.5 * leg.trapezoid(-udot * (leg.phi0_pp - leg.phi_pp))
    return t * dk + (1 - t) * dj
