"""ε-geodesics, the Mabuchi connection and its curvature on a flat torus.

The toy manifold is the torus ``[0, 2π)²`` with one complex coordinate
``w = ξ₁ + iξ₂`` and flat form ``g₀ = ½``. For a potential ``φ``

    m = det g_φ / det g₀ = 1 + ½ Δφ,
    ∇u ·_φ ∇v = ½ (u₁v₁ + u₂v₂) / m,
    {f, g}_φ = ½ (f₁g₂ - f₂g₁) / m,
    dvol_φ = m dξ₁dξ₂ / (2π)²,

and the ε-geodesic equation ``(φ_tt - |∇φ_t|²_φ) det g_φ = ε det g₀`` reads
``m φ_tt - ½|∇φ_t|² = ε``. Spatial derivatives are second-order periodic
differences; a grid of shape ``(M₁, 1)`` is the ``ξ₂``-invariant reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import simpson
from scipy.sparse.linalg import spsolve

from .errors import GridMismatch, InadmissibleEndpoint, NewtonDiverged

TWO_PI = 2 * np.pi


# --- spatial operators -------------------------------------------------------------

def torus_axes(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    M1, M2 = shape
    return np.arange(M1) * TWO_PI / M1, np.arange(M2) * TWO_PI / M2


def torus_mesh(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    a, b = torus_axes(shape)
    return np.meshgrid(a, b, indexing="ij")


def _h(shape):
    return TWO_PI / shape[0], TWO_PI / shape[1]


def grad(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered periodic differences along the last two axes."""
    h1, h2 = _h(u.shape[-2:])
    g1 = (np.roll(u, -1, -2) - np.roll(u, 1, -2)) / (2 * h1)
    g2 = (np.roll(u, -1, -1) - np.roll(u, 1, -1)) / (2 * h2)
    return g1, g2


def laplacian(u: np.ndarray) -> np.ndarray:
    """Five-point periodic Laplacian along the last two axes."""
    h1, h2 = _h(u.shape[-2:])
    return ((np.roll(u, -1, -2) - 2 * u + np.roll(u, 1, -2)) / h1 ** 2
            + (np.roll(u, -1, -1) - 2 * u + np.roll(u, 1, -1)) / h2 ** 2)


def density_factor(phi: np.ndarray) -> np.ndarray:
    """``m = 1 + ½Δφ``."""
    return 1 + 0.5 * laplacian(phi)


def metric_dot(phi: np.ndarray, u: np.ndarray, v: np.ndarray, m: np.ndarray | None = None) -> np.ndarray:
    m = density_factor(phi) if m is None else m
    u1, u2 = grad(u)
    v1, v2 = grad(v)
    return 0.5 * (u1 * v1 + u2 * v2) / m


def poisson_bracket(phi: np.ndarray, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``{f, g}_φ = Im(g_φ^{ww̄} f_w g_w̄) = ½(f₁g₂ - f₂g₁)/m``."""
    if not (np.shape(phi) == np.shape(f) == np.shape(g)):
        raise GridMismatch("bracket arguments live on different grids")
    f1, f2 = grad(f)
    g1, g2 = grad(g)
    return 0.5 * (f1 * g2 - f2 * g1) / density_factor(phi)


def phi_laplacian(phi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``Δ_φ u = g_φ^{ww̄} u_{ww̄} = Δu / (2m)``."""
    return laplacian(u) / (2 * density_factor(phi))


def integrate(u: np.ndarray, phi: np.ndarray | None = None) -> float:
    """``∫ u dvol_φ`` (flat measure when ``phi`` is None), total flat volume 1."""
    w = 1.0 if phi is None else density_factor(phi)
    return float(np.mean(u * w, axis=(-2, -1)))


def mabuchi_inner(phi: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """``(u, v) = ∫ u v dvol_φ``."""
    return integrate(u * v, phi)


# --- ε-geodesics -----------------------------------------------------------------------

@dataclass(frozen=True)
class TorusPotentialPath:
    phi: np.ndarray = field(repr=False)   # shape (M_t + 1, M₁, M₂)
    eps: float
    residual_norm: float = 0.0
    newton_iters: int = 0
    admissibility_margin: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.phi.shape[1:]

    @property
    def M_t(self) -> int:
        return self.phi.shape[0] - 1

    @property
    def tau(self) -> float:
        return 1.0 / self.M_t

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M_t + 1)

    def velocity(self) -> np.ndarray:
        """``∂_tφ`` by centered differences inside, second-order one-sided at the ends."""
        return np.gradient(self.phi, self.tau, axis=0, edge_order=2)

    def acceleration(self) -> np.ndarray:
        """Compact ``∂_t²φ`` at interior times."""
        p = self.phi
        return (p[2:] - 2 * p[1:-1] + p[:-2]) / self.tau ** 2

    def to_json(self) -> dict:
        return {"eps": self.eps, "shape": list(self.phi.shape), "residual_norm": self.residual_norm,
                "phi": [repr(float(x)) for x in self.phi.ravel()]}


def _periodic_1d(M: int, h: float, kind: str) -> sparse.csr_matrix:
    if M == 1:
        return sparse.csr_matrix((1, 1))
    I = np.arange(M)
    if kind == "d1":
        rows = np.concatenate([I, I])
        cols = np.concatenate([(I + 1) % M, (I - 1) % M])
        vals = np.concatenate([np.full(M, 1 / (2 * h)), np.full(M, -1 / (2 * h))])
    else:
        rows = np.concatenate([I, I, I])
        cols = np.concatenate([(I + 1) % M, I, (I - 1) % M])
        vals = np.concatenate([np.full(M, 1 / h ** 2), np.full(M, -2 / h ** 2), np.full(M, 1 / h ** 2)])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(M, M)).tocsr()


def _spatial_operators(shape):
    M1, M2 = shape
    h1, h2 = _h(shape)
    I1, I2 = sparse.identity(M1), sparse.identity(M2)
    D1 = sparse.kron(_periodic_1d(M1, h1, "d1"), I2)
    D2 = sparse.kron(I1, _periodic_1d(M2, h2, "d1"))
    Lap = sparse.kron(_periodic_1d(M1, h1, "d2"), I2) + sparse.kron(I1, _periodic_1d(M2, h2, "d2"))
    return D1.tocsr(), D2.tocsr(), Lap.tocsr()


def geodesic_residual(phi: np.ndarray, eps: float) -> np.ndarray:
    """``m φ_tt - ½|∇φ_t|² - ε`` at interior times (compact ``φ_tt``, centered ``φ_t``)."""
    tau = 1.0 / (phi.shape[0] - 1)
    inner = phi[1:-1]
    ptt = (phi[2:] - 2 * inner + phi[:-2]) / tau ** 2
    pt = (phi[2:] - phi[:-2]) / (2 * tau)
    g1, g2 = grad(pt)
    return density_factor(inner) * ptt - 0.5 * (g1 ** 2 + g2 ** 2) - eps


def _geodesic_jacobian(phi: np.ndarray, ops) -> sparse.csc_matrix:
    D1, D2, Lap = ops
    K = phi.shape[0] - 2
    tau = 1.0 / (phi.shape[0] - 1)
    inner = phi[1:-1]
    ptt = ((phi[2:] - 2 * inner + phi[:-2]) / tau ** 2).ravel()
    pt = (phi[2:] - phi[:-2]) / (2 * tau)
    g1, g2 = (g.ravel() for g in grad(pt))
    m = density_factor(inner).ravel()
    ones = np.ones(K)
    Dtt = sparse.diags([ones[:-1], -2 * ones, ones[:-1]], [-1, 0, 1]) / tau ** 2
    Dt = sparse.diags([-ones[:-1] / (2 * tau), ones[:-1] / (2 * tau)], [-1, 1])
    IK = sparse.identity(K)
    n = Lap.shape[0]
    J = (sparse.diags(ptt) @ sparse.kron(IK, 0.5 * Lap)
         + sparse.diags(m) @ sparse.kron(Dtt, sparse.identity(n))
         - sparse.diags(g1) @ sparse.kron(Dt, D1)
         - sparse.diags(g2) @ sparse.kron(Dt, D2))
    return J.tocsc()


def _as_grid(u, shape=None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if shape is not None and u.shape != tuple(shape):
        raise GridMismatch(f"endpoint grid {u.shape} differs from {tuple(shape)}")
    return u


def _newton(phi: np.ndarray, eps: float, tol: float, max_iter: int, ops) -> tuple[np.ndarray, float, int]:
    r = geodesic_residual(phi, eps)
    norm = float(np.max(np.abs(r)))
    history = [norm]
    for it in range(max_iter + 1):
        if norm <= tol:
            return phi, norm, it
        if it == max_iter:
            break
        step = spsolve(_geodesic_jacobian(phi, ops), -r.ravel()).reshape(r.shape)
        lam = 1.0
        while True:
            trial = phi.copy()
            trial[1:-1] += lam * step
            r_trial = geodesic_residual(trial, eps)
            n_trial = float(np.max(np.abs(r_trial)))
            if (np.isfinite(n_trial) and n_trial < (1 - 1e-4 * lam) * norm
                    and np.min(density_factor(trial[1:-1])) > 0):
                break
            lam /= 2
            if lam < 1e-6:
                raise NewtonDiverged(f"ε-geodesic line search failed at eps={eps}", t=eps,
                                     last_iterate=phi, history=history)
        phi, r, norm = trial, r_trial, n_trial
        history.append(norm)
    raise NewtonDiverged(f"ε-geodesic Newton did not reach tol at eps={eps}", t=eps, last_iterate=phi,
                         history=history)


def solve_eps_geodesic(phi0, phi1, eps: float, M_t: int = 16, tol: float = 1e-9,
                       max_iter: int = 30) -> TorusPotentialPath:
    """Newton on the discrete ε-geodesic equation; falls back to continuation
    in ``ε`` from 1 downward when the direct solve fails."""
    if not 1e-4 <= eps <= 1:
        raise ValueError("eps must lie in [1e-4, 1]")
    if M_t < 4:
        raise ValueError("M_t must be at least 4")
    a = _as_grid(phi0)
    b = _as_grid(phi1, a.shape)
    for name, end in (("phi0", a), ("phi1", b)):
        if np.min(density_factor(end)) <= 0:
            raise InadmissibleEndpoint(f"{name} has 1 + ½Δφ <= 0 somewhere")
    ops = _spatial_operators(a.shape)
    t = np.linspace(0.0, 1.0, M_t + 1)[:, None, None]

    def start(e):
        return (1 - t) * a + t * b + e * t * (t - 1) / 2

    try:
        phi, norm, iters = _newton(start(eps), eps, tol, max_iter, ops)
    except NewtonDiverged:
        schedule = [1.0]
        while schedule[-1] / 2 > eps:
            schedule.append(schedule[-1] / 2)
        schedule.append(eps)
        phi, prev, iters = start(1.0), 1.0, 0
        for e in schedule:
            phi = phi + (e - prev) * t * (t - 1) / 2
            phi, norm, k = _newton(phi, e, tol, max_iter, ops)
            prev, iters = e, iters + k
    margin = float(np.min(density_factor(phi)))
    phi.setflags(write=False)
    return TorusPotentialPath(phi, float(eps), norm, iters, margin)


def geodesic_defect(path: TorusPotentialPath) -> float:
    """``∫∫ |φ_tt - |∇φ_t|²_φ| dvol_φ dt`` over interior times; equals ``ε`` up to discretization."""
    inner = path.phi[1:-1]
    m = density_factor(inner)
    pt = (path.phi[2:] - path.phi[:-2]) / (2 * path.tau)
    g1, g2 = grad(pt)
    slack = path.acceleration() - 0.5 * (g1 ** 2 + g2 ** 2) / m
    per_t = np.mean(np.abs(slack) * m, axis=(1, 2))
    return float(np.sum(per_t) * path.tau)


def eps_sweep(phi0, phi1, eps_values: Sequence[float], M_t: int = 16) -> list[tuple[float, float]]:
    """``(ε, geodesic defect)`` for each ``ε``."""
    return [(float(e), geodesic_defect(solve_eps_geodesic(phi0, phi1, e, M_t))) for e in eps_values]


# --- the connection ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionField:
    values: np.ndarray = field(repr=False)   # interior times
    direction: str
    times: np.ndarray = field(repr=False)


def mabuchi_connection(path: TorusPotentialPath, U: np.ndarray | str) -> ConnectionField:
    """``∇_X U = ∂_tU - ∇φ_t ·_φ ∇U`` at interior times, ``X = ∂_tφ``.

    ``U = "velocity"`` takes ``U = X`` with the compact second difference for ``∂_tX``."""
    inner = path.phi[1:-1]
    m = density_factor(inner)
    X = (path.phi[2:] - path.phi[:-2]) / (2 * path.tau)
    if isinstance(U, str):
        if U != "velocity":
            raise ValueError("U must be an array or 'velocity'")
        dU, Ui = path.acceleration(), X
    else:
        U = np.asarray(U, dtype=float)
        if U.shape != path.phi.shape:
            raise GridMismatch(f"U has shape {U.shape}, path grid {path.phi.shape}")
        dU, Ui = (U[2:] - U[:-2]) / (2 * path.tau), U[1:-1]
    x1, x2 = grad(X)
    u1, u2 = grad(Ui)
    vals = dU - 0.5 * (x1 * u1 + x2 * u2) / m
    return ConnectionField(vals, "d/dt", path.times[1:-1])


# --- curvature identity ----------------------------------------------------------------

Family = Callable[[float, float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CurvatureCheck:
    lhs: float
    rhs: float
    defect: float


def _chi_from(chi):
    if isinstance(chi, ConvexProfile):
        return chi
    raise TypeError("chi must be a ConvexProfile")


@dataclass(frozen=True)
class ConvexProfile:
    """``χ`` with first and second derivatives: ``quadratic`` is ``x²/2``,
    ``regularized`` is ``(x² + δ²)^{p/2}``."""
    kind: str = "quadratic"
    p: float = 2.0
    delta: float = 0.1

    def __call__(self, x):
        if self.kind == "quadratic":
            return 0.5 * x ** 2
        return (x ** 2 + self.delta ** 2) ** (self.p / 2)

    def d1(self, x):
        if self.kind == "quadratic":
            return x
        return self.p * (x ** 2 + self.delta ** 2) ** (self.p / 2 - 1) * x

    def d2(self, x):
        if self.kind == "quadratic":
            return np.ones_like(x)
        s = x ** 2 + self.delta ** 2
        return self.p * (self.p - 2) * s ** (self.p / 2 - 2) * x ** 2 + self.p * s ** (self.p / 2 - 1)


def curvature_identity_check(family: Family, chi: ConvexProfile, M: int = 128, s0: float = 0.5,
                             t0: float = 0.5, delta: float | None = None) -> CurvatureCheck:
    """``lhs = (χ'(Y), ∇_Y∇_X X - ∇_X∇_Y X)`` by nested differencing in ``(s, t)``
    with step ``δ`` (default ``1/M``); ``rhs = -∫ χ''(Y) {X, Y}² dvol_φ``."""
    chi = _chi_from(chi)
    d = 1.0 / M if delta is None else delta
    x1, x2 = torus_mesh((M, M))

    def phi(i, j):
        return family(s0 + i * d, t0 + j * d, x1, x2)

    grid = {(i, j): phi(i, j) for i in range(-2, 3) for j in range(-2, 3) if abs(i) + abs(j) <= 3}

    def X(i, j):
        return (grid[(i, j + 1)] - grid[(i, j - 1)]) / (2 * d)

    def Y(i, j):
        return (grid[(i + 1, j)] - grid[(i - 1, j)]) / (2 * d)

    def XX(i, j):  # ∇_X X
        p = grid[(i, j)]
        return (grid[(i, j + 1)] - 2 * p + grid[(i, j - 1)]) / d ** 2 - metric_dot(p, X(i, j), X(i, j))

    def YX(i, j):  # ∇_Y X = φ_st - ∇Y·∇X
        p = grid[(i, j)]
        mixed = (grid[(i + 1, j + 1)] - grid[(i + 1, j - 1)] - grid[(i - 1, j + 1)]
                 + grid[(i - 1, j - 1)]) / (4 * d * d)
        return mixed - metric_dot(p, Y(i, j), X(i, j))

    p0 = grid[(0, 0)]
    X0, Y0 = X(0, 0), Y(0, 0)
    Y_XX = (XX(1, 0) - XX(-1, 0)) / (2 * d) - metric_dot(p0, Y0, XX(0, 0))
    X_YX = (YX(0, 1) - YX(0, -1)) / (2 * d) - metric_dot(p0, X0, YX(0, 0))
    lhs = mabuchi_inner(p0, chi.d1(Y0), Y_XX - X_YX)
    rhs = -integrate(chi.d2(Y0) * poisson_bracket(p0, X0, Y0) ** 2, p0)
    return CurvatureCheck(lhs, rhs, abs(lhs - rhs))


# --- the convexity statements ----------------------------------------------------------

@dataclass(frozen=True)
class SolvedFamily:
    """ε-geodesics ``t ↦ φ(s_k, t)`` for a list of ``s``-samples."""
    s: np.ndarray
    paths: tuple[TorusPotentialPath, ...]

    @property
    def phi(self) -> np.ndarray:
        return np.stack([p.phi for p in self.paths])   # (S, M_t+1, M₁, M₂)

    def ds_phi(self) -> np.ndarray:
        return np.gradient(self.phi, self.s, axis=0, edge_order=2)


def solve_family(c0: Callable[[float], np.ndarray], c1: Callable[[float], np.ndarray], s_values,
                 eps: float, M_t: int = 16, jobs: int = 1) -> SolvedFamily:
    s_values = np.asarray(s_values, dtype=float)
    args = [(c0(s), c1(s), eps, M_t) for s in s_values]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            paths = list(pool.map(_solve_job, args))
    else:
        paths = [_solve_job(a) for a in args]
    return SolvedFamily(s_values, tuple(paths))


def _solve_job(args):
    a, b, eps, M_t = args
    try:
        return solve_eps_geodesic(a, b, eps, M_t)
    except NewtonDiverged as exc:
        raise NewtonDiverged(f"{exc} (s-sample failed)", exc.t, exc.last_iterate, exc.history) from exc


@dataclass(frozen=True)
class ConvexityCheck:
    times: np.ndarray = field(repr=False)
    second_derivative: np.ndarray = field(repr=False)
    lower_bound: np.ndarray = field(repr=False)

    @property
    def defect(self) -> float:
        """``min_t [∂_t² |Y|_χ - ∫ χ''(Y)(∇_X Y)² dvol_φ]``."""
        return float(np.min(self.second_derivative - self.lower_bound))


def chi_convexity_check(family: SolvedFamily, chi: ConvexProfile, index: int | None = None) -> ConvexityCheck:
    """Discrete ``∂_t² ∫χ(∂_sφ) dvol_φ ≥ ∫χ''(∂_sφ)(∇_X Y)² dvol_φ`` at one ``s``-sample."""
    k = len(family.s) // 2 if index is None else index
    phi = family.phi[k]
    Y = family.ds_phi()[k]
    tau = family.paths[k].tau
    m = density_factor(phi)
    mass = np.mean(chi(Y) * m, axis=(1, 2))
    d2 = (mass[2:] - 2 * mass[1:-1] + mass[:-2]) / tau ** 2
    X = (phi[2:] - phi[:-2]) / (2 * tau)
    Yt = (Y[2:] - Y[:-2]) / (2 * tau)
    x1, x2 = grad(X)
    y1, y2 = grad(Y[1:-1])
    nabla_XY = Yt - 0.5 * (x1 * y1 + x2 * y2) / m[1:-1]
    bound = np.mean(chi.d2(Y[1:-1]) * nabla_XY ** 2 * m[1:-1], axis=(1, 2))
    return ConvexityCheck(family.paths[k].times[1:-1], d2, bound)


def curve_lengths(family: SolvedFamily, p: float) -> np.ndarray:
    """``L_p(t) = ∫₀¹ (∫ |∂_sφ|^p dvol_φ)^{1/p} ds`` at every time node."""
    Y = family.ds_phi()
    m = density_factor(family.phi)
    inner = np.mean(np.abs(Y) ** p * m, axis=(2, 3)) ** (1 / p)   # (S, M_t+1)
    return simpson(inner, x=family.s, axis=0)


def length_profile(c0, c1, p: float, eps: float, S: int = 9, M_t: int = 16,
                   jobs: int = 1) -> tuple[np.ndarray, float]:
    if S < 8:
        raise ValueError("S must be at least 8")
    fam = solve_family(c0, c1, np.linspace(0.0, 1.0, S), eps, M_t, jobs)
    L = curve_lengths(fam, p)
    defect = float(np.min(L[2:] - 2 * L[1:-1] + L[:-2])) if len(L) > 2 else 0.0
    return L, defect


def dp_length(phi_a, phi_b, p: float, eps: float, M_t: int = 16) -> float:
    """``d_p`` estimated by the ``L^p`` length of the ε-geodesic from ``phi_a`` to ``phi_b``."""
    path = solve_eps_geodesic(phi_a, phi_b, eps, M_t)
    v = path.velocity()
    m = density_factor(path.phi)
    speed = np.mean(np.abs(v) ** p * m, axis=(1, 2)) ** (1 / p)
    return float(simpson(speed, x=path.times))


@dataclass(frozen=True)
class EndpointConvexity:
    t: float
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def endpoint_convexity(phi0, phi0p, phi1, phi1p, p: float, eps: float, ts: Sequence[float] = (0.25, 0.5, 0.75),
                       M_t: int = 16) -> list[EndpointConvexity]:
    """``d_p(φ_{0,t}, φ_{1,t})`` against ``(1-t) d_p(φ₀, φ₁) + t d_p(φ₀', φ₁')`` with
    every distance and geodesic replaced by its ε-geodesic version."""
    g0 = solve_eps_geodesic(phi0, phi0p, eps, M_t)
    g1 = solve_eps_geodesic(phi1, phi1p, eps, M_t)
    d_start = dp_length(phi0, phi1, p, eps, M_t)
    d_end = dp_length(phi0p, phi1p, p, eps, M_t)
    out = []
    for t in ts:
        j = int(round(t * M_t))
        if abs(j - t * M_t) > 1e-12:
            raise ValueError("t must be a node of the time grid")
        lhs = dp_length(g0.phi[j], g1.phi[j], p, eps, M_t)
        out.append(EndpointConvexity(float(t), lhs, (1 - t) * d_start + t * d_end))
    return out
