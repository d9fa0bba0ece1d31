"""Twisted cscK continuity path on CP¹ in the log-complex coordinate ``ξ``.

The unknown is ``F = log(φ''/φ_b'')`` on ``[-L, L]`` where ``φ_b`` is the
background potential. With ``q = -(log φ_b'')''`` (so that ``R_b φ_b'' = q``)
the path equation ``t(R_φ - R̄) = (1-t)(φ_b''/φ'' - 1)``, multiplied by
``φ'' = φ_b'' e^F``, reads

    t (q - F'' - R̄ φ_b'' e^F) - (1-t)(φ_b'' - φ_b'' e^F) = 0.

Boundary rows: ``F'(-L) = 0`` and the class constraint ``∫ φ_b''(e^F - 1) = 0``.
The background is the round ``φ₀ = ½ log(1 + e^{2ξ})`` plus an optional
``ε sech²(ξ - b)`` bump, all derivatives in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, make_interp_spline
from scipy.sparse.linalg import spsolve

from .errors import HessianDegenerate, NewtonDiverged, OutOfDomain
from .polytope import named_polytope
from .toric_energy import (DEFAULT_L, SymplecticPotential, guillemin_value, make_grid)

P1 = named_polytope("interval")
DEFAULT_T_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999)


# --- background -------------------------------------------------------------------

def _sech2_derivatives(eta: np.ndarray) -> tuple[np.ndarray, ...]:
    """``S = sech² η`` and its first four derivatives."""
    S = 1.0 / np.cosh(eta) ** 2
    T = np.tanh(eta)
    return (S, -2 * S * T, 4 * S - 6 * S ** 2, -8 * S * T + 24 * S ** 2 * T,
            16 * S - 120 * S ** 2 + 120 * S ** 3)


@dataclass(frozen=True)
class Background:
    """``φ_b = ½ log(1 + e^{2ξ}) + ε sech²(ξ - b)``; ``ε = 0`` is the round metric."""
    bump: float = 0.0
    center: float = 0.0

    def __post_init__(self):
        probe = np.linspace(-40.0, 40.0, 8001) + self.center
        if np.any(self._density_derivatives(probe)[0] <= 0):
            raise ValueError("bump too large: φ_b'' must stay positive")

    @property
    def round(self) -> bool:
        return self.bump == 0

    def phi(self, xi: np.ndarray) -> np.ndarray:
        return 0.5 * np.logaddexp(0.0, 2 * xi) + self.bump * _sech2_derivatives(xi - self.center)[0]

    def dphi(self, xi: np.ndarray) -> np.ndarray:
        return 0.5 * (1 + np.tanh(xi)) + self.bump * _sech2_derivatives(xi - self.center)[1]

    def _density_derivatives(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = _sech2_derivatives(xi)
        b = _sech2_derivatives(xi - self.center)
        e = self.bump
        return (0.5 * r[0] + e * b[2], 0.5 * r[1] + e * b[3], 0.5 * r[2] + e * b[4])

    def density(self, xi: np.ndarray) -> np.ndarray:
        """``φ_b''``."""
        return self._density_derivatives(xi)[0]

    def curvature_density(self, xi: np.ndarray) -> np.ndarray:
        """``q = -(log φ_b'')'' = R_b φ_b''``."""
        D, D1, D2 = self._density_derivatives(xi)
        return -(D2 / D - (D1 / D) ** 2)

    def to_json(self) -> dict:
        return {"bump": self.bump, "center": self.center}


# --- grid operators ------------------------------------------------------------------

_CLOSURE = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0])
_NEUMANN = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])


def d2_matrix(N: int, h: float) -> sparse.csr_matrix:
    """Fourth-order second difference on nodes ``1..N-1`` (rows 0 and N empty)."""
    rows, cols, vals = [], [], []
    for i in range(2, N - 1):
        for k, c in zip(range(-2, 3), (-1.0, 16.0, -30.0, 16.0, -1.0)):
            rows.append(i), cols.append(i + k), vals.append(c)
    for j, c in enumerate(_CLOSURE):
        rows.append(1), cols.append(j), vals.append(c)
        rows.append(N - 1), cols.append(N - j), vals.append(c)
    return sparse.csr_matrix((np.array(vals) / (12 * h * h), (rows, cols)), shape=(N + 1, N + 1))


def first_difference(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative, one-sided five-point at the two ends of each side."""
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    out[0] = _NEUMANN @ v[:5] / (12 * h)
    out[-1] = -(_NEUMANN @ v[::-1][:5]) / (12 * h)
    out[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    out[-2] = -(-3 * v[-1] - 10 * v[-2] + 18 * v[-3] - 6 * v[-4] + v[-5]) / (12 * h)
    return out


def _trapezoid_weights(N: int, h: float) -> np.ndarray:
    w = np.full(N + 1, h)
    w[0] = w[-1] = h / 2
    return w


# --- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 20
    damping: float = 1.0
    tol: float = 1e-9
    max_halvings: int = 6


@dataclass(frozen=True)
class PathConfig:
    N: int = 1024
    L: float = DEFAULT_L
    t_grid: tuple[float, ...] = DEFAULT_T_GRID
    newton: NewtonOptions = NewtonOptions()
    background: Background = Background()
    recentring: Mapping | float = 0.0

    def __post_init__(self):
        if self.N < 16 or self.N % 2:
            raise ValueError("N must be an even integer >= 16")
        if self.L <= 0:
            raise ValueError("L must be positive")
        ts = list(self.t_grid)
        if not ts or any(not 0 < t < 1 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("t_grid must be increasing inside (0, 1)")

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "PathConfig":
        poly = doc.get("polytope", "interval")
        if poly != "interval":
            raise ValueError("the continuity path is implemented for the interval (CP¹) only")
        grid = doc.get("grid", {})
        newton = NewtonOptions(**{k: v for k, v in doc.get("newton", {}).items()})
        bg = doc.get("background", {})
        return cls(N=int(grid.get("N", doc.get("N", 1024))), L=float(grid.get("L", doc.get("L", DEFAULT_L))),
                   t_grid=tuple(float(t) for t in doc.get("t_grid", DEFAULT_T_GRID)), newton=newton,
                   background=Background(float(bg.get("bump", 0.0)), float(bg.get("center", 0.0))),
                   recentring=doc.get("recentring", 0.0))

    def recentring_at(self, t: float) -> float:
        """``c(t)``: a constant, or a table ``{"t": c}`` looked up at the nearest listed ``t``."""
        r = self.recentring
        if isinstance(r, Mapping):
            if "constant" in r:
                return float(r["constant"])
            keys = sorted((float(k), float(v)) for k, v in r.items())
            return min(keys, key=lambda kv: abs(kv[0] - t))[1]
        return float(r)


# --- states --------------------------------------------------------------------------

@dataclass(frozen=True)
class PathState:
    t: float
    xi: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    residual_norm: float
    newton_iters: int
    background: Background = Background()
    shift: float = 0.0  # twisting form is φ_b''(ξ + shift)
    history: tuple[float, ...] = ()

    @property
    def N(self) -> int:
        return len(self.xi) - 1

    @property
    def h(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def L(self) -> float:
        return float(self.xi[-1])

    @property
    def density(self) -> np.ndarray:
        """``φ'' = φ_b'' e^F``."""
        return self.background.density(self.xi) * np.exp(self.F)

    def scalar_curvature(self) -> np.ndarray:
        """``R_φ = (q - F'')/φ''`` at nodes ``1..N-1``."""
        q = self.background.curvature_density(self.xi)
        return ((q - d2_matrix(self.N, self.h) @ self.F) / self.density)[1:-1]

    def boundary_anchor(self) -> dict:
        """Asymptotic anchoring data of ``ψ = φ - φ_b`` at ``±L``."""
        psi = self.phi - self.background.phi(self.xi)
        dpsi = first_difference(psi, self.h)
        dd = self.background.density(self.xi) * np.expm1(self.F)
        return {"psi_left": float(psi[0]), "psi_right": float(psi[-1]),
                "dpsi_left": float(dpsi[0]), "dpsi_right": float(dpsi[-1]),
                "ddpsi_left": float(dd[0]), "ddpsi_right": float(dd[-1])}


def _integrate_psi(xi: np.ndarray, D: np.ndarray, F: np.ndarray) -> CubicSpline:
    """``ψ`` with ``ψ'' = D(e^F - 1)``, ``ψ(-L) = ψ'(-L) = 0``."""
    return CubicSpline(xi, D * np.expm1(F)).antiderivative(2)


def path_residual(F: np.ndarray, t: float, xi: np.ndarray, background: Background, rbar: float,
                  shift: float = 0.0, forcing: np.ndarray | None = None) -> np.ndarray:
    """Weighted path residual at interior nodes plus the two boundary rows."""
    N = len(xi) - 1
    h = float(xi[1] - xi[0])
    D = background.density(xi)
    Dt = D if shift == 0 else background.density(xi + shift)
    q = background.curvature_density(xi)
    eF = np.exp(F)
    r = t * (q - d2_matrix(N, h) @ F - rbar * D * eF) - (1 - t) * (Dt - D * eF)
    r[0] = _NEUMANN @ F[:5] / (12 * h)
    r[-1] = float(_trapezoid_weights(N, h) @ (D * eF - Dt))
    if forcing is not None:
        r = r - forcing
    return r


def split_residuals(state: PathState, rbar: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """The pair ``φ'' = φ_b'' e^F`` and ``Δ_φ F = -(R̄ - (1-t)/t) + tr_φ(Ric_b - ((1-t)/t) ω_twist)``,
    the second multiplied by ``t φ''``, at nodes ``1..N-1``."""
    rbar = 2 * float(P1.average_A) if rbar is None else rbar
    t, xi = state.t, state.xi
    D = state.background.density(xi)
    Dt = state.background.density(xi + state.shift)
    q = state.background.curvature_density(xi)
    ddpsi = d2_matrix(state.N, state.h) @ (state.phi - state.background.phi(xi))
    first = (ddpsi - D * np.expm1(state.F))[1:-1]
    dens = state.density
    lap_F = (d2_matrix(state.N, state.h) @ state.F) / dens
    rhs = -(rbar - (1 - t) / t) + (q - (1 - t) / t * Dt) / dens
    return first, (t * dens * (rhs - lap_F))[1:-1]


def _jacobian(F, t, xi, background, rbar):
    N = len(xi) - 1
    h = float(xi[1] - xi[0])
    D = background.density(xi)
    diag = (1 - t - t * rbar) * D * np.exp(F)
    J = (-t * d2_matrix(N, h) + sparse.diags(diag)).tolil()
    J[0, :] = 0
    J[N, :] = 0
    for j, c in enumerate(_NEUMANN):
        J[0, j] = c / (12 * h)
    J[N, :] = _trapezoid_weights(N, h) * D * np.exp(F)
    return J.tocsc()


def newton_solve(F0: np.ndarray, t: float, xi: np.ndarray, background: Background, rbar: float,
                 options: NewtonOptions = NewtonOptions(), forcing: np.ndarray | None = None
                 ) -> tuple[np.ndarray, float, int, list[float]]:
    F = np.array(F0, dtype=float)
    r = path_residual(F, t, xi, background, rbar, forcing=forcing)
    norm = float(np.max(np.abs(r)))
    history = [norm]
    for it in range(options.max_iter + 1):
        if norm <= options.tol:
            return F, norm, it, history
        if it == options.max_iter:
            break
        step = spsolve(_jacobian(F, t, xi, background, rbar), -r)
        lam = options.damping
        while True:
            trial = F + lam * step
            with np.errstate(over="ignore", invalid="ignore"):
                r_trial = path_residual(trial, t, xi, background, rbar, forcing=forcing)
            n_trial = float(np.max(np.abs(r_trial)))
            if np.isfinite(n_trial) and n_trial < (1 - 1e-4 * lam) * norm:
                break
            lam /= 2
            if lam < 1e-6:
                raise NewtonDiverged(f"line search failed at t={t}", t=t, last_iterate=F, history=history)
        F, r, norm = trial, r_trial, n_trial
        history.append(norm)
    raise NewtonDiverged(f"Newton did not reach tol={options.tol} at t={t}", t=t, last_iterate=F,
                         history=history)


def _make_state(F, t, xi, background, norm, iters, history, shift=0.0) -> PathState:
    D = background.density(xi)
    if np.any(D * np.exp(F) <= 0):
        raise HessianDegenerate("φ'' not positive", location=int(np.argmin(D * np.exp(F))))
    psi = _integrate_psi(xi, D, F)(xi)
    for arr in (xi, F, psi):
        arr.setflags(write=False)
    phi = background.phi(xi) + psi
    phi.setflags(write=False)
    return PathState(float(t), xi, phi, F, float(norm), int(iters), background, float(shift), tuple(history))


def path_grid(N: int, L: float) -> np.ndarray:
    return np.linspace(-L, L, N + 1)


def solve_path(config: PathConfig | Mapping) -> list[PathState]:
    """Continuation in ``t`` with warm starts; failed steps are bisected."""
    if not isinstance(config, PathConfig):
        config = PathConfig.from_mapping(config)
    xi = path_grid(config.N, config.L)
    xi.setflags(write=False)
    bg = config.background
    rbar = 2 * float(P1.average_A)
    opts = config.newton
    F = np.zeros(config.N + 1)
    t_prev = None
    states = []
    for t in config.t_grid:
        F, norm, iters, hist = _advance(F, t_prev, t, xi, bg, rbar, opts, opts.max_halvings)
        states.append(_make_state(F.copy(), t, xi.copy(), bg, norm, iters, hist))
        t_prev = t
    return states


def _advance(F, t_from, t_to, xi, bg, rbar, opts, depth):
    try:
        return newton_solve(F, t_to, xi, bg, rbar, opts)
    except NewtonDiverged:
        if depth == 0 or t_from is None:
            raise
    mid = 0.5 * (t_from + t_to)
    F_mid, *_ = _advance(F, t_from, mid, xi, bg, rbar, opts, depth - 1)
    return _advance(F_mid, mid, t_to, xi, bg, rbar, opts, depth - 1)


# --- pullback by ξ ↦ ξ + c -------------------------------------------------------------

@dataclass(frozen=True)
class TwistData:
    t: float
    c: float
    beta0: np.ndarray = field(repr=False)   # ((1-t)/t) φ_b''
    theta: np.ndarray = field(repr=False)   # σ*ω_b = ω_b + (θ)'' , sup θ = 0
    f: np.ndarray = field(repr=False)       # ((1-t)/t) θ
    p_check: float
    beta_min: float                          # min over nodes of β₀ + f''

    @classmethod
    def trivial(cls, state: PathState) -> "TwistData":
        z = np.zeros_like(state.xi)
        beta0 = (1 - state.t) / state.t * state.background.density(state.xi)
        return cls(state.t, 0.0, beta0, z, z, float(P_SCAN[-1]), float(np.min(beta0)))


P_SCAN = tuple(range(1, 65))


def exponential_integral(state: PathState, f: np.ndarray, p: float) -> float:
    """``∫ e^{-p f} dvol_b``."""
    return float(trapezoid(np.exp(-p * f) * state.background.density(state.xi), state.xi))


def _shifted(values: np.ndarray, xi: np.ndarray, c: float) -> np.ndarray:
    """``g(ξ + c)`` by quintic interpolation; beyond ``±L`` the tail
    ``g(±L) ± g'(±L)(1 - e^{∓2(ξ∓L)})/2`` continues the ``e^{-2|ξ|}`` decay."""
    spline = make_interp_spline(xi, values, k=5)
    arg = xi + c
    lo, hi = xi[0], xi[-1]
    out = spline(np.clip(arg, lo, hi))
    right, left = arg > hi, arg < lo
    out[right] = values[-1] + spline(hi, 1) * (-np.expm1(-2 * (arg[right] - hi))) / 2
    out[left] = values[0] - spline(lo, 1) * (-np.expm1(2 * (arg[left] - lo))) / 2
    return out


def pullback_solution(state: PathState, c: float, threshold: float | None = None
                      ) -> tuple[PathState, TwistData]:
    if abs(c) > state.L / 2:
        raise OutOfDomain(f"|c| = {abs(c)} exceeds L/2 = {state.L / 2}")
    xi, bg, t = state.xi, state.background, state.t
    k = (1 - t) / t
    D = bg.density(xi)
    theta_raw = bg.phi(xi + c) - bg.phi(xi)
    theta = theta_raw - np.max(theta_raw)
    f = k * theta
    if c == 0:
        new = state
    else:
        F_new = _shifted(state.F, xi, c) + np.log(bg.density(xi + c) / D)
        psi_spline = _integrate_psi(xi, D, state.F)
        arg = xi + c
        psi_c = np.where(arg > xi[-1], psi_spline(xi[-1]) + psi_spline(xi[-1], 1) * (arg - xi[-1]),
                         np.where(arg < xi[0], 0.0, psi_spline(np.clip(arg, xi[0], xi[-1]))))
        psi_new = psi_c + theta_raw
        phi_new = bg.phi(xi) + psi_new - psi_new[0]
        rbar = 2 * float(P1.average_A)
        res = path_residual(F_new, t, xi, bg, rbar, shift=state.shift + c)[1:-1]
        for arr in (F_new, phi_new):
            arr.setflags(write=False)
        new = PathState(t, xi, phi_new, F_new, float(np.max(np.abs(res))), 0, bg, state.shift + c,
                        state.history)
    beta0 = k * D
    beta_min = float(np.min((beta0 + d2_matrix(state.N, state.h) @ f)[1:-1]))
    vol = float(trapezoid(D, xi))
    threshold = 10 * vol if threshold is None else threshold
    p_check = 0.0
    for p in P_SCAN:
        if exponential_integral(state, f, p) < threshold:
            p_check = float(p)
        else:
            break
    for arr in (beta0, theta, f):
        arr.setflags(write=False)
    return new, TwistData(t, float(c), beta0, theta, f, p_check, beta_min)


def recentred_path(states: Sequence[PathState], config: PathConfig) -> list[tuple[PathState, TwistData]]:
    return [pullback_solution(s, config.recentring_at(s.t)) for s in states]


# --- observables ------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservableRecord:
    t: float
    sup_F_plus_f: float
    inf_F_plus_f: float
    entropy: float
    lap_bound_p: float
    grad_bound: float
    w12p: float
    twisted_scalar_residual: float
    f_l1: float
    p: float

    FIELDS = ("t", "sup_F_plus_f", "inf_F_plus_f", "entropy", "lap_bound_p", "grad_bound", "w12p",
              "twisted_scalar_residual", "f_l1", "p")

    def csv_row(self) -> list[str]:
        return [repr(float(getattr(self, k))) for k in self.FIELDS]


def _finite(x: float) -> float:
    return float(x) if np.isfinite(x) else math.inf


def estimate_observables(state: PathState, twist: TwistData | None = None, p: float = 2.0
                         ) -> ObservableRecord:
    if p < 1:
        raise ValueError("p must be at least 1")
    twist = TwistData.trivial(state) if twist is None else twist
    xi, t, bg = state.xi, state.t, state.background
    k = (1 - t) / t
    D = bg.density(xi)
    dens = state.density
    G = state.F + twist.f
    with np.errstate(over="ignore", invalid="ignore"):
        dG = first_difference(G, state.h)
        grad = np.abs(dG) / np.sqrt(dens)
        entropy = trapezoid(state.F * np.exp(state.F) * D, xi)
        lap = trapezoid(np.exp((p - 1) * twist.f + p * state.F) * D, xi)
        w = trapezoid((np.abs(G) ** (2 * p) + grad ** (2 * p)) * D, xi) ** (1 / (2 * p))
        rbar = 2 * float(P1.average_A)
        # R_φ = tr_φ β + R with β = k·φ_b''(ξ + shift), R = R̄ - k, weighted by φ''
        q = bg.curvature_density(xi)
        Dt = bg.density(xi + state.shift)
        weighted = (q - d2_matrix(state.N, state.h) @ state.F) - k * Dt - (rbar - k) * dens
        resid = np.max(np.abs(weighted[1:-1]))
    f_l1 = trapezoid(np.abs(twist.f) * D, xi)
    return ObservableRecord(t, _finite(np.max(G)), _finite(np.min(G)), _finite(entropy), _finite(lap),
                            _finite(np.max(grad)), _finite(w), _finite(resid), _finite(f_l1), float(p))


# --- symplectic side --------------------------------------------------------------------

def _invert_slope(slope, targets: np.ndarray, lo: float = -60.0, hi: float = 60.0) -> np.ndarray:
    a = np.full_like(targets, lo)
    b = np.full_like(targets, hi)
    for _ in range(200):
        m = 0.5 * (a + b)
        below = slope(m) < targets
        a = np.where(below, m, a)
        b = np.where(below, b, m)
        if np.all(b - a < 1e-15 * np.maximum(1, np.abs(m))):
            break
    return 0.5 * (a + b)


def _potential_from_phi(phi, dphi, N_x: int, tail_right: float) -> SymplecticPotential:
    x = make_grid(P1, N_x).axes()[0]
    xs = x[1:-1]
    xi_of_x = _invert_slope(dphi, xs)
    u = np.empty_like(x)
    u[1:-1] = xs * xi_of_x - phi(xi_of_x)
    u[0] = 0.0
    u[-1] = -tail_right
    v = u - guillemin_value(P1, x[:, None])
    return SymplecticPotential(P1, N_x, v)


def background_potential(background: Background, N_x: int) -> SymplecticPotential:
    """Symplectic potential ``u_b`` whose Legendre dual is ``φ_b``."""
    return _potential_from_phi(background.phi, background.dphi, N_x, 0.0)


def state_potential(state: PathState, N_x: int) -> SymplecticPotential:
    """Symplectic potential of the state's metric on the ``N_x`` grid of ``[0, 1]``."""
    bg, xi = state.background, state.xi
    psi = _integrate_psi(xi, bg.density(xi), state.F)
    L0, L1 = xi[0], xi[-1]
    end_val, end_slope = float(psi(L1)), float(psi(L1, 1))

    def psi_ext(z, nu=0):
        inside = psi(np.clip(z, L0, L1), nu)
        if nu == 0:
            right = end_val + end_slope * (z - L1)
        else:
            right = np.full_like(z, end_slope)
        return np.where(z > L1, right, np.where(z < L0, 0.0, inside))

    return _potential_from_phi(lambda z: bg.phi(z) + psi_ext(z), lambda z: bg.dphi(z) + psi_ext(z, 1),
                               N_x, end_val)
