"""Acceptance criteria, one test each; the summary prints one line per criterion."""

import time
from fractions import Fraction as Fr

import numpy as np
import pytest
from scipy.integrate import trapezoid

from csck_lab.cli import run
from csck_lab.continuity_path import (Background, PathConfig, exponential_integral, recentred_path,
                                      estimate_observables, solve_path)
from csck_lab.geodesic_space import GeodesicRay, yen_invariant
from csck_lab.polytope import named_polytope
from csck_lab.stability import PLConvexFn, futaki, lp_functional
from csck_lab.suites import (appendix_suite, endpoint_convexity_suite, ray_pair_suite,
                             transplant_suite)
from csck_lab.toric_energy import guillemin_potential

T_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999)
BUMP = Background(-0.04, 0.3)


def test_c01_exact_stability_kernel(criterion):
    with criterion(1, "L_P exact on simplex and square", 1.0) as rec:
        simplex, square = named_polytope("simplex"), named_polytope("square")
        linear = PLConvexFn((((Fr(1), Fr(0)), Fr(0)),))
        assert lp_functional(simplex, linear) == 0
        crease = PLConvexFn.crease([1, 0], Fr(1, 2))
        assert lp_functional(square, crease) == Fr(1, 4)
        rec.detail = "L_P(x)=0, L_P(max(0,x-1/2))=1/4"


def test_c02_futaki_dichotomy(criterion):
    with criterion(2, "Futaki zero on square/simplex, nonzero on trapezoid", 1.0) as rec:
        for name in ("square", "simplex"):
            assert futaki(named_polytope(name))[0] == (0, 0)
        fut = futaki(named_polytope("trapezoid"))[0]
        assert fut != (0, 0)
        rec.detail = f"trapezoid futaki = ({fut[0]}, {fut[1]})"


def test_c03_yen_slope(criterion):
    with criterion(3, "yen -> L_P = 1/4 with first-order convergence", 10.0) as rec:
        P = named_polytope("interval")
        err = {}
        for N in (512, 1024):
            ray = GeodesicRay.from_pl(guillemin_potential(P, N), PLConvexFn.crease([1], Fr(1, 2)))
            err[N] = abs(yen_invariant(P, ray, 8).yen - 0.25)
        assert err[1024] <= 5e-3
        ratio = err[512] / err[1024]
        assert 1.8 <= ratio <= 2.2
        rec.detail = f"|yen-1/4|={err[1024]:.3e} at N=1024, ratio {ratio:.3f}"


def test_c04_endpoint_convexity(criterion):
    with criterion(4, "endpoint convexity, 1000 quadruples, p in {1,2,3}", 5.0) as rec:
        res = endpoint_convexity_suite(seed=2024, count=1000)
        assert res["worst_defect"] <= 1e-12
        rec.detail = f"worst defect {res['worst_defect']:.3e}"


def test_c05_ray_pairs(criterion):
    with criterion(5, "ray pairs: convex distance and one dichotomy branch", 10.0) as rec:
        res = ray_pair_suite(seed=2024, count=200)
        assert res["worst_convexity_defect"] >= -1e-8
        assert res["dichotomy_failures"] == 0
        rec.detail = f"worst second difference {res['worst_convexity_defect']:.3e}"


def test_c06_transplanted_rays(criterion):
    with criterion(6, "transplanted rays: constant d1 gap, equal yen", 10.0) as rec:
        res = transplant_suite(seed=2024, count=50)
        assert res["worst_gap_variation"] <= 1e-10
        assert res["worst_yen_difference"] <= 1e-8
        rec.detail = (f"gap variation {res['worst_gap_variation']:.2e}, "
                      f"yen difference {res['worst_yen_difference']:.2e}")


def _path_run(N):
    config = PathConfig(N=N, L=9.0, t_grid=T_GRID, background=BUMP, recentring=1.0)
    states = solve_path(config)
    pulled = recentred_path(states, config)
    obs = [estimate_observables(s, tw, 2.0) for s, tw in pulled]
    return states, pulled, obs


_RUNS: dict = {}


def _runs(*Ns):
    for N in Ns:
        if N not in _RUNS:
            _RUNS[N] = _path_run(N)
    return _RUNS


def _run_constants(obs):
    return {"entropy": max(o.entropy for o in obs), "sup_F_plus_f": max(o.sup_F_plus_f for o in obs),
            "inf_F_plus_f": min(o.inf_F_plus_f for o in obs), "lap_bound_p2": max(o.lap_bound_p for o in obs),
            "grad_bound": max(o.grad_bound for o in obs)}


def test_c07_continuity_path(criterion):
    with criterion(7, "continuity path on CP1 up to t=0.999", 300.0) as rec:
        runs = _runs(2048, 4096)
        states, _, _ = runs[2048]
        assert tuple(s.t for s in states) == T_GRID
        assert max(s.residual_norm for s in states) <= 1e-9
        R = states[-1].scalar_curvature()
        r_dev = float(np.max(np.abs(R - 4.0)))
        assert r_dev <= 1e-3
        c1, c2 = _run_constants(runs[2048][2]), _run_constants(runs[4096][2])
        changes = {k: abs(c2[k] - c1[k]) / abs(c1[k]) for k in c1}
        assert max(changes.values()) < 0.05, changes
        rec.detail = f"sup|R-Rbar|={r_dev:.2e}, worst N->2N change {max(changes.values()):.2e}"


def test_c08_recentring(criterion):
    with criterion(8, "recentring c(t)=1: twist decays, e^{-4f} integrable", 60.0) as rec:
        _, pulled, obs = _runs(2048)[2048]
        by_t = {o.t: o for o in obs}
        ratio = by_t[0.999].f_l1 / by_t[0.9].f_l1
        assert ratio <= 0.02
        e4 = {}
        for state, twist in pulled:
            vol = float(trapezoid(state.background.density(state.xi), state.xi))
            e4[state.t] = exponential_integral(state, twist.f, 4) / vol
        # the bound needs 4(1-t)/t below the integrability exponent of θ: the tail t ≥ 0.9
        tail = [v for t, v in e4.items() if t >= 0.9]
        assert max(tail) < 10
        values = [e4[t] for t in T_GRID]
        assert all(b <= a for a, b in zip(values, values[1:]))
        rec.detail = f"f_l1 ratio {ratio:.4f}, e^(-4f)/vol on t>=0.9 at most {max(tail):.3f}"


def test_c09_appendix(criterion):
    with criterion(9, "appendix: trivial, curvature identity, chi convexity, L_p convexity", 180.0) as rec:
        res = appendix_suite(seed=2024, families=10)
        assert res["trivial_error"] <= 1e-12
        assert res["curvature_worst_defect"] <= 1e-5
        assert res["curvature_min_order"] >= 1.7
        assert res["chi_convexity_worst_defect"] >= -1e-5
        assert res["length_convexity_defect"] >= -1e-6
        rec.detail = (f"identity defect {res['curvature_worst_defect']:.2e} "
                      f"(order {res['curvature_min_order']:.2f}), chi convexity min {res['chi_convexity_worst_defect']:.2e}, "
                      f"L convexity {res['length_convexity_defect']:.2e}")


def test_c10_determinism(criterion, tmp_path):
    cfg = tmp_path / "suite.toml"
    cfg.write_text("quadruples = 200\nray_pairs = 40\ntransplants = 5\n")
    start = time.perf_counter()
    endpoint_convexity_suite(99, 200), ray_pair_suite(99, 40), transplant_suite(99, 5)
    direct = time.perf_counter() - start
    # two CLI runs against two direct runs: overhead under 1 s
    with criterion(10, "byte-identical reports for a fixed seed", 2 * direct + 1.0) as rec:
        for name in ("ref", "again"):
            assert run("dp-suite", str(cfg), seed=99, out_dir=tmp_path / name) == 0
        a = (tmp_path / "ref" / "report.json").read_bytes()
        b = (tmp_path / "again" / "report.json").read_bytes()
        assert a == b
        rec.detail = f"{len(a)} bytes identical"
