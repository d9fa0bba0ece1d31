"""Seeded property suites shared by the CLI and the acceptance tests.

Every suite takes a ``numpy`` generator seed and returns a plain dict of
floats, counts and booleans, so reports built from it are reproducible.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .geodesic_space import (GeodesicRay, dp_distance, geodesic_point, pair_profile, transplant_ray,
                             yen_invariant)
from .mabuchi_appendix import (ConvexProfile, curvature_identity_check, length_profile, chi_convexity_check,
                               solve_eps_geodesic, solve_family, torus_mesh)
from .polytope import named_polytope
from .stability import PLConvexFn
from .toric_energy import make_grid, potential_from_function

INTERVAL = named_polytope("interval")
CHIS = (ConvexProfile(), ConvexProfile("regularized", 1), ConvexProfile("regularized", 2),
        ConvexProfile("regularized", 3))


def random_potential(rng: np.random.Generator, N: int):
    """A small smooth perturbation of zero on the interval grid (convexity is not needed for ``d_p``)."""
    c = rng.uniform(-0.02, 0.02, 3)
    return potential_from_function(INTERVAL, N, lambda x: c[0] * np.sin(np.pi * x[..., 0])
                                   + c[1] * x[..., 0] ** 3 + c[2] * np.exp(x[..., 0]), gauge=False)


def random_direction(rng: np.random.Generator, N: int) -> np.ndarray:
    x = make_grid(INTERVAL, N).axes()[0]
    kinks = rng.uniform(0, 1, 2)
    return (rng.uniform(0, 1) * np.maximum(0, x - kinks[0]) + rng.uniform(0, 1) * np.maximum(0, kinks[1] - x)
            + rng.uniform(0, 0.5) * x ** 2 + rng.uniform(-1, 1) * x)


def endpoint_convexity_suite(seed: int, count: int = 1000, N: int = 32, ps=(1, 2, 3)) -> dict:
    """``d_p(u_t, v_t) ≤ (1-t) d_p(u₀, v₀) + t d_p(u₁, v₁)`` for random quadruples."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for i in range(count):
        u0, u1, v0, v1 = (random_potential(rng, N) for _ in range(4))
        t = float(rng.uniform())
        p = ps[i % len(ps)]
        lhs = dp_distance(INTERVAL, geodesic_point(u0, v0, t), geodesic_point(u1, v1, t), p)
        rhs = (1 - t) * dp_distance(INTERVAL, u0, u1, p) + t * dp_distance(INTERVAL, v0, v1, p)
        worst = max(worst, lhs - rhs)
    return {"count": count, "worst_defect": float(worst), "passed": bool(worst <= 1e-12)}


def ray_pair_suite(seed: int, count: int = 200, N: int = 32) -> dict:
    """Convexity of ``t ↦ d₁(ρ₁(t), ρ₂(t))`` and the linear-growth / nonincreasing dichotomy."""
    rng = np.random.default_rng(seed)
    worst, bad, same_n, rows = np.inf, 0, 0, []
    for i in range(count):
        f1 = random_direction(rng, N)
        same = bool(i % 2)
        f2 = f1 if same else random_direction(rng, N)
        prof = pair_profile(INTERVAL, GeodesicRay(random_potential(rng, N), f1),
                            GeodesicRay(random_potential(rng, N), f2), 1)
        worst = min(worst, prof.convexity_defect)
        if prof.grows_linearly == prof.nonincreasing:
            bad += 1
        same_n += same
        rows.append((i, same, prof.convexity_defect, prof.asymptotic_slope,
                     "growth" if prof.grows_linearly else "nonincreasing"))
    return {"count": count, "parallel_pairs": same_n, "worst_convexity_defect": float(worst),
            "dichotomy_failures": bad, "passed": bool(worst >= -1e-8 and bad == 0), "rows": rows}


def transplant_suite(seed: int, count: int = 50, N: int = 1024, k_max: int = 16,
                     times=(0.0, 1.0, 5.0, 10.0)) -> dict:
    """Crease rays moved to a new base: constant ``d₁`` gap and equal ``¥``."""
    rng = np.random.default_rng(seed)
    worst_gap, worst_yen = 0.0, 0.0
    for _ in range(count):
        c = Fraction(int(rng.integers(N // 4, 3 * N // 4)), N)
        ray = GeodesicRay.from_pl(random_potential(rng, N), PLConvexFn.crease([1], c))
        moved = transplant_ray(ray, random_potential(rng, N))
        gaps = [dp_distance(INTERVAL, ray.point(t), moved.point(t), 1) for t in times]
        worst_gap = max(worst_gap, max(gaps) - min(gaps))
        diff = abs(yen_invariant(INTERVAL, ray, k_max).yen - yen_invariant(INTERVAL, moved, k_max).yen)
        worst_yen = max(worst_yen, diff)
    return {"count": count, "worst_gap_variation": worst_gap, "worst_yen_difference": worst_yen,
            "passed": bool(worst_gap <= 1e-10 and worst_yen <= 1e-8)}


# --- appendix --------------------------------------------------------------------

def analytic_family(a: np.ndarray):
    """``φ(s, t) = A(s,t) cos ξ₁ + B(s,t) sin ξ₂ + C st cos(ξ₁ + ξ₂)``, quadratic ``A``, ``B``."""
    def fam(s, t, x1, x2):
        A = a[0] * s + a[1] * t + a[2] * s * t + a[3] * t * t
        B = a[4] * t + a[5] * s * s + a[6] * s * t
        return A * np.cos(x1) + B * np.sin(x2) + a[7] * s * t * np.cos(x1 + x2)
    return fam


def appendix_suite(seed: int, families: int = 10, M: int = 16, M_t: int = 16, jobs: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    z = np.zeros((M, M))
    trivial = solve_eps_geodesic(z, z, 0.1, M_t)
    t = trivial.times[:, None, None]
    out["trivial_error"] = float(np.max(np.abs(trivial.phi - 0.1 * t * (t - 1) / 2)))

    rows = []
    for k in range(families):
        fam = analytic_family(rng.uniform(-0.2, 0.2, 8))
        chi = CHIS[k % len(CHIS)]
        coarse = curvature_identity_check(fam, chi, M=64)
        fine = curvature_identity_check(fam, chi, M=128)
        rows.append((k, fine.lhs, fine.rhs, fine.defect, coarse.defect / fine.defect if fine.defect else np.inf))
    out["curvature_rows"] = rows
    out["curvature_worst_defect"] = max(r[3] for r in rows)
    out["curvature_min_order"] = float(np.log2(min(r[4] for r in rows)))

    x1, x2 = torus_mesh((M, M))
    worst = np.inf
    for _ in range(families):
        A = rng.uniform(-0.1, 0.1, 8)
        c0 = (lambda s, A=A: s * A[0] * np.cos(x1) + A[1] * np.sin(x2) + s * s * A[2] * np.cos(x1 + x2)
              + A[3] * s * np.sin(x1))
        c1 = (lambda s, A=A: A[4] * s * np.sin(x2) + A[5] * np.cos(x1) + A[6] * s * np.cos(2 * x2)
              + A[7] * s * s * np.sin(x1 - x2))
        fam = solve_family(c0, c1, [0.45, 0.5, 0.55], 0.1, M_t, jobs)
        for chi in CHIS:
            worst = min(worst, chi_convexity_check(fam, chi).defect)
    out["chi_convexity_worst_defect"] = float(worst)

    L, defect = length_profile(lambda s: s * 0.1 * np.cos(x1), lambda s: s * 0.1 * np.sin(x2), 2, 0.1,
                               S=9, M_t=M_t, jobs=jobs)
    out["length_profile"] = [float(v) for v in L]
    out["length_convexity_defect"] = defect
    out["passed"] = bool(out["trivial_error"] <= 1e-12 and out["curvature_worst_defect"] <= 1e-5
                         and out["curvature_min_order"] >= 1.7 and worst >= -1e-5 and defect >= -1e-6)
    return out
