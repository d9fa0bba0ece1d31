"""Command line front door.

    csck-lab <command> [--config run.toml] [--jobs n] [--seed n] [--quiet]

Artifacts land in ``output_dir`` from the config, else ``$CSCK_LAB_OUT/<command>``,
else ``./csck-lab-out/<command>``: ``report.json``, one or more CSV files and
``log.txt``. Exit status: 0 all checks pass, 1 a check failed, 2 numerical
non-convergence, 3 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import CsckLabError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3
COMMANDS = ("polytope-check", "stability-scan", "energy", "ray-classify", "dp-suite", "continuity",
            "epsgeo", "appendix-suite")

log = logging.getLogger("csck_lab")


class ConfigError(CsckLabError, ValueError):
    module = "cli"


# --- serialization -------------------------------------------------------------------

def _plain(x: Any) -> Any:
    """JSON-ready copy: exact rationals as strings, non-finite floats as strings."""
    if x is None:
        return None
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, Mapping):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    return str(x)


def dump_report(report: Mapping) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def dump_csv(rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


# --- config helpers ------------------------------------------------------------------

def _polytope(cfg: Mapping, base: Path):
    from .polytope import load_polytope, named_polytope
    if "polytope_file" in cfg:
        path = base / cfg["polytope_file"]
        if not path.is_file():
            raise ConfigError(f"polytope_file {path} does not exist")
        return load_polytope(path)
    return named_polytope(cfg.get("polytope", "interval"))


def _potential(cfg: Mapping, P, base: Path):
    from .toric_energy import guillemin_potential, load_potential
    N = int(cfg.get("N", 64))
    spec = cfg.get("potential", "guillemin")
    if spec == "guillemin":
        return guillemin_potential(P, N)
    path = base / spec
    if not path.is_file():
        raise ConfigError(f"potential file {path} does not exist")
    return load_potential(path, {P.name: P})


def _torus_function(terms, shape) -> np.ndarray:
    """``Σ a cos(k·ξ) + b sin(k·ξ)`` from rows ``[k₁, k₂, a, b]``."""
    from .mabuchi_appendix import torus_mesh
    x1, x2 = torus_mesh(shape)
    out = np.zeros(shape)
    for row in terms:
        if len(row) != 4:
            raise ConfigError(f"torus mode must be [k1, k2, a, b], got {row!r}")
        k1, k2, a, b = row
        arg = k1 * x1 + k2 * x2
        out += float(a) * np.cos(arg) + float(b) * np.sin(arg)
    return out


# --- commands --------------------------------------------------------------------------

class Run:
    """Per-command context: config, seed, job cap, collected CSVs and log lines."""

    def __init__(self, command: str, cfg: Mapping, base: Path, seed: int, jobs: int):
        self.command, self.cfg, self.base, self.seed, self.jobs = command, cfg, base, seed, jobs
        self.csvs: dict[str, list[list[Any]]] = {}
        self.log_lines: list[str] = []

    def note(self, msg: str):
        self.log_lines.append(msg)
        log.info(msg)


def cmd_polytope_check(run: Run) -> tuple[dict, bool]:
    from .stability import futaki
    P = _polytope(run.cfg, run.base)
    fut, _ = futaki(P)
    res = {"polytope": P.to_json(), "vertices": [list(v) for v in P.vertices], "volume": P.volume,
           "boundary_mass": P.boundary_mass, "A": P.average_A, "barycenter": list(P.barycenter),
           "futaki": list(fut), "futaki_vanishes": all(c == 0 for c in fut)}
    run.csvs["facets"] = [["normal", "offset", "mass"]] + [
        [" ".join(map(str, f.normal)), str(f.offset), str(P.facet_mass(k))] for k, f in enumerate(P.facets)]
    return res, True


def cmd_stability_scan(run: Run) -> tuple[dict, bool]:
    from .stability import CreaseFamily, stability_scan
    P = _polytope(run.cfg, run.base)
    if "scan" not in run.cfg:
        raise ConfigError("stability-scan needs a [scan] table")
    family, criterion = CreaseFamily.from_mapping(run.cfg["scan"])
    rep = stability_scan(P, family, criterion, run.jobs)
    run.csvs["scan"] = rep.csv_rows()
    res = {"polytope": P.name, "criterion": rep.criterion, "min_value": rep.min_value, "margin": rep.margin,
           "stable_evidence": rep.stable_evidence, "scan_size": rep.scan_size,
           "skipped_zero": rep.skipped_zero, "skipped_affine": rep.skipped_affine}
    return res, True


def cmd_energy(run: Run) -> tuple[dict, bool]:
    from .toric_energy import EnergyRecord, abreu_scalar_curvature, mabuchi_energy, twisted_energy
    P = _polytope(run.cfg, run.base)
    u = _potential(run.cfg, P, run.base)
    if u.polytope != P:
        raise ConfigError("potential file names a different polytope")
    rec = mabuchi_energy(P, u, aubin=P.dim == 1)
    t = run.cfg.get("t")
    if t is not None:
        if P.dim != 1:
            raise ConfigError("the twisted energy is available on the interval only")
        rec = twisted_energy(P, u, float(t))
    run.csvs["energy"] = [list(EnergyRecord.FIELDS), rec.csv_row()]
    res = {k: getattr(rec, k) for k in EnergyRecord.FIELDS}
    if P.dim == 1:
        S = abreu_scalar_curvature(u)
        res["scalar_curvature_sup"] = float(np.max(np.abs(S.values)))
    res["polytope"], res["N"] = P.name, u.N
    return res, True


def cmd_ray_classify(run: Run) -> tuple[dict, bool]:
    from .geodesic_space import classify_rays, load_ray
    docs = run.cfg.get("rays")
    if not docs:
        raise ConfigError("ray-classify needs at least one [[rays]] entry")
    rays = [load_ray(d, run.base) if isinstance(d, Mapping) else load_ray(run.base / d) for d in docs]
    P = rays[0].polytope
    if any(r.polytope != P for r in rays):
        raise ConfigError("all rays must live on one polytope")
    results = classify_rays(P, rays, float(run.cfg.get("tol", 1e-6)), int(run.cfg.get("k_max", 8)), run.jobs)
    run.csvs["rays"] = [["index", "verdict", "yen", "increments", "affine_residual"]] + [
        [i] + r.csv_row() for i, r in enumerate(results)]
    return {"polytope": P.name, "verdicts": [r.verdict for r in results],
            "yen": [r.yen for r in results]}, True


def cmd_dp_suite(run: Run) -> tuple[dict, bool]:
    from .suites import endpoint_convexity_suite, ray_pair_suite, transplant_suite
    c = run.cfg
    ends = endpoint_convexity_suite(run.seed, int(c.get("quadruples", 1000)))
    pairs = ray_pair_suite(run.seed, int(c.get("ray_pairs", 200)))
    moved = transplant_suite(run.seed, int(c.get("transplants", 50)))
    run.csvs["ray_pairs"] = [["index", "parallel", "convexity_defect", "asymptotic_slope", "branch"]] + [
        list(r) for r in pairs.pop("rows")]
    res = {"endpoint_convexity": ends, "ray_pairs": pairs, "transplant": moved}
    return res, ends["passed"] and pairs["passed"] and moved["passed"]


def cmd_continuity(run: Run) -> tuple[dict, bool]:
    from .continuity_path import (ObservableRecord, PathConfig, recentred_path, estimate_observables,
                                  solve_path)
    config = PathConfig.from_mapping(run.cfg)
    states = solve_path(config)
    p = float(run.cfg.get("p", 2))
    rows, obs_rows = [["t", "residual", "newton_iters", "R_deviation_sup"]], [list(ObservableRecord.FIELDS)]
    for s in states:
        R = s.scalar_curvature()
        rows.append([s.t, s.residual_norm, s.newton_iters, float(np.max(np.abs(R - 4.0)))])
        run.note(f"t={s.t!r} iters={s.newton_iters} history={[repr(h) for h in s.history]}")
    for state, twist in recentred_path(states, config):
        obs_rows.append(estimate_observables(state, twist, p).csv_row())
    run.csvs["path"], run.csvs["observables"] = rows, obs_rows
    tol = config.newton.tol
    ok = all(s.residual_norm <= tol for s in states)
    res = {"N": config.N, "L": config.L, "background": config.background.to_json(),
           "t_accepted": [s.t for s in states], "residuals": [s.residual_norm for s in states],
           "R_deviation_sup_final": rows[-1][3]}
    return res, ok


def cmd_epsgeo(run: Run) -> tuple[dict, bool]:
    from .mabuchi_appendix import density_factor, geodesic_defect, solve_eps_geodesic
    c = run.cfg
    M = int(c.get("M", 16))
    shape = (M, int(c.get("M2", M)))
    phi0 = _torus_function(c.get("phi0", []), shape)
    phi1 = _torus_function(c.get("phi1", []), shape)
    path = solve_eps_geodesic(phi0, phi1, float(c.get("eps", 0.1)), int(c.get("M_t", 16)))
    run.csvs["epsgeo"] = [["t", "mean_phi", "min_density"]] + [
        [float(t), float(np.mean(ph)), float(np.min(density_factor(ph)))] for t, ph in zip(path.times, path.phi)]
    run.note(f"eps={path.eps!r} newton_iters={path.newton_iters} residual={path.residual_norm!r}")
    res = {"eps": path.eps, "shape": list(path.phi.shape), "residual_norm": path.residual_norm,
           "newton_iters": path.newton_iters, "admissibility_margin": path.admissibility_margin,
           "geodesic_defect": geodesic_defect(path)}
    return res, path.residual_norm <= 1e-9


def cmd_appendix_suite(run: Run) -> tuple[dict, bool]:
    from .suites import appendix_suite
    res = appendix_suite(run.seed, int(run.cfg.get("families", 10)), int(run.cfg.get("M", 16)),
                         int(run.cfg.get("M_t", 16)), run.jobs)
    run.csvs["curvature"] = [["family", "lhs", "rhs", "defect", "refinement_ratio"]] + [
        list(r) for r in res.pop("curvature_rows")]
    return res, res["passed"]


HANDLERS: dict[str, Callable[[Run], tuple[dict, bool]]] = {
    "polytope-check": cmd_polytope_check, "stability-scan": cmd_stability_scan, "energy": cmd_energy,
    "ray-classify": cmd_ray_classify, "dp-suite": cmd_dp_suite, "continuity": cmd_continuity,
    "epsgeo": cmd_epsgeo, "appendix-suite": cmd_appendix_suite,
}


# --- driver ----------------------------------------------------------------------------

def _output_dir(command: str, cfg: Mapping, base: Path) -> Path:
    if "output_dir" in cfg:
        return base / cfg["output_dir"]
    root = os.environ.get("CSCK_LAB_OUT")
    return Path(root or "csck-lab-out") / command


def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh), p.parent
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {p} is not valid TOML: {exc}") from None


def run(command: str, config_path: str | None = None, seed: int | None = None, jobs: int = 1,
        out_dir: Path | None = None) -> int:
    """Run one command and write its artifacts; returns the exit status."""
    started = time.perf_counter()
    status, error, result, run_ctx = EXIT_OK, None, {}, None
    cfg, base = {}, Path.cwd()
    try:
        if command not in HANDLERS:
            raise ConfigError(f"unknown command {command!r}")
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg, base = load_config(config_path)
        params = cfg.get("params", cfg)
        seed = int(cfg.get("seed", 0)) if seed is None else seed
        run_ctx = Run(command, params, base, seed, jobs)
        result, ok = HANDLERS[command](run_ctx)
        status = EXIT_OK if ok else EXIT_CHECK_FAILED
    except CsckLabError as exc:
        status = EXIT_NUMERICAL if exc.kind == "numerical" else EXIT_VALIDATION
        extra = f" at t={exc.t!r}" if getattr(exc, "t", None) is not None else ""
        error = f"{type(exc).__name__}({exc.module}.{command}){extra}: {exc}"
    except (ValueError, KeyError, TypeError, OSError) as exc:
        status = EXIT_VALIDATION
        error = f"{type(exc).__name__}(cli.{command}): {exc}"
    out = out_dir or _output_dir(command, cfg, base)
    out.mkdir(parents=True, exist_ok=True)
    report = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command, "seed": seed,
              "exit_status": status, "error": error, "result": result}
    (out / "report.json").write_text(dump_report(report))
    lines = list(run_ctx.log_lines) if run_ctx else []
    if run_ctx:
        for name, rows in sorted(run_ctx.csvs.items()):
            (out / f"{name}.csv").write_text(dump_csv(rows))
    if error:
        lines.append(f"error: {error}")
        log.error(error)
    lines.append(f"seed={seed} exit={status} wall={time.perf_counter() - started:.3f}s")
    (out / "log.txt").write_text("\n".join(lines) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csck-lab", description="Toric cscK numerical laboratory.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML run configuration")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    ap.add_argument("--seed", type=int, help="seed for randomized suites (overrides the config; default 0)")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    status = run(args.command, args.config, args.seed, args.jobs)
    if not args.quiet:
        print(f"{args.command}: exit {status}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
