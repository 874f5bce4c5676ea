"""Command-line front end: run comparison jobs and write reports.

Exit codes: 0 every stage passed or was supported, 1 an order or dominance
violation was found, 2 a statistical verdict was inconclusive or a
diagnostic stage (conditions, residuals) failed, 3 configuration, validation
or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, JobConfig, load_config
from .generator import cumulant, gaussian_bump, levy_symbol, symbol_sde
from .montecarlo import symbol_estimate
from .orders import exact_hinge, make_test_family, square, sufficient_conditions
from .spectral import density_pii, sobolev_norm, spectral_grid
from .specs import TimeGrid, validate_spec, validation_x_grid
from .verify import (FiniteMeasure, check_generator_dominance, backward_equation_residual,
                     forward_equation_residual, kernel_condition_K, modified_lp_norm,
                     monotonicity_probe, representation_residual, verify_order_mc,
                     verify_order_spectral)

log = logging.getLogger("levycomp")

EXIT_OK, EXIT_VIOLATION, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2, 3
PLOT_KINDS = ("margins_vs_s", "ci_bars", "density_overlay")


class MissingReportError(LookupError):
    """A plot was requested from a report that was not produced."""


@dataclass
class JobResult:
    exit_code: int
    reports: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=True)
    Path(path).write_text(text + "\n")


# ---------------------------------------------------------------------------
# stages


def _family(cfg: JobConfig):
    return make_test_family(cfg.order, cfg.dim, cfg.family.size, cfg.family.seed, cfg.family.beta)


def _mc_members(cfg: JobConfig, fam):
    extras = {"exact_hinge": lambda: exact_hinge(cfg.dim), "square": lambda: square(cfg.dim)}
    return list(fam) + [extras[e]() for e in cfg.family.mc_extras]


def _time_grid(cfg: JobConfig) -> TimeGrid:
    pts = np.unique(np.concatenate([[0.0], cfg.numerics.s_grid, [cfg.numerics.t]]))
    return TimeGrid(pts[pts >= 0])


def stage_validate(cfg: JobConfig) -> dict:
    grid = _time_grid(cfg)
    reps = [validate_spec(p, grid) for p in cfg.pair]
    return {"passed": all(r.passed for r in reps), "processes": [r.to_dict() for r in reps]}


def stage_conditions(cfg: JobConfig, fam) -> dict:
    try:
        rep = sufficient_conditions(*cfg.pair, cfg.order, cfg.numerics.s_grid,
                                    family_size=cfg.family.size, family_seed=cfg.family.seed)
    except ValueError as e:
        return {"available": False, "passed": None, "notes": [str(e)]}
    out = rep.to_dict()
    out["available"] = True
    if cfg.pair[0].variant == "levy_sde":
        out["notes"].append("kernel conditions on the solution transition functions assumed, not checked")
    return out


def stage_dominance(cfg: JobConfig, fam) -> dict:
    n = cfg.numerics
    xs = validation_x_grid(cfg.dim, n.x_radius, n.x_points)
    return check_generator_dominance(*cfg.pair, fam, n.s_grid, xs, n.dominance_tol).to_dict()


def stage_mc(cfg: JobConfig, fam) -> dict:
    n = cfg.numerics
    rep = verify_order_mc(*cfg.pair, _mc_members(cfg, fam), n.t, n.n_paths, cfg.seed,
                          n.alpha, n.margin_tol, n.threads, n.steps_per_unit)
    return rep.to_dict()


def _grid_for(cfg: JobConfig):
    n = cfg.numerics
    grids = [spectral_grid(p.schedule, 0.0, n.t, n.spectral_n) for p in cfg.pair]
    return max(grids, key=lambda g: g[1])


def stage_spectral(cfg: JobConfig, fam):
    n = cfg.numerics
    a, b = (p.schedule for p in cfg.pair)
    grid = _grid_for(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = verify_order_spectral(a, b, _mc_members(cfg, fam), 0.0, n.t, grid, n.spectral_tol)
        mono = monotonicity_probe(a, fam, 0.0, n.t, grid)
        dens = [density_pii(s, 0.0, n.t, grid) for s in (a, b)]
    out = rep.to_dict()
    out["monotonicity_probe"] = mono
    density = {"x": dens[0].x.tolist(), "density_a": dens[0].values.tolist(),
               "density_b": dens[1].values.tolist(), "t": n.t}
    return out, density


def stage_residuals(cfg: JobConfig, fam) -> dict:
    n = cfg.numerics
    a, b = (p.schedule for p in cfg.pair)
    grid = _grid_for(cfg)
    rows = []
    for f in list(fam)[: n.residual_members]:
        r = representation_residual(a, b, f, 0.0, n.t, n.r_nodes, grid)
        rows.append({"member": f.name, "residual": r, "passed": r <= n.residual_tol})
    bump = gaussian_bump()
    eq = []
    for label, s in (("a", a), ("b", b)):
        fw = forward_equation_residual(s, bump, 0.0, n.t, n.h, grid)
        bw = backward_equation_residual(s, bump, 0.0, n.t, n.h, grid)
        eq.append({"process": label, "forward": fw, "backward": bw,
                   "passed": fw <= n.equation_tol and bw <= n.equation_tol})
    passed = all(r["passed"] for r in rows) and all(e["passed"] for e in eq)
    return {"passed": passed, "representation": rows, "evolution_equations": eq,
            "notes": ["backward-equation residual is a diagnostic for right-differentiability in s"]}


def stage_norms(cfg: JobConfig, fam) -> dict:
    n = cfg.numerics
    out = {"p": n.norm_p, "rho": n.norm_rho, "members": []}
    if cfg.dim == 1:
        nu = FiniteMeasure.gaussian()
        ys = np.linspace(-100.0, 100.0, 2001)
        for f in fam:
            out["members"].append({"member": f.name,
                                   "modified_lp_norm": modified_lp_norm(f, nu, n.norm_p, n.norm_rho, ys)})
    if cfg.is_pii_1d:
        grid = _grid_for(cfg)
        ks, sob = [], []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for p in cfg.pair:
                dens = density_pii(p.schedule, 0.0, n.t, grid)
                sob.append(sobolev_norm(dens, 1.0))
                ks.append(kernel_condition_K(lambda s, t, y, x, d=dens: d.at(x - y), FiniteMeasure.gaussian(),
                                             0.0, n.t, np.linspace(-10.0, 10.0, 41)))
        out["density_sobolev_r1"] = sob
        out["kernel_condition_K"] = ks
        out["kernel_condition_note"] = "bounded on the probed grid only"
    return out


# ---------------------------------------------------------------------------
# job driver


def _exit_code(reports: dict) -> int:
    if "validate" in reports and not reports["validate"]["passed"]:
        return EXIT_ERROR
    violated = False
    if "dominance" in reports and reports["dominance"]["violations"]:
        violated = True
    for k in ("mc", "spectral"):
        if k in reports and reports[k]["overall"] == "violated":
            violated = True
    if violated:
        return EXIT_VIOLATION
    if "mc" in reports and reports["mc"]["overall"] == "inconclusive":
        return EXIT_INCONCLUSIVE
    if reports.get("conditions", {}).get("passed") is False:
        return EXIT_INCONCLUSIVE
    if reports.get("residuals", {}).get("passed") is False:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _summary(cfg: JobConfig, reports: dict, code: int) -> dict:
    s = {"job": cfg.name, "order": cfg.order, "seed": cfg.seed, "stages": list(cfg.stages),
         "exit_code": code, "config": cfg.canonical()}
    if "validate" in reports:
        s["validate"] = reports["validate"]["passed"]
    if "conditions" in reports:
        s["conditions"] = reports["conditions"]["passed"]
    if "dominance" in reports:
        d = reports["dominance"]
        s["dominance"] = {"min_margin": d["min_margin"], "violations": len(d["violations"]),
                          "witness": d["witness"]}
    for k in ("mc", "spectral"):
        if k in reports:
            r = reports[k]
            worst = min(r["members"], key=lambda m: m["margin"]) if r["members"] else None
            s[k] = {"overall": r["overall"], "verdicts": {m["member"]: m["verdict"] for m in r["members"]},
                    "worst_member": worst and worst["member"], "worst_margin": worst and worst["margin"]}
            if k == "spectral" and worst:
                s[k]["witness_x"] = worst.get("witness_x")
    if "residuals" in reports:
        s["residuals"] = reports["residuals"]["passed"]
    return s


def run_job(cfg: JobConfig, write: bool = True) -> JobResult:
    """Run the configured stages in order and write ``<stage>.json`` plus ``summary.json``."""
    started = time.time()
    reports, extra = {}, {}
    out = Path(cfg.output_dir)
    try:
        fam = _family(cfg)
        for st in cfg.stages:
            log.info("stage %s", st)
            if st == "validate":
                reports[st] = stage_validate(cfg)
                if not reports[st]["passed"]:
                    break
            elif st == "spectral":
                reports[st], extra["density"] = stage_spectral(cfg, fam)
            else:
                reports[st] = globals()[f"stage_{st}"](cfg, fam)
        code = _exit_code(reports)
    except (ValueError, ArithmeticError, RuntimeError) as e:
        log.error("runtime error: %s", e)
        reports["error"] = {"message": str(e), "type": type(e).__name__}
        code = EXIT_ERROR
    summary = _summary(cfg, reports, code)
    res = JobResult(code, {**reports, **extra}, summary)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        for k, v in reports.items():
            dump_json(v, out / f"{k}.json")
            res.files.append(out / f"{k}.json")
        dump_json(summary, out / "summary.json")
        res.files.append(out / "summary.json")
        for kind, key in (("margins_vs_s", "dominance"), ("ci_bars", "mc"), ("density_overlay", "density")):
            if key in res.reports:
                res.files.append(emit_plot_data(res.reports, kind, out / f"{kind}.csv"))
        side = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
                "duration_s": round(time.time() - started, 3), "threads": cfg.numerics.threads,
                "version": __version__, "output_dir": str(out)}
        dump_json(side, out / "run_info.json")
    return res


def emit_plot_data(reports: dict, kind: str, path) -> Path:
    """Write plot-ready CSV (comma separated, LF endings).

    ``margins_vs_s``: ``s,min_margin``; ``ci_bars``: ``member,mean,lo,hi``;
    ``density_overlay``: ``x,density_a,density_b``.
    """
    key = {"margins_vs_s": "dominance", "ci_bars": "mc", "density_overlay": "density"}.get(kind)
    if key is None:
        raise ValueError(f"unknown plot kind {kind!r}")
    if key not in reports:
        raise MissingReportError(f"{kind} needs the {key!r} report")
    r = reports[key]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if kind == "margins_vs_s":
            w.writerow(["s", "min_margin"])
            for s, m in zip(r["s_grid"], r["min_margin_by_s"]):
                w.writerow([repr(float(s)), repr(float(m))])
        elif kind == "ci_bars":
            w.writerow(["member", "mean", "lo", "hi"])
            for m in r["members"]:
                d = m["paired_diff"]
                w.writerow([m["member"], repr(d["mean"]), repr(d["lo"]), repr(d["hi"])])
        else:
            w.writerow(["x", "density_a", "density_b"])
            for row in zip(r["x"], r["density_a"], r["density_b"]):
                w.writerow([repr(float(v)) for v in row])
    return path


# ---------------------------------------------------------------------------
# entry points


def _density_cmd(cfg: JobConfig, t: float) -> int:
    if not cfg.is_pii_1d:
        raise ConfigError("pair", "density requires a one-dimensional PII pair")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = max((spectral_grid(p.schedule, 0.0, t, cfg.numerics.spectral_n) for p in cfg.pair),
               key=lambda g: g[1])
    dens = [density_pii(p.schedule, 0.0, t, grid) for p in cfg.pair]
    path = emit_plot_data({"density": {"x": dens[0].x.tolist(), "density_a": dens[0].values.tolist(),
                                       "density_b": dens[1].values.tolist()}},
                          "density_overlay", out / "density_overlay.csv")
    mass = [float(d.values.sum() * d.spacing) for d in dens]
    print(json.dumps({"file": str(path), "t": t, "mass": mass}, sort_keys=True))
    return EXIT_OK


def _symbol_cmd(cfg: JobConfig, x, xi, h: float, seed: int) -> int:
    rows = []
    for label, p in zip("ab", cfg.pair):
        re, im = symbol_estimate(p, 0.0, x, xi, h, cfg.numerics.symbol_paths, seed,
                                 threads=cfg.numerics.threads)
        tr = p.schedule.triplet(0.0)
        if p.phi is None:
            exact = -cumulant(p.schedule, 0.0, np.atleast_1d(xi))
        else:
            exact = symbol_sde(p.phi, levy_symbol(tr, p.schedule.cutoff_mode), 0.0, x, xi)
        exact = complex(np.asarray(exact).reshape(-1)[0])
        rows.append({"process": label, "real": re.to_dict(), "imag": im.to_dict(),
                     "exact": [exact.real, exact.imag]})
    print(json.dumps(_jsonable({"x": x, "xi": xi, "h": h, "estimates": rows}), sort_keys=True, indent=2))
    return EXIT_OK


def _vector(text: str):
    try:
        v = [float(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return v if len(v) > 1 else v[0]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levycomp", description="Comparison of processes with independent increments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("compare", help="run a comparison job")
    c.add_argument("config")
    c.add_argument("--stages")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.add_argument("--threads", type=int)
    d = sub.add_parser("density", help="transition densities of a one-dimensional PII pair")
    d.add_argument("config")
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--out")
    s = sub.add_parser("symbol", help="Monte Carlo estimate of the probabilistic symbol")
    s.add_argument("config")
    s.add_argument("--x", type=_vector, required=True)
    s.add_argument("--xi", type=_vector, required=True)
    s.add_argument("--h", type=float, default=1e-3)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = getattr(args, "out", None) or os.environ.get("LEVYCOMP_OUT")
        threads = getattr(args, "threads", None) or os.environ.get("LEVYCOMP_THREADS")
        cfg = cfg.with_overrides(stages=getattr(args, "stages", None), seed=getattr(args, "seed", None),
                                 output_dir=out, threads=threads)
        if args.command == "compare":
            res = run_job(cfg)
            print(json.dumps(_jsonable(res.summary), sort_keys=True, indent=2))
            if "error" in res.reports:
                print(f"error: {res.reports['error']['message']}", file=sys.stderr)
            return res.exit_code
        if args.command == "density":
            return _density_cmd(cfg, args.t)
        return _symbol_cmd(cfg, args.x, args.xi, args.h, cfg.seed)
    except (ConfigError, MissingReportError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
