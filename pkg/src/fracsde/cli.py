"""Command line: ``fracsde run``, ``fracsde selfcheck`` and ``fracsde gronwall``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__, gronwall, malliavin, rates, specfun
from .config import ExperimentConfig, load_config
from .errors import DomainError, FitError, FracSDEError
from .models import preset
from .observables import g_preset
from .paths import make_grid, sample_noise
from .solver import SchemeConfig, Trajectory, solve_paths
from .variation import variation_paths

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(table: dict) -> str:
    cols = list(table)
    data = [np.asarray(table[c]).reshape(-1) if np.ndim(table[c]) else np.asarray([table[c]]) for c in cols]
    lengths = {len(d) for d in data}
    if len(lengths) > 1:
        raise DomainError(f"table is not rectangular: column lengths {sorted(lengths)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for row in zip(*data):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_csv(table: dict, path) -> Path:
    """Write a column table as RFC-4180 CSV with 17 significant digits for reals."""
    path = Path(path)
    text = csv_text(table)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`emit_csv` for numeric tables."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {c: np.array([float(r[i]) for r in body]) for i, c in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- self-check table ---------------------------------------------------------


def selfcheck_table() -> dict:
    """Reference values for the special-function layer."""
    g1, g2 = specfun.gamma_eval(1.0), specfun.gamma_eval(2.0)
    lhs, bound = specfun.inv_gamma_diff(1.0, 0.5 + 1e-9)
    h = 0.25
    logw = specfun.log_lag_weights(0.75, h, 1)[0]
    rows = [
        ("Gamma(1)", g1.value, 1.0, 1e-12),
        ("Gamma(2)", g2.value, 1.0, 1e-12),
        ("Gamma'(1)", g1.d1, -0.5772156649015329, 1e-12),
        ("Gamma(0.75)", specfun.gamma_eval(0.75).value, 1.2254167024651776, 1e-12),
        ("alpha_star", specfun.gamma_argmin(), 1.4616321449683623, 1e-10),
        ("kernel_l2_diff(1,0.75,1)", specfun.kernel_l2_diff(1.0, 0.75, 1.0), 1.0 / 3.0, 1e-12),
        ("quad u^0 on (0,1)", specfun.singular_quad(lambda u: 1.0, 1.0, 1e-12), 1.0, 1e-12),
        ("quad u^-1/2 on (0,1)", specfun.singular_quad(lambda u: u**-0.5, 1.0, 1e-12), 2.0, 1e-10),
        ("quad ln^2 u on (0,1)", specfun.singular_quad(lambda u: math.log(u) ** 2, 1.0, 1e-12), 2.0, 1e-10),
        ("log weight, one cell", logw, h**0.75 * (math.log(h) - 1 / 0.75) / 0.75, 1e-12),
        # inequality row: the reference column holds the upper bound
        ("inv_gamma_diff(1,0.5+) lhs <= bound", lhs, bound, math.inf),
    ]
    names, comp, ref, rel, ok = [], [], [], [], []
    for name, c, r, tol in rows:
        e = math.nan if tol == math.inf else abs(c - r) / max(abs(r), 1e-300)
        names.append(name)
        comp.append(c)
        ref.append(r)
        rel.append(e)
        ok.append(c <= r if tol == math.inf else e <= tol)
    return {"quantity": names, "computed": comp, "reference": ref, "rel_error": rel, "pass": ok}


# -- experiments ----------------------------------------------------------------


def _build(factory, name, params):
    try:
        return factory(name, **params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for preset {name!r}: {exc}") from None


def _setup(cfg: ExperimentConfig):
    model = _build(preset, cfg.model.name, cfg.model.params)
    grid = make_grid(cfg.grid.T, cfg.grid.n)
    noise = sample_noise(grid, cfg.mc.m, cfg.mc.seed)
    scheme = SchemeConfig(cfg.scheme.drift_rule, cfg.scheme.diffusion_rule)
    return model, grid, noise, scheme


def _fit_summary(fit):
    return fit.summary() if fit is not None else {"slope": None, "intercept": None, "slope_se": None, "r2": None}


def _run_solve(cfg, threads):
    model, grid, noise, scheme = _setup(cfg)
    dB = noise.block(cfg.replica, cfg.replica + 1)
    X, failed = solve_paths(model, cfg.alpha, grid, dB, scheme)
    table = {"t": grid.nodes, "X": X[0]}
    if cfg.variation:
        table["Y"] = variation_paths(model, cfg.alpha, grid, X, dB, scheme)[0]
    scan = rates.moment_scan(model, [cfg.alpha], cfg.p, cfg.eval_time, grid, noise, scheme, threads)
    est = scan.estimates[0]
    summary = {"replica_failed": bool(failed[0]), "moment_p": cfg.p, "moment": est.mean, "moment_stderr": est.stderr,
               "failures": est.failures}
    return {"trajectory.csv": table}, summary, False


def _run_curve(cfg, threads):
    model, grid, noise, scheme = _setup(cfg)
    t = cfg.eval_time
    if cfg.kind == "strong":
        curve = rates.strong_error_curve(model, cfg.beta, cfg.deltas, cfg.p, t, grid, noise, scheme, threads, cfg.side)
    elif cfg.kind == "variation":
        tt = None if cfg.sup else t
        curve = rates.variation_error_curve(model, cfg.beta, cfg.deltas, cfg.p, tt, grid, noise, scheme, threads, cfg.side)
    else:
        g = _build(g_preset, cfg.g.name, cfg.g.params)
        curve = rates.weak_error_curve(model, cfg.beta, cfg.deltas, g, t, grid, noise, scheme, threads, cfg.side)
    summary = _fit_summary(curve.fit)
    summary.update({"expected_slope": curve.extra.get("expected_slope"), "tags": curve.tags})
    return {f"{cfg.kind}_curve.csv": curve.table()}, summary, False


def _run_weak_derivative(cfg, threads):
    model, grid, noise, scheme = _setup(cfg)
    g = _build(g_preset, cfg.g.name, cfg.g.params)
    rep = rates.weak_derivative_estimate(model, cfg.beta, cfg.eval_time, g, grid, noise, cfg.deltas, scheme, threads, cfg.tol)
    summary = {"estimate": rep.estimate, "stderr": rep.stderr, "extrapolation_error": rep.extrapolation_error,
               "contracted": rep.contracted, "tags": rep.tags}
    return {"weak_derivative.csv": rep.table()}, summary, not rep.contracted


def _run_malliavin(cfg, threads):
    model, grid, noise, scheme = _setup(cfg)
    dB = noise.block(cfg.replica, cfg.replica + 1)
    X, failed = solve_paths(model, cfg.alpha, grid, dB, scheme)
    if failed[0]:
        raise FracSDEError(f"replica {cfg.replica} diverged")
    mg = malliavin.solve_first_derivative(model, cfg.alpha, Trajectory(grid, cfg.alpha, X[0]), dB[0], scheme)
    theta, tk, D = mg.triples()
    times = cfg.times or [grid.horizon]
    ks = [grid.index_of(x) for x in times]
    artifacts = {
        "malliavin_grid.csv": {"theta": theta, "t": tk, "D": D},
        "sobolev_norm.csv": {"t": np.array(times), "norm_sq": np.array([malliavin.sobolev_norm_sq(mg, k) for k in ks])},
    }
    summary = {}
    if cfg.gamma is not None:
        est = malliavin.inverse_moment_scan(model, cfg.alpha, grid, noise, cfg.gamma, times, scheme, threads)
        artifacts["inverse_moments.csv"] = {
            "t": np.array([e.t for e in est]),
            "mean": np.array([e.mean for e in est]),
            "stderr": np.array([e.stderr for e in est]),
            "replicas": np.array([e.replicas for e in est]),
        }
        try:
            summary.update(_fit_summary(rates.fit_loglog([e.t for e in est], [e.mean for e in est])))
        except FitError:
            summary.update(_fit_summary(None))
        summary["expected_slope"] = (1 - 2 * cfg.alpha) * cfg.gamma
        summary["tags"] = [] if est[0].inside_hypothesis else [rates.OUTSIDE]
    return artifacts, summary, False


def _run_gronwall(cfg, threads):
    gs = cfg.gronwall
    prob = _build(lambda name, **kw: gronwall.make_problem(gs.a, gs.eta, cfg.grid.T, name, gs.steps, **kw), gs.omega, gs.params)
    table = gronwall.bound_table(prob)
    rep = gronwall.check_inequality_dominance(prob, gronwall.saturate(prob))
    summary = {"max_ratio_saturated": rep.max_ratio, "dominated": rep.dominated,
               "tags": ["limit case eta=1"] if prob.limit_case else []}
    return {"gronwall.csv": table}, summary, False


def _run_selfcheck(cfg, threads):
    table = selfcheck_table()
    return {"selfcheck.csv": table}, {"all_pass": bool(all(table["pass"]))}, False


DISPATCH = {
    "solve": _run_solve,
    "strong": _run_curve,
    "variation": _run_curve,
    "weak": _run_curve,
    "weak-derivative": _run_weak_derivative,
    "malliavin": _run_malliavin,
    "gronwall": _run_gronwall,
    "selfcheck": _run_selfcheck,
}


def run(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Run one experiment; artifacts first, then ``summary.json``, then ``manifest.json``."""
    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts, summary, inconclusive = DISPATCH[cfg.kind](cfg, max(1, int(threads)))
    names = []
    for name, table in artifacts.items():
        emit_csv(table, out / name)
        names.append(name)
    summary = {**summary, "kind": cfg.kind, "seed": cfg.mc.seed, "config_hash": cfg.config_hash(),
               "inconclusive": inconclusive}
    _atomic_write(out / "summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    names.append("summary.json")
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": json.loads(cfg.canonical_json()),
        "seed": cfg.mc.seed,
        "replicas": cfg.mc.m,
        "artifacts": names,
        "version": __version__,
        "wall_time_s": time.perf_counter() - start,
        "threads": threads,
    }
    _atomic_write(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return {"manifest": manifest, "summary": summary, "inconclusive": inconclusive}


def _print_validation(exc: ValidationError) -> None:
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<config>"
        print(f"validation error: {loc}: {err['msg']}", file=sys.stderr)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracsde", description="Caputo fractional SDE simulation laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config", help="path to the JSON config")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--seed", type=int, default=None, help="override mc.seed")
    sub.add_parser("selfcheck", help="print the special-function reference table")
    g = sub.add_parser("gronwall", help="print the three Gronwall bounds on a grid as CSV")
    g.add_argument("--a", type=float, required=True)
    g.add_argument("--eta", type=float, required=True)
    g.add_argument("--T", type=float, default=1.0)
    g.add_argument("--omega", default="constant", choices=sorted(gronwall.OMEGA_PRESETS))
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="omega preset parameter")
    g.add_argument("--steps", type=int, default=16)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "selfcheck":
            sys.stdout.write(csv_text(selfcheck_table()))
            return EXIT_OK
        if args.command == "gronwall":
            params = {}
            for kv in args.param:
                k, sep, v = kv.partition("=")
                if not sep:
                    raise DomainError(f"--param expects KEY=VALUE, got {kv!r}")
                params[k] = float(v)
            prob = _build(lambda name, **kw: gronwall.make_problem(args.a, args.eta, args.T, name, args.steps, **kw), args.omega, params)
            sys.stdout.write(csv_text(gronwall.bound_table(prob)))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = ExperimentConfig.model_validate({**cfg.model_dump(), "mc": {**cfg.mc.model_dump(), "seed": args.seed}})
        result = run(cfg, args.out, args.threads)
        print(json.dumps(_jsonable(result["summary"]), sort_keys=True))
        return EXIT_INCONCLUSIVE if result["inconclusive"] else EXIT_OK
    except ValidationError as exc:
        _print_validation(exc)
        return EXIT_VALIDATION
    except DomainError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FracSDEError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
