"""Command-line experiment runner.

    piag run config.json [--quiet] [--trace-iterates]
    piag compare-rates config.json [--quiet]

``run`` writes ``<output>.csv`` (one row per iterate) and ``<output>.json``
(resolved config plus check results). Exit codes: 0 all requested checks
pass, 1 a check failed, 2 invalid config, 3 the iteration diverged.
"""

import argparse
import copy
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import rates
from .delays import KINDS, DelaySchedule
from .errors import DivergenceError, GenerationError, ParameterError
from .problems import from_config
from .solver import run

log = logging.getLogger("piag")

CSV_COLUMNS = ("k", "phi_err", "dist_sq", "psi", "step_norm_sq", "envelope",
               "lemma2_residual_at_xk", "lemma2_residual_at_proj", "max_realized_delay")
CHECKS = ("envelope", "lemma2", "certificate")
LEMMA2_TOL = -1e-9

_int = {"type": "integer"}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["problem", "schedule", "alpha", "max_iters", "output"],
    "additionalProperties": False,
    "properties": {
        "problem": {
            "type": "object",
            "required": ["kind", "seed", "d", "N"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["least-squares", "lasso", "box-qp"]},
                "seed": {**_int, "minimum": 0},
                "d": {**_int, "minimum": 1},
                "N": {**_int, "minimum": 1},
                "m": {**_int, "minimum": 1},
                "rank": {**_int, "minimum": 1},
                "cond": {"type": "number", "minimum": 1},
                "consistent": {"type": "boolean"},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "box": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["kind", "tau"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(KINDS)},
                "tau": {**_int, "minimum": 0},
                "seed": {**_int, "minimum": 0},
            },
        },
        "alpha": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]},
        "max_iters": {**_int, "minimum": 0},
        "checks": {"type": "array", "items": {"enum": list(CHECKS)}, "uniqueItems": True},
        "output": {"type": "string", "minLength": 1},
        "mode": {"enum": ["cache", "history"]},
        "psi_tol": {"type": "number", "exclusiveMinimum": 0},
        "x0_scale": {"type": "number", "exclusiveMinimum": 0},
    },
}

COMPARE_SCHEMA = {
    "type": "object",
    "required": ["grid"],
    "properties": {
        "grid": {
            "type": "object",
            "required": ["eta", "tau"],
            "properties": {
                "eta": {"type": "array", "items": {"type": "number", "minimum": 1}},
                "tau": {"type": "array", "items": {**_int, "minimum": 0}},
            },
        },
        "output": {"type": "string", "minLength": 1},
    },
}


class ConfigError(ValueError):
    pass


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def validate_config(cfg, schema=CONFIG_SCHEMA):
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    return cfg


def resolve_config(cfg):
    """Fill defaults so the summary fully determines the run."""
    cfg = copy.deepcopy(cfg)
    cfg["schedule"].setdefault("seed", 0)
    cfg.setdefault("checks", list(CHECKS))
    cfg.setdefault("mode", "cache")
    cfg.setdefault("x0_scale", 1.0)
    p = cfg["problem"]
    p.setdefault("m", 2 * p["d"])
    if p["kind"] == "lasso" and "lambda" not in p:
        raise ConfigError("problem/lambda is required for lasso")
    return cfg


def trace_rows(trace, a):
    """CSV rows for a trace; the envelope column is ``a^k Psi(x_0)``."""
    psi0 = trace.psi[0]
    log_a = math.log(a) if a is not None else math.nan
    for k in range(len(trace)):
        if a is None or not math.isfinite(psi0):
            env = math.nan
        else:
            env = psi0 * math.exp(k * log_a)
        d = trace.delays[k]
        yield [k, trace.phi_err[k], trace.dist_sq[k], trace.psi[k], trace.step_norm_sq[k], env,
               trace.lemma2_at_xk[k], trace.lemma2_at_proj[k],
               int(np.max(d)) if d is not None else None]


def write_csv(path, trace, a, iterates=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(CSV_COLUMNS)
    if iterates:
        header += [f"x{i}" for i in range(len(trace.iterates[0]))]
    w.writerow(header)
    for k, row in enumerate(trace_rows(trace, a)):
        cells = [_fmt(v) for v in row]
        if iterates:
            cells += [_fmt(v) for v in trace.iterates[k]]
        w.writerow(cells)
    Path(path).write_text(buf.getvalue())


def _check_results(cfg, problem, trace, alpha, tau):
    gt = problem.ground_truth
    out = {}
    ok = True
    if "envelope" in cfg["checks"]:
        a = rates.convergence_rate(alpha, gt.qg_constant)
        env = rates.envelope_check(trace, a)
        out["envelope"] = {"holds": env.holds, "worst_ratio": _json_float(env.worst_ratio),
                           "first_violation": env.first_violation, "status": env.status,
                           "beta_estimated": gt.beta_estimated}
        ok &= env.holds is True
    if "lemma2" in cfg["checks"]:
        res = {}
        for name, col in (("at_xk", trace.lemma2_at_xk), ("at_proj", trace.lemma2_at_proj)):
            vals = np.asarray(col, dtype=float)
            vals = vals[np.isfinite(vals)]
            res[f"min_residual_{name}"] = _json_float(vals.min()) if vals.size else None
            bad = np.flatnonzero(np.asarray(col, dtype=float) < LEMMA2_TOL)
            res[f"first_violation_{name}"] = int(bad[0]) if bad.size else None
        res["holds"] = res["first_violation_at_xk"] is None and res["first_violation_at_proj"] is None
        out["lemma2"] = res
        ok &= res["holds"]
    if "certificate" in cfg["checks"]:
        cert = rates.certificate_for(problem, alpha, tau)
        out["certificate"] = {"a": cert.a, "b": cert.b, "c": cert.c, "k0": cert.k0,
                              "lhs": cert.lhs, "slack": cert.slack, "admissible": cert.admissible}
        ok &= cert.admissible
    return out, ok


def run_experiment(cfg, quiet=False, trace_iterates=False):
    """Run one configured experiment; returns ``(exit_code, summary)``."""
    cfg = resolve_config(validate_config(cfg))
    try:
        problem = from_config(cfg["problem"])
    except (GenerationError, ParameterError) as exc:
        raise ConfigError(f"problem: {exc}") from None
    sch = cfg["schedule"]
    schedule = DelaySchedule(sch["kind"], sch["tau"], problem.n_components, sch["seed"])
    gt = problem.ground_truth
    L, beta, tau = problem.total_lipschitz, gt.qg_constant, sch["tau"]
    bounds = rates.theoretical_bounds(beta, L, tau)
    alpha = bounds.alpha_max if cfg["alpha"] == "auto" else float(cfg["alpha"])
    a = rates.convergence_rate(alpha, beta)

    rng = np.random.default_rng(cfg["problem"]["seed"])
    x0 = cfg["x0_scale"] * rng.standard_normal(problem.dimension)
    if problem.meta["kind"] == "box-qp":
        x0 = problem.regularizer.prox(1.0, x0)

    prefix = Path(cfg["output"])
    prefix.parent.mkdir(parents=True, exist_ok=True)
    summary = {
        "config": cfg,
        "problem": {"dimension": problem.dimension, "n_components": problem.n_components,
                    "total_lipschitz": L, "qg_constant": beta, "optimal_value": gt.optimal_value,
                    "beta_estimated": gt.beta_estimated},
        "alpha": alpha, "alpha_max": bounds.alpha_max, "rate_a": a,
        "rate_a_at_alpha_max": bounds.rate_a, "rate_result4": bounds.rate_result4,
        "eta": bounds.eta,
    }
    try:
        trace = run(problem, schedule, alpha, x0, cfg["max_iters"], psi_tol=cfg.get("psi_tol"),
                    mode=cfg["mode"], record_iterates=trace_iterates)
        code = 0
    except DivergenceError as exc:
        trace = exc.trace
        summary["diverged"] = {"message": str(exc), "iterations": len(trace) - 1}
        code = 3
    write_csv(prefix.with_suffix(".csv"), trace, a, iterates=trace_iterates)
    summary["iterations"] = len(trace) - 1
    summary["final_psi"] = _json_float(trace.psi[-1])
    if code == 0:
        summary["checks"], ok = _check_results(cfg, problem, trace, alpha, tau)
        code = 0 if ok else 1
    summary["exit_code"] = code
    prefix.with_suffix(".json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if not quiet:
        log.info("wrote %s.csv and %s.json (exit %d)", prefix, prefix, code)
    return code, summary


def compare_rates(cfg):
    """Rows ``(eta, tau, rate_a at alpha_max, rate_result4, prior)``; ``beta``
    is normalized to 1 so ``L = eta``."""
    validate_config(cfg, COMPARE_SCHEMA)
    rows = []
    for eta in cfg["grid"]["eta"]:
        for tau in cfg["grid"]["tau"]:
            amax = rates.max_step_size(1.0, eta, tau)
            rows.append({"eta": eta, "tau": tau,
                         "rate_a": rates.convergence_rate(amax, 1.0),
                         "rate_result4": rates.rate_result4(eta, tau),
                         "prior": rates.prior_rate(eta, tau)})
    return rows


def _rates_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eta", "tau", "rate_a", "rate_result4", "prior"])
    for r in rows:
        w.writerow([_fmt(r["eta"]), r["tau"], _fmt(r["rate_a"]), _fmt(r["rate_result4"]),
                    _fmt(r["prior"])])
    return buf.getvalue()


def _load(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def main(argv=None):
    parser = argparse.ArgumentParser(prog="piag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("config")
    p_run.add_argument("--quiet", action="store_true")
    p_run.add_argument("--trace-iterates", action="store_true", help="include x_k in the CSV")
    p_cmp = sub.add_parser("compare-rates", help="tabulate the rate formulas over a grid")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)

    try:
        cfg = _load(args.config)
        if args.command == "run":
            code, summary = run_experiment(cfg, args.quiet, args.trace_iterates)
            if not args.quiet:
                print(json.dumps(summary.get("checks", {}), indent=2, sort_keys=True))
            return code
        table = _rates_csv(compare_rates(cfg))
        if "output" in cfg:
            Path(cfg["output"]).with_suffix(".csv").write_text(table)
        if not args.quiet or "output" not in cfg:
            sys.stdout.write(table)
        return 0
    except ConfigError as exc:
        print(f"piag: invalid config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
