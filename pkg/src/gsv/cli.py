"""Command line runner: ``gsv <task> --config <path> [--out DIR] [--seed N] [--format json|csv|both]``.

Each run writes ``report.json`` (inputs, results, versions, timing) and, when
asked, ``table.csv``. Exit status: 0 on success, 2 for configuration errors,
1 for any other library error; the error is printed to stderr as JSON.
"""
import argparse
import csv
import io
import json
import math
import os
from pathlib import Path
import platform
import sys
import tempfile
import time

import numpy as np
import scipy

from . import __version__
from .config import TASKS, ExperimentConfig
from .errors import ConfigInvalid, GSVError
from .explosion import (
    LINEAR,
    explosion_certificate,
    exp_variance_moment_mc,
    growth_class,
    holder_split,
    moment_reduction,
    truncated_moment_mc,
)
from .model import CL, CONSTANT, EXCEPTIONAL, LDP, MDP
from .pricing import call_asymptote, call_exceptional, call_limit_cl, implied_vol, iv_asymptote
from .rates import RateOptions, exit_rate, ldp_rate_terminal, mdp_rate_terminal, tail_limit
from .simulate import summarise, estimate_call, estimate_exit_prob, estimate_tail, mdp_tilt, run_blocks, tilt_from_control

SCHEMA_VERSION = "1"
CSV_FLOAT = "{:.16e}"


# ------------------------------------------------------------- helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _atomic_write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows):
    """Comma-separated, header first, floats with 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c)
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, (float, np.floating)):
                out.append(CSV_FLOAT.format(float(v)) if math.isfinite(v) else "")
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def versions():
    return {
        "gsv": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _rate_opts(cfg, n=None):
    p = cfg.params
    levels = tuple(p["levels"]) if p["levels"] else None
    return RateOptions(n=n or cfg.grid["n"], levels=levels, restarts=p["restarts"], seed=cfg.mc["seed"])


def _linear(model):
    try:
        return growth_class(model.sigma).kind == LINEAR
    except GSVError:
        return False


def _try(fn):
    """Run ``fn``; return (value, None) or (None, error category)."""
    try:
        return fn(), None
    except GSVError as exc:
        return None, exc.category


# ------------------------------------------------------------- tasks


def task_simulate(cfg):
    """Tail sweep: MC estimate of P(X_T >= x eps^alpha) next to its small-noise limit."""
    model, grid, mc = cfg.model_spec(), cfg.path_grid(), cfg.mc
    rows, rates = [], {}
    for x in cfg.params["x"]:
        regime = cfg.scaling_params(1.0).regime
        limit, note = None, None
        if regime in (LDP, MDP) and not _linear(model):
            note = "GROWTH_VIOLATION"
        else:
            limit, note = _try(lambda: tail_limit(model, cfg.scaling_params(1.0), x, _rate_opts(cfg)))
        control = None
        if mc["tilt"] == "rate":
            res = ldp_rate_terminal(model, x, RateOptions(n=grid.n, restarts=cfg.params["restarts"], seed=mc["seed"]))
            rates[str(x)] = res.to_dict()
            control = res.minimizer.ldot
        for eps in cfg.scaling["eps"]:
            sc = cfg.scaling_params(eps)
            tilt = None
            if mc["tilt"] == "mdp":
                tilt = mdp_tilt(model, sc, x, grid)
            elif control is not None:
                tilt = tilt_from_control(control, sc)
            est, err = _try(lambda: estimate_tail(model, sc, x, grid, mc["count"], mc["seed"], tilt, mc["backend"]))
            row = {"x": x, "eps": eps, "regime": regime, "limit": limit, "note": err or note}
            row["limit_kind"] = "scaled_log" if regime in (LDP, MDP) else "probability"
            if est is not None:
                row.update(mean=est.mean, stderr=est.stderr, count=est.count, scaled_log=est.scaled_log)
                obs = est.scaled_log if regime in (LDP, MDP) else est.mean
                row["gap"] = None if obs is None or limit is None else obs - limit
            rows.append(row)
    cols = ["x", "eps", "regime", "mean", "stderr", "count", "scaled_log", "limit", "limit_kind", "gap", "note"]
    out = {"rows": rows, "columns": cols}
    if rates:
        out["rate_results"] = rates
    return out


def task_rate(cfg):
    model = cfg.model_spec()
    s0, T = model.sigma.sigma0, model.T
    rows, results = [], {}
    for x in cfg.params["x"]:
        res = ldp_rate_terminal(model, x, _rate_opts(cfg))
        results[str(x)] = res.to_dict()
        envelope = None if abs(model.rho) >= 1 else x * x / (2 * model.rho_bar**2 * T * s0 * s0)
        rows.append(
            {
                "x": x,
                "value": res.value,
                "status": res.status,
                "mdp_rate": mdp_rate_terminal(s0, T, x),
                "envelope": envelope,
                "n": res.minimizer.grid.n,
            }
        )
    return {"rows": rows, "columns": ["x", "value", "status", "mdp_rate", "envelope", "n"], "rate_results": results}


def task_exit_rate(cfg):
    model, grid, mc, p = cfg.model_spec(), cfg.path_grid(), cfg.mc, cfg.params
    res = exit_rate(model, tuple(p["interval"]), p["t"], _rate_opts(cfg))
    rows = []
    for eps in cfg.scaling["eps"] or []:
        sc = cfg.scaling_params(eps)
        est = estimate_exit_prob(model, sc, tuple(p["interval"]), p["t"], grid, mc["count"], mc["seed"], mc["backend"])
        scaled = sc.power(sc.speed_exponent) * math.log(est.mean) if est.mean > 0 else None
        rows.append(
            {
                "eps": eps,
                "mean": est.mean,
                "stderr": est.stderr,
                "scaled_log": scaled,
                "limit": -res.value,
                "gap": None if scaled is None else scaled + res.value,
            }
        )
    return {
        "rate_result": res.to_dict(),
        "rows": rows,
        "columns": ["eps", "mean", "stderr", "scaled_log", "limit", "gap"],
    }


def _call_limit(cfg, model, x):
    """(limit, kind, note) for the call sweep in the configured regime."""
    sc1 = cfg.scaling_params(1.0)
    reg, s0, T = sc1.regime, model.sigma.sigma0, model.T
    if reg in (LDP, MDP):
        rate = None
        if reg == LDP:
            if not _linear(model):
                return None, "scaled_log", "GROWTH_VIOLATION"
            rate = ldp_rate_terminal(model, x, _rate_opts(cfg)).value
        term, err = _try(lambda: call_asymptote(rate, sc1, x, sigma=model.sigma, T=T))
        return (None if term is None else -term.coefficient), "scaled_log", err
    if reg == CL:
        return call_limit_cl(s0, T, x), "price", None
    return call_exceptional(s0, T, x, sc1.alpha), "price_over_eps_alpha", None


def task_callprice(cfg):
    model, grid, mc = cfg.model_spec(), cfg.path_grid(), cfg.mc
    rows = []
    for x in cfg.params["x"]:
        limit, kind, note = _call_limit(cfg, model, x)
        for eps in cfg.scaling["eps"]:
            sc = cfg.scaling_params(eps)
            est = estimate_call(model, sc, x, grid, mc["count"], mc["seed"], backend=mc["backend"])
            lim = limit
            if kind == "price_over_eps_alpha":
                lim = limit.evaluate(eps)
            if kind == "scaled_log":
                obs = est.scaled_log
            else:
                obs = est.mean
            rows.append(
                {
                    "x": x,
                    "eps": eps,
                    "regime": sc.regime,
                    "mean": est.mean,
                    "stderr": est.stderr,
                    "scaled_log": est.scaled_log,
                    "limit": lim,
                    "limit_kind": "scaled_log" if kind == "scaled_log" else "price",
                    "gap": None if obs is None or lim is None else obs - lim,
                    "note": note,
                }
            )
    cols = ["x", "eps", "regime", "mean", "stderr", "scaled_log", "limit", "limit_kind", "gap", "note"]
    return {"rows": rows, "columns": cols}


def task_impliedvol(cfg):
    """MC call prices turned into implied vols, with nu = sqrt(eps) sigma-hat."""
    model, grid, mc = cfg.model_spec(), cfg.path_grid(), cfg.mc
    rows = []
    sc1 = cfg.scaling_params(1.0)
    for x in cfg.params["x"]:
        rate = None
        if sc1.regime == LDP:
            rate = ldp_rate_terminal(model, x, _rate_opts(cfg)).value
        term, note = _try(lambda: iv_asymptote(sc1, x, rate_value=rate, sigma0=model.sigma.sigma0, T=model.T))
        for eps in cfg.scaling["eps"]:
            sc = cfg.scaling_params(eps)
            est = estimate_call(model, sc, x, grid, mc["count"], mc["seed"], backend=mc["backend"])
            k = x * sc.strike_scale
            iv, err = _try(lambda: implied_vol(k, est.mean) / math.sqrt(eps))
            # the log-corrected term is undefined at eps = 1
            asym = None if term is None or (term.log_correction and eps == 1.0) else term.evaluate(eps)
            rows.append(
                {
                    "x": x,
                    "eps": eps,
                    "regime": sc.regime,
                    "call": est.mean,
                    "call_stderr": est.stderr,
                    "implied_vol": iv,
                    "asymptote": asym,
                    "ratio": None if iv is None or not asym else iv / asym,
                    "note": err or note,
                }
            )
    cols = ["x", "eps", "regime", "call", "call_stderr", "implied_vol", "asymptote", "ratio", "note"]
    out = {"rows": rows, "columns": cols}
    if term is not None:
        out["asymptote_term"] = term.to_dict()
    return out


def task_explode(cfg):
    model, grid, mc, p = cfg.model_spec(), cfg.path_grid(), cfg.mc, cfg.params
    witness, err = _try(lambda: growth_class(model.sigma))
    out = {"growth": None if witness is None else witness.to_dict(), "growth_error": err}
    certs = []
    if witness is not None:
        for M in p["M"]:
            certs.append(explosion_certificate(model, witness, p["gamma"], p["t"], M).to_dict())
    out["certificates"] = certs
    rows = []
    for M in p["truncations"] or []:
        est = exp_variance_moment_mc(model, p["gamma"], p["t"], M, grid, mc["count"], mc["seed"], mc["backend"])
        row = {"truncation": M, "exp_variance_mean": est.mean, "exp_variance_stderr": est.stderr}
        if p["moment"] is not None:
            m2 = truncated_moment_mc(model, p["moment"], p["t"], M, grid, mc["count"], mc["seed"], mc["backend"])
            row.update(price_moment_mean=m2.mean, price_moment_stderr=m2.stderr)
        rows.append(row)
    if p["moment"] is not None:
        g = p["moment"]
        out["moment_reduction"] = list(moment_reduction(g, model.rho))
        split, err = (None, "RHO_ZERO") if model.rho == 0 else _try(lambda: holder_split(g, model.rho))
        out["holder_split"] = None if split is None else list(split)
        out["holder_split_error"] = err
    out["rows"] = rows
    out["columns"] = [
        "truncation",
        "exp_variance_mean",
        "exp_variance_stderr",
        "price_moment_mean",
        "price_moment_stderr",
    ]
    out["note"] = "Monte Carlo columns are diagnostics only; certificates are the proof of divergence."
    return out


def task_verify(cfg):
    """Cheap self-checks on the configured model."""
    model, grid, mc = cfg.model_spec(), cfg.path_grid(), cfg.mc
    s0, T = model.sigma.sigma0, model.T
    rows = []

    def check(name, value, reference, passed):
        rows.append({"check": name, "value": value, "reference": reference, "passed": bool(passed)})

    if _linear(model) and model.rho == 0:
        for eps in cfg.scaling["eps"] or [1.0]:
            sc = cfg.scaling_params(eps)
            vals = run_blocks(model, sc, grid, mc["count"], mc["seed"], lambda X, w, v: np.exp(X[:, -1]), mc["backend"])
            est = summarise(vals, mc["seed"])
            check(f"martingale eps={eps!r}", est.mean, 1.0, abs(est.mean - 1) <= 4 * est.stderr + 1e-12)
    if abs(model.rho) < 1:
        opts = RateOptions(n=grid.n, levels=tuple(cfg.params["levels"] or (16, 32, 64)), seed=mc["seed"])
        for x in cfg.params["x"]:
            res = ldp_rate_terminal(model, x, opts)
            env = x * x / (2 * model.rho_bar**2 * T * s0 * s0)
            check(f"envelope x={x!r}", res.value, env, res.value <= env + 1e-9)
            vals = [v for _, v in res.grid_levels]
            check(f"refinement x={x!r}", vals[-1], vals[0], all(b <= a + 1e-6 for a, b in zip(vals, vals[1:])))
            check(f"converged x={x!r}", res.value, None, res.status == "CONVERGED")
            if model.sigma.family == CONSTANT:
                ref = x * x / (2 * T * s0 * s0)
                check(f"constant sigma x={x!r}", res.value, ref, abs(res.value - ref) <= 1e-4 * max(ref, 1e-300))
    return {
        "rows": rows,
        "columns": ["check", "value", "reference", "passed"],
        "all_passed": all(r["passed"] for r in rows),
    }


TASK_RUNNERS = {
    "simulate": task_simulate,
    "rate": task_rate,
    "exit-rate": task_exit_rate,
    "callprice": task_callprice,
    "impliedvol": task_impliedvol,
    "explode": task_explode,
    "verify": task_verify,
}


class VerifyFailed(GSVError):
    category = "VERIFY_FAILED"


def run_experiment(cfg):
    """Run the configured task and write the report files. Returns the report dict."""
    start = time.perf_counter()
    results = TASK_RUNNERS[cfg.task](cfg)
    report = {
        "schema_version": SCHEMA_VERSION,
        "task": cfg.task,
        "config": cfg.to_dict(),
        "results": results,
        "versions": versions(),
        "timing": {"wall_seconds": time.perf_counter() - start},
    }
    report = _clean(report)
    out = Path(cfg.output["dir"])
    fmt = cfg.output["format"]
    if fmt in ("json", "both"):
        _atomic_write(out / "report.json", json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n")
    if fmt in ("csv", "both"):
        _atomic_write(out / "table.csv", csv_text(results["columns"], results["rows"]))
    if cfg.task == "verify" and not results["all_passed"]:
        raise VerifyFailed("at least one verification check failed", out=str(out))
    return report


def payload(report):
    """The part of a report that is byte-stable across reruns (timing removed)."""
    return json.dumps({k: v for k, v in report.items() if k != "timing"}, sort_keys=True, allow_nan=False)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="gsv", description="Gaussian stochastic volatility experiments")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, help="TOML or JSON configuration file")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides mc.seed)")
    ap.add_argument("--format", choices=("json", "csv", "both"), help="report format (overrides output.format)")
    args = ap.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, task=args.task)
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, fmt=args.format)
        run_experiment(cfg)
    except ConfigInvalid as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    except GSVError as exc:
        print(json.dumps(_clean(exc.to_dict()), sort_keys=True), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "CONFIG_INVALID", "field": "--config", "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
