"""CLI entry point, experiment configuration, trace serialization, and the
scripted experiment suites.

Subcommands:
  run            one solver run from a JSON config, writing trace.csv + summary.json
  gradcheck      compare a method's hypergradient against central differences
  counterexample the comparison suite on the non-singleton quartic problem
  hyperclean     the toy data-cleaning suite
  verify         the inequality/rate/stationarity audit suites

All trace files are written atomically and reproduce bit-for-bit under a
fixed config and seed; wall-clock time is reported only in summary JSON.
``BDA_THREADS`` caps sweep parallelism.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .inner import AggregationSchedule, run_inner
from .numerics import (CapabilityError, ContractError, NumericalError,
                       rng_stream)
from .outer import (METHODS, RunRecord, SolverConfig, config_dict, solve)
from .problems import (BilevelProblem, HypercleanConfig, _sigmoid,
                       hyperclean_dataset_rows, make_counterexample,
                       make_hypercleaning, make_lls_quadratic, make_problem,
                       make_remark1)
from .hypergrad import hypergrad_reverse
from . import verify as verify_mod

TRACE_COLUMNS = ("t", "phiK", "grad_norm", "err_x", "err_y", "f_gap",
                 "phi_gap", "wall_ms")
INNER_TRACE_COLUMNS = ("t", "k", "f_val", "F_val", "proj_active")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    """Raised for unreadable, unparsable, or inconsistent experiment configs."""


@dataclass
class ExperimentConfig:
    problem_name: str
    problem_params: dict
    solver: SolverConfig
    out_dir: str
    verbosity: str = "summary"          # 'summary' | 'full'
    seeds: list[int] = field(default_factory=lambda: [0])
    x0: list | None = None

    def build_problem(self) -> BilevelProblem:
        return make_problem(self.problem_name, **self.problem_params)


def _sched_from_keys(raw: dict) -> AggregationSchedule:
    return AggregationSchedule(
        mu=float(raw.get("mu", 0.1)),
        s_u=float(raw.get("su", 0.1)),
        s_l=float(raw.get("sl", 0.1)),
        alpha_rule=raw.get("alpha_rule", "harmonic"),
        alpha_scale=float(raw.get("alpha_scale", 1.0)),
        beta_rule=raw.get("beta_rule", "constant"),
        beta_start=float(raw.get("beta_start", raw.get("beta_value", 1.0))),
        beta_lower=float(raw.get("beta_lower", raw.get("beta_value", 1.0))),
    )


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        sched = _sched_from_keys(raw)
        lam = raw.get("lambda")
        solver = SolverConfig(
            method=raw.get("method", "bda"),
            K=int(raw.get("K", 20)),
            truncate_at=raw.get("truncate_at"),
            lam=float(lam) if lam is not None else None,
            T_max=int(raw.get("T_max", 1000)),
            stop_tol=float(raw.get("stop_tol", 1e-8)),
            sched=sched,
            seed=int(raw.get("seed", 0)),
        )
        repeats = int(raw.get("repeats", 1))
        seeds = raw.get("seeds")
        if seeds is None:
            seeds = [solver.seed + i for i in range(repeats)]
        return ExperimentConfig(
            problem_name=raw["problem"],
            problem_params=dict(raw.get("problem_params", {})),
            solver=solver,
            out_dir=raw.get("out", "."),
            verbosity=raw.get("verbosity", "summary"),
            seeds=[int(s) for s in seeds],
            x0=raw.get("x0"),
        )
    except (KeyError, TypeError, ValueError, ContractError) as err:
        raise ConfigError(f"bad config {path}: {err}") from err


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return ""
    return f"{v:.17g}"


def _atomic_write(path: str, write_fn) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except OSError as err:
        raise NumericalError(f"cannot write {path}: {err}") from err
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def emit_trace(record: RunRecord, path: str) -> None:
    """Write the per-iteration trace CSV (atomically).

    The wall_ms column is part of the schema but left empty so identical
    configs yield byte-identical files; wall time lives in summary JSON.
    """
    metrics = record.metrics
    rows = len(metrics["phiK"])

    def write(fh):
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for t in range(rows):
            writer.writerow([
                t,
                _fmt(metrics["phiK"][t]), _fmt(metrics["grad_norm"][t]),
                _fmt(metrics["err_x"][t]), _fmt(metrics["err_y"][t]),
                _fmt(metrics["f_gap"][t]), _fmt(metrics["phi_gap"][t]),
                "",
            ])

    _atomic_write(path, write)


def parse_trace(path: str) -> dict:
    """Read a trace CSV back into column arrays (nan for empty cells)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        columns = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                columns[name].append(float(cell) if cell != "" else math.nan)
    return {name: np.asarray(vals) for name, vals in columns.items()}


def emit_inner_trace(problem: BilevelProblem, record: RunRecord,
                     cfg: SolverConfig, path: str) -> None:
    """Re-run the inner dynamics at each recorded outer iterate and dump
    per-step values (verbosity 'full')."""
    mode = "bda" if cfg.method in ("bda", "obda") else "plain"

    def write(fh):
        writer = csv.writer(fh)
        writer.writerow(INNER_TRACE_COLUMNS)
        for t in range(len(record.metrics["phiK"])):
            _, trace = run_inner(problem, record.xs[t], cfg.K, cfg.sched,
                                 mode=mode)
            for k in range(trace.K + 1):
                active = int(trace.proj_active[k - 1].any()) if k > 0 else 0
                writer.writerow([t, k, _fmt(trace.f_vals[k]),
                                 _fmt(trace.F_vals[k]), active])

    _atomic_write(path, write)


def write_summary(payload: dict, path: str) -> None:
    def write(fh):
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")

    _atomic_write(path, write)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (HypercleanConfig,)):
        return vars(obj)
    return str(obj)


def summarize_record(record: RunRecord, problem: BilevelProblem) -> dict:
    metrics = record.metrics
    final = {name: (None if vals.size == 0 or math.isnan(vals[-1])
                    else float(vals[-1]))
             for name, vals in metrics.items()}
    return {
        "problem": record.problem,
        "problem_dims": {"n": problem.n, "m": problem.m},
        "config": record.config,
        "status": record.status,
        "iterations": int(len(metrics["phiK"])),
        "final": final,
        "final_grad_norm": record.final_grad_norm,
        "resolved_lambda": record.resolved_lambda,
        "wall_time_s": record.wall_time_s,
        "error": record.error,
    }


def _max_workers() -> int:
    env = os.environ.get("BDA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as err:
            raise ConfigError(f"BDA_THREADS must be an integer: {env}") from err
    return min(4, os.cpu_count() or 1)


def _run_jobs(jobs):
    """Run callables in parallel (one experiment per worker), preserving order."""
    workers = _max_workers()
    if workers == 1 or len(jobs) == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [fut.result() for fut in futures]


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def run_experiment(exp: ExperimentConfig) -> list[dict]:
    problem = exp.build_problem()
    os.makedirs(exp.out_dir, exist_ok=True)
    multiple = len(exp.seeds) > 1

    def one(seed: int):
        cfg = replace(exp.solver, seed=seed)
        record = solve(problem, cfg, x0=exp.x0)
        tag = f"_{seed}" if multiple else ""
        trace_path = os.path.join(exp.out_dir, f"trace{tag}.csv")
        emit_trace(record, trace_path)
        if exp.verbosity == "full":
            emit_inner_trace(problem, record, cfg,
                             os.path.join(exp.out_dir, f"inner_trace{tag}.csv"))
        summary = summarize_record(record, problem)
        summary["problem_params"] = exp.problem_params
        summary["trace_file"] = os.path.basename(trace_path)
        write_summary(summary, os.path.join(exp.out_dir, f"summary{tag}.json"))
        return summary

    return _run_jobs([lambda s=s: one(s) for s in exp.seeds])


def suite_counterexample(n: int, K: int, methods, out: str, seed: int = 0,
                         T_max: int = 1000, lam: float = 0.01,
                         num_inits: int = 10) -> dict:
    """Comparison suite on the non-singleton quartic problem: per-method
    traces, an initialization sweep, a projection on/off pair, and an
    alpha-rule sweep.

    The quartic upper objective tolerates a larger step under the aggregated
    dynamics than under plain unrolling, so the plain-unrolling methods run
    at 0.3 * lam.
    """
    methods = list(methods)
    bad = [m for m in methods if m not in ("bda", "rhg", "trhg")]
    if bad:
        raise ContractError(f"suite_counterexample supports bda/rhg/trhg, got {bad}")
    os.makedirs(out, exist_ok=True)
    problem = make_counterexample(n)
    sched = AggregationSchedule(mu=0.1, s_u=0.1, s_l=0.1,
                                alpha_rule="scaled", alpha_scale=0.5)

    def cfg_for(method: str, **kw) -> SolverConfig:
        base = dict(method=method, K=K,
                    lam=lam if method == "bda" else 0.3 * lam,
                    T_max=T_max, sched=sched, seed=seed, stop_tol=1e-9)
        if method == "trhg":
            base["truncate_at"] = max(1, K // 2)
        base.update(kw)
        return SolverConfig(**base)

    summary: dict = {"n": n, "K": K, "methods": methods,
                     "schedule": config_dict(cfg_for(methods[0]))}

    # per-method traces from the origin
    def run_method(method):
        record = solve(problem, cfg_for(method))
        emit_trace(record, os.path.join(out, f"{method}_trace.csv"))
        return method, summarize_record(record, problem)

    summary["runs"] = dict(_run_jobs([lambda m=m: run_method(m) for m in methods]))

    # initialization sweep (paired methods, shared random starts)
    rng = rng_stream(seed)
    inits = 0.75 * (2.0 * rng.random((num_inits, n)) - 1.0)
    sweep_rows = []

    def run_init(i):
        rows = []
        for method in methods:
            record = solve(problem, cfg_for(method), x0=inits[i])
            rows.append({"init": i, "method": method,
                         "final_err_x": float(record.metrics["err_x"][-1]),
                         "status": record.status})
        return rows

    for rows in _run_jobs([lambda i=i: run_init(i) for i in range(num_inits)]):
        sweep_rows.extend(rows)

    def write_sweep(fh):
        writer = csv.writer(fh)
        writer.writerow(["init", "method", "final_err_x", "status"])
        for row in sweep_rows:
            writer.writerow([row["init"], row["method"],
                             _fmt(row["final_err_x"]), row["status"]])

    _atomic_write(os.path.join(out, "init_sweep.csv"), write_sweep)
    summary["init_sweep"] = sweep_rows

    # projection on/off: start the LL outside a tight box.  Runs at a
    # reduced dimension so the unprojected quartic dynamics stay inside
    # their stability basin and both runs actually converge.
    if "bda" in methods:
        n_proj = min(n, 6)
        far = np.concatenate([2.5 * np.ones(n_proj), np.zeros(n_proj)])
        proj_results = {}
        for label, prob in (("with_projection",
                             make_counterexample(n_proj, y_radius=1.5)),
                            ("without_projection",
                             make_counterexample(n_proj, y_radius=1e6))):
            record = solve(prob, cfg_for("bda", stop_tol=1e-8), y0=far)
            emit_trace(record, os.path.join(out, f"proj_{label}_trace.csv"))
            proj_results[label] = {
                "iterations": int(len(record.metrics["phiK"])),
                "final_err_x": float(record.metrics["err_x"][-1]),
                "status": record.status,
            }
        summary["projection_sweep"] = proj_results

        # alpha-rule sweep (zero / constant / adaptive), heavier UL mixing
        alpha_results = {}
        for label, rule, scale in (("alpha_zero", "zero", 1.0),
                                   ("alpha_const_0.5", "constant", 0.5),
                                   ("alpha_adaptive_0.5_over_k", "scaled", 0.5)):
            sched_a = AggregationSchedule(mu=0.5, s_u=0.1, s_l=0.1,
                                          alpha_rule=rule, alpha_scale=scale)
            record = solve(problem, cfg_for("bda", sched=sched_a))
            emit_trace(record, os.path.join(out, f"{label}_trace.csv"))
            alpha_results[label] = {
                "final_err_x": float(record.metrics["err_x"][-1]),
                "status": record.status,
            }
        summary["alpha_sweep"] = alpha_results

    write_summary(summary, os.path.join(out, "summary.json"))
    return summary


def accuracy(data, theta: np.ndarray) -> float:
    pred = np.argmax(data.logits(theta), axis=1)
    return float(np.mean(pred == data.labels))


def f1_score(flags: np.ndarray, truth: np.ndarray) -> float:
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = float(np.sum(flags & truth))
    fp = float(np.sum(flags & ~truth))
    fn = float(np.sum(~flags & truth))
    if tp == 0.0:
        return 1.0 if (fp == 0.0 and fn == 0.0) else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def hyperclean_metrics(problem: BilevelProblem, x: np.ndarray,
                       y: np.ndarray) -> dict:
    md = problem.metadata
    cfg: HypercleanConfig = md["config"]
    theta = y.reshape(cfg.num_classes, cfg.feature_dim + 1)
    weights = _sigmoid(np.asarray(x, dtype=float))
    flags = weights < 0.5
    truth = md["corrupted_mask"]
    mean_corr = float(weights[truth].mean()) if truth.any() else math.nan
    mean_clean = float(weights[~truth].mean()) if (~truth).any() else math.nan
    return {
        "val_acc": accuracy(md["val"], theta),
        "test_acc": accuracy(md["test"], theta),
        "f1": f1_score(flags, truth),
        "mean_sigma_corrupted": mean_corr,
        "mean_sigma_clean": mean_clean,
    }


def hyperclean_baseline(problem: BilevelProblem, K: int,
                        sched: AggregationSchedule) -> dict:
    """Unweighted baseline: plain LL training with every weight equal."""
    x0 = np.zeros(problem.n)  # sigmoid(0) = 0.5 on every sample
    y_K, _ = run_inner(problem, x0, K, sched, mode="plain")
    out = hyperclean_metrics(problem, x0, y_K)
    out["method"] = "baseline_unweighted"
    return out


def default_hyperclean_solver(problem: BilevelProblem, method: str,
                              seed: int = 0) -> SolverConfig:
    """Per-method defaults tuned for the toy scale; the LL step sits just
    under the declared smoothness bound."""
    s_l = 0.8 / problem.L_f
    s_u = 0.8 / problem.L_F
    sched = AggregationSchedule(mu=0.1, s_u=s_u, s_l=s_l,
                                alpha_rule="harmonic")
    base = dict(K=40, lam=2.0, T_max=300, sched=sched, seed=seed,
                stop_tol=1e-7)
    if method == "trhg":
        base["truncate_at"] = 20
    if method == "obda":
        base["K"] = 1
        base["T_max"] = 2000
    if method == "ihg":
        base["cg_tol"] = 1e-8
        base["cg_max_iter"] = 400
    return SolverConfig(method=method, **base)


def suite_hyperclean(cfg: HypercleanConfig, methods, out: str,
                     dump_dataset: bool = True) -> dict:
    methods = list(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ContractError(f"unknown methods {bad}")
    os.makedirs(out, exist_ok=True)
    problem = make_hypercleaning(cfg)

    if dump_dataset:
        def write_data(fh):
            writer = csv.writer(fh)
            d = cfg.feature_dim
            writer.writerow(["split", "index", "label", "corrupted_flag",
                             *[f"feature_{j}" for j in range(d)]])
            for row in hyperclean_dataset_rows(problem):
                writer.writerow(row)

        _atomic_write(os.path.join(out, "dataset.csv"), write_data)

    base_sched = default_hyperclean_solver(problem, "bda").sched
    results = [hyperclean_baseline(problem, K=40, sched=base_sched)]

    def run_method(method):
        solver = default_hyperclean_solver(problem, method, seed=cfg.seed)
        start = time.perf_counter()
        record = solve(problem, solver)
        wall = time.perf_counter() - start
        metrics = hyperclean_metrics(problem, record.x_final, record.y_final)
        metrics.update({"method": method, "wall_time_s": wall,
                        "status": record.status,
                        "iterations": int(len(record.metrics["phiK"]))})
        emit_trace(record, os.path.join(out, f"{method}_trace.csv"))
        return metrics

    results.extend(_run_jobs([lambda m=m: run_method(m) for m in methods]))

    def write_table(fh):
        writer = csv.writer(fh)
        cols = ["method", "val_acc", "test_acc", "f1",
                "mean_sigma_corrupted", "mean_sigma_clean", "wall_time_s"]
        writer.writerow(cols)
        for row in results:
            writer.writerow([row.get("method")] +
                            [_fmt(row.get(c)) for c in cols[1:]])

    _atomic_write(os.path.join(out, "hyperclean_table.csv"), write_table)
    summary = {"config": vars(cfg), "methods": methods, "results": results}
    write_summary(summary, os.path.join(out, "summary.json"))
    return summary


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------

def verify_suite(name: str, out: str) -> dict:
    os.makedirs(out, exist_ok=True)
    suites = ("lemma1", "rate", "stationarity")
    if name == "all":
        chosen = suites
    elif name in suites:
        chosen = (name,)
    else:
        raise ContractError(f"unknown verify suite '{name}'")

    reports = []
    if "lemma1" in chosen:
        for problem in (make_remark1(), make_lls_quadratic(2, 3, seed=5)):
            sched = AggregationSchedule(
                mu=0.3, s_u=0.5 / problem.L_F, s_l=0.5 / problem.L_f,
                alpha_rule="harmonic")
            x = 0.25 * np.ones(problem.n)
            _, trace = run_inner(problem, x, 60, sched, mode="bda")
            rep = verify_mod.check_descent_inequality(
                problem, x, trace, sched, num_test_points=100, seed=11)
            rep.check_name = f"descent_inequality[{problem.name}]"
            reports.append(rep)
            reports.append(_rename(verify_mod.check_nonexpansive(
                problem, x, trace), f"nonexpansive[{problem.name}]"))
    if "rate" in chosen:
        problem = make_counterexample(5)
        constants, sched, x = rate_check_setup(problem)
        rep = verify_mod.check_rate_bound(problem, x, sched, k_max=500,
                                          constants=constants)
        reports.append(rep)
        neg = verify_mod.check_rate_bound(
            problem, x, sched, k_max=500,
            constants=verify_mod.corrupted_constants(constants))
        neg.check_name = "rate_bound_negative_control"
        neg.status = "pass" if neg.violations else "fail"
        reports.append(neg)
    if "stationarity" in chosen:
        problem = make_lls_quadratic(1, 2, seed=3)
        s = 0.5 / max(problem.L_F, problem.L_f)
        sched = AggregationSchedule(mu=0.1, s_u=s, s_l=s, alpha_rule="harmonic")
        grid = [np.array([t]) for t in np.linspace(-2.0, 2.0, 11)]
        errors = verify_mod.check_stationarity(problem, grid, sched,
                                               k_list=[10, 100, 1000])
        ok = errors[-1] <= 1e-3 and errors[-1] <= errors[0]
        reports.append(verify_mod.CheckReport(
            check_name="stationarity", status="pass" if ok else "fail",
            worst_margin=float(1e-3 - errors[-1]),
            location=f"sup errors {errors.tolist()}"))

    payload = {"suite": name, "reports": [r.to_json_dict() for r in reports]}
    write_summary(payload, os.path.join(out, f"verify_{name}.json"))
    all_pass = all(r.status == "pass" for r in reports)
    payload["all_pass"] = all_pass
    return payload


def rate_check_setup(problem: BilevelProblem):
    """Schedule, evaluation point, and constants for the rate-bound audit.

    The UL step must sit under the sampled smoothness bound of the quartic
    upper objective over X x Y, which is what keeps the aggregated scheme
    within the bound's hypotheses."""
    probe = AggregationSchedule(mu=0.1, s_u=1e-9, s_l=0.1,
                                alpha_rule="harmonic")
    x = 1.5 * np.ones(problem.n)
    rc_probe = verify_mod.compute_rate_constants(problem, probe, x=x)
    s_u = 0.5 / rc_probe.L_F
    sched = AggregationSchedule(mu=0.1, s_u=s_u, s_l=0.1,
                                alpha_rule="harmonic")
    constants = verify_mod.compute_rate_constants(problem, sched, x=x)
    return constants, sched, x


def _rename(report, name):
    report.check_name = name
    return report


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def gradcheck(problem_name: str, method: str, K: int = 20,
              seed: int = 0) -> float:
    """Max relative error of the method's hypergradient against central
    differences of x -> F(x, y_K(x)) (the inner run recomputed per probe)."""
    problem = make_problem(problem_name)
    if method not in ("bda", "rhg", "trhg"):
        raise ContractError("gradcheck supports bda, rhg, and trhg")
    mode = "bda" if method == "bda" else "plain"
    sched = AggregationSchedule(mu=0.1, s_u=0.1, s_l=0.1,
                                alpha_rule="harmonic")
    truncate = None if method != "trhg" else K
    rng = rng_stream(seed)
    worst = 0.0
    for _ in range(3):
        x = problem.region_x.project(rng.standard_normal(problem.n))

        def phi_K(xv):
            xv = np.atleast_1d(np.asarray(xv, dtype=float))
            y_K, _ = run_inner(problem, xv, K, sched, mode=mode)
            return problem.F(xv, y_K)

        grad = hypergrad_reverse(problem, x, K, sched, mode=mode,
                                 truncate_at=truncate).gradient
        fd = verify_mod.fd_gradient(phi_K, x, eps=1e-6 * (1.0 + float(np.linalg.norm(x))))
        denom = max(float(np.linalg.norm(fd)), 1e-12)
        worst = max(worst, float(np.linalg.norm(grad - fd)) / denom)
    return worst


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bda",
                                     description="bi-level solver harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)

    p_gc = sub.add_parser("gradcheck", help="hypergradient vs finite differences")
    p_gc.add_argument("--problem", required=True)
    p_gc.add_argument("--method", required=True)
    p_gc.add_argument("--K", type=int, default=20)

    p_ce = sub.add_parser("counterexample", help="comparison suite")
    p_ce.add_argument("--n", type=int, required=True)
    p_ce.add_argument("--K", type=int, required=True)
    p_ce.add_argument("--methods", required=True)
    p_ce.add_argument("--out", required=True)
    p_ce.add_argument("--T-max", type=int, default=1000)

    p_hc = sub.add_parser("hyperclean", help="toy data-cleaning suite")
    p_hc.add_argument("--config", required=True)
    p_hc.add_argument("--methods", required=True)
    p_hc.add_argument("--out", required=True)

    p_vf = sub.add_parser("verify", help="numerical verification suites")
    p_vf.add_argument("--suite", required=True,
                      choices=["lemma1", "rate", "stationarity", "all"])
    p_vf.add_argument("--out", required=True)
    return parser


def cli_main(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        if args.command == "run":
            exp = load_config(args.config)
            if args.out is not None:
                exp.out_dir = args.out
            summaries = run_experiment(exp)
            print(f"run: wrote {len(summaries)} trace/summary pairs to {exp.out_dir}")
        elif args.command == "gradcheck":
            worst = gradcheck(args.problem, args.method, K=args.K)
            print(f"gradcheck {args.problem}/{args.method} K={args.K}: "
                  f"max relative error {worst:.3e}")
            if worst > verify_mod.TOLERANCES.fd_rel_tol:
                return EXIT_NUMERICAL
        elif args.command == "counterexample":
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            suite_counterexample(args.n, args.K, methods, args.out,
                                 T_max=args.T_max)
            print(f"counterexample suite written to {args.out}")
        elif args.command == "hyperclean":
            try:
                with open(args.config, "r", encoding="utf-8") as fh:
                    raw = json.load(fh)
                cfg = HypercleanConfig(**raw)
            except (OSError, json.JSONDecodeError, TypeError) as err:
                raise ConfigError(f"bad hyperclean config: {err}") from err
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            suite_hyperclean(cfg, methods, args.out)
            print(f"hyperclean suite written to {args.out}")
        elif args.command == "verify":
            payload = verify_suite(args.suite, args.out)
            for rep in payload["reports"]:
                print(f"{rep['check_name']}: {rep['status']} "
                      f"(worst margin {rep['worst_margin']:.3e})")
            if not payload["all_pass"]:
                return EXIT_NUMERICAL
    except (ConfigError, ContractError, CapabilityError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
