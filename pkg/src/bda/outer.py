"""Upper-level projected gradient loop and full solver assembly.

One outer iteration runs the configured inner dynamics, forms the method's
hypergradient, and takes a projected step on x.  Metrics against analytic
references are recorded whenever the problem supplies them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .hypergrad import (hypergrad_implicit, hypergrad_onestage,
                        hypergrad_reverse)
from .inner import AggregationSchedule, default_y0, run_inner
from .numerics import BoxRegion, ContractError, NumericalError, as_vector
from .problems import BilevelProblem

METHODS = ("bda", "rhg", "trhg", "ihg", "obda")

METRIC_COLUMNS = ("phiK", "grad_norm", "err_x", "err_y", "f_gap", "phi_gap")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "bda"
    K: int = 20
    truncate_at: int | None = None
    lam: float | None = None          # UL step size; None picks a safe default
    T_max: int = 1000
    stop_tol: float = 1e-8
    sched: AggregationSchedule = field(default_factory=AggregationSchedule)
    seed: int = 0
    cg_tol: float = 1e-10
    cg_max_iter: int | None = None
    onestage_eps: float = 1e-4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"unknown method '{self.method}'")
        if self.T_max < 1:
            raise ContractError("T_max must be >= 1")
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if self.method == "obda" and self.K != 1:
            object.__setattr__(self, "K", 1)
        if self.method == "bda" and not (0.0 < self.sched.mu < 1.0):
            raise ContractError("bda requires mu in (0, 1)")
        if self.method == "trhg":
            if self.truncate_at is None:
                raise ContractError("trhg requires truncate_at")
            if not (0 <= self.truncate_at <= self.K):
                raise ContractError("truncate_at must lie in [0, K]")
        if self.lam is not None and self.lam <= 0:
            raise ContractError("lam must be positive")


@dataclass
class RunRecord:
    """Per-iteration history of one solve."""

    problem: str
    method: str
    xs: np.ndarray                 # (T+1, n) outer iterates, x_0 first
    metrics: dict                  # name -> (T,) array, nan when unavailable
    status: str                    # 'converged' | 'max-iters' | 'aborted'
    resolved_lambda: float
    wall_time_s: float
    final_grad_norm: float
    y_final: np.ndarray
    config: dict
    error: str | None = None

    @property
    def T(self) -> int:
        return self.xs.shape[0] - 1

    @property
    def x_final(self) -> np.ndarray:
        return self.xs[-1]


def outer_step(x, g, lam: float, region_x: BoxRegion) -> np.ndarray:
    """x - lam * g projected back onto the feasible box."""
    x = as_vector(x, name="x")
    g = as_vector(g, dim=x.shape[0], name="gradient")
    return region_x.project(x - lam * g)


def _method_gradient(problem: BilevelProblem, x, cfg: SolverConfig, y0=None):
    """Hypergradient and final inner iterate for one outer iteration."""
    if cfg.method == "bda":
        res = hypergrad_reverse(problem, x, cfg.K, cfg.sched, mode="bda",
                                y0=y0)
        y_K = res.diagnostics["y_final"]
    elif cfg.method in ("rhg", "trhg"):
        trunc = cfg.truncate_at if cfg.method == "trhg" else None
        res = hypergrad_reverse(problem, x, cfg.K, cfg.sched, mode="plain",
                                truncate_at=trunc, y0=y0)
        y_K = res.diagnostics["y_final"]
    elif cfg.method == "ihg":
        y_K, _ = run_inner(problem, x, cfg.K, cfg.sched, mode="plain", y0=y0)
        res = hypergrad_implicit(problem, x, y_K, cg_tol=cfg.cg_tol,
                                 cg_max_iter=cfg.cg_max_iter)
    else:  # obda: one aggregated step from the carried y0
        res = hypergrad_onestage(problem, x, y0, cfg.sched, cfg.onestage_eps)
        y_K = res.diagnostics["y1"]
    return res.gradient, y_K


def _check_capability(problem: BilevelProblem, cfg: SolverConfig) -> None:
    if cfg.method == "bda":
        problem.require("hess_yy_f", "hess_yx_f", "hess_yy_F", "hess_yx_F")
    elif cfg.method in ("rhg", "trhg"):
        problem.require("hess_yy_f", "hess_yx_f")
    elif cfg.method == "ihg":
        problem.require("hess_yy_f", "hess_yx_f")
    else:
        problem.require("grad_x_f")


def default_lambda(problem: BilevelProblem, cfg: SolverConfig, x0) -> float:
    """Safe default UL step: 0.5 over an empirical Lipschitz estimate of the
    hypergradient around the start point."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x0 = as_vector(x0, dim=problem.n, name="x0")
    y0 = default_y0(problem)
    points = [x0]
    for _ in range(3):
        probe = x0 + 0.5 * rng.standard_normal(problem.n)
        points.append(problem.region_x.project(probe))
    grads = [_method_gradient(problem, p, cfg, y0=y0)[0] for p in points]
    lip = 0.0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            d = float(np.linalg.norm(points[i] - points[j]))
            if d > 1e-12:
                lip = max(lip, float(np.linalg.norm(grads[i] - grads[j])) / d)
    if lip <= 0:
        return 1.0
    return 0.5 / lip


def solve(problem: BilevelProblem, cfg: SolverConfig, x0=None,
          y0=None) -> RunRecord:
    """Run the configured method until the outer step stalls or T_max.

    ``y0`` overrides the fixed inner initialization (default: 0 projected
    onto Y).  For obda the inner state instead persists across outer
    iterations, starting from ``y0``.
    """
    _check_capability(problem, cfg)
    cfg.sched.require_admissible(problem)
    x = problem.region_x.project(np.zeros(problem.n) if x0 is None
                                 else as_vector(x0, dim=problem.n, name="x0"))
    y_init = default_y0(problem) if y0 is None else \
        problem.region_y.project(as_vector(y0, dim=problem.m, name="y0"))
    lam = cfg.lam if cfg.lam is not None else default_lambda(problem, cfg, x)

    xs = [x.copy()]
    columns = {name: [] for name in METRIC_COLUMNS}
    y_carry = y_init                # persistent inner state for obda
    status = "max-iters"
    error_msg = None
    start = time.perf_counter()
    y_K = y_carry
    for _ in range(cfg.T_max):
        try:
            g, y_K = _method_gradient(
                problem, x, cfg,
                y0=y_carry if cfg.method == "obda" else y_init)
        except NumericalError as err:
            status, error_msg = "aborted", str(err)
            break
        if cfg.method == "obda":
            y_carry = y_K
        gnorm = float(np.linalg.norm(g))
        columns["phiK"].append(problem.F(x, y_K))
        columns["grad_norm"].append(gnorm)
        columns["err_x"].append(
            float(np.linalg.norm(x - problem.x_opt))
            if problem.x_opt is not None else np.nan)
        columns["err_y"].append(
            float(np.linalg.norm(y_K - problem.y_opt))
            if problem.y_opt is not None else np.nan)
        columns["f_gap"].append(
            problem.f(x, y_K) - problem.f_star_of_x(x)
            if problem.f_star_of_x is not None else np.nan)
        columns["phi_gap"].append(
            abs(problem.F(x, y_K) - problem.phi_star_of_x(x))
            if problem.phi_star_of_x is not None else np.nan)
        x_next = outer_step(x, g, lam, problem.region_x)
        moved = float(np.linalg.norm(x_next - x))
        x = x_next
        xs.append(x.copy())
        if moved <= cfg.stop_tol:
            status = "converged"
            break
    wall = time.perf_counter() - start

    metrics = {name: np.asarray(vals, dtype=float)
               for name, vals in columns.items()}
    final_grad = metrics["grad_norm"][-1] if metrics["grad_norm"].size else np.nan
    return RunRecord(
        problem=problem.name, method=cfg.method,
        xs=np.asarray(xs), metrics=metrics, status=status,
        resolved_lambda=lam, wall_time_s=wall,
        final_grad_norm=float(final_grad),
        y_final=np.asarray(y_K), config=config_dict(cfg, lam),
        error=error_msg)


def config_dict(cfg: SolverConfig, resolved_lambda: float | None = None) -> dict:
    sched = cfg.sched
    out = {
        "method": cfg.method, "K": cfg.K, "truncate_at": cfg.truncate_at,
        "lambda": cfg.lam if cfg.lam is not None else resolved_lambda,
        "T_max": cfg.T_max, "stop_tol": cfg.stop_tol, "seed": cfg.seed,
        "mu": sched.mu, "su": sched.s_u, "sl": sched.s_l,
        "alpha_rule": sched.alpha_rule, "alpha_scale": sched.alpha_scale,
        "beta_rule": sched.beta_rule, "beta_start": sched.beta_start,
        "beta_lower": sched.beta_lower,
    }
    return out
