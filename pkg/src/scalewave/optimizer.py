"""Full-batch L-BFGS with a strong-Wolfe line search, and the training driver.

The two-loop recursion keeps a bounded history of curvature pairs; the line
search brackets and zooms until both the sufficient-decrease and the strong
curvature condition hold.  Training runs in two phases: a warm-up that fits
the profile network to the initial profile extended constant in rescaled
time, then a joint solve of profile and rate parameters against the full
residual loss.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .autodiff import TapeError
from .framework import (CollocationSet, LossBreakdown, LossWeights, NetPair,
                        ProblemSpec, make_loss, make_warmup_loss)
from .network import MlpSpec, init_params, param_count


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    grad_tol: float = 1e-8
    max_iterations: int = 20000
    warmup_iterations: int = 2000
    max_line_search: int = 30
    max_step: float = 1e3

    def __post_init__(self):
        if not (0 < self.c1 < self.c2 < 1):
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.memory < 1:
            raise ValueError("memory must hold at least one curvature pair")
        if self.grad_tol < 0 or self.max_iterations < 0 or self.warmup_iterations < 0:
            raise ValueError("iteration budgets and tolerance must be non-negative")


@dataclass
class TrainHistory:
    """Per-accepted-iteration record of one minimization run."""

    iters: list[int] = field(default_factory=list)
    f: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    step: list[float] = field(default_factory=list)
    # line-search bookkeeping for verifying the Wolfe conditions
    f_prev: list[float] = field(default_factory=list)
    dphi0: list[float] = field(default_factory=list)
    dphi_new: list[float] = field(default_factory=list)
    breakdowns: list[LossBreakdown] = field(default_factory=list)
    status: str = "running"

    def append(self, k, f, gnorm, step, f_prev, dphi0, dphi_new):
        self.iters.append(k)
        self.f.append(f)
        self.grad_norm.append(gnorm)
        self.step.append(step)
        self.f_prev.append(f_prev)
        self.dphi0.append(dphi0)
        self.dphi_new.append(dphi_new)


def _safe(fun, x):
    """Evaluate, mapping numerical blow-ups to +inf so the search backs off."""
    try:
        f, g = fun(x)
    except (TapeError, FloatingPointError):
        return np.inf, None
    if not np.isfinite(f):
        return np.inf, None
    return f, g


def _interp_bisect(lo, hi):
    return 0.5 * (lo + hi)


def _line_search(fun, x, d, f0, g0, cfg: LbfgsConfig):
    """Strong-Wolfe step along d; returns (alpha, f, g, dphi) or None."""
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        return None

    def phi(alpha):
        return _safe(fun, x + alpha * d)

    def zoom(alo, ahi, flo, dlo):
        for _ in range(cfg.max_line_search):
            a = _interp_bisect(alo, ahi)
            fa, ga = phi(a)
            da = float(ga @ d) if ga is not None else np.nan
            if fa > f0 + cfg.c1 * a * dphi0 or fa >= flo:
                ahi = a
            else:
                if abs(da) <= -cfg.c2 * dphi0:
                    return a, fa, ga, da
                if da * (ahi - alo) >= 0:
                    ahi = alo
                alo, flo, dlo = a, fa, da
            if abs(ahi - alo) < 1e-16 * max(1.0, abs(alo)):
                break
        if np.isfinite(flo) and flo < f0 and alo > 0:
            fa, ga = phi(alo)
            if ga is not None:
                return alo, fa, ga, float(ga @ d)
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = 1.0
    for i in range(cfg.max_line_search):
        fa, ga = phi(a)
        da = float(ga @ d) if ga is not None else np.nan
        if fa > f0 + cfg.c1 * a * dphi0 or (i > 0 and fa >= f_prev):
            return zoom(a_prev, a, f_prev, d_prev)
        if abs(da) <= -cfg.c2 * dphi0:
            return a, fa, ga, da
        if da >= 0:
            return zoom(a, a_prev, fa, da)
        a_prev, f_prev, d_prev = a, fa, da
        a = min(2.0 * a, cfg.max_step)
        if a_prev >= cfg.max_step:
            break
    return None


def minimize(fun, x0: np.ndarray, cfg: LbfgsConfig = LbfgsConfig(),
             max_iterations: int | None = None, on_iteration=None):
    """L-BFGS descent of fun(x) -> (f, grad) from x0.

    Returns (best x, TrainHistory); history.status reports why the loop
    ended.  on_iteration(k, x, f, gnorm, step) fires after each accepted
    step.
    """
    budget = cfg.max_iterations if max_iterations is None else max_iterations
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = _safe(fun, x)
    if g is None:
        raise ValueError("objective is not finite at the starting point")
    hist = TrainHistory()
    hist.append(0, f, float(np.linalg.norm(g)), 0.0, f, 0.0, 0.0)
    best_f, best_x = f, x.copy()
    pairs: deque = deque(maxlen=cfg.memory)

    for k in range(1, budget + 1):
        if np.linalg.norm(g, ord=np.inf) <= cfg.grad_tol:
            hist.status = "converged"
            break
        d = _two_loop(g, pairs)
        if float(g @ d) >= 0:
            pairs.clear()
            d = -g
        ls = _line_search(fun, x, d, f, g, cfg)
        if ls is None and pairs:
            # stale curvature can ruin the direction; retry as steepest descent
            pairs.clear()
            d = -g
            ls = _line_search(fun, x, d, f, g, cfg)
        if ls is None:
            hist.status = "line_search_failed"
            break
        alpha, f_new, g_new, dphi_new = ls
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        dphi0 = float(g @ d)
        hist.append(k, f_new, float(np.linalg.norm(g_new)), alpha, f, dphi0, dphi_new)
        f, g = f_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()
        if on_iteration is not None:
            on_iteration(k, x, f, float(np.linalg.norm(g)), alpha)
    else:
        hist.status = "max_iterations"
    if hist.status == "running":
        # loop exited through a break that already set the reason
        pass
    return best_x, hist


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    """Two-loop recursion for the L-BFGS direction -H g."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        gamma = float(s @ y) / float(y @ y)
        q *= gamma
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


# ---------------------------------------------------------------------------
# training driver
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    nets: NetPair
    warmup_history: TrainHistory
    joint_history: TrainHistory
    breakdowns: list[LossBreakdown]
    seconds: float


def warmup(problem: ProblemSpec, colloc: CollocationSet, wspec: MlpSpec,
           wparams: np.ndarray, cfg: LbfgsConfig, on_iteration=None):
    """Fit the profile network to the initial profile at every collocation point."""
    fun = make_warmup_loss(problem, colloc, wspec)
    return minimize(fun, wparams, cfg, max_iterations=cfg.warmup_iterations,
                    on_iteration=on_iteration)


def train(problem: ProblemSpec, colloc: CollocationSet, wspec: MlpSpec, pspec: MlpSpec,
          weights: LossWeights = LossWeights(), cfg: LbfgsConfig = LbfgsConfig(),
          seed: int = 0, on_warmup=None, on_joint=None) -> TrainResult:
    """Two-phase solve; the rate network stays untouched during warm-up."""
    t0 = time.perf_counter()
    wparams = init_params(wspec, seed)
    pparams = init_params(pspec, seed + 1)
    wparams, whist = warmup(problem, colloc, wspec, wparams, cfg, on_iteration=on_warmup)

    fun, n_w, n_p = make_loss(problem, colloc, weights, wspec, pspec)
    breakdowns: list[LossBreakdown] = []

    def scalar_fun(theta):
        breakdown, grad = fun(theta)
        scalar_fun.last = breakdown
        return breakdown.total, grad

    scalar_fun.last = None

    def record(k, x, f, gnorm, step):
        breakdowns.append(scalar_fun.last)
        if on_joint is not None:
            on_joint(k, scalar_fun.last, gnorm, step)

    theta0 = np.concatenate([wparams, pparams])
    # row 0 of the loss history is the state after warm-up, before any joint step
    f0, g0 = scalar_fun(theta0)
    breakdowns.append(scalar_fun.last)
    if on_joint is not None:
        on_joint(0, scalar_fun.last, float(np.linalg.norm(g0)), 0.0)
    theta, jhist = minimize(scalar_fun, theta0, cfg, on_iteration=record)
    nets = NetPair(wspec=wspec, wparams=theta[:n_w], pspec=pspec, pparams=theta[n_w:])
    return TrainResult(nets=nets, warmup_history=whist, joint_history=jhist,
                       breakdowns=breakdowns, seconds=time.perf_counter() - t0)
