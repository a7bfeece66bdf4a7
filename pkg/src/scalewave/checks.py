"""Fast self-contained property suites behind the `check` subcommand.

Each suite returns a SuiteResult; all of them together run in well under two
minutes.  They cover the gradient tape against finite differences, quadrature
convergence order, the operator scaling laws each case declares, exact
solutions annihilating the rescaled residual, and the Wolfe guarantees of the
optimizer.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import autodiff as ad
from .framework import (LossWeights, build_collocation, frame_residual,
                        make_loss, pde_residual)
from .network import init_params
from .optimizer import LbfgsConfig, minimize
from .problems import CASES, nagumo_exact, nagumo_speed
from .quadrature import Grid1D, Grid2D, trapezoid_1d, trapezoid_2d

FD_TOL = 1e-5
SCALING_TOL = 1e-8
ANNIHILATION_TOL = 1e-10

# small grids: gradient correctness is resolution independent
_FD_GRIDS = {
    "nagumo": (11, 4),
    "diffusion1d": (10, 4),
    "diffusion2d": ((6, 6), 4),
    "pme2d": (10, 4),
    "burgers": (10, 4),
}


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    seconds: float
    detail: str


def _loss_fd_error(fun, theta: np.ndarray, coords, h: float) -> float:
    """Central-difference check of a (LossBreakdown, grad) objective."""
    _, g = fun(theta)
    worst = 0.0
    for i in coords:
        e = np.zeros_like(theta)
        e[i] = h
        fp, _ = fun(theta + e)
        fm, _ = fun(theta - e)
        fd = (fp.total - fm.total) / (2.0 * h)
        worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    return worst


def suite_autodiff_fd() -> SuiteResult:
    """Tape gradients agree with finite differences, including every case loss."""
    t0 = time.perf_counter()
    worst_overall, worst_name = 0.0, ""

    # composite expression exercising the elementary ops directly
    rng = np.random.default_rng(7)
    W = rng.standard_normal((6, 4))
    x0 = rng.standard_normal(4 * 6 + 6)

    def composite(leaf):
        a = ad.take_slice(leaf, 0, 24)
        b = ad.take_slice(leaf, 24, 30)
        m = ad.reshape(a, (6, 4))
        z = ad.tanh(ad.matmul(m, W.T))
        z = ad.add(ad.mul(z, b), ad.exp(ad.mul(ad.matmul(z, np.ones((6, 1))), 0.1)))
        return ad.sum_squares(ad.div(z, 2.0))

    err = ad.fd_check(composite, x0, 1e-6)
    if err > worst_overall:
        worst_overall, worst_name = err, "composite"

    for name, build in CASES.items():
        prob = build()
        n_space, n_tau = _FD_GRIDS[name]
        colloc = build_collocation(prob, n_space, n_tau)
        fun, n_w, n_p = make_loss(prob, colloc, LossWeights(), prob.wnet, prob.pnet)
        theta = np.concatenate([init_params(prob.wnet, 0), init_params(prob.pnet, 1)])
        sub = np.concatenate([rng.choice(n_w, 20, replace=False),
                              n_w + rng.choice(n_p, 8, replace=False)])
        err = _loss_fd_error(fun, theta, sub, 1e-6)
        if err > worst_overall:
            worst_overall, worst_name = err, name

    ok = worst_overall < FD_TOL
    return SuiteResult("autodiff_fd", ok, time.perf_counter() - t0,
                       f"worst relative error {worst_overall:.3e} ({worst_name}), tol {FD_TOL:g}")


def suite_quadrature() -> SuiteResult:
    """Trapezoid errors shrink by ~4x per mesh halving in 1-D and 2-D."""
    t0 = time.perf_counter()
    f = lambda x: np.exp(np.sin(2.0 * x))
    exact, _ = quad(f, 0.0, 3.0, limit=200)
    errs = []
    for n in (64, 128, 256):
        g = Grid1D(np.linspace(0.0, 3.0, n + 1))
        errs.append(abs(trapezoid_1d(f(g.nodes), g) - exact))
    r1 = errs[0] / errs[1]
    r2 = errs[1] / errs[2]

    gy = lambda y: np.cos(y) + 2.0
    exact_y, _ = quad(gy, 0.0, 2.0, limit=200)
    errs2 = []
    for n in (16, 32, 64):
        gx = Grid1D(np.linspace(0.0, 3.0, n + 1))
        gyy = Grid1D(np.linspace(0.0, 2.0, n + 1))
        vals = f(gx.nodes)[:, None] * gy(gyy.nodes)[None, :]
        errs2.append(abs(trapezoid_2d(vals, Grid2D(gx, gyy)) - exact * exact_y))
    r3 = errs2[0] / errs2[1]
    r4 = errs2[1] / errs2[2]

    ratios = (r1, r2, r3, r4)
    ok = all(3.5 <= r <= 4.5 for r in ratios)
    return SuiteResult("quadrature_order", ok, time.perf_counter() - t0,
                       "error ratios per halving: " + ", ".join(f"{r:.3f}" for r in ratios))


def _test_function_1d():
    f = lambda y: np.exp(np.sin(y))
    fp = lambda y: np.cos(y) * f(y)
    fpp = lambda y: (np.cos(y) ** 2 - np.sin(y)) * f(y)
    return f, fp, fpp


def suite_scaling_laws() -> SuiteResult:
    """Each case's spatial operator obeys its declared scaling identity.

    Scaling cases: L_x(B f(x/A)) = A^a B^b L_y(f).  The Burgers linkage uses
    B = 1/A with a shift, giving A^-3.  Translation cases check shift
    equivariance: L_x(f(x - c)) = L_y(f).
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst, worst_name = 0.0, ""
    f, fp, fpp = _test_function_1d()

    for name, build in CASES.items():
        prob = build()
        if prob.spatial_dim == 1:
            y = rng.uniform(0.5, 3.0, size=40)  # positive: keeps 1/rho regular
        else:
            y = rng.uniform(0.5, 3.0, size=(40, 2))
        for _ in range(50):
            if prob.invariance == "translation":
                A, B, c = 1.0, 1.0, rng.uniform(-2.0, 2.0)
            elif prob.invariance == "linked":
                A, c = rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0)
                B = 1.0 / A
            else:
                A, B, c = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), 0.0
            if prob.spatial_dim == 1:
                w_y, d1_y, d2_y = f(y), fp(y), fpp(y)
                lhs = prob.rhs(B * w_y, [B / A * d1_y], [B / A**2 * d2_y],
                               (A * y + c,))
                rhs = prob.rhs(w_y, [d1_y], [d2_y], (y,))
            else:
                # separable test field keeps the analytic jets simple
                u, v = y[:, 0], y[:, 1]
                w_y = f(u) * f(v)
                du, dv = fp(u) * f(v), f(u) * fp(v)
                duu, dvv = fpp(u) * f(v), f(u) * fpp(v)
                lhs = prob.rhs(B * w_y, [B / A * du, B / A * dv],
                               [B / A**2 * duu, B / A**2 * dvv],
                               (A * u + c, A * v + c))
                rhs = prob.rhs(w_y, [du, dv], [duu, dvv], (u, v))
            scale = A ** prob.scaling_a * B ** prob.scaling_b
            err = np.max(np.abs(lhs - scale * rhs)) / max(np.max(np.abs(scale * rhs)), 1e-30)
            if err > worst:
                worst, worst_name = err, name

    ok = worst < SCALING_TOL
    return SuiteResult("scaling_laws", ok, time.perf_counter() - t0,
                       f"worst relative identity error {worst:.3e} ({worst_name}), tol {SCALING_TOL:g}")


class _AnalyticFields:
    """Stand-in for NetPair built from closed-form profiles and constant rates."""

    def __init__(self, w, d1, d2, rates):
        self._w, self._d1, self._d2, self._rates = w, d1, d2, rates

    def jets(self, X, first, second):
        y = X[:, 0]
        d = X.shape[1] - 1
        out = {"w": self._w(y), "d1": {}, "d2": {}}
        for i in first:
            out["d1"][i] = self._d1(y) if i == 0 else np.zeros_like(y)
        for pair in second:
            out["d2"][pair] = self._d2(y) if pair == (0, 0) else np.zeros_like(y)
        if d not in out["d1"]:
            out["d1"][d] = np.zeros_like(y)  # steady in tau
        return out

    def rate_values(self, problem, tau):
        tau = np.atleast_1d(tau)
        return {k: np.full(tau.shape, v) for k, v in self._rates.items()}


def suite_annihilation(residual_fn=frame_residual) -> SuiteResult:
    """Exact steady solutions zero the rescaled residual.

    residual_fn is injectable so a deliberately broken residual (sign flips
    and the like) can be shown to fail this suite.
    """
    t0 = time.perf_counter()
    details = []
    worst = 0.0

    sqrt2 = math.sqrt(2.0)
    front = nagumo_exact
    dfront = lambda y: front(y) * (1.0 - front(y)) / sqrt2
    d2front = lambda y: front(y) * (1.0 - front(y)) * (1.0 - 2.0 * front(y)) / 2.0
    prob_n = CASES["nagumo"]()
    fields_n = _AnalyticFields(front, dfront, d2front,
                               {"V": nagumo_speed(prob_n.params["a"])})

    gauss = lambda y: np.exp(-y**2 / 4.0)
    dgauss = lambda y: -y / 2.0 * gauss(y)
    d2gauss = lambda y: (y**2 / 4.0 - 0.5) * gauss(y)
    prob_d = CASES["diffusion1d"]()
    fields_d = _AnalyticFields(gauss, dgauss, d2gauss, {"G": -0.5, "C": 0.5})

    for label, prob, fields, lo, hi in (
            ("nagumo front", prob_n, fields_n, -20.0, 20.0),
            ("diffusion gaussian", prob_d, fields_d, -6.0, 6.0)):
        y = np.linspace(lo, hi, 81)
        X = np.column_stack([y, np.full_like(y, 1.5)])
        jets = fields.jets(X, first=(0, 1), second=((0, 0),))
        rates = fields.rate_values(prob, X[:, 1])
        res = residual_fn(prob, jets["w"], [jets["d1"][0]], [jets["d2"][(0, 0)]],
                          jets["d1"][1], rates, (y,))
        err = float(np.max(np.abs(res)))
        if residual_fn is frame_residual:
            # the public single-point entry must agree with the direct algebra
            err = max(err, float(np.max(np.abs(pde_residual(prob, fields, X)))))
        worst = max(worst, err)
        details.append(f"{label} {err:.2e}")

    ok = worst < ANNIHILATION_TOL
    return SuiteResult("exact_annihilation", ok, time.perf_counter() - t0,
                       "max |residual|: " + ", ".join(details) + f", tol {ANNIHILATION_TOL:g}")


def _wolfe_violations(hist, cfg: LbfgsConfig) -> int:
    bad = 0
    for k in range(1, len(hist.iters)):
        f_new, f_old = hist.f[k], hist.f_prev[k]
        alpha, dphi0, dphi_new = hist.step[k], hist.dphi0[k], hist.dphi_new[k]
        slack = 1e-12 * max(1.0, abs(f_old))
        if f_new > f_old + cfg.c1 * alpha * dphi0 + slack:
            bad += 1
        if abs(dphi_new) > cfg.c2 * abs(dphi0) + 1e-12:
            bad += 1
    return bad


def suite_wolfe() -> SuiteResult:
    """Strong-Wolfe conditions hold on every accepted step; standard minima reached."""
    t0 = time.perf_counter()
    cfg = LbfgsConfig()
    msgs = []
    ok = True

    rng = np.random.default_rng(5)
    x_star = rng.standard_normal(8)

    def quadratic(x):
        d = x - x_star
        return 0.5 * float(d @ d), d

    x0 = rng.standard_normal(8)
    xq, hq = minimize(quadratic, x0, cfg)
    q_err = float(np.linalg.norm(xq - x_star))
    q_iters = int(hq.iters[-1])
    ok &= q_err <= 1e-8 and q_iters <= 13 and _wolfe_violations(hq, cfg) == 0
    msgs.append(f"quadratic: |x-x*| {q_err:.1e} in {q_iters} iters")

    def rosenbrock(x):
        a, b = 1.0, 100.0
        f = (a - x[0])**2 + b * (x[1] - x[0]**2)**2
        g = np.array([-2 * (a - x[0]) - 4 * b * x[0] * (x[1] - x[0]**2),
                      2 * b * (x[1] - x[0]**2)])
        return float(f), g

    xr, hr = minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
    r_err = float(np.linalg.norm(xr - np.ones(2)))
    ok &= r_err <= 1e-6 and _wolfe_violations(hr, cfg) == 0
    msgs.append(f"rosenbrock: |x-x*| {r_err:.1e} in {int(hr.iters[-1])} iters")

    return SuiteResult("wolfe_line_search", bool(ok), time.perf_counter() - t0,
                       "; ".join(msgs))


ALL_SUITES = (
    ("autodiff_fd", suite_autodiff_fd),
    ("quadrature_order", suite_quadrature),
    ("scaling_laws", suite_scaling_laws),
    ("exact_annihilation", suite_annihilation),
    ("wolfe_line_search", suite_wolfe),
)


def run_suites(names=None) -> list[SuiteResult]:
    chosen = [s for s in ALL_SUITES if names is None or s[0] in names]
    return [fn() for _, fn in chosen]
