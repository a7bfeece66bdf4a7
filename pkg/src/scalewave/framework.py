"""Rescaled PDE-DAE problem descriptions and training-loss assembly.

A profile ansatz u(x, t) = B(tau) * w((x - c(tau)) / A(tau), tau) with
rescaled time d tau / dt = sigma * A^a * B^(b-1) turns a scale- or
translation-invariant PDE into

    sigma * (G w - C (x . grad w) - V dw/dy + dw/dtau) = L(w),

where G = B'/B, C = A'/A and V = c'/A are unknown rate functions of tau and
L is the spatial operator in the frozen coordinate.  The rates are closed by
algebraic constraints (pinning, conservation, template projections), giving
an index-2 system: profile and rates are approximated by two networks trained
against the squared residuals of the PDE, the constraints, the boundary
conditions and the initial profile.

This module owns the generic residual algebra and the collocation/loss
plumbing; concrete equations live in :mod:`scalewave.problems`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var, taped_mlp
from .network import MlpSpec, param_count
from .quadrature import Grid1D, Grid2D

RATE_NAMES = ("G", "C", "V")


@dataclass(frozen=True)
class Constraint:
    """One algebraic closure condition on the profile.

    kind is one of:
      pinning            w(location, tau) = target
      conservation       integral of w = target
      template_integral  integral of (w - T) * phi = 0
      orthogonality      integral of w * T = 0
    phi gives the projection weight on spatial nodes for template integrals;
    the template T itself comes from the owning problem.
    """

    kind: str
    phi: Callable | None = None
    location: tuple[float, ...] | None = None
    target: float = 0.0

    def __post_init__(self):
        kinds = ("pinning", "conservation", "template_integral", "orthogonality")
        if self.kind not in kinds:
            raise ValueError(f"unknown constraint kind {self.kind!r}, expected one of {kinds}")
        if self.kind == "pinning" and self.location is None:
            raise ValueError("pinning constraint needs a spatial location")
        if self.kind == "template_integral" and self.phi is None:
            raise ValueError("template_integral constraint needs a projection weight phi")


@dataclass(frozen=True)
class BoundaryCondition:
    """Dirichlet value or zero outward-flux condition on one domain face."""

    axis: int
    side: int  # 0 = lower bound, 1 = upper bound
    kind: str  # "dirichlet" | "flux"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "flux"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.side not in (0, 1):
            raise ValueError("side must be 0 (lower) or 1 (upper)")


@dataclass(frozen=True)
class ProblemSpec:
    """Complete description of one rescaled invariant-profile problem."""

    name: str
    spatial_dim: int
    spatial_bounds: tuple[tuple[float, float], ...]
    tau_end: float
    scaling_a: float
    scaling_b: float
    sigma: int
    rates: tuple[str, ...]
    rhs: Callable  # rhs(w, d1, d2, coords) -> L(w), generic over arrays/Vars
    constraints: tuple[Constraint, ...]
    bcs: tuple[BoundaryCondition, ...]
    ic: Callable
    template: Callable | None = None
    linked: dict[str, tuple[str, float]] = field(default_factory=dict)
    wnet: MlpSpec | None = None
    pnet: MlpSpec | None = None
    snap_spatial: Callable[[int], int] | None = None
    invariance: str = "scaling"
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.spatial_dim not in (1, 2):
            raise ValueError("only 1-D and 2-D spatial domains are supported")
        if len(self.spatial_bounds) != self.spatial_dim:
            raise ValueError("one (lo, hi) pair per spatial axis required")
        for lo, hi in self.spatial_bounds:
            if not lo < hi:
                raise ValueError(f"empty spatial extent ({lo}, {hi})")
        if self.sigma not in (-1, 1):
            raise ValueError("sigma must be +1 or -1")
        for r in self.rates:
            if r not in RATE_NAMES:
                raise ValueError(f"unknown rate {r!r}, expected one of {RATE_NAMES}")
        for name, (src, _) in self.linked.items():
            if src not in self.rates:
                raise ValueError(f"linked rate {name} references unknown source {src}")
        # closure counting: every free rate needs exactly one algebraic condition
        if len(self.constraints) != len(self.rates):
            raise ValueError(
                f"{self.name}: {len(self.rates)} free rates but "
                f"{len(self.constraints)} constraints; the closure must match"
            )
        needs_template = any(c.kind in ("template_integral", "orthogonality")
                             for c in self.constraints)
        if needs_template and self.template is None:
            raise ValueError(f"{self.name}: template-based constraints need a template")
        if self.wnet is not None and self.wnet.n_inputs != self.spatial_dim + 1:
            raise ValueError(f"{self.name}: profile net needs {self.spatial_dim + 1} inputs")
        if self.pnet is not None:
            if self.pnet.n_inputs != 1:
                raise ValueError(f"{self.name}: rate net takes tau only")
            if self.pnet.n_outputs != len(self.rates):
                raise ValueError(f"{self.name}: rate net must emit one output per free rate")


@dataclass(frozen=True)
class LossWeights:
    pde: float = 1.0
    alg: float = 1.0
    bc: float = 1.0
    ic: float = 1.0

    def __post_init__(self):
        vals = (self.pde, self.alg, self.bc, self.ic)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"loss weights must be finite and non-negative, got {vals}")
        if self.pde <= 0:
            raise ValueError("the PDE residual weight must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    e_pde: float
    e_alg: float
    e_bc: float
    e_ic: float
    total: float


@dataclass(frozen=True)
class BoundaryBatch:
    bc: BoundaryCondition
    points: np.ndarray  # (M, spatial_dim + 1)


@dataclass(frozen=True)
class CollocationSet:
    """All sample point sets for one training run.

    Point matrices carry spatial coordinates first and tau last.  The
    quadrature grid spans the full closed domain and is shared by constraint
    residuals and post-processing.
    """

    interior: np.ndarray
    boundary: tuple[BoundaryBatch, ...]
    initial: np.ndarray
    initial_values: np.ndarray
    constraint_taus: np.ndarray
    quad: Grid1D | Grid2D
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        taus = self.constraint_taus
        if np.any(np.diff(taus) <= 0):
            raise ValueError("constraint tau samples must be strictly ascending")
        for mat in (self.interior, self.initial):
            for axis, (lo, hi) in enumerate(self.bounds):
                col = mat[:, axis]
                if col.min() < lo - 1e-12 or col.max() > hi + 1e-12:
                    raise ValueError(f"collocation points leave axis {axis} bounds ({lo}, {hi})")


def _cartesian(spatial: list[np.ndarray], taus: np.ndarray) -> np.ndarray:
    grids = np.meshgrid(*spatial, taus, indexing="ij")
    return np.column_stack([g.reshape(-1) for g in grids])


def build_collocation(problem: ProblemSpec, n_space, n_tau: int,
                      tau_end: float | None = None) -> CollocationSet:
    """Uniform tensor-product collocation for one problem.

    n_space counts interior nodes per spatial axis (an int, or a pair for
    2-D); the full quadrature grid adds both endpoints.  Interior tau slices
    cover (0, tau_end] and constraint samples prepend tau = 0.  Problems may
    snap the spatial count upward, e.g. to keep template breakpoints exactly
    on grid nodes.
    """
    tau_end = problem.tau_end if tau_end is None else float(tau_end)
    if n_tau < 1 or tau_end <= 0:
        raise ValueError("need at least one tau slice over a positive horizon")
    counts = [n_space] * problem.spatial_dim if isinstance(n_space, int) else list(n_space)
    if len(counts) != problem.spatial_dim:
        raise ValueError(f"n_space must give one count per spatial axis, got {n_space}")
    if problem.snap_spatial is not None:
        counts = [problem.snap_spatial(int(c)) for c in counts]
    if any(c < 2 for c in counts):
        raise ValueError("need at least two interior nodes per spatial axis")

    full = [np.linspace(lo, hi, c + 2)
            for (lo, hi), c in zip(problem.spatial_bounds, counts)]
    inner = [f[1:-1] for f in full]
    taus = np.linspace(0.0, tau_end, n_tau + 1)[1:]
    ctaus = np.linspace(0.0, tau_end, n_tau + 1)

    interior = _cartesian(inner, taus)
    batches = []
    for bc in problem.bcs:
        lo, hi = problem.spatial_bounds[bc.axis]
        fixed = lo if bc.side == 0 else hi
        spatial = [np.array([fixed]) if ax == bc.axis else full[ax]
                   for ax in range(problem.spatial_dim)]
        batches.append(BoundaryBatch(bc=bc, points=_cartesian(spatial, taus)))
    initial = _cartesian(full, np.array([0.0]))
    ic_vals = np.asarray(problem.ic(*[initial[:, a] for a in range(problem.spatial_dim)]),
                         dtype=np.float64)
    quad = Grid1D(full[0]) if problem.spatial_dim == 1 else Grid2D(Grid1D(full[0]), Grid1D(full[1]))
    return CollocationSet(interior=interior, boundary=tuple(batches), initial=initial,
                          initial_values=ic_vals, constraint_taus=ctaus, quad=quad,
                          bounds=problem.spatial_bounds)


# ---------------------------------------------------------------------------
# residual algebra, generic over plain arrays and taped Vars
# ---------------------------------------------------------------------------

def resolve_rates(problem: ProblemSpec, raw: dict) -> dict:
    """Add linked rates (e.g. G = -C under an amplitude-width linkage)."""
    out = dict(raw)
    for name, (src, coeff) in problem.linked.items():
        out[name] = coeff * raw[src]
    return out


def frame_residual(problem: ProblemSpec, w, d1, d2, wt, rates: dict, coords):
    """Pointwise rescaled-equation residual.

    d1/d2 hold first and diagonal second spatial-plus-tau derivatives of w,
    rates holds whichever of G, C, V the problem carries (already resolved),
    coords the spatial coordinate arrays.  Returns sigma * (G w - C x.grad w
    - V w_y + w_tau) - L(w).
    """
    acc = wt
    if "G" in rates:
        acc = acc + rates["G"] * w
    if "C" in rates:
        radial = coords[0] * d1[0]
        for a in range(1, problem.spatial_dim):
            radial = radial + coords[a] * d1[a]
        acc = acc - rates["C"] * radial
    if "V" in rates:
        acc = acc - rates["V"] * d1[0]
    if problem.sigma == -1:
        acc = -acc
    return acc - problem.rhs(w, d1, d2, coords)


@dataclass(frozen=True)
class NetPair:
    """Profile network and rate network evaluated as one unit."""

    wspec: MlpSpec
    wparams: np.ndarray
    pspec: MlpSpec
    pparams: np.ndarray

    def jets(self, X: np.ndarray, first, second):
        """Plain-array profile jets at rows of X (spatial coords then tau)."""
        tape = Tape()
        p = tape.leaf(self.wparams)
        jets = taped_mlp(self.wspec.widths, p, X, input_scales=self.wspec.input_scales,
                         first=first, second=second)
        n = X.shape[0]
        return {
            "w": jets.value.value.reshape(n),
            "d1": {i: jets.d1[i].value.reshape(n) for i in jets.d1},
            "d2": {p_: jets.d2[p_].value.reshape(n) for p_ in jets.d2},
        }

    def rate_values(self, problem: ProblemSpec, tau: np.ndarray) -> dict[str, np.ndarray]:
        tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        tape = Tape()
        p = tape.leaf(self.pparams)
        out = taped_mlp(self.pspec.widths, p, tau[:, None],
                        input_scales=self.pspec.input_scales).value.value
        raw = {name: out[:, k] for k, name in enumerate(problem.rates)}
        return resolve_rates(problem, raw)


def pde_residual(problem: ProblemSpec, fields, points) -> np.ndarray | float:
    """Rescaled-equation residual at one point or a batch of points.

    fields must provide jets(X, first, second) and
    rate_values(problem, tau); :class:`NetPair` does, and tests may pass
    analytic stand-ins.
    """
    X = np.asarray(points, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    d = problem.spatial_dim
    if X.shape[1] != d + 1:
        raise ValueError(f"points need {d + 1} coordinates (spatial then tau), got {X.shape[1]}")
    jets = fields.jets(X, first=range(d + 1), second=[(i, i) for i in range(d)])
    rates = fields.rate_values(problem, X[:, d])
    coords = tuple(X[:, a] for a in range(d))
    res = frame_residual(problem, jets["w"],
                         [jets["d1"][i] for i in range(d)],
                         [jets["d2"][(i, i)] for i in range(d)],
                         jets["d1"][d], rates, coords)
    return float(res[0]) if single else res


def _constraint_rows(problem: ProblemSpec, quad, spatial_nodes: np.ndarray):
    """Template and projection samples shared by taped and plain evaluation."""
    if problem.spatial_dim == 1:
        coords = (spatial_nodes,)
        qw = quad.weights
    else:
        coords = (spatial_nodes[:, 0], spatial_nodes[:, 1])
        qw = quad.weights.reshape(-1)
    tvals = None
    if problem.template is not None:
        tvals = np.asarray(problem.template(*coords), dtype=np.float64)
    rows = []
    for con in problem.constraints:
        if con.kind == "pinning":
            rows.append(None)
        elif con.kind == "conservation":
            rows.append(qw)
        elif con.kind == "template_integral":
            rows.append(np.asarray(con.phi(*coords), dtype=np.float64) * qw)
        else:  # orthogonality
            rows.append(tvals * qw)
    return tvals, rows


def _quad_nodes(problem: ProblemSpec, quad) -> np.ndarray:
    if problem.spatial_dim == 1:
        return quad.nodes
    gx, gy = np.meshgrid(quad.x.nodes, quad.y.nodes, indexing="ij")
    return np.column_stack([gx.reshape(-1), gy.reshape(-1)])


def algebraic_residuals(problem: ProblemSpec, fields, taus: np.ndarray, quad) -> np.ndarray:
    """Constraint residuals per (constraint, tau sample), plain arrays."""
    taus = np.asarray(taus, dtype=np.float64)
    nodes = _quad_nodes(problem, quad)
    ns = nodes.shape[0] if nodes.ndim > 1 else nodes.shape[0]
    spatial = np.atleast_2d(nodes.reshape(ns, -1))
    X = np.column_stack([np.tile(spatial, (taus.shape[0], 1)),
                         np.repeat(taus, ns)])
    w = fields.jets(X, first=(), second=())["w"].reshape(taus.shape[0], ns)
    tvals, rows = _constraint_rows(problem, quad, nodes)
    out = np.zeros((len(problem.constraints), taus.shape[0]))
    for k, (con, row) in enumerate(zip(problem.constraints, rows)):
        if con.kind == "pinning":
            P = np.column_stack([np.tile(np.asarray(con.location, float), (taus.shape[0], 1)), taus])
            out[k] = fields.jets(P, first=(), second=())["w"] - con.target
        elif con.kind == "template_integral":
            out[k] = (w - tvals) @ row
        elif con.kind == "orthogonality":
            out[k] = w @ row
        else:
            out[k] = w @ row - con.target
    return out


def boundary_residuals(problem: ProblemSpec, fields, batches) -> list[np.ndarray]:
    """Dirichlet mismatch or outward normal derivative per boundary batch."""
    out = []
    for batch in batches:
        bc = batch.bc
        if bc.kind == "dirichlet":
            vals = fields.jets(batch.points, first=(), second=())["w"]
            out.append(vals - bc.value)
        else:
            jets = fields.jets(batch.points, first=(bc.axis,), second=())
            sign = -1.0 if bc.side == 0 else 1.0
            out.append(sign * jets["d1"][bc.axis])
    return out


# ---------------------------------------------------------------------------
# taped loss assembly
# ---------------------------------------------------------------------------

def _flatten(v: Var, n: int) -> Var:
    return ad.reshape(v, (n,))


def _loss_terms(problem: ProblemSpec, colloc: CollocationSet,
                wspec: MlpSpec, pspec: MlpSpec, pw: Var, pp: Var) -> dict[str, Var]:
    d = problem.spatial_dim
    X = colloc.interior
    n = X.shape[0]
    second = [(i, i) for i in range(d)]
    jets = taped_mlp(wspec.widths, pw, X, input_scales=wspec.input_scales,
                     first=range(d + 1), second=second)
    w = _flatten(jets.value, n)
    d1 = [_flatten(jets.d1[i], n) for i in range(d)]
    wt = _flatten(jets.d1[d], n)
    d2 = [_flatten(jets.d2[(i, i)], n) for i in range(d)]
    pvals = taped_mlp(pspec.widths, pp, X[:, d:d + 1],
                      input_scales=pspec.input_scales).value
    raw = {name: ad.take_col(pvals, k) for k, name in enumerate(problem.rates)}
    rates = resolve_rates(problem, raw)
    coords = tuple(X[:, a] for a in range(d))
    res = frame_residual(problem, w, d1, d2, wt, rates, coords)
    e_pde = ad.sum_squares(res)

    # algebraic closure on the shared quadrature grid, one row per tau sample
    taus = colloc.constraint_taus
    nodes = _quad_nodes(problem, colloc.quad)
    spatial = np.atleast_2d(nodes.reshape(nodes.shape[0], -1))
    ns, nt = spatial.shape[0], taus.shape[0]
    Xc = np.column_stack([np.tile(spatial, (nt, 1)), np.repeat(taus, ns)])
    wall = taped_mlp(wspec.widths, pw, Xc, input_scales=wspec.input_scales).value
    wmat = ad.reshape(wall, (nt, ns))
    tvals, rows = _constraint_rows(problem, colloc.quad, nodes)
    e_alg = None
    for con, row in zip(problem.constraints, rows):
        if con.kind == "pinning":
            P = np.column_stack([np.tile(np.asarray(con.location, float), (nt, 1)), taus])
            vp = taped_mlp(wspec.widths, pw, P, input_scales=wspec.input_scales).value
            r = ad.sub(_flatten(vp, nt), con.target)
        elif con.kind == "template_integral":
            r = _flatten(ad.matmul(ad.sub(wmat, tvals), row[:, None]), nt)
        elif con.kind == "orthogonality":
            r = _flatten(ad.matmul(wmat, row[:, None]), nt)
        else:
            r = ad.sub(_flatten(ad.matmul(wmat, row[:, None]), nt), con.target)
        term = ad.sum_squares(r)
        e_alg = term if e_alg is None else ad.add(e_alg, term)
    if e_alg is None:
        e_alg = pw.tape.leaf(0.0)

    e_bc = None
    for batch in colloc.boundary:
        bc = batch.bc
        m = batch.points.shape[0]
        if bc.kind == "dirichlet":
            vb = taped_mlp(wspec.widths, pw, batch.points,
                           input_scales=wspec.input_scales).value
            r = ad.sub(_flatten(vb, m), bc.value)
        else:
            jb = taped_mlp(wspec.widths, pw, batch.points,
                           input_scales=wspec.input_scales, first=(bc.axis,))
            r = _flatten(jb.d1[bc.axis], m)
        term = ad.sum_squares(r)
        e_bc = term if e_bc is None else ad.add(e_bc, term)
    if e_bc is None:
        e_bc = pw.tape.leaf(0.0)

    vi = taped_mlp(wspec.widths, pw, colloc.initial,
                   input_scales=wspec.input_scales).value
    e_ic = ad.sum_squares(ad.sub(_flatten(vi, colloc.initial.shape[0]),
                                 colloc.initial_values))
    return {"e_pde": e_pde, "e_alg": e_alg, "e_bc": e_bc, "e_ic": e_ic}


def _weighted_total(terms: dict[str, Var], weights: LossWeights) -> Var:
    total = ad.mul(terms["e_pde"], weights.pde)
    total = ad.add(total, ad.mul(terms["e_alg"], weights.alg))
    total = ad.add(total, ad.mul(terms["e_bc"], weights.bc))
    return ad.add(total, ad.mul(terms["e_ic"], weights.ic))


def total_loss(problem: ProblemSpec, nets: NetPair, colloc: CollocationSet,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Loss breakdown at fixed parameters (no gradient kept)."""
    tape = Tape()
    pw = tape.leaf(nets.wparams)
    pp = tape.leaf(nets.pparams)
    terms = _loss_terms(problem, colloc, nets.wspec, nets.pspec, pw, pp)
    total = _weighted_total(terms, weights)
    return LossBreakdown(e_pde=float(terms["e_pde"].value),
                         e_alg=float(terms["e_alg"].value),
                         e_bc=float(terms["e_bc"].value),
                         e_ic=float(terms["e_ic"].value),
                         total=float(total.value))


def make_loss(problem: ProblemSpec, colloc: CollocationSet, weights: LossWeights,
              wspec: MlpSpec, pspec: MlpSpec):
    """Joint objective over the concatenated (profile, rates) parameter vector.

    Returns (fun, n_w, n_p) where fun(theta) gives (LossBreakdown, gradient)
    from one tape build and one reverse sweep.
    """
    n_w, n_p = param_count(wspec), param_count(pspec)

    def fun(theta: np.ndarray):
        if theta.shape != (n_w + n_p,):
            raise ValueError(f"expected {n_w + n_p} parameters, got {theta.shape}")
        tape = Tape()
        leaf = tape.leaf(theta)
        pw = ad.take_slice(leaf, 0, n_w)
        pp = ad.take_slice(leaf, n_w, n_w + n_p)
        terms = _loss_terms(problem, colloc, wspec, pspec, pw, pp)
        total = _weighted_total(terms, weights)
        grad = tape.gradient(total, leaf)
        breakdown = LossBreakdown(e_pde=float(terms["e_pde"].value),
                                  e_alg=float(terms["e_alg"].value),
                                  e_bc=float(terms["e_bc"].value),
                                  e_ic=float(terms["e_ic"].value),
                                  total=float(total.value))
        return breakdown, grad

    return fun, n_w, n_p


def make_warmup_loss(problem: ProblemSpec, colloc: CollocationSet, wspec: MlpSpec):
    """Profile-only objective fitting the initial profile extended constant in tau."""
    blocks = [colloc.interior] + [b.points for b in colloc.boundary] + [colloc.initial]
    X = np.vstack(blocks)
    d = problem.spatial_dim
    target = np.asarray(problem.ic(*[X[:, a] for a in range(d)]), dtype=np.float64)

    def fun(theta: np.ndarray):
        tape = Tape()
        leaf = tape.leaf(theta)
        vals = taped_mlp(wspec.widths, leaf, X, input_scales=wspec.input_scales).value
        loss = ad.sum_squares(ad.sub(_flatten(vals, X.shape[0]), target))
        return float(loss.value), tape.gradient(loss, leaf)

    return fun


# ---------------------------------------------------------------------------
# symmetry-exponent recovery
# ---------------------------------------------------------------------------

def infer_exponents(a: float, b: float, G: float, C: float) -> tuple[float, float]:
    """Power-law exponents of width and amplitude from steady rates.

    With steady rates A = A0 e^(C tau), B = B0 e^(G tau) the physical clock
    follows dt/dtau = A^-a B^(1-b), proportional to e^(kappa tau) with
    kappa = -(a C + (b - 1) G).  kappa > 0 sends t to infinity as tau grows;
    then A ~ (t + t0)^alpha, B ~ (t + t0)^beta with alpha = C / kappa,
    beta = G / kappa.  Both exponents are invariant under (G, C) -> (sG, sC).
    """
    kappa = -(a * C + (b - 1.0) * G)
    if kappa <= 0:
        raise ValueError(f"non-forward time map: kappa = {kappa:.6g} must be positive")
    return C / kappa, G / kappa


def reconstruct_scales(G: np.ndarray, C: np.ndarray, taus: np.ndarray):
    """Width and amplitude histories A/A0, B/B0 from rate series on a tau grid."""
    from .quadrature import cumulative_trapezoid

    taus = np.asarray(taus, dtype=np.float64)
    A = np.exp(cumulative_trapezoid(np.asarray(C, float), taus))
    B = np.exp(cumulative_trapezoid(np.asarray(G, float), taus))
    return A, B
