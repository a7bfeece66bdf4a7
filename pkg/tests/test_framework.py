"""Problem validation, collocation, residual algebra and exponent recovery."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalewave.framework import (BoundaryCondition, CollocationSet, Constraint,
                                 LossBreakdown, LossWeights, NetPair,
                                 ProblemSpec, build_collocation,
                                 infer_exponents, make_loss, pde_residual,
                                 reconstruct_scales, resolve_rates, total_loss)
from scalewave.network import MlpSpec, init_params, param_count


def _diffusion_rhs(w, d1, d2, coords):
    return d2[0]


def toy_problem(**overrides):
    """1-D heat-type problem with a single pinned rate, no templates."""
    kw = dict(
        name="toy",
        spatial_dim=1,
        spatial_bounds=((-1.0, 1.0),),
        tau_end=2.0,
        scaling_a=-2.0,
        scaling_b=1.0,
        sigma=1,
        rates=("C",),
        rhs=_diffusion_rhs,
        constraints=(Constraint(kind="pinning", location=(0.0,), target=1.0),),
        bcs=(BoundaryCondition(axis=0, side=0, kind="dirichlet"),
             BoundaryCondition(axis=0, side=1, kind="flux")),
        ic=lambda y: np.exp(-4.0 * y**2),
    )
    kw.update(overrides)
    return ProblemSpec(**kw)


class TestValidation:
    def test_constraint_kinds(self):
        with pytest.raises(ValueError, match="unknown constraint kind"):
            Constraint(kind="momentum")
        with pytest.raises(ValueError, match="location"):
            Constraint(kind="pinning")
        with pytest.raises(ValueError, match="phi"):
            Constraint(kind="template_integral")

    def test_boundary_kinds(self):
        with pytest.raises(ValueError):
            BoundaryCondition(axis=0, side=0, kind="neumann")
        with pytest.raises(ValueError):
            BoundaryCondition(axis=0, side=2, kind="flux")

    def test_closure_counting(self):
        # two free rates against one constraint leaves the system open
        with pytest.raises(ValueError, match="closure"):
            toy_problem(rates=("G", "C"))

    def test_unknown_rate_name(self):
        with pytest.raises(ValueError, match="unknown rate"):
            toy_problem(rates=("Q",))

    def test_linked_rate_needs_known_source(self):
        with pytest.raises(ValueError, match="unknown source"):
            toy_problem(linked={"G": ("V", -1.0)})

    def test_template_required_for_projsection_constraints(self):
        with pytest.raises(ValueError, match="template"):
            toy_problem(constraints=(Constraint(kind="orthogonality"),))

    def test_network_widths_checked(self):
        with pytest.raises(ValueError, match="profile net"):
            toy_problem(wnet=MlpSpec((3, 4, 1)))
        with pytest.raises(ValueError, match="tau only"):
            toy_problem(pnet=MlpSpec((2, 4, 1)))
        with pytest.raises(ValueError, match="one output per free rate"):
            toy_problem(pnet=MlpSpec((1, 4, 3)))

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            toy_problem(spatial_bounds=((1.0, -1.0),))
        with pytest.raises(ValueError):
            toy_problem(sigma=0)
        with pytest.raises(ValueError):
            toy_problem(spatial_dim=3, spatial_bounds=((0, 1), (0, 1), (0, 1)))

    def test_loss_weights(self):
        with pytest.raises(ValueError):
            LossWeights(pde=0.0)
        with pytest.raises(ValueError):
            LossWeights(bc=-1.0)
        assert LossWeights(alg=0.0).alg == 0.0


class TestCollocation:
    def test_1d_layout(self):
        p = toy_problem()
        c = build_collocation(p, 5, 3)
        assert c.interior.shape == (15, 2)
        # interior slices exclude tau = 0 and both spatial endpoints
        assert c.interior[:, 1].min() > 0
        assert c.interior[:, 0].min() > -1.0 and c.interior[:, 0].max() < 1.0
        np.testing.assert_allclose(np.unique(c.interior[:, 1]),
                                   np.linspace(0, 2.0, 4)[1:])
        np.testing.assert_allclose(c.constraint_taus, np.linspace(0, 2.0, 4))
        assert c.initial.shape == (7, 2)
        assert np.all(c.initial[:, 1] == 0.0)
        np.testing.assert_allclose(c.initial_values, p.ic(c.initial[:, 0]))
        assert len(c.quad) == 7
        np.testing.assert_allclose(c.quad.nodes, np.linspace(-1, 1, 7))

    def test_boundary_batches(self):
        c = build_collocation(toy_problem(), 5, 3)
        assert len(c.boundary) == 2
        lower, upper = c.boundary
        assert np.all(lower.points[:, 0] == -1.0)
        assert np.all(upper.points[:, 0] == 1.0)
        # boundary conditions are enforced only after the initial slice
        for b in c.boundary:
            assert b.points[:, -1].min() > 0

    def test_2d_layout(self):
        p = toy_problem(
            spatial_dim=2, spatial_bounds=((0.0, 1.0), (0.0, 2.0)),
            bcs=(BoundaryCondition(axis=1, side=0, kind="flux"),),
            ic=lambda x, y: x * y,
        )
        c = build_collocation(p, (3, 4), 2)
        assert c.interior.shape == (3 * 4 * 2, 3)
        assert c.initial.shape == (5 * 6, 3)
        wall = c.boundary[0].points
        assert wall.shape == (5 * 2, 3)
        assert np.all(wall[:, 1] == 0.0)
        assert c.quad.shape == (5, 6)

    def test_spatial_snapping(self):
        p = toy_problem(snap_spatial=lambda n: n + (-n) % 4)
        c = build_collocation(p, 5, 2)
        assert c.interior.shape[0] == 8 * 2
        assert len(c.quad) == 10

    def test_tau_end_override(self):
        c = build_collocation(toy_problem(), 4, 2, tau_end=0.5)
        assert c.constraint_taus[-1] == 0.5

    def test_rejects_bad_counts(self):
        p = toy_problem()
        with pytest.raises(ValueError):
            build_collocation(p, 5, 0)
        with pytest.raises(ValueError):
            build_collocation(p, (5, 5), 2)
        with pytest.raises(ValueError):
            build_collocation(p, 1, 2)
        with pytest.raises(ValueError):
            build_collocation(p, 5, 2, tau_end=-1.0)

    def test_set_validation(self):
        c = build_collocation(toy_problem(), 4, 2)
        with pytest.raises(ValueError, match="ascending"):
            CollocationSet(interior=c.interior, boundary=c.boundary,
                           initial=c.initial, initial_values=c.initial_values,
                           constraint_taus=c.constraint_taus[::-1], quad=c.quad,
                           bounds=c.bounds)
        with pytest.raises(ValueError, match="bounds"):
            CollocationSet(interior=c.interior + 5.0, boundary=c.boundary,
                           initial=c.initial, initial_values=c.initial_values,
                           constraint_taus=c.constraint_taus, quad=c.quad,
                           bounds=c.bounds)


class TestResidualAlgebra:
    def test_resolve_rates_applies_linkage(self):
        p = toy_problem(linked={"G": ("C", -1.0)})
        raw = {"C": np.array([0.5, -2.0])}
        out = resolve_rates(p, raw)
        np.testing.assert_array_equal(out["G"], -raw["C"])
        np.testing.assert_array_equal(out["C"], raw["C"])

    def test_gaussian_annihilates_diffusion_frame(self):
        # w = exp(-y^2/4) with G = -1/2, C = 1/2 solves
        # G w - C y w_y + w_tau = w_yy pointwise
        p = toy_problem(rates=("G", "C"),
                        constraints=(Constraint(kind="pinning", location=(0.0,)),
                                     Constraint(kind="conservation", target=1.0)))
        rng = np.random.default_rng(0)
        y = rng.uniform(-1, 1, 50)

        w = np.exp(-y**2 / 4)
        d1 = [-0.5 * y * w]
        d2 = [(-0.5 + 0.25 * y**2) * w]
        wt = np.zeros_like(y)
        from scalewave.framework import frame_residual
        res = frame_residual(p, w, d1, d2, wt, {"G": -0.5, "C": 0.5}, (y,))
        assert np.max(np.abs(res)) < 1e-15

    def test_pde_residual_accepts_analytic_fields(self):
        p = toy_problem(rates=("G", "C"),
                        constraints=(Constraint(kind="pinning", location=(0.0,)),
                                     Constraint(kind="conservation", target=1.0)))

        class Gaussian:
            def jets(self, X, first, second):
                y = X[:, 0]
                w = np.exp(-y**2 / 4)
                d1 = {i: np.zeros_like(y) for i in first}
                if 0 in d1:
                    d1[0] = -0.5 * y * w
                d2 = {q: np.zeros_like(y) for q in second}
                if (0, 0) in d2:
                    d2[(0, 0)] = (-0.5 + 0.25 * y**2) * w
                return {"w": w, "d1": d1, "d2": d2}

            def rate_values(self, problem, tau):
                tau = np.atleast_1d(tau)
                return {"G": np.full(tau.shape, -0.5), "C": np.full(tau.shape, 0.5)}

        pts = np.column_stack([np.linspace(-1, 1, 9), np.linspace(0.1, 2.0, 9)])
        res = pde_residual(p, Gaussian(), pts)
        assert np.max(np.abs(res)) < 1e-15
        single = pde_residual(p, Gaussian(), np.array([0.3, 1.0]))
        assert isinstance(single, float)
        assert abs(single) < 1e-15

    def test_sigma_flips_frame_terms(self):
        p1 = toy_problem(rates=("G",), sigma=1)
        p2 = toy_problem(rates=("G",), sigma=-1)
        from scalewave.framework import frame_residual
        y = np.linspace(-1, 1, 5)
        w = np.cos(y)
        d1 = [np.sin(y)]
        d2 = [np.cos(y)]
        wt = np.full_like(y, 0.3)
        r1 = frame_residual(p1, w, d1, d2, wt, {"G": 2.0}, (y,))
        r2 = frame_residual(p2, w, d1, d2, wt, {"G": 2.0}, (y,))
        np.testing.assert_allclose(r1 + r2, -2 * np.cos(y), atol=1e-15)


def tanh_front_nets():
    """Hand-built nets reproducing w(y, tau) = tanh(y) and a zero rate."""
    wspec = MlpSpec((2, 1, 1))
    # layer 0: weights [[1, 0]], bias [0]; layer 1: weights [[1]], bias [0]
    wparams = np.array([1.0, 0.0, 0.0, 1.0, 0.0])
    pspec = MlpSpec((1, 1, 1))
    pparams = np.zeros(4)
    return NetPair(wspec=wspec, wparams=wparams, pspec=pspec, pparams=pparams)


def tanh_front_problem():
    # tanh solves w'' + 2 w w' = 0, travels at speed 0, and the hand-built
    # network reproduces it exactly, so every loss term must vanish
    return ProblemSpec(
        name="tanh-front",
        spatial_dim=1,
        spatial_bounds=((-3.0, 3.0),),
        tau_end=1.0,
        scaling_a=0.0,
        scaling_b=1.0,
        sigma=1,
        rates=("V",),
        rhs=lambda w, d1, d2, coords: d2[0] + 2.0 * w * d1[0],
        constraints=(Constraint(kind="pinning", location=(0.0,), target=0.0),),
        bcs=(BoundaryCondition(axis=0, side=0, kind="dirichlet", value=float(np.tanh(-3.0))),
             BoundaryCondition(axis=0, side=1, kind="dirichlet", value=float(np.tanh(3.0)))),
        ic=np.tanh,
        wnet=MlpSpec((2, 1, 1)),
        pnet=MlpSpec((1, 1, 1)),
        invariance="translation",
    )


class TestLossAssembly:
    def test_exact_solution_gives_zero_loss(self):
        p = tanh_front_problem()
        nets = tanh_front_nets()
        colloc = build_collocation(p, 20, 8)
        bd = total_loss(p, nets, colloc)
        assert bd.total < 1e-12
        for term in (bd.e_pde, bd.e_alg, bd.e_bc, bd.e_ic):
            assert term < 1e-12

    def test_breakdown_matches_weighted_sum(self):
        p = tanh_front_problem()
        colloc = build_collocation(p, 8, 4)
        rng = np.random.default_rng(5)
        nets = NetPair(wspec=p.wnet, wparams=rng.standard_normal(param_count(p.wnet)),
                       pspec=p.pnet, pparams=rng.standard_normal(param_count(p.pnet)))
        for _ in range(5):
            wts = LossWeights(pde=rng.uniform(0.1, 3), alg=rng.uniform(0, 3),
                              bc=rng.uniform(0, 3), ic=rng.uniform(0, 3))
            bd = total_loss(p, nets, colloc, wts)
            manual = (wts.pde * bd.e_pde + wts.alg * bd.e_alg
                      + wts.bc * bd.e_bc + wts.ic * bd.e_ic)
            assert bd.total == pytest.approx(manual, rel=1e-12)

    def test_doubling_pde_weight_adds_unweighted_component(self):
        p = tanh_front_problem()
        colloc = build_collocation(p, 8, 4)
        rng = np.random.default_rng(6)
        nets = NetPair(wspec=p.wnet, wparams=rng.standard_normal(param_count(p.wnet)),
                       pspec=p.pnet, pparams=rng.standard_normal(param_count(p.pnet)))
        b1 = total_loss(p, nets, colloc, LossWeights(pde=1.0))
        b2 = total_loss(p, nets, colloc, LossWeights(pde=2.0))
        assert b2.e_pde == b1.e_pde  # components stay unweighted
        assert b2.total - b1.total == pytest.approx(b1.e_pde, rel=1e-12)

    def test_make_loss_agrees_with_total_loss(self):
        p = tanh_front_problem()
        colloc = build_collocation(p, 8, 4)
        fun, n_w, n_p = make_loss(p, colloc, LossWeights(), p.wnet, p.pnet)
        assert (n_w, n_p) == (param_count(p.wnet), param_count(p.pnet))
        rng = np.random.default_rng(7)
        theta = rng.standard_normal(n_w + n_p)
        bd, grad = fun(theta)
        assert isinstance(bd, LossBreakdown)
        assert grad.shape == (n_w + n_p,)
        nets = NetPair(wspec=p.wnet, wparams=theta[:n_w],
                       pspec=p.pnet, pparams=theta[n_w:])
        ref = total_loss(p, nets, colloc)
        assert bd.total == ref.total
        with pytest.raises(ValueError):
            fun(theta[:-1])

    def test_rate_values_resolve_linked_rates(self):
        pspec = MlpSpec((1, 3, 1))
        p = toy_problem(linked={"G": ("C", -1.0)})
        nets = NetPair(wspec=MlpSpec((2, 3, 1)),
                       wparams=init_params(MlpSpec((2, 3, 1)), 0),
                       pspec=pspec, pparams=init_params(pspec, 1) + 0.3)
        rates = nets.rate_values(p, np.linspace(0, 1, 4))
        assert set(rates) == {"C", "G"}
        np.testing.assert_allclose(rates["G"], -rates["C"], rtol=1e-15)


class TestExponents:
    def test_plain_diffusion_rates(self):
        alpha, beta = infer_exponents(-2.0, 1.0, -1.99699, 1.99881)
        assert alpha == pytest.approx(0.5, abs=1e-12)
        assert beta == pytest.approx(-0.49954, abs=5e-6)

    def test_porous_medium_rates(self):
        alpha, beta = infer_exponents(-2.0, 2.0, 0.831677, 1.0)
        kappa = 2.0 - 0.831677
        assert alpha == pytest.approx(1.0 / kappa, rel=1e-15)
        assert beta == pytest.approx(0.831677 / kappa, rel=1e-15)
        assert alpha == pytest.approx(0.85593, abs=5e-6)
        assert beta == pytest.approx(0.711856, abs=1e-6)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 100))
    @settings(max_examples=200, deadline=None)
    def test_scale_invariance(self, G, C, s):
        a, b = -2.0, 1.0
        kappa = -(a * C + (b - 1.0) * G)
        if kappa <= 1e-6:
            return
        base = infer_exponents(a, b, G, C)
        scaled = infer_exponents(a, b, s * G, s * C)
        assert scaled[0] == pytest.approx(base[0], rel=1e-9, abs=1e-12)
        assert scaled[1] == pytest.approx(base[1], rel=1e-9, abs=1e-12)

    def test_backward_time_map_rejected(self):
        with pytest.raises(ValueError, match="non-forward time map"):
            infer_exponents(-2.0, 1.0, -1.0, -1.0)

    def test_exponent_identity(self):
        # alpha and beta always satisfy a alpha + (b - 1) beta = -1
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b = rng.uniform(-3, 0), rng.uniform(0.5, 2.5)
            G, C = rng.standard_normal(2)
            kappa = -(a * C + (b - 1.0) * G)
            if kappa <= 1e-9:
                continue
            alpha, beta = infer_exponents(a, b, G, C)
            assert a * alpha + (b - 1.0) * beta == pytest.approx(-1.0, rel=1e-9)


class TestReconstructScales:
    def test_constant_rates_grow_exponentially(self):
        taus = np.linspace(0.0, 2.0, 101)
        A, B = reconstruct_scales(np.full(101, -1.0), np.full(101, 0.5), taus)
        np.testing.assert_allclose(A, np.exp(0.5 * taus), rtol=1e-13)
        np.testing.assert_allclose(B, np.exp(-taus), rtol=1e-13)

    def test_linear_rate_is_integrated_exactly(self):
        taus = np.linspace(0.0, 1.0, 11)
        A, _ = reconstruct_scales(np.zeros(11), taus, taus)
        np.testing.assert_allclose(A, np.exp(taus**2 / 2), rtol=1e-14)

    def test_starts_at_unit_scale(self):
        taus = np.linspace(0.0, 1.0, 5)
        A, B = reconstruct_scales(np.ones(5), np.ones(5), taus)
        assert A[0] == 1.0 and B[0] == 1.0
