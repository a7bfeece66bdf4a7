"""Invariant-profile PDE solver: networks trained on rescaled PDE-DAE systems.

The package recovers traveling-wave and self-similar solutions of nonlinear
PDEs by switching to dynamically rescaled coordinates, closing the unknown
frame rates with algebraic constraints, and training a pair of networks
against the combined residuals.  Converged rates yield wave speeds and
scaling exponents directly.
"""

import os as _os

# worker-count control must land before the numerics stack loads its BLAS
if _os.environ.get("SCALEWAVE_WORKERS", "").isdigit():
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SCALEWAVE_WORKERS"])

from .autodiff import (Jet2, Tape, TapeError, Var, fd_check, forward_jet,
                       loss_gradient, value_and_grad)
from .framework import (BoundaryCondition, CollocationSet, Constraint,
                        LossBreakdown, LossWeights, NetPair, ProblemSpec,
                        algebraic_residuals, boundary_residuals,
                        build_collocation, infer_exponents, make_loss,
                        make_warmup_loss, pde_residual, reconstruct_scales,
                        resolve_rates, total_loss)
from .network import (MlpSpec, batch_values, evaluate, init_params,
                      load_checkpoint, param_count, save_checkpoint)
from .optimizer import (LbfgsConfig, TrainHistory, TrainResult, minimize,
                        train, warmup)
from .problems import (CASES, GRID_PRESETS, BurgersFit, CaseResult, TailStats,
                       burgers_exact, burgers_problem, diffusion1d_problem,
                       diffusion2d_problem, evaluate_case, fit_burgers_params,
                       golden_section, nagumo_exact, nagumo_problem,
                       nagumo_speed, pme_problem, shift_fit, steady_rate)
from .quadrature import (Grid1D, Grid2D, cumulative_trapezoid, inner_product,
                         trapezoid_1d, trapezoid_2d, uniform_grid)

__version__ = "0.1.0"
