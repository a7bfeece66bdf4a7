"""Composite trapezoid rules on fixed 1-D and tensor-product 2-D grids.

The weights are exposed separately because constraint residuals inside the
training loss contract network values against them; keeping one quadrature
implementation guarantees the loss and the post-processing integrate the same
way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape[0] < 2:
            raise ValueError("grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def weights(self) -> np.ndarray:
        x = self.nodes
        w = np.zeros_like(x)
        w[0] = 0.5 * (x[1] - x[0])
        w[-1] = 0.5 * (x[-1] - x[-2])
        w[1:-1] = 0.5 * (x[2:] - x[:-2])
        return w


@dataclass(frozen=True)
class Grid2D:
    x: Grid1D
    y: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.x), len(self.y))

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.x.weights, self.y.weights)


def uniform_grid(lo: float, hi: float, n: int) -> Grid1D:
    return Grid1D(np.linspace(lo, hi, n))


def trapezoid_1d(values: np.ndarray, grid: Grid1D) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.nodes.shape:
        raise ValueError(f"got {values.shape} values on a grid of {len(grid)} nodes")
    return float(values @ grid.weights)


def trapezoid_2d(values: np.ndarray, grid: Grid2D) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ValueError(f"got {values.shape} values on a grid of shape {grid.shape}")
    return float(np.sum(values * grid.weights))


def inner_product(f_values: np.ndarray, g_values: np.ndarray, grid) -> float:
    """Weighted inner product <f, g> under the grid's trapezoid weights."""
    f_values = np.asarray(f_values, dtype=np.float64)
    g_values = np.asarray(g_values, dtype=np.float64)
    if f_values.shape != g_values.shape:
        raise ValueError("inner product needs equally shaped samples")
    if isinstance(grid, Grid2D):
        return trapezoid_2d(f_values * g_values, grid)
    return trapezoid_1d(f_values * g_values, grid)


def cumulative_trapezoid(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Running integral with the same rule, starting at zero."""
    values = np.asarray(values, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if values.shape != x.shape or values.ndim != 1:
        raise ValueError("cumulative rule needs matching 1-D samples")
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(x))
    return out
