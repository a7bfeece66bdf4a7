"""Feedforward network specs, seeded initialization and checkpoint IO.

Networks are tanh MLPs with an affine output layer, stored as a single flat
float64 vector: for each layer the weight matrix in row-major order, then the
bias.  All evaluation goes through the jet propagation in
:mod:`scalewave.autodiff`, so values and input derivatives always agree with
what training saw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Jet2, forward_jet, layer_slices


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one network: layer widths, fixed tanh/identity activations.

    input_scales optionally divides each input column before the first layer;
    derivatives reported by evaluation remain with respect to the physical
    inputs.  Scales default to one, i.e. inputs are fed as-is.
    """

    widths: tuple[int, ...]
    input_scales: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError(f"network needs at least input and output widths, got {self.widths}")
        if any(int(w) < 1 for w in self.widths):
            raise ValueError(f"layer widths must be positive, got {self.widths}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        scales = self.input_scales or tuple(1.0 for _ in range(self.widths[0]))
        scales = tuple(float(s) for s in scales)
        if len(scales) != self.widths[0] or any(s <= 0 for s in scales):
            raise ValueError(f"need one positive scale per input, got {scales}")
        object.__setattr__(self, "input_scales", scales)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]


def param_count(spec: MlpSpec) -> int:
    return sum((nin + 1) * nout for nin, nout in zip(spec.widths[:-1], spec.widths[1:]))


def init_params(spec: MlpSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, reproducible for a given seed."""
    rng = np.random.default_rng(seed)
    slices, total = layer_slices(spec.widths)
    params = np.zeros(total)
    for (ws, we), _, (fan_out, fan_in) in slices:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[ws:we] = rng.uniform(-limit, limit, size=we - ws)
    return params


def unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into per-layer (weights, bias) arrays."""
    params = np.asarray(params, dtype=np.float64)
    slices, total = layer_slices(spec.widths)
    if params.shape != (total,):
        raise ValueError(f"expected {total} parameters for widths {spec.widths}, got {params.shape}")
    return [(params[ws:we].reshape(shape), params[bs:be])
            for (ws, we), (bs, be), shape in slices]


def evaluate(spec: MlpSpec, params: np.ndarray, point) -> Jet2:
    """Value, gradient and Hessian of a scalar network at one input point."""
    if spec.n_outputs != 1:
        raise ValueError("evaluate returns a scalar jet; use batch paths for multi-output networks")
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    scaled = point / np.asarray(spec.input_scales)
    jet = forward_jet(spec.widths, np.asarray(params, dtype=np.float64), scaled)
    s = np.asarray(spec.input_scales)
    return Jet2(value=jet.value, grad=jet.grad / s, hess=jet.hess / np.outer(s, s))


def batch_values(spec: MlpSpec, params: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Plain forward pass over an (N, n_inputs) batch, no tape kept."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.n_inputs:
        raise ValueError(f"batch shape {x.shape} does not match input width {spec.n_inputs}")
    h = x / np.asarray(spec.input_scales)
    layers = unpack(spec, params)
    for w, b in layers[:-1]:
        h = np.tanh(h @ w.T + b)
    w, b = layers[-1]
    return h @ w.T + b


def save_checkpoint(path, spec: MlpSpec, params: np.ndarray) -> None:
    """Flat CSV checkpoint: header row of widths, then one value per line."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (param_count(spec),):
        raise ValueError("parameter vector does not match the spec being saved")
    with open(path, "w") as f:
        f.write(",".join(str(w) for w in spec.widths) + "\n")
        for v in params:
            f.write(f"{v:.17g}\n")


def load_checkpoint(path) -> tuple[tuple[int, ...], np.ndarray]:
    """Read a checkpoint; returns (widths, params) and validates the count."""
    with open(path) as f:
        header = f.readline().strip()
        widths = tuple(int(tok) for tok in header.split(","))
        values = np.array([float(line) for line in f if line.strip()])
    spec = MlpSpec(widths)
    expected = param_count(spec)
    if values.shape != (expected,):
        raise ValueError(f"checkpoint holds {values.shape[0]} values, widths {widths} need {expected}")
    return widths, values
