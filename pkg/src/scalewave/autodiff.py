"""Reverse-mode tape and exact input-derivative propagation for tanh MLPs.

Two pieces cooperate here.

A :class:`Tape` records elementary array operations (arithmetic, matmul,
slicing, reductions) as they execute, so a single reverse sweep yields the
exact gradient of a recorded scalar with respect to any leaf array.  Entries
keep enough information to replay the forward pass, which the test suite uses
to confirm the record is faithful.

Derivatives with respect to *network inputs* are not taped.  They are
propagated analytically layer by layer as (value, gradient, Hessian) triples:
for an affine map followed by tanh the triple update is closed form, using
only operations the tape already supports.  Because that propagation runs on
taped variables, the reverse sweep automatically differentiates the input
derivatives with respect to the parameters, which is what a PDE residual loss
needs.

Everything is float64 and evaluation order is fixed, so identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TapeError(RuntimeError):
    """Raised when an operation cannot be recorded or differentiated."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tape:
    """Ordered record of elementary array operations.

    Each entry is (op, input indices, aux, output value).  Leaves carry no
    inputs.  The reverse sweep walks entries backwards accumulating adjoints;
    reductions and BLAS calls keep numpy's fixed evaluation order, so results
    are reproducible bit for bit.
    """

    __slots__ = ("ops", "inputs", "aux", "values")

    def __init__(self):
        self.ops: list[str] = []
        self.inputs: list[tuple[int, ...]] = []
        self.aux: list = []
        self.values: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.ops)

    def leaf(self, value) -> "Var":
        return self._emit("leaf", (), None, _as_array(value))

    def _emit(self, op: str, inputs: tuple[int, ...], aux, value: np.ndarray) -> "Var":
        if not np.all(np.isfinite(value)):
            raise TapeError(
                f"non-finite result in op '{op}' at record {len(self.ops)}"
            )
        self.ops.append(op)
        self.inputs.append(inputs)
        self.aux.append(aux)
        self.values.append(value)
        return Var(self, len(self.ops) - 1)

    # -- reverse sweep ---------------------------------------------------

    def gradient(self, output: "Var", leaf: "Var") -> np.ndarray:
        """Adjoint of a recorded scalar with respect to one leaf."""
        if output.tape is not self or leaf.tape is not self:
            raise TapeError("output and leaf must live on this tape")
        if output.value.ndim != 0:
            raise TapeError("gradient target must be a recorded scalar")
        adj: dict[int, np.ndarray] = {output.idx: np.ones(())}
        for k in range(output.idx, -1, -1):
            g = adj.pop(k, None)
            if g is None:
                continue
            op = self.ops[k]
            if op == "leaf":
                # store final adjoint back; only one leaf queried per sweep
                adj[k] = g
                if k == leaf.idx:
                    break
                continue
            for idx, contrib in _VJP[op](self, k, g):
                prev = adj.get(idx)
                adj[idx] = contrib if prev is None else prev + contrib
        out = adj.get(leaf.idx)
        if out is None:
            return np.zeros_like(self.values[leaf.idx])
        return np.broadcast_to(out, self.values[leaf.idx].shape).astype(np.float64)

    def replay(self) -> list[np.ndarray]:
        """Recompute every entry from its recorded inputs (for verification)."""
        vals: list[np.ndarray] = []
        for k, op in enumerate(self.ops):
            if op == "leaf":
                vals.append(self.values[k])
            else:
                args = [vals[i] for i in self.inputs[k]]
                vals.append(_FORWARD[op](args, self.aux[k]))
        return vals


@dataclass(frozen=True)
class Var:
    """Handle to one tape entry; supports numpy-style arithmetic."""

    tape: Tape
    idx: int

    # keep ndarray <op> Var out of numpy's broadcasting machinery so the
    # reflected Var operators run instead
    __array_ufunc__ = None

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.idx]

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if k == 2:
            return square(self)
        raise TapeError("only squaring is recorded; use explicit ops otherwise")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an adjoint down to the shape numpy broadcast it from."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# forward tables (used by replay) and vjp tables (used by the reverse sweep)
# ---------------------------------------------------------------------------

_FORWARD = {
    "add": lambda a, aux: a[0] + a[1],
    "add_c": lambda a, aux: a[0] + aux,
    "sub": lambda a, aux: a[0] - a[1],
    "sub_c": lambda a, aux: a[0] - aux,
    "rsub_c": lambda a, aux: aux - a[0],
    "mul": lambda a, aux: a[0] * a[1],
    "mul_c": lambda a, aux: a[0] * aux,
    "div": lambda a, aux: a[0] / a[1],
    "div_c": lambda a, aux: a[0] / aux,
    "rdiv_c": lambda a, aux: aux / a[0],
    "neg": lambda a, aux: -a[0],
    "square": lambda a, aux: a[0] * a[0],
    "tanh": lambda a, aux: np.tanh(a[0]),
    "exp": lambda a, aux: np.exp(a[0]),
    "matmul": lambda a, aux: a[0] @ a[1],
    "matmul_cl": lambda a, aux: aux @ a[0],
    "matmul_cr": lambda a, aux: a[0] @ aux,
    "transpose": lambda a, aux: a[0].T,
    "reshape": lambda a, aux: a[0].reshape(aux),
    "slice1d": lambda a, aux: a[0][aux[0]:aux[1]],
    "col": lambda a, aux: a[0][:, aux],
    "sum": lambda a, aux: a[0].sum(),
}


def _vjp_add(t, k, g):
    i, j = t.inputs[k]
    return ((i, _unbroadcast(g, t.values[i].shape)),
            (j, _unbroadcast(g, t.values[j].shape)))


def _vjp_sub(t, k, g):
    i, j = t.inputs[k]
    return ((i, _unbroadcast(g, t.values[i].shape)),
            (j, _unbroadcast(-g, t.values[j].shape)))


def _vjp_mul(t, k, g):
    i, j = t.inputs[k]
    return ((i, _unbroadcast(g * t.values[j], t.values[i].shape)),
            (j, _unbroadcast(g * t.values[i], t.values[j].shape)))


def _vjp_div(t, k, g):
    i, j = t.inputs[k]
    b = t.values[j]
    return ((i, _unbroadcast(g / b, t.values[i].shape)),
            (j, _unbroadcast(-g * t.values[i] / (b * b), t.values[j].shape)))


def _vjp_slice1d(t, k, g):
    (i,) = t.inputs[k]
    start, stop = t.aux[k]
    out = np.zeros_like(t.values[i])
    out[start:stop] = g
    return ((i, out),)


def _vjp_col(t, k, g):
    (i,) = t.inputs[k]
    out = np.zeros_like(t.values[i])
    out[:, t.aux[k]] = g
    return ((i, out),)


_VJP = {
    "add": _vjp_add,
    "add_c": lambda t, k, g: ((t.inputs[k][0],
                               _unbroadcast(g, t.values[t.inputs[k][0]].shape)),),
    "sub": _vjp_sub,
    "sub_c": lambda t, k, g: ((t.inputs[k][0],
                               _unbroadcast(g, t.values[t.inputs[k][0]].shape)),),
    "rsub_c": lambda t, k, g: ((t.inputs[k][0],
                                _unbroadcast(-g, t.values[t.inputs[k][0]].shape)),),
    "mul": _vjp_mul,
    "mul_c": lambda t, k, g: ((t.inputs[k][0],
                               _unbroadcast(g * t.aux[k], t.values[t.inputs[k][0]].shape)),),
    "div": _vjp_div,
    "div_c": lambda t, k, g: ((t.inputs[k][0],
                               _unbroadcast(g / t.aux[k], t.values[t.inputs[k][0]].shape)),),
    "rdiv_c": lambda t, k, g: ((t.inputs[k][0],
                                _unbroadcast(-g * t.values[k] / t.values[t.inputs[k][0]],
                                             t.values[t.inputs[k][0]].shape)),),
    "neg": lambda t, k, g: ((t.inputs[k][0], -g),),
    "square": lambda t, k, g: ((t.inputs[k][0], 2.0 * g * t.values[t.inputs[k][0]]),),
    "tanh": lambda t, k, g: ((t.inputs[k][0], g * (1.0 - t.values[k] * t.values[k])),),
    "exp": lambda t, k, g: ((t.inputs[k][0], g * t.values[k]),),
    "matmul": lambda t, k, g: ((t.inputs[k][0], g @ t.values[t.inputs[k][1]].T),
                               (t.inputs[k][1], t.values[t.inputs[k][0]].T @ g)),
    "matmul_cl": lambda t, k, g: ((t.inputs[k][0], t.aux[k].T @ g),),
    "matmul_cr": lambda t, k, g: ((t.inputs[k][0], g @ t.aux[k].T),),
    "transpose": lambda t, k, g: ((t.inputs[k][0], g.T),),
    "reshape": lambda t, k, g: ((t.inputs[k][0],
                                 g.reshape(t.values[t.inputs[k][0]].shape)),),
    "slice1d": _vjp_slice1d,
    "col": _vjp_col,
    "sum": lambda t, k, g: ((t.inputs[k][0],
                             np.broadcast_to(g, t.values[t.inputs[k][0]].shape)),),
}


# ---------------------------------------------------------------------------
# ops: each accepts Var or plain array/scalar operands and dispatches
# ---------------------------------------------------------------------------

def _binary(op: str, a, b):
    if isinstance(a, Var) and isinstance(b, Var):
        if a.tape is not b.tape:
            raise TapeError("operands recorded on different tapes")
        value = _FORWARD[op]([a.value, b.value], None)
        return a.tape._emit(op, (a.idx, b.idx), None, value)
    if isinstance(a, Var):
        c = _as_array(b)
        value = _FORWARD[op + "_c"]([a.value], c)
        return a.tape._emit(op + "_c", (a.idx,), c, value)
    # const on the left
    c = _as_array(a)
    swap = {"add": "add_c", "mul": "mul_c", "sub": "rsub_c", "div": "rdiv_c"}
    value = _FORWARD[swap[op]]([b.value], c)
    return b.tape._emit(swap[op], (b.idx,), c, value)


def add(a, b):
    return _binary("add", a, b)


def sub(a, b):
    return _binary("sub", a, b)


def mul(a, b):
    return _binary("mul", a, b)


def div(a, b):
    denom = b.value if isinstance(b, Var) else _as_array(b)
    if np.any(denom == 0.0):
        tape = a.tape if isinstance(a, Var) else b.tape
        raise TapeError(f"division by zero at record {len(tape.ops)}")
    return _binary("div", a, b)


def neg(a: Var) -> Var:
    return a.tape._emit("neg", (a.idx,), None, -a.value)


def square(a: Var) -> Var:
    return a.tape._emit("square", (a.idx,), None, a.value * a.value)


def tanh(a):
    if not isinstance(a, Var):
        return np.tanh(_as_array(a))
    return a.tape._emit("tanh", (a.idx,), None, np.tanh(a.value))


def exp(a):
    if not isinstance(a, Var):
        return np.exp(_as_array(a))
    return a.tape._emit("exp", (a.idx,), None, np.exp(a.value))


def matmul(a, b):
    if isinstance(a, Var) and isinstance(b, Var):
        if a.tape is not b.tape:
            raise TapeError("operands recorded on different tapes")
        return a.tape._emit("matmul", (a.idx, b.idx), None, a.value @ b.value)
    if isinstance(b, Var):
        c = _as_array(a)
        return b.tape._emit("matmul_cl", (b.idx,), c, c @ b.value)
    c = _as_array(b)
    return a.tape._emit("matmul_cr", (a.idx,), c, a.value @ c)


def transpose(a: Var) -> Var:
    return a.tape._emit("transpose", (a.idx,), None, a.value.T)


def reshape(a: Var, shape) -> Var:
    shape = tuple(shape)
    return a.tape._emit("reshape", (a.idx,), shape, a.value.reshape(shape))


def take_slice(a: Var, start: int, stop: int) -> Var:
    if a.value.ndim != 1:
        raise TapeError("slice is defined for flat parameter vectors")
    if not (0 <= start <= stop <= a.value.shape[0]):
        raise TapeError(f"slice [{start}:{stop}] outside vector of length {a.value.shape[0]}")
    return a.tape._emit("slice1d", (a.idx,), (start, stop), a.value[start:stop])


def take_col(a: Var, j: int) -> Var:
    return a.tape._emit("col", (a.idx,), j, a.value[:, j])


def sum_all(a: Var) -> Var:
    return a.tape._emit("sum", (a.idx,), None, a.value.sum())


def sum_squares(a: Var) -> Var:
    return sum_all(square(a))


# ---------------------------------------------------------------------------
# analytic jet propagation through affine+tanh stacks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet2:
    """Value, input gradient and input Hessian of a scalar network output."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


@dataclass
class MlpJets:
    """Batched network outputs on a tape.

    value is an (N, n_out) Var; d1[i] holds the derivative along input i,
    d2[(i, j)] the mixed second derivative, with the same shape.  Only the
    requested components are present.
    """

    value: Var
    d1: dict[int, Var]
    d2: dict[tuple[int, int], Var]


def layer_slices(widths: list[int] | tuple[int, ...]):
    """Per-layer (weight, bias) index ranges in the flat parameter vector."""
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid layer widths {widths}")
    out, offset = [], 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = (offset, offset + fan_in * fan_out)
        b = (w[1], w[1] + fan_out)
        out.append((w, b, (fan_out, fan_in)))
        offset = b[1]
    return out, offset


def taped_mlp(widths, params: Var, x: np.ndarray, *, input_scales=None,
              first=(), second=()) -> MlpJets:
    """Record a batched forward pass with analytic input derivatives.

    x has shape (N, widths[0]) in physical units; input_scales divides each
    column before the first layer, with the chain rule folded into the
    returned derivatives so they stay physical.  first lists input indices
    whose gradient is wanted; second lists (i, j) index pairs with i <= j.
    Hidden activations are tanh, the output layer is affine.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != widths[0]:
        raise ValueError(f"input batch shape {x.shape} does not match first width {widths[0]}")
    slices, total = layer_slices(widths)
    if params.value.shape != (total,):
        raise ValueError(f"parameter vector has {params.value.shape[0]} entries, expected {total}")
    second = tuple((min(i, j), max(i, j)) for i, j in second)
    scales = np.ones(widths[0]) if input_scales is None else np.asarray(input_scales, float)

    n = x.shape[0]
    value = None  # Var once past the input
    d1: dict[int, Var] = {}
    d2: dict[tuple[int, int], Var] = {}
    for layer, ((ws, we), (bs, be), shape) in enumerate(slices):
        w_mat = reshape(take_slice(params, ws, we), shape)
        bias = take_slice(params, bs, be)
        wt = transpose(w_mat)
        if layer == 0:
            pre = add(matmul(x / scales, wt), bias)
            pre1 = {}
            for i in first:
                seed = np.zeros((1, widths[0]))
                seed[0, i] = 1.0 / scales[i]
                pre1[i] = matmul(seed, wt)
            pre2 = {}  # input curvature is zero
        else:
            pre = add(matmul(value, wt), bias)
            pre1 = {i: matmul(d1[i], wt) for i in first}
            pre2 = {p: matmul(d2[p], wt) for p in second}
        if layer == len(slices) - 1:
            value, d1, d2 = pre, pre1, {p: pre2.get(p) for p in second}
            break
        t = tanh(pre)
        s1 = 1.0 - square(t)
        s2 = -2.0 * t * s1
        value = t
        new1 = {i: s1 * pre1[i] for i in first}
        new2 = {}
        for i, j in second:
            # d2 tanh(a(x)) = s2 * a_i a_j + s1 * a_ij
            term = s2 * pre1[i] * pre1[j]
            if (i, j) in pre2:
                term = term + s1 * pre2[(i, j)]
            new2[(i, j)] = term
        d1, d2 = new1, new2

    # zero curvature survives a single affine layer
    for p in list(d2):
        if d2[p] is None:
            z = params.tape.leaf(np.zeros((n, widths[-1])))
            d2[p] = z
    return MlpJets(value=value, d1=d1, d2=d2)


def forward_jet(layer_sizes, params: np.ndarray, point) -> Jet2:
    """Evaluate a scalar tanh network with exact first and second input derivatives."""
    widths = list(layer_sizes)
    if widths[-1] != 1:
        raise ValueError("forward_jet expects a scalar output network")
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.shape[0] != widths[0]:
        raise ValueError(f"point has {point.shape[0]} coordinates, network expects {widths[0]}")
    d = widths[0]
    tape = Tape()
    p = tape.leaf(np.asarray(params, dtype=np.float64))
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    jets = taped_mlp(widths, p, point[None, :], first=range(d), second=pairs)
    grad = np.array([jets.d1[i].value[0, 0] for i in range(d)])
    hess = np.zeros((d, d))
    for i, j in pairs:
        hess[i, j] = hess[j, i] = jets.d2[(i, j)].value[0, 0]
    return Jet2(value=float(jets.value.value[0, 0]), grad=grad, hess=hess)


# ---------------------------------------------------------------------------
# gradients of recorded losses and finite-difference verification
# ---------------------------------------------------------------------------

def value_and_grad(f, x: np.ndarray):
    """Record f at x and sweep once; f maps a leaf Var to a scalar Var."""
    tape = Tape()
    p = tape.leaf(np.asarray(x, dtype=np.float64))
    out = f(p)
    if not isinstance(out, Var):
        raise TapeError("loss function must return a recorded scalar")
    return float(out.value), tape.gradient(out, p)


def loss_gradient(loss, params: np.ndarray) -> np.ndarray:
    """Gradient of a recorded scalar loss with respect to a parameter vector."""
    return value_and_grad(loss, params)[1]


def fd_check(f, x: np.ndarray, h, coords=None) -> float:
    """Worst relative disagreement between the swept gradient and central differences.

    h may be a scalar step or a per-coordinate array.  coords restricts the
    probe to a subset of parameter indices (all by default); the returned
    value is max_i |g_i - fd_i| / max(1, |fd_i|).
    """
    x = np.asarray(x, dtype=np.float64)
    _, g = value_and_grad(f, x)

    def probe(y):
        tape = Tape()
        return float(f(tape.leaf(y)).value)

    steps = np.broadcast_to(np.asarray(h, float), x.shape)
    idx = range(x.shape[0]) if coords is None else coords
    worst = 0.0
    for i in idx:
        e = np.zeros_like(x)
        e[i] = steps[i]
        fp = probe(x + e)
        fm = probe(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite probe at coordinate {i}, step {steps[i]}")
        fd = (fp - fm) / (2.0 * steps[i])
        worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    return worst
