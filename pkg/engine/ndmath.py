"""
ndmath - Dense float64 arrays, reverse-mode autodiff, MLPs and Adam

A Tensor wraps a numpy array. Inside `training()` every operation whose
inputs require gradients records a closure on the output; `backward` walks
the recorded graph once in reverse topological order.
"""
import contextlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from utils.errors import NumericError, ShapeError, StateError

ArrayLike = Union['Tensor', np.ndarray, float, int, Sequence[float]]

_RECORDING = False
_BRANCHES: Optional[List[np.ndarray]] = None


@contextlib.contextmanager
def training(enabled: bool = True) -> Iterator[None]:
    """Record the computation graph for a later backward pass"""
    global _RECORDING
    previous = _RECORDING
    _RECORDING = enabled
    try:
        yield
    finally:
        _RECORDING = previous


def is_training() -> bool:
    return _RECORDING


@contextlib.contextmanager
def branch_trace() -> Iterator[List[np.ndarray]]:
    """Collect the branch taken per entry by every piecewise op (relu, clip, clamp_min), in call order"""
    global _BRANCHES
    previous = _BRANCHES
    _BRANCHES = []
    try:
        yield _BRANCHES
    finally:
        _BRANCHES = previous


def _record_branch(state: np.ndarray):
    if _BRANCHES is not None:
        _BRANCHES.append(np.array(state, dtype=np.int8))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense 64-bit array node of the autodiff graph"""

    __slots__ = ('data', 'grad', 'requires_grad', 'name', '_parents', '_backward')
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            label = f" {name!r}" if name else ""
            raise NumericError(f"non-finite entries in array{label}")
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    # -- graph plumbing ------------------------------------------------

    @staticmethod
    def lift(value: ArrayLike) -> 'Tensor':
        return value if isinstance(value, Tensor) else Tensor(value)

    def _child(self, data: np.ndarray, parents: Tuple['Tensor', ...],
               backward: Callable[[np.ndarray], None]) -> 'Tensor':
        out = Tensor(data)
        if _RECORDING and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = _unbroadcast(grad, self.data.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self):
        """Populate .grad on every node reachable from this scalar"""
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar, got shape {self.shape}")
        if not self.requires_grad or (self._backward is None and not self._parents):
            raise StateError("no graph recorded for this value; build it inside training()")

        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: ArrayLike) -> 'Tensor':
        other = Tensor.lift(other)

        def _backward(g):
            self._accumulate(g)
            other._accumulate(g)
        return self._child(self.data + other.data, (self, other), _backward)

    __radd__ = __add__

    def __neg__(self) -> 'Tensor':
        return self._child(-self.data, (self,), lambda g: self._accumulate(-g))

    def __sub__(self, other: ArrayLike) -> 'Tensor':
        return self + (-Tensor.lift(other))

    def __rsub__(self, other: ArrayLike) -> 'Tensor':
        return Tensor.lift(other) + (-self)

    def __mul__(self, other: ArrayLike) -> 'Tensor':
        other = Tensor.lift(other)

        def _backward(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)
        return self._child(self.data * other.data, (self, other), _backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> 'Tensor':
        other = Tensor.lift(other)
        out_data = self.data / other.data

        def _backward(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * out_data / other.data)
        return self._child(out_data, (self, other), _backward)

    def __rtruediv__(self, other: ArrayLike) -> 'Tensor':
        return Tensor.lift(other) / self

    def __pow__(self, exponent: float) -> 'Tensor':
        exponent = float(exponent)

        def _backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1.0))
        return self._child(self.data ** exponent, (self,), _backward)

    def __matmul__(self, other: ArrayLike) -> 'Tensor':
        other = Tensor.lift(other)
        if self.data.shape[-1] != other.data.shape[0]:
            raise ShapeError(f"matmul extents {self.shape} @ {other.shape}")

        def _backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                if self.data.ndim == 1:
                    other._accumulate(np.outer(self.data, g))
                else:
                    rows = self.data.reshape(-1, self.data.shape[-1])
                    other._accumulate(rows.T @ g.reshape(-1, g.shape[-1]))
        return self._child(self.data @ other.data, (self, other), _backward)

    def __rmatmul__(self, other: ArrayLike) -> 'Tensor':
        return Tensor.lift(other) @ self

    def __getitem__(self, index) -> 'Tensor':
        def _backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accumulate(full)
        return self._child(self.data[index], (self,), _backward)

    # -- reductions ----------------------------------------------------

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> 'Tensor':
        def _backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape))
        return self._child(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), _backward)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> 'Tensor':
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- elementwise functions -----------------------------------------

    def exp(self) -> 'Tensor':
        out_data = np.exp(self.data)
        return self._child(out_data, (self,), lambda g: self._accumulate(g * out_data))

    def log(self) -> 'Tensor':
        if np.any(self.data <= 0):
            raise NumericError("log of a non-positive entry")
        return self._child(np.log(self.data), (self,), lambda g: self._accumulate(g / self.data))

    def tanh(self) -> 'Tensor':
        out_data = np.tanh(self.data)
        return self._child(out_data, (self,), lambda g: self._accumulate(g * (1.0 - out_data ** 2)))

    def relu(self) -> 'Tensor':
        mask = self.data > 0
        _record_branch(mask)
        return self._child(np.where(mask, self.data, 0.0), (self,), lambda g: self._accumulate(g * mask))

    def sigmoid(self) -> 'Tensor':
        out_data = expit(self.data)
        return self._child(out_data, (self,), lambda g: self._accumulate(g * out_data * (1.0 - out_data)))

    def softplus(self) -> 'Tensor':
        slope = expit(self.data)
        return self._child(np.logaddexp(0.0, self.data), (self,), lambda g: self._accumulate(g * slope))

    def clip(self, low: float, high: float) -> 'Tensor':
        """Clamp into [low, high]; gradient flows only through interior entries"""
        inside = (self.data >= low) & (self.data <= high)
        _record_branch((self.data >= low).astype(np.int8) + (self.data > high))
        return self._child(np.clip(self.data, low, high), (self,), lambda g: self._accumulate(g * inside))

    def clamp_min(self, floor: float) -> 'Tensor':
        above = self.data > floor
        _record_branch(above)
        return self._child(np.where(above, self.data, floor), (self,), lambda g: self._accumulate(g * above))


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def as_tensor(value: ArrayLike) -> Tensor:
    return Tensor.lift(value)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along `axis`, splitting the gradient back to each part"""
    parts = [Tensor.lift(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    edges = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def _backward(g):
        for part, piece in zip(parts, np.split(g, edges, axis=axis)):
            part._accumulate(piece)
    return parts[0]._child(data, tuple(parts), _backward)


def backward(loss: Tensor, params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss for every named parameter (zeros where unreachable)"""
    for p in params.values():
        p.grad = None
    loss.backward()
    return {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()}


# ----------------------------------------------------------------------
# Multi-layer perceptrons
# ----------------------------------------------------------------------

BIAS_SCALE = 0.01


class Activation(Enum):
    """Per-layer nonlinearity"""
    RELU = "relu"
    TANH = "tanh"
    LINEAR = "linear"


@dataclass
class MlpParams:
    """Weights (in x out), biases and activation per layer"""
    weights: List[Tensor]
    biases: List[Tensor]
    activations: List[Activation]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ShapeError("MLP needs matching, non-empty weight/bias/activation lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} input {w.shape[0]} does not chain with {self.weights[i - 1].shape[1]}")
        if self.activations[-1] != Activation.LINEAR:
            raise ShapeError("final MLP layer must be linear")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        named = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"{prefix}.w{i}"] = w
            named[f"{prefix}.b{i}"] = b
        return named


def init_mlp(sizes: Sequence[int], hidden_activation: Activation, rng: np.random.Generator,
             gain: float = 1.0) -> MlpParams:
    """Glorot-normal weights, small normal biases, linear output layer

    Zero biases would park ReLU units fed by zero inputs exactly on the kink,
    where their gradient is zero and they never move.
    """
    weights, biases, activations = [], [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = gain * np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(Tensor(rng.normal(0.0, scale, size=(fan_in, fan_out)), requires_grad=True))
        biases.append(Tensor(rng.normal(0.0, BIAS_SCALE, size=fan_out), requires_grad=True))
        last = i == len(sizes) - 2
        activations.append(Activation.LINEAR if last else hidden_activation)
    return MlpParams(weights, biases, activations)


_ACTIVATIONS = {
    Activation.RELU: Tensor.relu,
    Activation.TANH: Tensor.tanh,
    Activation.LINEAR: lambda h: h,
}


def mlp_forward(x: ArrayLike, p: MlpParams) -> Tensor:
    """Feed-forward pass over the last axis"""
    h = Tensor.lift(x)
    if h.ndim == 0 or h.shape[-1] != p.in_dim:
        raise ShapeError(f"MLP expects last extent {p.in_dim}, got shape {h.shape}")
    for w, b, act in zip(p.weights, p.biases, p.activations):
        h = _ACTIVATIONS[act](h @ w + b)
    return h


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    """Moment accumulators, step counter and hyperparameters"""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: Dict[str, np.ndarray], lr: float = 5e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = {name: np.zeros_like(np.asarray(value, dtype=np.float64)) for name, value in params.items()}
    return AdamState(m=zeros, v={k: z.copy() for k, z in zeros.items()}, t=0,
                     lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched"""
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(value) or state.m[name].shape != g.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {np.shape(value)}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t, lr=state.lr, beta1=state.beta1,
                                 beta2=state.beta2, eps=state.eps)


# ----------------------------------------------------------------------
# Numeric derivatives (test oracles)
# ----------------------------------------------------------------------

def _checked(value, what: str) -> np.ndarray:
    arr = np.asarray(value.data if isinstance(value, Tensor) else value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} returned a non-finite value")
    return arr


def _same_branches(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def _traced(f: Callable[[np.ndarray], float], x: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    with branch_trace() as branches:
        value = float(_checked(f(x), 'f'))
    return value, list(branches)


def finite_diff_grad_smooth(f: Callable[[np.ndarray], float], x: ArrayLike,
                            h: float = 1e-5) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient plus a mask of the entries whose stencil stays on one branch

    An entry is smooth when every relu, clip and clamp_min takes the same branch at
    x - h, x and x + h. Elsewhere the difference straddles a kink and is no oracle.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    _, centre = _traced(f, x)
    grad = np.zeros_like(x)
    smooth = np.ones(x.shape, dtype=bool)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    ok = smooth.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        up, up_branches = _traced(f, x)
        flat[i] = saved - h
        down, down_branches = _traced(f, x)
        flat[i] = saved
        out[i] = (up - down) / (2.0 * h)
        ok[i] = _same_branches(centre, up_branches) and _same_branches(centre, down_branches)
    return grad, smooth


def finite_diff_grad(f: Callable[[np.ndarray], float], x: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function"""
    return finite_diff_grad_smooth(f, x, h)[0]


def numeric_jacobian(f: Callable[[np.ndarray], np.ndarray], x: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian (outputs x inputs) of a vector function"""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64).reshape(-1)
    columns = []
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        up = _checked(f(x + step), 'f').reshape(-1)
        down = _checked(f(x - step), 'f').reshape(-1)
        columns.append((up - down) / (2.0 * h))
    return np.stack(columns, axis=1)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Norm-wise relative discrepancy between two gradient estimates"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)
