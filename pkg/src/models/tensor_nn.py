"""
Tensor core - Dense numpy tensors with reverse-mode differentiation.

Provides the layers the layout model needs (linear, relu, concatenation,
gathers, elementwise and segment max, softmax cross-entropy), a named
parameter store, finite-difference gradient checking and Adam with
decoupled weight decay.

Arithmetic is 64-bit; checkpoints store 32-bit (see models.checkpoint).
"""

import logging
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InvalidTarget, NonFiniteValue, ShapeMismatch

logger = logging.getLogger(__name__)


class Tensor:
    """
    A value in the computation graph.

    Leaf tensors created with requires_grad=True accumulate gradients across
    backward() calls until zero_grad(); intermediate tensors hold their
    gradient only for the duration of one backward pass.
    """

    def __init__(self, data, requires_grad: bool = False, _children: Tuple['Tensor', ...] = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._prev = _children
        self._backward: Optional[Callable[[], None]] = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        """Propagate d(self)/d(leaf) into every leaf that requires grad."""
        if not self.requires_grad:
            return

        topo: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))

        for node in topo:
            if node._prev and node.requires_grad:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()


def _result(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    return Tensor(data, any(p.requires_grad for p in parents), tuple(parents))


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


# Layers

def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """x @ W + b for x [n, in], W [in, out], b [out]."""
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"linear: input {x.shape} does not fit weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeMismatch(f"linear: bias {b.shape} does not fit weight {W.shape}")

    data = x.data @ W.data
    if b is not None:
        data = data + b.data
    parents = (x, W) if b is None else (x, W, b)
    out = _result(data, parents)

    def _backward():
        g = out.grad
        if x.requires_grad:
            x.grad += g @ W.data.T
        if W.requires_grad:
            W.grad += x.data.T @ g
        if b is not None and b.requires_grad:
            b.grad += g.sum(axis=0)

    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = _result(np.where(mask, x.data, 0.0), (x,))

    def _backward():
        if x.requires_grad:
            x.grad += out.grad * mask

    out._backward = _backward
    return out


def concat_cols(*xs: Union[Tensor, Sequence[Tensor]]) -> Tensor:
    """Row-wise concatenation of [n, d_k] tensors into [n, sum d_k]."""
    if len(xs) == 1 and not isinstance(xs[0], Tensor):
        xs = tuple(xs[0])
    rows = {x.shape[0] for x in xs}
    if len(rows) != 1:
        raise ShapeMismatch(f"concat_cols: row counts differ {sorted(rows)}")

    widths = [x.shape[1] for x in xs]
    out = _result(np.concatenate([x.data for x in xs], axis=1), xs)
    bounds = np.cumsum([0] + widths)

    def _backward():
        for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if x.requires_grad:
                x.grad += out.grad[:, lo:hi]

    out._backward = _backward
    return out


def rowwise_max(xs: Sequence[Tensor]) -> Tensor:
    """Elementwise max of same-shape tensors; each coordinate's gradient goes to the first maximal operand."""
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ShapeMismatch(f"rowwise_max: shapes differ {sorted(shapes)}")

    stacked = np.stack([x.data for x in xs])
    winner = stacked.argmax(axis=0)
    out = _result(stacked.max(axis=0), tuple(xs))

    def _backward():
        for k, x in enumerate(xs):
            if x.requires_grad:
                x.grad += out.grad * (winner == k)

    out._backward = _backward
    return out


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = _result(x.data[idx], (x,))

    def _backward():
        if x.requires_grad:
            np.add.at(x.grad, idx, out.grad)

    out._backward = _backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    out = _result(a.data + b.data, (a, b))

    def _backward():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            b.grad += out.grad

    out._backward = _backward
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")
    out = _result(a.data - b.data, (a, b))

    def _backward():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            b.grad -= out.grad

    out._backward = _backward
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = _result(a.data * s, (a,))

    def _backward():
        if a.requires_grad:
            a.grad += out.grad * s

    out._backward = _backward
    return out


def segment_max(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """
    Per-segment elementwise max of the rows of x.

    Rows are assigned to segments by `segments`; every segment must own at
    least one row. The gradient of each output coordinate goes to the first
    row (in row order) that attains the max.
    """
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"segment_max: {segments.shape[0]} segment ids for {x.shape[0]} rows")

    n_rows, width = x.shape
    best = np.full((n_segments, width), -np.inf)
    np.maximum.at(best, segments, x.data)
    if np.isinf(best).any():
        raise ShapeMismatch("segment_max: a segment owns no rows")

    is_max = x.data == best[segments]
    candidate = np.where(is_max, np.arange(n_rows)[:, None], n_rows)
    first = np.full((n_segments, width), n_rows)
    np.minimum.at(first, segments, candidate)
    cols = np.broadcast_to(np.arange(width), first.shape)

    out = _result(best, (x,))

    def _backward():
        if x.requires_grad:
            np.add.at(x.grad, (first.ravel(), cols.ravel()), out.grad.ravel())

    out._backward = _backward
    return out


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray, weights: Optional[np.ndarray] = None) -> Tensor:
    """
    Weighted mean cross-entropy of softmax(logits) against integer targets.

    Args:
        logits: [n, c] scores
        targets: [n] class indices in [0, c)
        weights: optional [n] non-negative sample weights (default 1)

    Returns:
        Scalar tensor
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatch(f"cross-entropy: logits {logits.shape} vs targets {targets.shape}")
    n, c = logits.shape
    if n and (targets.min() < 0 or targets.max() >= c):
        raise InvalidTarget(f"targets must lie in [0, {c})")

    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if n == 0 or total <= 0:
        return _result(np.asarray(0.0), (logits,))

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_z
    rows = np.arange(n)
    loss = -(w * log_probs[rows, targets]).sum() / total
    out = _result(np.asarray(loss), (logits,))

    def _backward():
        if logits.requires_grad:
            g = np.exp(log_probs)
            g[rows, targets] -= 1.0
            logits.grad += out.grad * g * (w / total)[:, None]

    out._backward = _backward
    return out


# Parameters

class ParamStore:
    """
    Ordered name -> Tensor map of trainable parameters.

    Each parameter is initialized from its own generator seeded with
    (seed, crc32(name)), so values depend only on the seed and the name.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._params: 'OrderedDict[str, Tensor]' = OrderedDict()

    def add(self, name: str, shape: Tuple[int, ...], init: str = 'glorot') -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        if init == 'zeros':
            data = np.zeros(shape)
        elif init == 'glorot':
            fan_in, fan_out = shape[0], shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            rng = np.random.default_rng([self.seed, zlib.crc32(name.encode('utf-8'))])
            data = rng.uniform(-limit, limit, size=shape)
        else:
            raise ValueError(f"unknown init: {init}")
        tensor = Tensor(data, requires_grad=True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> List[str]:
        return list(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def arrays(self) -> Dict[str, np.ndarray]:
        return OrderedDict((k, p.data) for k, p in self._params.items())

    def grads(self) -> Dict[str, np.ndarray]:
        return OrderedDict((k, p.grad) for k, p in self._params.items())

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        """Replace parameter values in place, checking names and shapes."""
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ShapeMismatch(f"parameter names differ: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in self._params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeMismatch(f"parameter {name}: stored {value.shape}, expected {p.shape}")
            p.data = value.copy()
            p.zero_grad()


# Gradient check

def grad_check(f: Callable[[], Tensor], params: Union[ParamStore, Dict[str, Tensor], Sequence[Tensor]],
               eps: float = 1e-5, max_coords: int = 20, seed: int = 0) -> float:
    """
    Compare reverse-mode gradients with central finite differences.

    Args:
        f: Rebuilds the graph and returns a scalar tensor
        params: Leaf tensors to check
        eps: Finite-difference step
        max_coords: Coordinates sampled per tensor (all when smaller)
        seed: Sampling seed

    Returns:
        max |analytic - numeric| / max(1, |analytic|) over sampled coordinates
    """
    if isinstance(params, (ParamStore, dict)):
        tensors = [t for _, t in params.items()]
    else:
        tensors = list(params)

    for t in tensors:
        t.zero_grad()
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteValue("objective is not finite")
    out.backward()
    analytic = [t.grad.copy() for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, g in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        size = flat.size
        coords = np.arange(size) if size <= max_coords else rng.choice(size, max_coords, replace=False)
        for idx in coords:
            original = flat[idx]
            flat[idx] = original + eps
            plus = float(f().data)
            flat[idx] = original - eps
            minus = float(f().data)
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            a = float(g.reshape(-1)[idx])
            if not (np.isfinite(numeric) and np.isfinite(a)):
                raise NonFiniteValue(f"non-finite gradient at coordinate {idx}")
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


# Optimizer

@dataclass
class AdamState:
    """Adam hyperparameters and moments; weight decay is decoupled."""

    lr: float = 1e-4
    beta1: float = 0.937
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.005
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparameters(self) -> Dict[str, float]:
        return {
            'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2,
            'eps': self.eps, 'weight_decay': self.weight_decay,
        }


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: Optional[float] = None):
    """
    One Adam update in place.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  bias-corrected m_hat, v_hat;
    theta <- theta - lr m_hat / (sqrt(v_hat) + eps);  theta <- theta - lr wd theta
    """
    lr = state.lr if lr is None else lr
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t

    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeMismatch(f"adam: gradient {g.shape} does not match parameter {name} {theta.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        m_hat = m / bc1
        v_hat = v / bc2
        theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        theta -= lr * state.weight_decay * theta
