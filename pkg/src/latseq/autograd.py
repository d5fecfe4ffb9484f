"""Minimal dense-tensor engine with reverse-mode gradients.

Tensors wrap double-precision numpy arrays of rank <= 3 (in practice the
model uses scalars, vectors, and matrices). Operations record a tape of
parent links and backward closures; `backward` on a scalar loss walks the
tape once and accumulates gradients additively, so parameters reused at
several sites (embeddings, shared weights) receive summed gradients.

Only the operations this model needs are provided; there is no general
broadcasting beyond row-vector bias addition.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .rng import RandomSource

TRAIN = "train"
INFER = "infer"


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "param_name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 3:
            raise ShapeError(f"tensors support rank <= 3, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.param_name: str | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"


class Parameter:
    """Named trainable tensor; names are unique within a store."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, tensor: Tensor):
        tensor.requires_grad = True
        tensor.param_name = name
        self.name = name
        self.tensor = tensor

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class ParameterStore:
    """Flat registry of a model's parameters, keyed by hierarchical name."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def new(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, Tensor(np.array(data, dtype=np.float64)))
        self._params[name] = p
        return p.tensor

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def __contains__(self, name: str):
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def get(self, name: str) -> Parameter:
        return self._params[name]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.tensor.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.tensor.data.copy() for name, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, arr in state.items():
            t = self._params[name].tensor
            if t.data.shape != arr.shape:
                raise ShapeError(f"parameter {name}: stored shape {arr.shape} != model shape {t.data.shape}")
            t.data = np.array(arr, dtype=np.float64)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def constant(data) -> Tensor:
    return Tensor(data)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise addition; b may be a row vector broadcast over a's rows."""
    if a.data.shape == b.data.shape:
        def backward(g):
            _accum(a, g)
            _accum(b, g)
        return _make(a.data + b.data, (a, b), backward)
    if (a.data.ndim == 2 and b.data.ndim in (1, 2)
            and (b.data.shape == (a.data.shape[1],) or b.data.shape == (1, a.data.shape[1]))):
        def backward(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0).reshape(b.data.shape))
        return _make(a.data + b.data, (a, b), backward)
    raise ShapeError(f"add shape mismatch: {a.data.shape} + {b.data.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} * {b.data.shape}")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accum(x, g * c)

    return _make(x.data * c, (x,), backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.data.shape}")

    def backward(g):
        _accum(x, g.T)

    return _make(x.data.T.copy(), (x,), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_cols of no tensors")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ShapeError(f"concat_cols row mismatch: {[q.data.shape for q in parts]}")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, j0, j1 in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, j0:j1])

    return _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward)


def slice_cols(x: Tensor, j0: int, j1: int) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"slice_cols expects a matrix, got shape {x.data.shape}")

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, j0:j1] = g
            _accum(x, full)

    return _make(x.data[:, j0:j1].copy(), (x,), backward)


def gather_rows(x: Tensor, indices) -> Tensor:
    """Select rows by integer index (embedding lookup); repeated indices
    accumulate gradient additively."""
    idx = np.asarray(indices, dtype=np.int64)
    if x.data.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"gather_rows expects matrix + index vector, got {x.data.shape}, {idx.shape}")

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, idx, g)
            _accum(x, full)

    return _make(x.data[idx], (x,), backward)


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0.0

    def backward(g):
        _accum(x, g * keep)

    return _make(np.where(keep, x.data, 0.0), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.clip(d, 0, None))),
                        np.exp(np.clip(d, None, 0)) / (1.0 + np.exp(np.clip(d, None, 0))))

    def backward(g):
        _accum(x, g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _make(np.asarray(x.data.sum()), (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def backward(g):
        _accum(x, np.full_like(x.data, float(g) / n))

    return _make(np.asarray(x.data.mean()), (x,), backward)


def mean_rows(x: Tensor) -> Tensor:
    """Column means as a 1 x d row (pooling over rows)."""
    if x.data.ndim != 2:
        raise ShapeError(f"mean_rows expects a matrix, got shape {x.data.shape}")
    n = x.data.shape[0]

    def backward(g):
        _accum(x, np.repeat(g / n, n, axis=0))

    return _make(x.data.mean(axis=0, keepdims=True), (x,), backward)


def pick(x: Tensor, row: int, col: int) -> Tensor:
    """Scalar element selection."""
    if x.data.ndim != 2:
        raise ShapeError(f"pick expects a matrix, got shape {x.data.shape}")

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[row, col] = float(g)
            _accum(x, full)

    return _make(np.asarray(x.data[row, col]), (x,), backward)


def masked_softmax_rows(scores: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax of scores (+ additive mask if given).

    -inf entries receive exactly zero weight and exactly zero gradient;
    every row must keep at least one finite entry.
    """
    if mask is not None and np.shape(mask) != scores.data.shape:
        raise ShapeError(
            f"mask shape {np.shape(mask)} does not match scores {scores.data.shape}")
    z = scores.data if mask is None else scores.data + mask
    rowmax = np.max(z, axis=-1, keepdims=True)
    if not np.all(np.isfinite(rowmax)):
        raise ValueError("masked_softmax_rows: a row has no finite entry")
    e = np.exp(z - rowmax)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(scores, out_data * (g - inner))

    return _make(out_data, (scores,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    z = x.data - np.max(x.data, axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out_data = z - lse

    def backward(g):
        _accum(x, g - np.exp(out_data) * g.sum(axis=-1, keepdims=True))

    return _make(out_data, (x,), backward)


LAYER_NORM_EPS = 1e-6


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Per-row normalization over the last dimension, then affine."""
    d = x.data.shape[-1]
    if d < 2:
        raise ShapeError("layer_norm needs at least 2 features per row")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    y = xc * inv
    out_data = y * gain.data + bias.data

    def backward(g):
        gy = g * gain.data
        _accum(gain, (g * y).sum(axis=0).reshape(gain.data.shape))
        _accum(bias, g.sum(axis=0).reshape(bias.data.shape))
        m1 = gy.mean(axis=-1, keepdims=True)
        m2 = (gy * y).mean(axis=-1, keepdims=True)
        _accum(x, (gy - m1 - y * m2) * inv)

    return _make(out_data, (x, gain, bias), backward)


def dropout(x: Tensor, rate: float, mode: str, rng: RandomSource | None = None) -> Tensor:
    """Inverted dropout: surviving entries scaled by 1/(1-rate) in train
    mode, identity in infer mode. Non-finite entries (additive -inf mask
    positions) pass through untouched so dropout can never unmask a
    forbidden attention pair.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == INFER or rate == 0.0:
        return x
    if mode != TRAIN:
        raise ValueError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs a RandomSource")
    keep = rng.uniform(size=x.data.shape) >= rate
    factor = keep / (1.0 - rate)
    finite = np.isfinite(x.data)
    if not finite.all():
        factor = np.where(finite, factor, 0.0)
        out_data = np.where(finite, np.where(finite, x.data, 0.0) * factor, x.data)
    else:
        out_data = x.data * factor

    def backward(g):
        _accum(x, g * factor)

    return _make(out_data, (x,), backward)


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Position-wise two-layer network: max(0, x W1 + b1) W2 + b2."""
    return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2)


def backward(loss: Tensor, params: Iterable[Parameter] | None = None) -> dict[str, Tensor]:
    """Reverse sweep from a scalar loss.

    Returns gradients keyed by parameter name for every parameter that
    contributed to the loss; if `params` is given, non-contributing
    parameters appear with zero gradients. Repeated calls accumulate into
    existing parameter gradients (micro-batching).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    grads: dict[str, Tensor] = {}
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if node.param_name is not None and node.grad is not None:
            grads[node.param_name] = Tensor(node.grad)
    if params is not None:
        for p in params:
            if p.name not in grads:
                grads[p.name] = Tensor(np.zeros_like(p.tensor.data))
    return grads


def glorot(rng: RandomSource, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(size=(fan_in, fan_out), low=-limit, high=limit)


def finite_difference(loss_fn: Callable[[], float], tensor: Tensor, index, h: float = 1e-5) -> float:
    """Central-difference derivative of loss_fn w.r.t. one coordinate."""
    old = tensor.data[index]
    tensor.data[index] = old + h
    fp = loss_fn()
    tensor.data[index] = old - h
    fm = loss_fn()
    tensor.data[index] = old
    return (fp - fm) / (2.0 * h)


def check_gradients(loss_builder: Callable[[], Tensor],
                    store: ParameterStore,
                    rng: RandomSource,
                    n_coords: int = 20,
                    h: float = 1e-5,
                    rtol: float = 1e-4,
                    floor: float = 1e-6) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    `loss_builder` must rebuild the forward graph deterministically on
    every call. Samples n_coords coordinates per parameter; returns the
    max relative error per parameter and raises AssertionError past rtol.
    `floor` bounds the relative-error denominator so that near-zero
    gradients are compared on the scale of finite-difference noise rather
    than their own magnitude.
    """
    store.zero_grads()
    loss = loss_builder()
    grads = backward(loss, params=list(store))
    worst: dict[str, float] = {}

    def scalar_loss():
        return float(loss_builder().data)

    for p in store:
        g = grads[p.name].data
        size = p.tensor.data.size
        flat_choices = rng.integers(0, size, size=min(n_coords, size))
        err = 0.0
        for flat in np.unique(flat_choices):
            index = np.unravel_index(int(flat), p.tensor.data.shape)
            fd = finite_difference(scalar_loss, p.tensor, index, h=h)
            an = g[index]
            err = max(err, abs(an - fd) / max(abs(an), abs(fd), floor))
        worst[p.name] = err
        if err > rtol:
            raise AssertionError(f"gradient check failed for {p.name}: rel error {err:.3e} > {rtol}")
    return worst
