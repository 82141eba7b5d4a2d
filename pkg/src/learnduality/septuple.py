"""Small dense neural network: state, trainable map, activation and SGD.

A network is a vector of ``N`` neuron values split into boundary (input)
and bulk neurons by a boolean mask. Weights and biases are assembled from a
single trainable vector ``q`` through 0/1 placement tensors, the activation
map updates bulk neurons only, and learning is plain stochastic gradient
descent with mini-batch size one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import NumericError, StructuralError

# Cross-entropy argument clamp; keeps log finite where f hits 0 or 1 exactly.
CE_CLAMP = 1e-12


class ActivationKind(enum.Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"
    PIECEWISE_UNIT = "piecewise_unit"
    IDENTITY = "identity"

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if self is ActivationKind.SIGMOID:
            return expit(y)
        if self is ActivationKind.RELU:
            return np.maximum(y, 0.0)
        if self is ActivationKind.PIECEWISE_UNIT:
            return np.where((y > 0.0) & (y < 1.0), y, 0.0)
        return y.copy()

    def complement(self, y):
        """``1 - f(y)`` without cancellation for the sigmoid."""
        y = np.asarray(y, dtype=float)
        if self is ActivationKind.SIGMOID:
            return expit(-y)
        return 1.0 - self.value(y)

    def derivative(self, y):
        # relu and piecewise use the one-sided derivative inside the active
        # region and 0 outside; the kink itself counts as outside.
        y = np.asarray(y, dtype=float)
        if self is ActivationKind.SIGMOID:
            return expit(y) * expit(-y)
        if self is ActivationKind.RELU:
            return (y > 0.0).astype(float)
        if self is ActivationKind.PIECEWISE_UNIT:
            return ((y > 0.0) & (y < 1.0)).astype(float)
        return np.ones_like(y)

    def second_derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self is ActivationKind.SIGMOID:
            f, fc = expit(y), expit(-y)
            return f * fc * (fc - f)
        return np.zeros_like(y)

    @property
    def decision_threshold(self) -> float:
        """Pre-activation above which the output reads as the '+' class."""
        return 0.0 if self is ActivationKind.SIGMOID else 0.5


def _residual(f, fc, x2):
    # f - x2, taking the complement when the target is 1 so that tiny gaps
    # near saturation survive.
    return np.where(np.asarray(x2) == 1.0, -fc, f - x2)


@dataclass(frozen=True)
class LossKind:
    """Loss ``H(f, x2)`` of the network output against the target label.

    ``tag`` is one of ``mean_squared``, ``cross_entropy`` or ``power``;
    ``n`` is the exponent of the power loss and ignored otherwise.
    """

    tag: str
    n: int = 2

    def __post_init__(self):
        if self.tag not in ("mean_squared", "cross_entropy", "power"):
            raise ValueError(f"unknown loss {self.tag!r}")
        if self.tag == "power" and (int(self.n) != self.n or self.n < 1):
            raise ValueError("power loss needs a positive integer exponent")

    def value(self, f, x2, fc=None):
        f = np.asarray(f, dtype=float)
        fc = 1.0 - f if fc is None else np.asarray(fc, dtype=float)
        if self.tag == "cross_entropy":
            fk = np.clip(f, CE_CLAMP, 1.0 - CE_CLAMP)
            fck = np.clip(fc, CE_CLAMP, 1.0 - CE_CLAMP)
            return -(1.0 - x2) * np.log(fck) - x2 * np.log(fk)
        r = _residual(f, fc, x2)
        return r**2 if self.tag == "mean_squared" else r**self.n

    def d_f(self, f, x2, fc=None):
        """Derivative of the loss with respect to the network output."""
        f = np.asarray(f, dtype=float)
        fc = 1.0 - f if fc is None else np.asarray(fc, dtype=float)
        if self.tag == "cross_entropy":
            fk = np.clip(f, CE_CLAMP, 1.0 - CE_CLAMP)
            fck = np.clip(fc, CE_CLAMP, 1.0 - CE_CLAMP)
            return -x2 / fk + (1.0 - x2) / fck
        r = _residual(f, fc, x2)
        if self.tag == "mean_squared":
            return 2.0 * r
        return self.n * r ** (self.n - 1)

    def d2_f(self, f, x2, fc=None):
        f = np.asarray(f, dtype=float)
        fc = 1.0 - f if fc is None else np.asarray(fc, dtype=float)
        if self.tag == "cross_entropy":
            fk = np.clip(f, CE_CLAMP, 1.0 - CE_CLAMP)
            fck = np.clip(fc, CE_CLAMP, 1.0 - CE_CLAMP)
            return x2 / fk**2 + (1.0 - x2) / fck**2
        if self.tag == "mean_squared":
            return np.full_like(f, 2.0)
        if self.n == 1:
            return np.zeros_like(f)
        r = _residual(f, fc, x2)
        return self.n * (self.n - 1) * r ** (self.n - 2)


@dataclass
class NetworkState:
    x: np.ndarray
    boundary_mask: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.boundary_mask = np.asarray(self.boundary_mask, dtype=bool)
        if self.x.ndim != 1 or self.x.shape != self.boundary_mask.shape:
            raise StructuralError("x and boundary_mask must be 1-d of equal length")
        if self.x.size < 2:
            raise StructuralError("a network needs at least two neurons")
        if self.boundary_mask.all() or not self.boundary_mask.any():
            raise StructuralError("need at least one boundary and one bulk neuron")

    @property
    def n(self) -> int:
        return self.x.size


@dataclass
class TrainableMap:
    """Placement of trainable components into weights and biases.

    ``weight_entries`` holds triples ``(i, j, l)`` meaning ``w[i, j]``
    receives ``q[l]``; ``bias_entries`` holds pairs ``(i, l)`` meaning
    ``b[i]`` receives ``q[l]``. Repeating ``l`` shares a parameter.
    """

    n_neurons: int
    weight_entries: Sequence[tuple[int, int, int]]
    bias_entries: Sequence[tuple[int, int]]
    q: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        k = self.q.size
        n = self.n_neurons
        used = set()
        for i, j, l in self.weight_entries:
            if not (0 <= i < n and 0 <= j < n and 0 <= l < k):
                raise StructuralError(f"weight entry {(i, j, l)} out of bounds")
            used.add(l)
        for i, l in self.bias_entries:
            if not (0 <= i < n and 0 <= l < k):
                raise StructuralError(f"bias entry {(i, l)} out of bounds")
            used.add(l)
        if used != set(range(k)):
            raise StructuralError("every q component must be referenced")

    def with_q(self, q) -> "TrainableMap":
        return TrainableMap(self.n_neurons, self.weight_entries, self.bias_entries, q)


def toy_map(w: float = 0.0, b: float = 0.0) -> TrainableMap:
    """Two-neuron map: ``w[1, 0] <- q[0]`` and ``b[1] <- q[1]``."""
    return TrainableMap(2, [(1, 0, 0)], [(1, 1)], np.array([w, b], dtype=float))


def assemble(tmap: TrainableMap) -> tuple[np.ndarray, np.ndarray]:
    n = tmap.n_neurons
    w = np.zeros((n, n))
    b = np.zeros(n)
    q = tmap.q
    for i, j, l in tmap.weight_entries:
        w[i, j] += q[l]
    for i, l in tmap.bias_entries:
        b[i] += q[l]
    return w, b


def _check_dims(state: NetworkState, w, b):
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    if w.shape != (state.n, state.n) or b.shape != (state.n,):
        raise StructuralError(
            f"w {w.shape} / b {b.shape} do not match {state.n} neurons"
        )
    return w, b


def activation_step(state: NetworkState, w, b, f: ActivationKind) -> NetworkState:
    w, b = _check_dims(state, w, b)
    new_bulk = f.value(w @ state.x + b)
    x = np.where(state.boundary_mask, state.x, new_bulk)
    return NetworkState(x, state.boundary_mask.copy())


def activation_pass(
    state: NetworkState,
    w,
    b,
    f: ActivationKind,
    L: int,
    bulk_init: float | None = 0.0,
) -> NetworkState:
    """Apply ``L`` activation steps with the boundary held fixed.

    Bulk neurons are first reset to ``bulk_init``; pass ``None`` to keep
    whatever bulk values ``state`` carries.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    w, b = _check_dims(state, w, b)
    if bulk_init is not None:
        x = np.where(state.boundary_mask, state.x, float(bulk_init))
        state = NetworkState(x, state.boundary_mask.copy())
    for _ in range(L):
        state = activation_step(state, w, b, f)
    return state


def numeric_gradient(
    loss_at: Callable[[np.ndarray], float], q, eps: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of ``loss_at`` at ``q``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    q = np.asarray(q, dtype=float)
    grad = np.zeros_like(q)
    e = np.zeros_like(q)
    for l in range(q.size):
        e[l] = eps
        hi = float(loss_at(q + e))
        lo = float(loss_at(q - e))
        e[l] = 0.0
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite loss near q={q.tolist()} along {l}")
        grad[l] = (hi - lo) / (2.0 * eps)
    return grad


def sgd_step(q, grad, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError("learning rate must be positive")
    return np.asarray(q, dtype=float) - gamma * np.asarray(grad, dtype=float)
