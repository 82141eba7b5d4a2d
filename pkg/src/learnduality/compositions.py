"""Activation/loss pairs ``H(f(y))`` and the catalogue of studied pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .septuple import CE_CLAMP, ActivationKind, LossKind


@dataclass(frozen=True)
class Composition:
    id: str
    activation: ActivationKind
    loss: LossKind
    predicted_k_minus: Optional[float] = None
    predicted_k_plus: Optional[float] = None

    def value(self, y, x2):
        """Loss as a function of the pre-activation, ``H(f(y) | x2)``."""
        a = self.activation
        return self.loss.value(a.value(y), x2, a.complement(y))

    def dH_dy(self, y, x2):
        a = self.activation
        f, fc = a.value(y), a.complement(y)
        return a.derivative(y) * self.loss.d_f(f, x2, fc)

    def d2H_dy2(self, y, x2):
        a = self.activation
        f, fc = a.value(y), a.complement(y)
        fp = a.derivative(y)
        return (
            a.second_derivative(y) * self.loss.d_f(f, x2, fc)
            + fp * fp * self.loss.d2_f(f, x2, fc)
        )

    def predicted_k(self, label: int) -> Optional[float]:
        return self.predicted_k_plus if label == 1 else self.predicted_k_minus


SIGMOID_MSE = Composition(
    "sigmoid_mse", ActivationKind.SIGMOID, LossKind("mean_squared"), 1.0, 1.0
)
SIGMOID_CE = Composition(
    "sigmoid_ce", ActivationKind.SIGMOID, LossKind("cross_entropy"), 1.0, 1.0
)
RELU_P2 = Composition("relu_p2", ActivationKind.RELU, LossKind("power", 2), 0.0, 0.0)
RELU_P4 = Composition(
    "relu_p4", ActivationKind.RELU, LossKind("power", 4), 2.0 / 3.0, 2.0 / 3.0
)
PIECEWISE_CE = Composition(
    "piecewise_ce", ActivationKind.PIECEWISE_UNIT, LossKind("cross_entropy"), 2.0, 2.0
)

CATALOGUE: dict[str, Composition] = {
    c.id: c for c in (SIGMOID_MSE, SIGMOID_CE, RELU_P2, RELU_P4, PIECEWISE_CE)
}


def get_composition(comp_id: str) -> Composition:
    try:
        return CATALOGUE[comp_id]
    except KeyError:
        raise KeyError(
            f"unknown composition {comp_id!r}; choose from {sorted(CATALOGUE)}"
        ) from None


# --- scalar fast path for the sequential SGD loop -------------------------


def _scalar_activation(kind: ActivationKind) -> Callable[[float], tuple]:
    if kind is ActivationKind.SIGMOID:

        def act(y):
            if y >= 0.0:
                e = math.exp(-y)
                return 1.0 / (1.0 + e), e / (1.0 + e)
            e = math.exp(y)
            return e / (1.0 + e), 1.0 / (1.0 + e)

        def sig(y):
            f, fc = act(y)
            return f, fc, f * fc

        return sig
    if kind is ActivationKind.RELU:
        return lambda y: (y, 1.0 - y, 1.0) if y > 0.0 else (0.0, 1.0, 0.0)
    if kind is ActivationKind.PIECEWISE_UNIT:
        return lambda y: (y, 1.0 - y, 1.0) if 0.0 < y < 1.0 else (0.0, 1.0, 0.0)
    return lambda y: (y, 1.0 - y, 1.0)


def _scalar_loss_df(loss: LossKind) -> Callable[[float, float, float], float]:
    lo, hi = CE_CLAMP, 1.0 - CE_CLAMP
    if loss.tag == "cross_entropy":

        def d_f(f, fc, x2):
            fk = min(max(f, lo), hi)
            fck = min(max(fc, lo), hi)
            return -x2 / fk + (1.0 - x2) / fck

        return d_f
    n = 2 if loss.tag == "mean_squared" else loss.n

    def d_f(f, fc, x2):
        r = -fc if x2 == 1.0 else f - x2
        return n * r ** (n - 1)

    return d_f


def scalar_dH_dy(comp: Composition) -> Callable[[float, float], float]:
    """Plain-float version of :meth:`Composition.dH_dy` for tight loops."""
    act = _scalar_activation(comp.activation)
    d_f = _scalar_loss_df(comp.loss)

    def dH_dy(y, x2):
        f, fc, fp = act(y)
        if fp == 0.0:
            return 0.0
        return fp * d_f(f, fc, x2)

    return dH_dy

