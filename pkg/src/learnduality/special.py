"""Leading-order approximation of the integral of exp(z)/z and its oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.integrate import quad

from .errors import DomainError, NumericError, OutOfRegimeError


@dataclass(frozen=True)
class IntegralResult:
    value: float
    abs_err_est: float

    def __post_init__(self):
        if not self.abs_err_est >= 0:
            raise ValueError("error estimate must be non-negative")


def expint_approx(x: float) -> float:
    """``exp(x) / x``, the dominant term of the integral for ``|x| >> 1``."""
    if abs(x) < 1:
        raise OutOfRegimeError(f"approximation needs |x| >= 1, got {x}")
    return math.exp(x) / x


def expint_quadrature(x0: float, x: float, tol: float = 1e-10) -> IntegralResult:
    """Adaptive quadrature of ``exp(z)/z`` from ``x0`` to ``x``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if x0 == x:
        return IntegralResult(0.0, 0.0)
    if min(x0, x) <= 0.0 <= max(x0, x):
        raise DomainError(f"[{x0}, {x}] touches the singularity at 0")
    value, err = quad(lambda z: math.exp(z) / z, x0, x, epsabs=0.0, epsrel=tol, limit=200)
    if err > tol * abs(value):
        raise NumericError(f"quadrature reached only {err:.3g} absolute error")
    return IntegralResult(value, err)


def oracle_lower_limit(x: float) -> float:
    """Lower limit on the far side of ``x`` from the singularity.

    ``x/2`` for positive ``x`` and ``2x`` for negative ``x``; in both cases
    the integrand there is exponentially smaller than at ``x``.
    """
    return x / 2.0 if x > 0 else 2.0 * x


def appendix_rows(xs, tol: float = 1e-12) -> list[dict]:
    """Compare ``exp(x)/x`` with quadrature; bound is ``e / |x|``."""
    rows = []
    for x in xs:
        if abs(x) < 10:
            raise OutOfRegimeError(f"appendix check needs |x| >= 10, got {x}")
        approx = expint_approx(x)
        ref = expint_quadrature(oracle_lower_limit(x), x, tol).value
        rel = abs(approx / ref - 1.0)
        bound = math.e / abs(x)
        rows.append(
            {"x": x, "approx": approx, "quadrature": ref, "rel_err": rel,
             "bound": bound, "ok": rel < bound}
        )
    return rows
