"""Dataset-learning duality for the two-neuron toy model.

Per class, jumps ``(dw, db)`` are rotated by an angle ``theta`` so that the
first rotated component ``q' = cos(theta) dw + sin(theta) db`` carries the
fluctuation. Since ``dw = x1 * db`` the rotated jump is a function of the
input alone,

    q'(x1) = -gamma * (x1 cos(theta) + sin(theta)) * dH/dy(w x1 + b),

and its density follows from the input Gaussian by a change of variables
on a monotone branch of that map.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .compositions import Composition
from .errors import (
    EstimationError,
    InsufficientDataError,
    MultiBranchError,
    NumericError,
    SingularityError,
)
from .septuple import ActivationKind
from .toy import ClassSpec, JumpSamples, ToyState

log = logging.getLogger(__name__)

BRACKET_SIGMAS = 8.0
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class Rotation:
    theta: float

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class ThetaEstimate:
    rotation: Rotation
    eigen_ratio: float
    eigenvalues: tuple[float, float]
    n_used: int
    cross_check_theta: float


def _fold(theta: float) -> float:
    # Eigenvectors are defined up to sign; keep theta in (-pi/2, pi/2].
    if theta > math.pi / 2:
        theta -= math.pi
    elif theta <= -math.pi / 2:
        theta += math.pi
    return theta


def estimate_theta(samples, min_samples: int = 1000) -> ThetaEstimate:
    """Principal axis of the jump covariance as a rotation angle.

    ``samples`` is a :class:`JumpSamples` or a pair of ``(dw, db)`` arrays.
    Exact-zero jumps are ignored.
    """
    if isinstance(samples, JumpSamples):
        dw, db, x1 = samples.dw, samples.db, samples.x1
    else:
        dw, db = (np.asarray(a, dtype=float) for a in samples)
        x1 = None
    keep = (dw != 0.0) | (db != 0.0)
    n = int(np.count_nonzero(keep))
    if n == 0:
        raise EstimationError("all jumps are zero; no fluctuation direction")
    if n < min_samples:
        raise EstimationError(f"need {min_samples} nonzero jumps, have {n}")
    cov = np.cov(np.vstack([dw[keep], db[keep]]))
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, -1]
    theta = _fold(math.atan2(v[1], v[0]))
    lam_small, lam_big = float(evals[0]), float(evals[1])
    ratio = max(lam_small, 0.0) / lam_big if lam_big > 0 else 0.0
    if x1 is not None:
        cross = _fold(math.atan2(1.0, float(np.mean(x1[keep]))))
    else:
        cross = float("nan")
    log.info(
        "theta=%.6f (cross-check from mean input %.6f), eigen ratio %.3g",
        theta, cross, ratio,
    )
    return ThetaEstimate(Rotation(theta), ratio, (lam_small, lam_big), n, cross)


def rotate(dw, db, rot: Rotation):
    c, s = math.cos(rot.theta), math.sin(rot.theta)
    dw = np.asarray(dw, dtype=float)
    db = np.asarray(db, dtype=float)
    q1 = c * dw + s * db
    q2 = -s * dw + c * db
    if q1.ndim == 0:
        return float(q1), float(q2)
    return q1, q2


def composition_value(y, comp: Composition, x2):
    return comp.value(y, x2)


def scaling_form(y, comp: Composition, x2):
    """Closed-form ``H(f(y))`` on the branch where the scaling law lives.

    Sigmoid pairs give their exponential asymptotes (valid for ``y < 0`` on
    the '-' class and ``y > 0`` on the '+' class). ReLU with a power loss and
    the piecewise-unit activation with cross-entropy are exact on their
    active regions.
    """
    y = np.asarray(y, dtype=float)
    act, loss = comp.activation, comp.loss
    if act is ActivationKind.SIGMOID and loss.tag == "mean_squared":
        return np.exp(2.0 * y) if x2 == 0 else np.exp(-2.0 * y)
    if act is ActivationKind.SIGMOID and loss.tag == "cross_entropy":
        return np.exp(y) if x2 == 0 else np.exp(-y)
    if act is ActivationKind.RELU and loss.tag in ("power", "mean_squared"):
        n = 2 if loss.tag == "mean_squared" else loss.n
        return (y - x2) ** n
    if act is ActivationKind.PIECEWISE_UNIT and loss.tag == "cross_entropy":
        return -np.log(1.0 - y) if x2 == 0 else -np.log(y)
    raise ValueError(f"no scaling form for {comp.id}")


def duality_map(x1, comp: Composition, rot: Rotation, state: ToyState, x2):
    """Rotated potential jump ``q'`` as a function of the input."""
    x1 = np.asarray(x1, dtype=float)
    c, s = math.cos(rot.theta), math.sin(rot.theta)
    return -state.gamma * (x1 * c + s) * comp.dH_dy(state.w * x1 + state.b, x2)


def toy_jacobian(x1, comp: Composition, rot: Rotation, state: ToyState, x2):
    """Total derivative ``d q' / d x1``, including the chain through ``y``."""
    x1 = np.asarray(x1, dtype=float)
    c, s = math.cos(rot.theta), math.sin(rot.theta)
    y = state.w * x1 + state.b
    jac = -state.gamma * (
        c * comp.dH_dy(y, x2) + (x1 * c + s) * state.w * comp.d2H_dy2(y, x2)
    )
    if not np.all(np.isfinite(jac)):
        raise NumericError(f"non-finite Jacobian for {comp.id} at x1={x1}")
    return float(jac) if jac.ndim == 0 else jac


def fixed_y_jacobian(x1, comp: Composition, rot: Rotation, state: ToyState, x2):
    """``-gamma cos(theta) dH/dy``: the derivative with ``dH/dy`` held fixed.

    This drops the chain term through ``y``; it vanishes identically at
    ``theta = pi/2`` and is kept for comparison with the total derivative.
    """
    y = state.w * np.asarray(x1, dtype=float) + state.b
    jac = -state.gamma * math.cos(rot.theta) * np.asarray(comp.dH_dy(y, x2))
    if not np.all(np.isfinite(jac)):
        raise NumericError(f"non-finite Jacobian for {comp.id} at x1={x1}")
    return float(jac) if jac.ndim == 0 else jac


@dataclass(frozen=True)
class Branch:
    """Input interval on which ``q'(x1)`` is strictly monotone."""

    x_lo: float
    x_hi: float
    increasing: bool
    mass: float

    def image(self, comp, rot, state, x2) -> tuple[float, float]:
        a, b = duality_map(np.array([self.x_lo, self.x_hi]), comp, rot, state, x2)
        return (float(min(a, b)), float(max(a, b)))


def _gauss_mass(spec: ClassSpec, lo, hi):
    return float(ndtr((hi - spec.mean) / spec.std) - ndtr((lo - spec.mean) / spec.std))


def monotone_branches(
    comp, rot, state, spec: ClassSpec, n_grid: int = 200_001
) -> list[Branch]:
    """Maximal runs of constant, nonzero Jacobian sign within mean +- 8 std."""
    x = np.linspace(
        spec.mean - BRACKET_SIGMAS * spec.std,
        spec.mean + BRACKET_SIGMAS * spec.std,
        n_grid,
    )
    sign = np.sign(toy_jacobian(x, comp, rot, state, spec.label))
    edges = np.flatnonzero(np.diff(sign)) + 1
    starts = np.r_[0, edges]
    stops = np.r_[edges, n_grid]
    out = []
    for i, j in zip(starts, stops):
        if sign[i] == 0 or j - i < 2:
            continue
        lo, hi = x[i], x[j - 1]
        out.append(Branch(float(lo), float(hi), bool(sign[i] > 0), _gauss_mass(spec, lo, hi)))
    return out


def principal_branch(comp, rot, state, spec: ClassSpec) -> Branch:
    branches = monotone_branches(comp, rot, state, spec)
    if not branches:
        raise MultiBranchError(f"{comp.id}: no monotone branch with nonzero jumps")
    return max(branches, key=lambda br: br.mass)


def check_monotone(branch: Branch, comp, rot, state, spec, n_grid: int = 20_001):
    x = np.linspace(branch.x_lo, branch.x_hi, n_grid)
    sign = np.sign(toy_jacobian(x, comp, rot, state, spec.label))
    want = 1.0 if branch.increasing else -1.0
    if not np.all(sign == want):
        raise MultiBranchError(
            f"{comp.id}: map is not monotone on [{branch.x_lo}, {branch.x_hi}]"
        )


def invert_on_branch(q, branch: Branch, comp, rot, state, x2) -> np.ndarray:
    """Bisection for ``x1`` with ``q'(x1) = q`` inside the branch.

    Targets outside the branch image come back as NaN.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    qmin, qmax = branch.image(comp, rot, state, x2)
    inside = (q >= qmin) & (q <= qmax)
    lo = np.full(q.shape, branch.x_lo)
    hi = np.full(q.shape, branch.x_hi)
    width = branch.x_hi - branch.x_lo
    n_iter = max(1, math.ceil(math.log2(max(width, ROOT_TOL) / ROOT_TOL)) + 1)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        qm = duality_map(mid, comp, rot, state, x2)
        below = qm < q if branch.increasing else qm > q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    return np.where(inside, x, np.nan)


def _resolve_branch(branch, comp, rot, state, spec):
    if branch is None:
        return principal_branch(comp, rot, state, spec)
    check_monotone(branch, comp, rot, state, spec)
    return branch


def predicted_density(
    dq_grid,
    comp: Composition,
    rot: Rotation,
    state: ToyState,
    spec: ClassSpec,
    branch: Optional[Branch] = None,
) -> np.ndarray:
    """Density of ``q'`` from the input Gaussian through the Jacobian.

    ``p(q') = p_x1(x1(q')) / |dq'/dx1|`` on a single monotone branch (the
    highest-mass one unless given). Grid points outside the branch image get
    density zero. A supplied branch that is not monotone raises
    :class:`MultiBranchError`.
    """
    br = _resolve_branch(branch, comp, rot, state, spec)
    x1 = invert_on_branch(dq_grid, br, comp, rot, state, spec.label)
    ok = np.isfinite(x1)
    out = np.zeros(x1.shape)
    if ok.any():
        xs = x1[ok]
        z = (xs - spec.mean) / spec.std
        pdf = np.exp(-0.5 * z * z) / (spec.std * math.sqrt(2.0 * math.pi))
        jac = np.abs(toy_jacobian(xs, comp, rot, state, spec.label))
        out[ok] = pdf / jac
    return out


def jacobian_contribution(dq_grid, comp, rot, state, spec, branch=None) -> np.ndarray:
    """``|dq'/dx1|^-1`` along the branch; NaN outside its image."""
    br = _resolve_branch(branch, comp, rot, state, spec)
    x1 = invert_on_branch(dq_grid, br, comp, rot, state, spec.label)
    out = np.full(x1.shape, np.nan)
    ok = np.isfinite(x1)
    out[ok] = 1.0 / np.abs(toy_jacobian(x1[ok], comp, rot, state, spec.label))
    return out


def magnitude_density(a, comp, rot, state, spec, branch=None) -> np.ndarray:
    """Density of ``|q'|`` on the branch: ``p(a) + p(-a)``."""
    br = _resolve_branch(branch, comp, rot, state, spec)
    a = np.asarray(a, dtype=float)
    return predicted_density(a, comp, rot, state, spec, br) + predicted_density(
        -a, comp, rot, state, spec, br
    )


def jacobian_dominated_window(
    comp: Composition,
    rot: Rotation,
    state: ToyState,
    spec: ClassSpec,
    tol: float = 0.1,
    support: Optional[tuple[float, float]] = None,
    branch: Optional[Branch] = None,
    n_grid: int = 200_001,
) -> tuple[float, float]:
    """Range of ``|q'|`` where the input density is locally scale-free.

    On the branch, ``log p(|q'|) = log p_x1(x1) - log|dq'/dx1|``. The first
    term contributes a local log-log slope ``d log p_x1 / d log|q'|``; this
    returns the widest contiguous range (in decades, after clipping to
    ``support``) where that slope stays within ``tol``, so that the shape of
    the distribution there is set by the Jacobian alone.
    """
    br = _resolve_branch(branch, comp, rot, state, spec)
    x = np.linspace(br.x_lo, br.x_hi, n_grid)
    q = np.abs(duality_map(x, comp, rot, state, spec.label))
    jac = toy_jacobian(x, comp, rot, state, spec.label)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = -(x - spec.mean) / spec.std**2 * q / np.abs(jac)
    good = (np.abs(slope) <= tol) & (jac != 0.0)
    flips = np.flatnonzero(np.diff(np.r_[0, good.astype(np.int8), 0]))
    lo_s, hi_s = support if support is not None else (0.0, np.inf)
    best = None
    for i, j in zip(flips[::2], flips[1::2]):
        seg = q[i:j]
        seg = seg[seg > 0]
        if seg.size == 0:
            continue
        lo, hi = max(seg.min(), lo_s), min(seg.max(), hi_s)
        if hi <= lo:
            continue
        span = math.log10(hi / lo)
        if best is None or span > best[0]:
            best = (span, lo, hi)
    if best is None:
        raise InsufficientDataError(
            f"{comp.id}/{spec.name}: no Jacobian-dominated range within support"
        )
    return float(best[1]), float(best[2])


def ks_distance(
    dq,
    x1,
    comp: Composition,
    rot: Rotation,
    state: ToyState,
    spec: ClassSpec,
    window: tuple[float, float],
    branch: Optional[Branch] = None,
    n_grid: int = 4001,
) -> tuple[float, int]:
    """KS distance between empirical and predicted laws of ``|q'|``.

    Both are conditioned on the branch (by input) and on ``window``. The
    predicted CDF integrates :func:`magnitude_density` on a log grid.
    Returns ``(distance, n_samples_used)``.
    """
    br = _resolve_branch(branch, comp, rot, state, spec)
    lo, hi = window
    a = np.abs(np.asarray(dq, dtype=float))
    x1 = np.asarray(x1, dtype=float)
    keep = (x1 >= br.x_lo) & (x1 <= br.x_hi) & (a >= lo) & (a <= hi)
    a = np.sort(a[keep])
    n = a.size
    if n == 0:
        raise InsufficientDataError("no samples on the branch inside the window")
    grid = np.logspace(math.log10(lo), math.log10(hi), n_grid)
    dens = magnitude_density(grid, comp, rot, state, spec, br)
    integrand = grid * dens  # d|q'| = |q'| d ln|q'|
    steps = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(np.log(grid))
    cdf = np.r_[0.0, np.cumsum(steps)]
    if cdf[-1] <= 0:
        raise InsufficientDataError("predicted density has no mass in the window")
    cdf /= cdf[-1]
    f_pred = np.interp(np.log(a), np.log(grid), cdf)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - f_pred), np.max(f_pred - (i - 1) / n))
    return float(d), int(n)


def predicted_exponent(comp: Composition):
    """Predicted ``(k_minus, k_plus)``, or ``None`` when no prediction exists."""
    if comp.predicted_k_minus is not None and comp.predicted_k_plus is not None:
        return comp.predicted_k_minus, comp.predicted_k_plus
    if comp.activation is ActivationKind.RELU and comp.loss.tag == "power" and comp.loss.n >= 2:
        k = (comp.loss.n - 2) / (comp.loss.n - 1)
        return k, k
    return None


@dataclass(frozen=True)
class CDConstants:
    C: float
    D: float
    violated_fraction: float = float("nan")


def cd_constants(state: ToyState, rot: Rotation, y=None) -> CDConstants:
    """Constants of ``q' = -(D y - C) dH/dy`` and the sign-condition check.

    ``violated_fraction`` is the share of ``y`` values with ``D y - C <= 0``.
    """
    if state.w == 0.0:
        raise SingularityError("C and D are undefined at w = 0")
    c, s = math.cos(rot.theta), math.sin(rot.theta)
    D = state.gamma * c / state.w
    # gamma cos/w * (b - w tan) written without tan, finite at theta = pi/2
    C = state.gamma * (c * state.b / state.w - s)
    frac = float("nan")
    if y is not None:
        y = np.asarray(y, dtype=float)
        frac = float(np.mean(D * y - C <= 0.0)) if y.size else float("nan")
    return CDConstants(C, D, frac)
