"""Two-class Gaussian dataset and the two-neuron toy network.

The network has one input neuron ``x1`` and one output neuron; its only
trainable variables are the weight ``w`` and bias ``b`` with pre-activation
``y = w * x1 + b``. Training is single-sample SGD; at equilibrium the state
is frozen and the *potential jumps* ``-gamma * grad H`` are collected per
class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .compositions import Composition, scalar_dH_dy
from .errors import DivergenceError, NumericError

OVERFLOW_GUARD = 1e6


@dataclass(frozen=True)
class ClassSpec:
    label: int
    mean: float
    std: float

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 ('-') or 1 ('+')")
        if not self.std >= 0:
            raise ValueError("std must be non-negative")

    @property
    def name(self) -> str:
        return "plus" if self.label == 1 else "minus"


MINUS = ClassSpec(0, 0.0, 0.25)
PLUS = ClassSpec(1, 1.0, 0.25)


def default_specs() -> tuple[ClassSpec, ClassSpec]:
    return MINUS, PLUS


@dataclass(frozen=True)
class ToyState:
    w: float
    b: float
    gamma: float
    step_count: int = 0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("learning rate must be non-negative")


@dataclass(frozen=True)
class EquilibriumCriterion:
    """Stop when window-averaged ``(w, b)`` changes by less than ``rel_tol``.

    The change is the Euclidean distance between the averages of two
    consecutive windows divided by the norm of the newer average.
    """

    window: int = 100_000
    rel_tol: float = 1e-3
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.window < 100:
            raise ValueError("window must be at least 100 steps")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_steps < self.window:
            raise ValueError("max_steps must cover at least one window")


class FluctuationSample(NamedTuple):
    class_label: int
    x1: float
    dw: float
    db: float
    y: float


@dataclass
class JumpSamples:
    """Column store of potential jumps; indexing yields FluctuationSample.

    ``n_zero_dropped`` counts exactly-zero jumps that were discarded at
    collection time (see ``collect_jumps(keep_zeros=False)``).
    """

    class_label: np.ndarray
    x1: np.ndarray
    dw: np.ndarray
    db: np.ndarray
    y: np.ndarray
    n_zero_dropped: int = 0

    def __len__(self):
        return self.x1.size

    def __getitem__(self, i) -> FluctuationSample:
        return FluctuationSample(
            int(self.class_label[i]),
            float(self.x1[i]),
            float(self.dw[i]),
            float(self.db[i]),
            float(self.y[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def nonzero(self) -> np.ndarray:
        return (self.dw != 0.0) | (self.db != 0.0)

    @property
    def n_drawn(self) -> int:
        return len(self) + self.n_zero_dropped

    @property
    def zero_fraction(self) -> float:
        n_zero = self.n_zero_dropped + int(np.count_nonzero(~self.nonzero))
        return n_zero / self.n_drawn if self.n_drawn else 0.0

    def select(self, mask) -> "JumpSamples":
        mask = np.asarray(mask)
        return JumpSamples(
            self.class_label[mask],
            self.x1[mask],
            self.dw[mask],
            self.db[mask],
            self.y[mask],
        )


class TrainResult(NamedTuple):
    state: ToyState
    trace: np.ndarray  # rows (step, w, b)
    converged: bool
    mean_state: ToyState  # (w, b) averaged over the last window


def sample_input(spec: ClassSpec, rng: np.random.Generator, size=None):
    return rng.normal(spec.mean, spec.std, size)


def draw_labeled(specs: Sequence[ClassSpec], n: int, rng: np.random.Generator):
    """Fair-coin class draws followed by the class-conditional Gaussian."""
    minus, plus = specs
    labels = (rng.random(n) < 0.5).astype(np.int8)
    z = rng.standard_normal(n)
    mu = np.where(labels == 1, plus.mean, minus.mean)
    sd = np.where(labels == 1, plus.std, minus.std)
    return labels, mu + sd * z


def toy_forward(x1, state: ToyState, comp: Composition):
    y = state.w * np.asarray(x1, dtype=float) + state.b
    fy = comp.activation.value(y)
    if np.ndim(y) == 0:
        return float(y), float(fy)
    return y, fy


def toy_gradient(x1, x2, state: ToyState, comp: Composition):
    """Gradient ``(dH/dw, dH/db)`` of the loss at one sample."""
    x1 = np.asarray(x1, dtype=float)
    y = state.w * x1 + state.b
    g_b = np.asarray(comp.dH_dy(y, x2), dtype=float)
    g_w = x1 * g_b
    if not (np.all(np.isfinite(g_b)) and np.all(np.isfinite(g_w))):
        raise NumericError(
            f"non-finite gradient for {comp.id} at w={state.w}, b={state.b}, "
            f"x1={x1}, x2={x2}"
        )
    if g_b.ndim == 0:
        return float(g_w), float(g_b)
    return g_w, g_b


def _sgd_chunk(w, b, gamma, labels, xs, dH, clip, comp_id, record=None):
    """Run SGD over pre-drawn samples; returns (w, b, sum_w, sum_b)."""
    sw = sb = 0.0
    lo, hi = -OVERFLOW_GUARD, OVERFLOW_GUARD
    for t in range(len(xs)):
        x1 = xs[t]
        g = dH(w * x1 + b, labels[t])
        if clip is not None:
            if g > clip:
                g = clip
            elif g < -clip:
                g = -clip
        g *= gamma
        w -= g * x1
        b -= g
        if not (lo < w < hi and lo < b < hi):
            raise DivergenceError(
                f"{comp_id} diverged at gamma={gamma}: w={w}, b={b}"
            )
        sw += w
        sb += b
        if record is not None:
            record[0][t] = w
            record[1][t] = b
    return w, b, sw, sb


def run_sgd(
    state: ToyState,
    comp: Composition,
    specs: Sequence[ClassSpec],
    n_steps: int,
    rng: np.random.Generator,
    grad_clip: Optional[float] = None,
):
    """Plain SGD for ``n_steps``; returns the final state and per-step w, b."""
    labels, xs = draw_labeled(specs, n_steps, rng)
    ws = np.empty(n_steps)
    bs = np.empty(n_steps)
    w, b, _, _ = _sgd_chunk(
        state.w,
        state.b,
        state.gamma,
        [float(v) for v in labels],
        xs.tolist(),
        scalar_dH_dy(comp),
        grad_clip,
        comp.id,
        record=(ws, bs),
    )
    final = ToyState(w, b, state.gamma, state.step_count + n_steps)
    return final, ws, bs


def train_to_equilibrium(
    initial: ToyState,
    comp: Composition,
    specs: Sequence[ClassSpec],
    crit: EquilibriumCriterion,
    rng: np.random.Generator,
    grad_clip: Optional[float] = None,
    trace_every: int = 1000,
) -> TrainResult:
    """Train until the window-averaged parameters stop moving.

    Returns the final state, a trace of ``(step, w, b)`` rows taken every
    ``trace_every`` steps, whether the criterion fired before ``max_steps``,
    and the state averaged over the last window. The average is the better
    point to freeze at: the instantaneous state keeps fluctuating by O(gamma).
    """
    if initial.gamma == 0.0:
        trace = np.array([[initial.step_count, initial.w, initial.b]])
        return TrainResult(initial, trace, True, initial)

    dH = scalar_dH_dy(comp)
    w, b = initial.w, initial.b
    step = initial.step_count
    trace = [(step, w, b)]
    prev = None
    converged = False
    n_windows = crit.max_steps // crit.window
    for _ in range(n_windows):
        labels, xs = draw_labeled(specs, crit.window, rng)
        lab = [float(v) for v in labels]
        xl = xs.tolist()
        if trace_every >= crit.window:
            w, b, sw, sb = _sgd_chunk(w, b, initial.gamma, lab, xl, dH, grad_clip, comp.id)
            step += crit.window
            if step % trace_every == 0:
                trace.append((step, w, b))
        else:
            sw = sb = 0.0
            for start in range(0, crit.window, trace_every):
                stop = min(start + trace_every, crit.window)
                w, b, s1, s2 = _sgd_chunk(
                    w, b, initial.gamma, lab[start:stop], xl[start:stop], dH,
                    grad_clip, comp.id,
                )
                sw += s1
                sb += s2
                step += stop - start
                trace.append((step, w, b))
        avg = np.array([sw, sb]) / crit.window
        if prev is not None:
            change = np.linalg.norm(avg - prev) / max(np.linalg.norm(avg), 1e-300)
            if change < crit.rel_tol:
                converged = True
                break
        prev = avg
    final = ToyState(w, b, initial.gamma, step)
    mean = ToyState(float(avg[0]), float(avg[1]), initial.gamma, step)
    return TrainResult(final, np.array(trace, dtype=float), converged, mean)


def collect_jumps(
    state: ToyState,
    comp: Composition,
    spec: ClassSpec,
    count: int,
    rng: np.random.Generator,
    keep_zeros: bool = True,
    chunk: int = 1_000_000,
) -> JumpSamples:
    """Potential jumps of ``(w, b)`` from ``count`` fresh inputs of one class.

    The state is never updated. With ``keep_zeros=False`` exact-zero jumps
    (dead activation region) are counted but not stored, which keeps memory
    flat for compositions whose active region is narrow.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    parts = []
    dropped = 0
    x2 = float(spec.label)
    for start in range(0, count, chunk):
        n = min(chunk, count - start)
        x1 = sample_input(spec, rng, n)
        y = state.w * x1 + state.b
        g = np.asarray(comp.dH_dy(y, x2), dtype=float)
        if not np.all(np.isfinite(g)):
            bad = np.flatnonzero(~np.isfinite(g))[0]
            raise NumericError(
                f"non-finite gradient for {comp.id} at x1={x1[bad]}, y={y[bad]}"
            )
        db = -state.gamma * g
        dw = x1 * db
        if not keep_zeros:
            keep = (dw != 0.0) | (db != 0.0)
            dropped += int(n - np.count_nonzero(keep))
            x1, y, dw, db = x1[keep], y[keep], dw[keep], db[keep]
        parts.append((x1, dw, db, y))
    x1, dw, db, y = (np.concatenate(c) for c in zip(*parts))
    labels = np.full(x1.size, spec.label, dtype=np.int8)
    return JumpSamples(labels, x1, dw, db, y, dropped)


def classification_accuracy(
    state: ToyState,
    comp: Composition,
    specs: Sequence[ClassSpec],
    n: int,
    rng: np.random.Generator,
) -> float:
    """Fraction of fresh draws classified correctly by the frozen network."""
    labels, xs = draw_labeled(specs, n, rng)
    y = state.w * xs + state.b
    pred = y > comp.activation.decision_threshold
    return float(np.mean(pred == (labels == 1)))


def write_samples_csv(path, samples: JumpSamples, max_rows: Optional[int] = None):
    n = len(samples) if max_rows is None else min(len(samples), max_rows)
    cols = np.column_stack(
        [samples.class_label[:n], samples.x1[:n], samples.dw[:n], samples.db[:n], samples.y[:n]]
    )
    np.savetxt(
        path,
        cols,
        delimiter=",",
        header="class,x1,dw,db,y",
        comments="",
        fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"],
    )
    return n


def read_samples_csv(path) -> JumpSamples:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return JumpSamples(
        data[:, 0].astype(np.int8), data[:, 1], data[:, 2], data[:, 3], data[:, 4]
    )


def write_trace_csv(path, trace: np.ndarray):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["step", "w", "b"])
        for step, w, b in trace:
            out.writerow([int(step), repr(float(w)), repr(float(b))])
