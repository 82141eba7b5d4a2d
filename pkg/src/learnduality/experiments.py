"""Experiment registry and the train -> jumps -> fit pipeline."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import analysis, duality, toy
from .compositions import CATALOGUE, get_composition
from .errors import ConfigError, DualityError

log = logging.getLogger(__name__)

SCALE_FACTOR = 7.0
MIN_BINS = analysis.MIN_FIT_BINS
CLASS_NAMES = ("minus", "plus")

# Per-composition defaults layered under the generic ones. ReLU and the
# piecewise unit have zero gradient everywhere at (w, b) = (0, 0), so they
# start from the identity map instead. The piecewise/cross-entropy jumps
# diverge like 1/y near the kink, so its training clips dH/dy and it draws
# ten times more inputs because ~98% of them land in the dead region.
REGISTRY: dict[str, dict[str, Any]] = {
    "sigmoid_mse": {"k_tolerance": 0.15},
    "sigmoid_ce": {"k_tolerance": 0.15},
    "relu_p2": {"w0": 1.0, "k_tolerance": 0.10},
    "relu_p4": {"w0": 1.0, "k_tolerance": 0.15},
    "piecewise_ce": {
        "w0": 1.0,
        "grad_clip": 10.0,
        "jump_count": 10_000_000,
        "keep_zero_jumps": False,
        "k_tolerance": 0.20,
    },
}

FAMILIES = (
    ("exponential", "exp(A y)", "1", ("sigmoid_mse", "sigmoid_ce")),
    ("power", "(y + Delta)^(alpha + 1)", "(alpha - 1) / alpha", ("relu_p2", "relu_p4")),
    ("logarithmic", "-log|Delta - y|", "2", ("piecewise_ce",)),
)


@dataclass
class ExperimentConfig:
    composition: str
    seed: int
    gamma: float = 0.05
    w0: float = 0.0
    b0: float = 0.0
    grad_clip: Optional[float] = None
    eq_window: int = 100_000
    eq_rel_tol: float = 1e-3
    eq_max_steps: int = 10_000_000
    jump_count: int = 1_000_000
    keep_zero_jumps: bool = True
    nbins: int = 50
    min_count: int = 10
    window_rule: str = "jacobian"
    window_tol: float = 0.1
    fit_window: Optional[dict] = None
    k_tolerance: float = 0.15
    accuracy_draws: int = 100_000
    write_samples: bool = True
    sample_rows: Optional[int] = 1_000_000
    output_dir: str = "out"

    def __post_init__(self):
        if self.composition not in CATALOGUE:
            raise ConfigError(
                f"unknown composition {self.composition!r}; "
                f"choose from {sorted(CATALOGUE)}"
            )
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if self.window_rule not in ("jacobian", "central"):
            raise ConfigError("window_rule must be 'jacobian' or 'central'")
        if not self.gamma >= 0:
            raise ConfigError("gamma must be non-negative")
        if self.jump_count < 1 or self.nbins < MIN_BINS:
            raise ConfigError("jump_count must be positive and nbins >= 5")
        if self.fit_window is not None:
            fw = self.fit_window
            if isinstance(fw, (list, tuple)):
                fw = {name: list(fw) for name in CLASS_NAMES}
            if not isinstance(fw, dict) or not set(fw) <= set(CLASS_NAMES):
                raise ConfigError("fit_window must be [lo, hi] or {class: [lo, hi]}")
            for lo_hi in fw.values():
                if len(lo_hi) != 2 or not 0 < lo_hi[0] < lo_hi[1]:
                    raise ConfigError(f"bad fit window {lo_hi}")
            self.fit_window = {k: [float(v[0]), float(v[1])] for k, v in fw.items()}
        try:
            toy.EquilibriumCriterion(self.eq_window, self.eq_rel_tol, self.eq_max_steps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "composition" not in data:
            raise ConfigError("config needs a 'composition'")
        if "seed" not in data:
            raise ConfigError("config needs an explicit 'seed'")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(REGISTRY.get(data["composition"], {}))
        merged.update(data)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def default(cls, composition: str, seed: int = 0, **overrides) -> "ExperimentConfig":
        return cls.from_dict({"composition": composition, "seed": seed, **overrides})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def criterion(self) -> toy.EquilibriumCriterion:
        return toy.EquilibriumCriterion(self.eq_window, self.eq_rel_tol, self.eq_max_steps)



@dataclass
class ClassResult:
    k_fit: float
    stderr_k: float
    r_squared: float
    window: tuple[float, float]
    window_decades: float
    window_rule: str
    n_fit_bins: int
    k_predicted: Optional[float]
    k_tolerance: float
    passed: bool
    theta: float
    eigen_ratio: float
    theta_cross_check: float
    residual_variance_ratio: float
    zero_fraction: float
    n_jumps: int
    n_nonzero: int
    branch: tuple[float, float]
    ks_distance: float
    ks_n: int
    jacobian_slope: float
    jacobian_slope_window: tuple[float, float]
    k_scaled: float
    scale_factor: float
    cd_C: float
    cd_D: float
    cd_violated_fraction: float

    def fit_json(self) -> dict:
        return {
            "k": self.k_fit,
            "stderr_k": self.stderr_k,
            "r_squared": self.r_squared,
            "window_lo": self.window[0],
            "window_hi": self.window[1],
            "n_samples": self.n_nonzero,
            "excluded_zeros": self.n_jumps - self.n_nonzero,
        }


@dataclass
class ExperimentReport:
    composition: str
    w_eq: float
    b_eq: float
    train_steps: int
    converged: bool
    accuracy: float
    classes: dict[str, ClassResult]
    config: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.classes.values())

    def to_dict(self) -> dict:
        classes = {}
        for name, res in self.classes.items():
            d = dataclasses.asdict(res)
            d["fit"] = res.fit_json()
            classes[name] = d
        return _json_safe({
            "composition": self.composition,
            "equilibrium": {
                "w": self.w_eq,
                "b": self.b_eq,
                "steps": self.train_steps,
                "converged": self.converged,
            },
            "accuracy": self.accuracy,
            "classes": classes,
            "passed": self.passed,
            "config": self.config,
        })


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def dump_json(path, data):
    Path(path).write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


@dataclass
class ClassRun:
    """Everything computed for one class, kept for tests and file output."""

    spec: toy.ClassSpec
    jumps: toy.JumpSamples
    theta: duality.ThetaEstimate
    q: np.ndarray
    branch: duality.Branch
    full_hist: analysis.LogHistogram
    fit_hist: analysis.LogHistogram
    fit: analysis.PowerLawFit
    result: ClassResult


@dataclass
class ExperimentRun:
    config: ExperimentConfig
    state: toy.ToyState
    trace: np.ndarray
    report: ExperimentReport
    classes: dict[str, ClassRun]
    files: list[str] = field(default_factory=list)


def _jacobian_curve(comp, rot, state, spec, branch, q_branch, window, n=200):
    # Evaluate |dq'/dx1|^-1 on the side of zero the branch samples live on.
    sign = 1.0 if np.median(q_branch) >= 0 else -1.0
    a = np.logspace(math.log10(window[0]), math.log10(window[1]), n)
    j = duality.jacobian_contribution(sign * a, comp, rot, state, spec, branch)
    return a, j


def _analyse_class(cfg, comp, state, spec, rng) -> ClassRun:
    jumps = toy.collect_jumps(
        state, comp, spec, cfg.jump_count, rng, keep_zeros=cfg.keep_zero_jumps
    )
    est = duality.estimate_theta(jumps)
    rot = est.rotation
    q1, q2 = duality.rotate(jumps.dw, jumps.db, rot)
    nz = jumps.nonzero
    a = np.abs(q1[nz])
    resid_ratio = float(np.var(q2[nz]) / np.var(q1[nz]))

    support = analysis.data_support(a, cfg.nbins, cfg.min_count)
    branch = duality.principal_branch(comp, rot, state, spec)
    if cfg.fit_window is not None and spec.name in cfg.fit_window:
        window = tuple(cfg.fit_window[spec.name])
        rule = "override"
    elif cfg.window_rule == "jacobian":
        window = duality.jacobian_dominated_window(
            comp, rot, state, spec, cfg.window_tol, support, branch
        )
        rule = "jacobian"
    else:
        window = analysis.central_window(a, cfg.nbins, cfg.min_count)
        rule = "central"

    full_hist = analysis.log_bin(a, cfg.nbins, support)
    fit_hist = analysis.log_bin(a, cfg.nbins, window)
    fit = analysis.fit_power_law(fit_hist)
    k0, k_scaled = analysis.scaling_exponent_invariance(q1[nz], SCALE_FACTOR, window, cfg.nbins)

    ks, ks_n = duality.ks_distance(q1, jumps.x1, comp, rot, state, spec, window, branch)

    on_branch = (jumps.x1 >= branch.x_lo) & (jumps.x1 <= branch.x_hi) & nz
    try:
        jwin = analysis.central_window(a, cfg.nbins, cfg.min_count)
    except DualityError:
        jwin = window
    ja, jv = _jacobian_curve(comp, rot, state, spec, branch, q1[on_branch], jwin)
    jslope = analysis.loglog_slope(ja, jv)

    cd = duality.cd_constants(state, rot, jumps.y[nz]) if state.w != 0 else None
    k_pred = comp.predicted_k(spec.label)
    passed = k_pred is not None and abs(fit.k - k_pred) <= cfg.k_tolerance
    result = ClassResult(
        k_fit=fit.k,
        stderr_k=fit.stderr_k,
        r_squared=fit.r_squared,
        window=(float(window[0]), float(window[1])),
        window_decades=math.log10(window[1] / window[0]),
        window_rule=rule,
        n_fit_bins=fit.n_bins,
        k_predicted=k_pred,
        k_tolerance=cfg.k_tolerance,
        passed=bool(passed),
        theta=rot.theta,
        eigen_ratio=est.eigen_ratio,
        theta_cross_check=est.cross_check_theta,
        residual_variance_ratio=resid_ratio,
        zero_fraction=jumps.zero_fraction,
        n_jumps=jumps.n_drawn,
        n_nonzero=int(np.count_nonzero(nz)),
        branch=(branch.x_lo, branch.x_hi),
        ks_distance=ks,
        ks_n=ks_n,
        jacobian_slope=jslope,
        jacobian_slope_window=(float(jwin[0]), float(jwin[1])),
        k_scaled=k_scaled,
        scale_factor=SCALE_FACTOR,
        cd_C=cd.C if cd else float("nan"),
        cd_D=cd.D if cd else float("nan"),
        cd_violated_fraction=cd.violated_fraction if cd else float("nan"),
    )
    return ClassRun(spec, jumps, est, q1, branch, full_hist, fit_hist, fit, result)


def execute(cfg: ExperimentConfig) -> ExperimentRun:
    """Run the full pipeline in memory without touching the filesystem."""
    comp = get_composition(cfg.composition)
    specs = toy.default_specs()
    ss = np.random.SeedSequence(cfg.seed)
    train_rng, minus_rng, plus_rng, acc_rng = (np.random.default_rng(s) for s in ss.spawn(4))

    init = toy.ToyState(cfg.w0, cfg.b0, cfg.gamma)
    trained = toy.train_to_equilibrium(
        init, comp, specs, cfg.criterion, train_rng, grad_clip=cfg.grad_clip
    )
    state, trace, converged = trained.mean_state, trained.trace, trained.converged
    if not converged:
        log.warning("%s: equilibrium criterion not met in %d steps", comp.id, state.step_count)
    accuracy = toy.classification_accuracy(state, comp, specs, cfg.accuracy_draws, acc_rng)

    runs = {}
    for spec, rng in zip(specs, (minus_rng, plus_rng)):
        runs[spec.name] = _analyse_class(cfg, comp, state, spec, rng)

    report = ExperimentReport(
        composition=comp.id,
        w_eq=state.w,
        b_eq=state.b,
        train_steps=state.step_count,
        converged=converged,
        accuracy=accuracy,
        classes={name: r.result for name, r in runs.items()},
        config=cfg.to_dict(),
    )
    return ExperimentRun(cfg, state, trace, report, runs)


def write_outputs(run: ExperimentRun, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = run.config
    comp = get_composition(cfg.composition)
    files = []
    for name, cr in run.classes.items():
        if cfg.write_samples:
            p = out / f"samples_{name}.csv"
            toy.write_samples_csv(p, cr.jumps, cfg.sample_rows)
            files.append(p.name)
        h = cr.full_hist
        p = out / f"hist_{name}.csv"
        np.savetxt(
            p,
            np.column_stack([h.edges[:-1], h.edges[1:], h.counts, h.densities]),
            delimiter=",", header="bin_lo,bin_hi,count,density", comments="",
            fmt=["%.17g", "%.17g", "%d", "%.17g"],
        )
        files.append(p.name)
        # Conditional on a nonzero jump, to match the histogram normalisation.
        nonzero_frac = 1.0 - cr.jumps.zero_fraction
        centers = h.centers
        rot = cr.theta.rotation
        sign = 1.0 if np.median(cr.q[cr.jumps.nonzero]) >= 0 else -1.0
        dens = duality.predicted_density(
            sign * centers, comp, rot, run.state, cr.spec, cr.branch
        ) / nonzero_frac
        p = out / f"pred_{name}.csv"
        np.savetxt(
            p, np.column_stack([sign * centers, dens]), delimiter=",",
            header="dq,density_pred", comments="", fmt="%.17g",
        )
        files.append(p.name)
    toy.write_trace_csv(out / "trace.csv", run.trace)
    files.append("trace.csv")
    preds = duality.predicted_exponent(comp)
    table = [
        {"composition": comp.id, "class": name, "k_predicted": None if preds is None else k}
        for name, k in zip(CLASS_NAMES, preds or (None, None))
    ]
    dump_json(out / "exponents.json", table)
    dump_json(out / "report.json", run.report.to_dict())
    files += ["exponents.json", "report.json"]
    run.files = files
    return files


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentRun:
    run = execute(cfg)
    write_outputs(run, out_dir if out_dir is not None else cfg.output_dir)
    return run


def summarize(reports: dict[str, dict]) -> dict:
    """Summary rows per experiment plus the three-family exponent table."""
    rows = []
    for name in sorted(reports):
        rep = reports[name]
        if rep.get("status") == "failed":
            rows.append({"experiment": name, "status": "failed", "error": rep.get("error")})
            continue
        row = {"experiment": name, "composition": rep["composition"], "status": "ok",
               "passed": rep["passed"], "accuracy": rep["accuracy"]}
        for cls in CLASS_NAMES:
            c = rep["classes"][cls]
            row[f"k_{cls}"] = c["k_fit"]
            row[f"k_{cls}_predicted"] = c["k_predicted"]
            row[f"pass_{cls}"] = c["passed"]
        rows.append(row)
    table = []
    for family, form, k_expr, members in FAMILIES:
        entry = {"family": family, "H": form, "k": k_expr, "examples": {}}
        for row in rows:
            if row.get("status") == "ok" and row["composition"] in members:
                entry["examples"][row["experiment"]] = {
                    "k_predicted": row["k_minus_predicted"],
                    "k_minus": row["k_minus"],
                    "k_plus": row["k_plus"],
                }
        table.append(entry)
    return {"experiments": rows, "table": table}


def run_suite(configs: dict[str, ExperimentConfig], out_dir) -> dict:
    """Run each named config into ``out_dir/<name>``; failures are recorded."""
    out = Path(out_dir)
    reports = {}
    for name in sorted(configs):
        try:
            run = run_experiment(configs[name], out / name)
            reports[name] = run.report.to_dict()
        except DualityError as exc:
            log.error("experiment %s failed: %s", name, exc)
            reports[name] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
            (out / name).mkdir(parents=True, exist_ok=True)
            dump_json(out / name / "error.json", reports[name])
    summary = summarize(reports)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "summary.json", summary)
    return summary


def collect_reports(out_dir) -> dict[str, dict]:
    """Load ``report.json`` / ``error.json`` from each subdirectory."""
    reports = {}
    for sub in sorted(Path(out_dir).iterdir()):
        if not sub.is_dir():
            continue
        if (sub / "report.json").exists():
            reports[sub.name] = json.loads((sub / "report.json").read_text())
        elif (sub / "error.json").exists():
            reports[sub.name] = json.loads((sub / "error.json").read_text())
    return reports
