"""Experiment runner: multi-trial training sweeps with CSV outputs.

A single trial builds the loss graph once, then iterates epochs by writing
new parameter values into the tape leaves, replaying the forward pass, and
taking one Adam step on the scalarized gradient.  Sweeps run trials
sequentially with per-trial seeds and aggregate mean/std test-MSE curves.

An "epoch" is one full-batch optimizer step: all collocation points are used
in every step, so no distinction between step and epoch arises.

Outputs per experiment directory:
  records.csv   one row per (trial, epoch) with losses, weights, lr, test MSE
  curve.csv     epoch, mean/std test MSE across non-diverged trials
  summary.csv   one row: final aggregate and the diverged-trial count
  trial-<i>.params   final network parameters, loadable with load_params
  curve.svg     minimal line chart of the mean test-MSE curve
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import EvaluationError
from .losses import NORM_KINDS, POLICIES, assemble, compute_lambdas, make_scaling_state
from .network import NetworkSpec, ParamSet, initialize, save_params
from .optim import AdamState, LrSchedule, NonFiniteGradientError, adam_step, default_piecewise
from .oracle import test_mse
from .problems import get_problem

_PROBLEM_KEYS = {
    "n_interior", "n_ic", "n_bc",  # burgers / riccati
    "n_inside", "n_outside", "n_interface", "n_boundary",  # poisson-boltzmann
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: str
    widths: tuple | None = None  # None -> problem default
    norm: str = "mse"
    policy: str = "fixed"
    epochs: int = 10000
    trials: int = 10
    seed: int = 0
    lr: LrSchedule = field(default_factory=default_piecewise)
    test_every: int = 50
    variance: str = "fixed"
    alpha: float | None = None
    temperature: float | None = None
    rho_mean: float | None = None
    problem_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1 or self.trials < 1:
            raise ValueError("epochs and trials must be >= 1")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")

    def make_problem(self):
        return get_problem(self.problem, **self.problem_kwargs)

    def network_spec(self, trial: int) -> NetworkSpec:
        widths = self.widths
        if widths is None:
            widths = self.make_problem().default_widths
        return NetworkSpec(widths=tuple(widths), seed=self.seed + trial)

    def scaling_state(self, k: int, trial: int):
        kw = {"total_epochs": self.epochs, "variance": self.variance}
        for key in ("alpha", "temperature", "rho_mean"):
            v = getattr(self, key)
            if v is not None:
                kw[key] = v
        if not self.policy.startswith("stoch"):
            kw.pop("variance")
        return make_scaling_state(self.policy, k=k, seed=self.seed + trial + 40_009, **kw)


def parse_config(path) -> ExperimentConfig:
    """Flat key=value text, one per line, '#' comments."""
    kv = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            kv[key] = val
    return config_from_dict(kv)


def _parse_lr(text: str) -> LrSchedule:
    parts = text.split(":")
    if parts[0] == "constant":
        return LrSchedule.constant(float(parts[1]))
    if parts[0] == "cyclical":
        return LrSchedule.cyclical(float(parts[1]), float(parts[2]), int(parts[3]))
    if parts[0] == "piecewise":
        segs = [tuple(s.split("@")) for s in parts[1].split(",")]
        return LrSchedule.piecewise([(int(e), float(r)) for e, r in segs])
    raise ValueError(f"unknown lr schedule {text!r}")


def config_from_dict(kv: dict) -> ExperimentConfig:
    kv = dict(kv)
    out = {}
    out["name"] = kv.pop("name", "experiment")
    out["problem"] = kv.pop("problem")
    if "widths" in kv:
        out["widths"] = tuple(int(w) for w in kv.pop("widths").split(","))
    for key, conv in (("norm", str), ("policy", str), ("epochs", int),
                      ("trials", int), ("seed", int), ("test_every", int),
                      ("variance", str), ("alpha", float),
                      ("temperature", float), ("rho_mean", float)):
        if key in kv:
            out[key] = conv(kv.pop(key))
    if "lr" in kv:
        out["lr"] = _parse_lr(kv.pop("lr"))
    pk = {}
    for key in list(kv):
        if key in _PROBLEM_KEYS:
            pk[key] = int(kv.pop(key))
        elif key in ("iface_weight", "flux_weight"):
            pk[key] = float(kv.pop(key))
        elif key == "mode":
            pk[key] = kv.pop(key)
    if kv:
        raise ValueError(f"unknown config keys: {sorted(kv)}")
    out["problem_kwargs"] = pk
    return ExperimentConfig(**out)


@dataclass
class MetricsRecord:
    trial: int
    epoch: int
    losses: np.ndarray
    lambdas: np.ndarray
    total: float
    test_mse: float  # nan on epochs where it is not evaluated
    lr: float
    wall_time: float


@dataclass
class TrialResult:
    trial: int
    records: list
    diverged: bool
    spec: NetworkSpec
    params: ParamSet
    term_labels: list


def run_trial(config: ExperimentConfig, trial: int, reference=None) -> TrialResult:
    """Train one network; returns partial records flagged diverged on NaN."""
    problem = config.make_problem()
    spec = config.network_spec(trial)
    params = initialize(spec)
    samples = problem.sample(seed=7919 * (config.seed + trial) + 1)
    if reference is None:
        reference = problem.reference()
    probes = problem.test_probes()

    bundle = assemble(problem, spec, params, samples, norm=config.norm)
    state = config.scaling_state(bundle.k, trial)
    adam = AdamState.zeros(params.n_params)
    flat = params.flatten()

    records = []
    diverged = False
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        try:
            if epoch > 0:
                bundle.tape_params.set_values(bundle.tape, params)
                bundle.tape.replay()
            values = bundle.values()
            lam = compute_lambdas(state, bundle)
            grad = bundle.total_gradient(lam)
            flat = adam_step(flat, grad, adam, config.lr.lr_at(epoch))
            params = ParamSet.unflatten(spec, flat)
        except (EvaluationError, NonFiniteGradientError):
            diverged = True
            break
        mse = np.nan
        if epoch % config.test_every == 0 or epoch == config.epochs - 1:
            mse = test_mse(lambda p: problem.predict(spec, params, p),
                           reference, probes)
        records.append(MetricsRecord(
            trial=trial, epoch=epoch, losses=values, lambdas=lam,
            total=float(np.dot(lam, values)), test_mse=mse,
            lr=config.lr.lr_at(epoch), wall_time=time.perf_counter() - t0,
        ))
    return TrialResult(trial, records, diverged, spec, params, list(bundle.labels))


@dataclass
class SweepResult:
    config: ExperimentConfig
    trials: list  # TrialResult
    curve: np.ndarray  # rows (epoch, mean, std, n)
    final_mean: float
    final_std: float
    diverged: int


def _aggregate_curve(trials) -> np.ndarray:
    ok = [t for t in trials if not t.diverged]
    by_epoch = {}
    for t in ok:
        for r in t.records:
            if np.isfinite(r.test_mse):
                by_epoch.setdefault(r.epoch, []).append(r.test_mse)
    rows = [
        (e, float(np.mean(v)), float(np.std(v)) if len(v) > 1 else 0.0, len(v))
        for e, v in sorted(by_epoch.items())
    ]
    return np.array(rows) if rows else np.empty((0, 4))


def run_sweep(config: ExperimentConfig, out_dir=None, reference=None) -> SweepResult:
    problem = config.make_problem()
    if reference is None:
        reference = problem.reference()
    trials = [run_trial(config, i, reference=reference)
              for i in range(config.trials)]
    curve = _aggregate_curve(trials)
    if curve.shape[0]:
        final_mean, final_std = float(curve[-1, 1]), float(curve[-1, 2])
    else:
        final_mean, final_std = np.nan, np.nan
    result = SweepResult(
        config=config, trials=trials, curve=curve,
        final_mean=final_mean, final_std=final_std,
        diverged=sum(t.diverged for t in trials),
    )
    if out_dir is not None:
        write_sweep(result, out_dir)
    return result


# -- output files ------------------------------------------------------------


def write_records(trials, labels, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["trial", "epoch", "lr", "total_loss", "test_mse", "diverged"]
            + [f"loss:{l}" for l in labels] + [f"lam:{l}" for l in labels]
            + ["wall_time"]
        )
        for t in trials:
            flag = int(t.diverged)
            for r in t.records:
                w.writerow(
                    [r.trial, r.epoch, f"{float(r.lr)!r}", f"{float(r.total)!r}",
                     f"{float(r.test_mse)!r}", flag]
                    + [f"{float(v)!r}" for v in r.losses]
                    + [f"{float(v)!r}" for v in r.lambdas]
                    + [f"{r.wall_time:.3f}"]
                )


def write_curve(curve, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_test_mse", "std_test_mse", "n_trials"])
        for e, m, s, n in curve:
            w.writerow([int(e), f"{float(m)!r}", f"{float(s)!r}", int(n)])


def write_summary(results, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["name", "problem", "norm", "policy", "trials", "diverged",
                    "final_mean_test_mse", "final_std_test_mse"])
        for r in results:
            c = r.config
            w.writerow([c.name, c.problem, c.norm, c.policy, c.trials,
                        r.diverged, f"{float(r.final_mean)!r}",
                        f"{float(r.final_std)!r}"])


def emit_plot_svg(curve, path, title=""):
    """Minimal log-scale line chart of the mean test-MSE curve."""
    if curve.shape[0] < 2:
        return
    W, H, pad = 640, 400, 50
    xs = curve[:, 0]
    ys = np.log10(np.maximum(curve[:, 1], 1e-300))
    x0, x1 = xs.min(), max(xs.max(), xs.min() + 1)
    y0, y1 = ys.min(), max(ys.max(), ys.min() + 1e-9)
    px = pad + (xs - x0) / (x1 - x0) * (W - 2 * pad)
    py = H - pad - (ys - y0) / (y1 - y0) * (H - 2 * pad)
    points = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
    with open(path, "w") as f:
        f.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">\n'
            f'<rect width="{W}" height="{H}" fill="white"/>\n'
            f'<text x="{W//2}" y="20" text-anchor="middle">{title}</text>\n'
            f'<text x="{W//2}" y="{H-10}" text-anchor="middle">epoch</text>\n'
            f'<text x="15" y="{H//2}" transform="rotate(-90 15 {H//2})" '
            f'text-anchor="middle">log10 test MSE</text>\n'
            f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" '
            f'points="{points}"/>\n</svg>\n'
        )


def write_sweep(result: SweepResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    labels = result.trials[0].term_labels
    write_records(result.trials, labels, os.path.join(out_dir, "records.csv"))
    write_curve(result.curve, os.path.join(out_dir, "curve.csv"))
    write_summary([result], os.path.join(out_dir, "summary.csv"))
    emit_plot_svg(result.curve, os.path.join(out_dir, "curve.svg"),
                  title=result.config.name)
    for t in result.trials:
        save_params(os.path.join(out_dir, f"trial-{t.trial}.params"),
                    t.spec, t.params)
