"""Loss assembly and scalarization.

A LossBundle holds one scalar tape node per condition (PDE interior,
boundary, initial, optional data term), each the chosen norm of that
condition's residual vector.  ``scalarize`` combines them into a single
objective under one of six weighting policies:

  fixed       constant weights (1 by default)
  lra         gradient-magnitude balancing of the non-PDE terms
  softadapt   softmax of loss ratios L_i(t)/L_i(t-1)
  relobralo   softmax with temperature, random lookback and smoothing
  stoch-normal / stoch-uniform
              weights drawn fresh every epoch from Norm(1, 0.25) or
              Uni(0.5, 1.5), optionally with variance shrinking to zero
              over the run

Weights are always treated as constants with respect to the network
parameters, and every policy keeps them strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .network import NetworkSpec, ParamSet, TapeParams, make_tape_params

NORM_KINDS = ("mse", "l1", "l2", "l3", "linf", "l1+l2+l3", "l2+linf", "mse+linf")
POLICIES = ("fixed", "lra", "softadapt", "relobralo", "stoch-normal", "stoch-uniform")

# guards against early-training zeros in loss ratios and gradient quotients
RATIO_FLOOR = 1e-4
RATIO_CEIL = 1e4
DENOM_FLOOR = 1e-12


def _is_var(x):
    return isinstance(x, Var)


def _mean(x):
    return ad.mean(x) if _is_var(x) else float(np.mean(x))


def _abs(x):
    return ad.absolute(x) if _is_var(x) else np.abs(x)


def _amax(x):
    return ad.amax(x) if _is_var(x) else float(np.max(x))


def _powf(x, p):
    return ad.powf(x, p) if _is_var(x) else np.power(x, p)


def _count(x):
    return int(np.prod(np.shape(x.value if _is_var(x) else x)))


def apply_norm(residuals, norm: str):
    """Reduce a residual vector to one non-negative number.

    mse is the mean of squares; Lp norms are count-normalized,
    (sum |r|^p / n)^(1/p), so term magnitudes do not depend on the sample
    count; linf is max |r|.  Sum kinds add their components.  Accepts a
    tape Var (differentiable) or a plain array.
    """
    if norm not in NORM_KINDS:
        raise ValueError(f"unknown norm {norm!r}")
    if _count(residuals) == 0:
        raise ValueError("empty residual vector")
    if "+" in norm:
        parts = norm.split("+")
        out = apply_norm(residuals, parts[0])
        for p in parts[1:]:
            out = out + apply_norm(residuals, p)
        return out
    if norm == "mse":
        return _mean(residuals * residuals)
    if norm == "linf":
        return _amax(_abs(residuals))
    p = {"l1": 1.0, "l2": 2.0, "l3": 3.0}[norm]
    m = _mean(_powf(_abs(residuals), p))
    return m if p == 1.0 else _powf(m, 1.0 / p)


@dataclass
class LossBundle:
    """Per-step loss terms with their tape, for one problem and parameter set."""

    labels: list[str]
    kinds: list[str]  # 'pde', 'bc', 'ic', 'data', 'interface'
    terms: list[Var]
    tape: Tape
    tape_params: TapeParams
    epoch: int = 0

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("term labels must be unique")
        if not self.labels:
            raise ValueError("need at least one loss term")

    @property
    def k(self) -> int:
        return len(self.terms)

    def values(self) -> np.ndarray:
        v = np.array([t.value for t in self.terms])
        if not np.all(np.isfinite(v)):
            bad = [self.labels[i] for i in np.nonzero(~np.isfinite(v))[0]]
            raise ad.EvaluationError(f"non-finite loss terms: {bad}")
        return v

    def term_gradients(self) -> list[np.ndarray]:
        """Flat parameter gradient of each term (one reverse sweep per term)."""
        wrt = self.tape_params.all_vars()
        out = []
        for t in self.terms:
            g = self.tape.backward(t, wrt=wrt)
            out.append(self.tape_params.gradient_as_paramset(g).flatten())
        return out

    def total_gradient(self, lambdas) -> np.ndarray:
        """Flat gradient of sum_i lambda_i * L_i in a single reverse sweep."""
        seeds = {t.idx: float(l) for t, l in zip(self.terms, lambdas)}
        g = self.tape.backward(seeds=seeds, wrt=self.tape_params.all_vars())
        return self.tape_params.gradient_as_paramset(g).flatten()


def assemble(problem, spec: NetworkSpec, params: ParamSet, samples,
             norm: str = "mse", tape: Tape | None = None,
             tape_params: TapeParams | None = None) -> LossBundle:
    """Build the loss graph for one problem: residuals via the tape engine,
    one norm-reduced term per condition."""
    if tape is None:
        tape = Tape()
        tape_params = make_tape_params(tape, spec, params)
    residuals = problem.build_terms(tape, tape_params, samples)
    labels, kinds, terms = [], [], []
    for label, kind, resid in residuals:
        labels.append(label)
        kinds.append(kind)
        terms.append(apply_norm(resid, norm))
    return LossBundle(labels, kinds, terms, tape, tape_params)


# ---------------------------------------------------------------------------
# scalarization state and policies


@dataclass
class ScalingState:
    policy: str
    k: int
    rng: np.random.Generator
    alpha: float = 0.999
    temperature: float = 0.1
    rho_mean: float = 0.999
    m: float | None = None  # softmax scale; defaults to k
    total_epochs: int | None = None  # needed by decreasing-variance draws
    variance: str = "fixed"  # 'fixed' | 'decreasing'
    fixed_weights: np.ndarray | None = None
    t: int = 0
    lam: np.ndarray = field(default_factory=lambda: np.array([]))
    prev_losses: np.ndarray | None = None
    initial_losses: np.ndarray | None = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.m is None:
            self.m = float(self.k)
        if self.lam.size == 0:
            self.lam = np.ones(self.k)
        if self.variance not in ("fixed", "decreasing"):
            raise ValueError("variance must be 'fixed' or 'decreasing'")
        if self.policy.startswith("stoch") and self.variance == "decreasing" \
                and self.total_epochs is None:
            raise ValueError("decreasing variance needs total_epochs")


def make_scaling_state(policy: str, k: int, seed: int = 0, **kw) -> ScalingState:
    if policy == "lra":
        kw.setdefault("alpha", 0.9)
    return ScalingState(policy=policy, k=k, rng=np.random.default_rng(seed), **kw)


def _clamped_ratio(num, den):
    r = num / np.maximum(den, DENOM_FLOOR)
    return np.clip(r, RATIO_FLOOR, RATIO_CEIL)


def _softmax(x):
    e = np.exp(x - np.max(x))
    # widely spread inputs underflow to exact zeros; keep every weight
    # strictly positive (renormalized, so the sum stays 1)
    e = np.maximum(e, 1e-290)
    return e / np.sum(e)


def softadapt_update(state: ScalingState, values: np.ndarray) -> np.ndarray:
    ratios = _clamped_ratio(values, state.prev_losses)
    return _softmax(ratios)


def relobralo_hat(values: np.ndarray, lookback: np.ndarray, temperature: float,
                  m: float) -> np.ndarray:
    """Raw lookback weights: m * softmax(L_i(t) / (T * L_i(t'))).

    Sums to m; approaches an argmax indicator as T -> 0 and a uniform
    scaling as T -> infinity."""
    return m * _softmax(_clamped_ratio(values, lookback) / temperature)


def relobralo_update(state: ScalingState, values: np.ndarray) -> np.ndarray:
    """Temperature softmax over loss ratios with Bernoulli lookback.

    One Bernoulli draw is shared across all terms in a step."""
    T = state.temperature
    hat_recent = relobralo_hat(values, state.prev_losses, T, state.m)
    hat_init = relobralo_hat(values, state.initial_losses, T, state.m)
    rho = 1.0 if state.rng.random() < state.rho_mean else 0.0
    a = state.alpha
    return a * (rho * state.lam + (1.0 - rho) * hat_init) + (1.0 - a) * hat_recent


def lra_update(bundle: LossBundle, state: ScalingState) -> np.ndarray:
    """Gradient-magnitude balancing: non-PDE terms are scaled by
    max|grad(PDE term)| / mean|grad(term)|, smoothed; PDE terms keep 1."""
    grads = bundle.term_gradients()
    pde_idx = [i for i, kind in enumerate(bundle.kinds) if kind == "pde"]
    if not pde_idx:
        raise ValueError("lra needs at least one pde term")
    ref = max(float(np.max(np.abs(grads[i]))) for i in pde_idx)
    lam_hat = np.ones(bundle.k)
    for i in range(bundle.k):
        if i in pde_idx:
            continue
        lam_hat[i] = _clamped_ratio(ref, float(np.mean(np.abs(grads[i]))))
    a = state.alpha
    lam = a * state.lam + (1.0 - a) * lam_hat
    lam[pde_idx] = 1.0
    return lam


def sample_stochastic_coeffs(state: ScalingState, t: int) -> np.ndarray:
    """Fresh positive weights for epoch ``t``; one draw per term."""
    k, rng = state.k, state.rng
    if state.variance == "decreasing":
        frac = min(t / state.total_epochs, 1.0)
    else:
        frac = 0.0
    if state.policy == "stoch-normal":
        sigma = 0.25 * (1.0 - frac)
        draws = rng.normal(1.0, sigma, size=k)
        while np.any(draws <= 0.0):  # strict positivity, ~3e-5 rejection rate
            bad = draws <= 0.0
            draws[bad] = rng.normal(1.0, sigma, size=int(np.sum(bad)))
        return draws
    low = 0.5 + 0.5 * frac
    high = 1.5 - 0.5 * frac
    if high <= low:
        return np.ones(k)
    return rng.uniform(low, high, size=k)


def compute_lambdas(state: ScalingState, bundle: LossBundle) -> np.ndarray:
    """Advance the policy one epoch and return the weights to use now."""
    values = bundle.values()
    if state.k != bundle.k:
        raise ValueError("state sized for a different number of terms")
    policy = state.policy
    if policy == "fixed":
        lam = state.fixed_weights if state.fixed_weights is not None else np.ones(state.k)
        lam = np.asarray(lam, dtype=float)
    elif policy in ("stoch-normal", "stoch-uniform"):
        lam = sample_stochastic_coeffs(state, state.t)
    elif policy == "lra":
        lam = lra_update(bundle, state)
    elif state.prev_losses is None:
        lam = np.ones(state.k)  # no history yet
    elif policy == "softadapt":
        lam = softadapt_update(state, values)
    else:
        lam = relobralo_update(state, values)

    if np.any(lam <= 0.0):
        raise RuntimeError("scalarization produced a non-positive weight")
    if state.initial_losses is None:
        state.initial_losses = np.maximum(values, DENOM_FLOOR)
    state.prev_losses = np.maximum(values, DENOM_FLOOR)
    state.lam = lam
    state.t += 1
    return lam


def scalarize(bundle: LossBundle, state: ScalingState):
    """Combine the bundle's terms into one scalar node: sum_i lambda_i L_i.

    The weights are recorded as constants, so gradients of the returned node
    are consistently scaled.  Returns (total, state)."""
    lam = compute_lambdas(state, bundle)
    tape = bundle.tape
    total = tape.const(float(lam[0])) * bundle.terms[0]
    for l, term in zip(lam[1:], bundle.terms[1:]):
        total = total + tape.const(float(l)) * term
    return total, state
