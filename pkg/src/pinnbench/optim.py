"""Adam optimizer and the two learning-rate schedules used by the harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(RuntimeError):
    """Raised when a step is rejected because the gradient is not finite."""


@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float) -> np.ndarray:
    """One bias-corrected Adam update.  Mutates ``state``, returns new params."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    grads = np.asarray(grads)
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError(
            f"non-finite gradient at step {state.t}: "
            f"{np.count_nonzero(~np.isfinite(grads))} bad entries"
        )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1 - b1) * grads
    state.v = b2 * state.v + (1 - b2) * grads * grads
    mhat = state.m / (1 - b1 ** state.t)
    vhat = state.v / (1 - b2 ** state.t)
    return params - lr * mhat / (np.sqrt(vhat) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant or triangular cyclical learning rate.

    piecewise: ``segments`` is a list of (start_epoch, rate); the rate of the
    last segment whose start is <= step applies.  cyclical: a triangular wave
    that starts at ``base_rate``, peaks at ``max_rate`` after ``half_period``
    steps and returns to base after a full period.
    """

    kind: str
    segments: tuple[tuple[int, float], ...] = ()
    base_rate: float = 0.0
    max_rate: float = 0.0
    half_period: int = 0

    def __post_init__(self):
        if self.kind == "piecewise":
            if not self.segments:
                raise ValueError("piecewise schedule needs at least one segment")
            starts = [s for s, _ in self.segments]
            if starts != sorted(starts) or len(set(starts)) != len(starts):
                raise ValueError("segment thresholds must be strictly increasing")
            if any(r <= 0 for _, r in self.segments):
                raise ValueError("rates must be positive")
        elif self.kind == "cyclical":
            if self.base_rate <= 0 or self.max_rate < self.base_rate:
                raise ValueError("need 0 < base_rate <= max_rate")
            if self.half_period < 1:
                raise ValueError("half_period must be >= 1")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def piecewise(cls, segments) -> "LrSchedule":
        return cls(kind="piecewise",
                   segments=tuple((int(s), float(r)) for s, r in segments))

    @classmethod
    def constant(cls, rate: float) -> "LrSchedule":
        return cls.piecewise([(0, rate)])

    @classmethod
    def cyclical(cls, base_rate: float, max_rate: float, half_period: int) -> "LrSchedule":
        return cls(kind="cyclical", base_rate=float(base_rate),
                   max_rate=float(max_rate), half_period=int(half_period))

    def lr_at(self, step: int) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        if self.kind == "piecewise":
            rate = self.segments[0][1]
            for start, r in self.segments:
                if step >= start:
                    rate = r
            return rate
        # triangular wave, period 2 * half_period
        phase = (step / self.half_period) % 2.0
        tri = phase if phase <= 1.0 else 2.0 - phase
        return self.base_rate + (self.max_rate - self.base_rate) * tri


def lr_at(schedule: LrSchedule, step: int) -> float:
    return schedule.lr_at(step)


def default_piecewise() -> LrSchedule:
    """1e-2, dropping to 2e-3 after epoch 2000 and 5e-4 after epoch 8000."""
    return LrSchedule.piecewise([(0, 1e-2), (2000, 2e-3), (8000, 5e-4)])


def default_cyclical() -> LrSchedule:
    """Cycles between 5e-4 and 1e-2 every 250 steps, starting at the base."""
    return LrSchedule.cyclical(5e-4, 1e-2, 250)
