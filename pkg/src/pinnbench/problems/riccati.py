"""Second-order Riccati benchmark ODE on [0, 0.99].

    y'' + 2 t (y')^2 = 0,   y(0) = 2,   y'(0) = -1,

with the closed-form solution y(t) = (ln|t-1| - ln|t+1|)/2 + 2, singular at
t = 1.  The short domain keeps the problem smooth but hard near the end.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..network import tape_forward

T_END = 0.99


def riccati_exact(t):
    """Closed-form solution; domain error at t = +-1."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(np.abs(np.abs(t) - 1.0) < 1e-14):
        raise ValueError("exact solution is singular at t = +-1")
    return 0.5 * (np.log(np.abs(t - 1.0)) - np.log(np.abs(t + 1.0))) + 2.0


def riccati_residual(y, y_t, y_tt, t):
    """ODE residual; works on numbers, arrays, or tape Vars."""
    return y_tt + 2.0 * t * (y_t * y_t)


class RiccatiProblem:
    name = "riccati"
    input_dim = 1
    default_widths = (1, 20, 20, 20, 1)

    def __init__(self, n_interior: int = 300, t_end: float = T_END):
        if n_interior < 1:
            raise ValueError("need at least one interior point")
        self.n_interior = n_interior
        self.t_end = t_end

    def sample(self, seed: int):
        rng = np.random.default_rng(seed)
        return {"interior": rng.uniform(0.0, self.t_end, self.n_interior)}

    def _scale(self, t):
        # map the domain into [-1, 1] before the tanh net
        return (t - self.t_end / 2.0) * (2.0 / self.t_end)

    def build_terms(self, tape, tp, samples):
        t_leaf = tape.input(samples["interior"])
        y = ad.col(tape_forward(tape, tp, ad.stack_cols([self._scale(t_leaf)])), 0)
        y_t = tape.backward(ad.total(y), wrt=[t_leaf], record=True)[t_leaf.idx]
        y_tt = tape.backward(ad.total(y_t), wrt=[t_leaf], record=True)[t_leaf.idx]
        pde = riccati_residual(y, y_t, y_tt, t_leaf)

        t0 = tape.input(np.zeros(1))
        y0 = ad.col(tape_forward(tape, tp, ad.stack_cols([self._scale(t0)])), 0)
        y0_t = tape.backward(ad.total(y0), wrt=[t0], record=True)[t0.idx]
        ic_value = y0 - 2.0
        ic_slope = y0_t + 1.0

        return [
            ("pde", "pde", pde),
            ("ic-value", "ic", ic_value),
            ("ic-slope", "ic", ic_slope),
        ]

    def predict(self, spec, params, pts):
        from ..network import forward

        pts = np.atleast_1d(np.asarray(pts, dtype=np.float64))
        return forward(spec, params, self._scale(pts).reshape(-1, 1))[:, 0]

    def test_probes(self):
        # acceptance probes stop at 0.95, away from the singularity
        return np.linspace(0.0, 0.95, 200)

    def reference(self):
        return riccati_exact
