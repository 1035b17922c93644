"""Viscous Burgers' benchmark on [0, L] x [0, T]:

    u_t + u u_x - nu u_xx = 0,
    u(x, 0) = exp(-(x - L/2)^2),   u(0, t) = u(L, t) = 0,

with nu = 0.01, L = 8, T = 5.  No closed-form solution; the method-of-lines
solver in the oracle module provides the reference grid.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..network import tape_forward


def burgers_residual(u, u_t, u_x, u_xx, nu: float = 0.01):
    """Interior residual; works on numbers, arrays, or tape Vars."""
    return u_t + u * u_x - nu * u_xx


class BurgersProblem:
    name = "burgers"
    input_dim = 2
    default_widths = (2, 20, 20, 20, 1)

    def __init__(self, nu: float = 0.01, length: float = 8.0, t_end: float = 5.0,
                 n_interior: int = 1200, n_ic: int = 128, n_bc: int = 128):
        self.nu = nu
        self.length = length
        self.t_end = t_end
        self.n_interior = n_interior
        self.n_ic = n_ic
        self.n_bc = n_bc

    def ic_target(self, x):
        return np.exp(-((np.asarray(x) - self.length / 2.0) ** 2))

    def sample(self, seed: int):
        rng = np.random.default_rng(seed)
        return {
            "interior_x": rng.uniform(0.0, self.length, self.n_interior),
            "interior_t": rng.uniform(0.0, self.t_end, self.n_interior),
            "ic_x": rng.uniform(0.0, self.length, self.n_ic),
            "bc_left_t": rng.uniform(0.0, self.t_end, self.n_bc),
            "bc_right_t": rng.uniform(0.0, self.t_end, self.n_bc),
        }

    def _net_input(self, tape, x_var, t_var):
        # map the domain into [-1, 1]^2 before the tanh net
        xs = (x_var - self.length / 2.0) * (2.0 / self.length)
        ts = (t_var - self.t_end / 2.0) * (2.0 / self.t_end)
        return ad.stack_cols([xs, ts])

    def build_terms(self, tape, tp, samples):
        xk = tape.input(samples["interior_x"])
        tk = tape.input(samples["interior_t"])
        u = ad.col(tape_forward(tape, tp, self._net_input(tape, xk, tk)), 0)
        g = tape.backward(ad.total(u), wrt=[xk, tk], record=True)
        u_x, u_t = g[xk.idx], g[tk.idx]
        u_xx = tape.backward(ad.total(u_x), wrt=[xk], record=True)[xk.idx]
        pde = burgers_residual(u, u_t, u_x, u_xx, self.nu)

        xi = tape.input(samples["ic_x"])
        ti = tape.const(np.zeros(self.n_ic))
        u_ic = ad.col(tape_forward(tape, tp, self._net_input(tape, xi, ti)), 0)
        ic = u_ic - tape.const(self.ic_target(samples["ic_x"]))

        terms = [("pde", "pde", pde), ("ic", "ic", ic)]
        for label, xv, tkey in (
            ("bc-left", 0.0, "bc_left_t"),
            ("bc-right", self.length, "bc_right_t"),
        ):
            tb = tape.input(samples[tkey])
            xb = tape.const(np.full(len(samples[tkey]), xv))
            u_b = ad.col(tape_forward(tape, tp, self._net_input(tape, xb, tb)), 0)
            terms.append((label, "bc", u_b))
        return terms

    def predict(self, spec, params, pts):
        from ..network import forward

        pts = np.asarray(pts, dtype=np.float64)
        xs = (pts[:, 0] - self.length / 2.0) * (2.0 / self.length)
        ts = (pts[:, 1] - self.t_end / 2.0) * (2.0 / self.t_end)
        return forward(spec, params, np.stack([xs, ts], axis=1))[:, 0]

    def test_probes(self, n: int = 2000, seed: int = 12345):
        rng = np.random.default_rng(seed)
        return np.stack(
            [rng.uniform(0.0, self.length, n), rng.uniform(0.0, self.t_end, n)],
            axis=1,
        )

    def reference(self, nx: int = 401, nt: int = 501):
        from ..oracle import solve_burgers

        return solve_burgers(self.nu, self.length, self.t_end, nx, nt)
