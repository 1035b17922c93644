"""Independent reference solvers and the test-error metric.

Everything here is deliberately disjoint from the tape/network machinery:
classical finite differences and closed forms only, so network predictions
can be scored against solutions obtained by a different numerical route.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .problems.poisson_boltzmann import PbGeometry, mollified_delta


@dataclass
class ReferenceGrid:
    """A dense solution on a rectilinear grid, interpolable at probe points."""

    axes: list[np.ndarray]  # one 1-D array per dimension
    values: np.ndarray  # shape = tuple(len(a) for a in axes)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=np.float64) for a in self.axes]
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("values shape does not match axes")
        self._interp = RegularGridInterpolator(
            self.axes, self.values, method="linear", bounds_error=True
        )

    def interpolate(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if len(self.axes) == 1:
            pts = pts.reshape(-1, 1)
        return self._interp(pts)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["ndim", len(self.axes)])
            for k, v in sorted(self.metadata.items()):
                w.writerow(["meta", k, v])
            for a in self.axes:
                w.writerow(["axis", *(f"{float(x)!r}" for x in a)])
            for v in self.values.ravel():
                w.writerow(["value", f"{float(v)!r}"])

    @classmethod
    def from_csv(cls, path) -> "ReferenceGrid":
        axes, vals, meta = [], [], {}
        with open(path, newline="") as f:
            for row in csv.reader(f):
                if row[0] == "axis":
                    axes.append(np.array([float(x) for x in row[1:]]))
                elif row[0] == "value":
                    vals.append(float(row[1]))
                elif row[0] == "meta":
                    meta[row[1]] = row[2]
        shape = tuple(len(a) for a in axes)
        return cls(axes, np.array(vals).reshape(shape), meta)


def test_mse(predict_fn, reference, probes) -> float:
    """Mean squared error of ``predict_fn`` against the reference at probes.

    ``reference`` may be a ReferenceGrid or any callable over the probes.
    """
    probes = np.asarray(probes, dtype=np.float64)
    pred = np.asarray(predict_fn(probes), dtype=np.float64).ravel()
    if isinstance(reference, ReferenceGrid):
        ref = reference.interpolate(probes)
    else:
        ref = np.asarray(reference(probes), dtype=np.float64)
    ref = ref.ravel()
    if pred.shape != ref.shape:
        raise ValueError("prediction/reference length mismatch")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(ref))):
        raise ValueError("non-finite values in test-error computation")
    return float(np.mean((pred - ref) ** 2))


# -- Burgers method-of-lines reference ---------------------------------------


def solve_burgers(nu: float = 0.01, length: float = 8.0, t_end: float = 5.0,
                  nx: int = 401, nt: int = 501) -> ReferenceGrid:
    """Method-of-lines solve of u_t + u u_x = nu u_xx, Gaussian bump IC,
    homogeneous Dirichlet walls.  Central differences in space, RK4 in time
    with CFL-limited substeps.  Returns u on the (x, t) output grid.
    """
    x = np.linspace(0.0, length, nx)
    t_out = np.linspace(0.0, t_end, nt)
    dx = x[1] - x[0]
    u0 = np.exp(-((x - length / 2.0) ** 2))
    u0[0] = u0[-1] = 0.0
    blow_up = 10.0 * np.max(np.abs(u0))

    def rhs(u):
        d = np.zeros_like(u)
        ux = (u[2:] - u[:-2]) / (2.0 * dx)
        uxx = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx ** 2
        d[1:-1] = -u[1:-1] * ux + nu * uxx
        return d

    out = np.empty((nx, nt))
    out[:, 0] = u0
    u = u0.copy()
    safety = 0.4
    for j in range(1, nt):
        span = t_out[j] - t_out[j - 1]
        remaining = span
        while remaining > 1e-15:
            umax = max(np.max(np.abs(u)), 1e-12)
            dt = safety * min(dx / umax, dx ** 2 / max(2.0 * nu, 1e-12))
            dt = min(dt, remaining)
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * dt * k1)
            k3 = rhs(u + 0.5 * dt * k2)
            k4 = rhs(u + dt * k3)
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            u[0] = u[-1] = 0.0
            remaining -= dt
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blow_up:
                raise RuntimeError("Burgers reference solve went unstable")
        out[:, j] = u
    return ReferenceGrid(
        [x, t_out], out,
        {"problem": "burgers", "nu": nu, "nx": nx, "nt": nt},
    )


# -- linearized Poisson-Boltzmann, radial reference --------------------------


def solve_pb_linear_radial(geom: PbGeometry, m: int = 400) -> ReferenceGrid:
    """Finite-difference solve of the linearized, spherically symmetric
    problem via the substitution u = r * phi:

        -eps1 u'' = 4 pi q r g_sigma(r)           r < R
        -eps2 u'' + kappa_bar^2 u = 0              R < r < Rt
        u(0) = 0,  u(Rt) = Rt * phi_green(Rt)

    with potential and dielectric-flux matching at the interface enforced
    through one-sided second-order stencils.  Requires every charge at the
    sphere center (the only spherically symmetric configuration).

    ``m`` is the number of intervals per sphere radius; the grid spacing is
    R/m so the interface lands exactly on a node.
    """
    if np.any(np.linalg.norm(geom.charge_positions - geom.center, axis=1) > 1e-12):
        raise ValueError("radial reference needs all charges at the center")
    q = float(np.sum(geom.charge_magnitudes))
    R, Rt = geom.radius, geom.truncation_radius
    ratio = Rt / R
    n_out = int(round(m * (ratio - 1.0)))
    if abs(n_out - m * (ratio - 1.0)) > 1e-9:
        raise ValueError("truncation radius must be a grid-commensurate multiple")
    h = R / m
    M = m + n_out  # interface node index is m, last node is M
    r = h * np.arange(M + 1)
    kb2 = geom.kappa_bar_out ** 2
    pref = geom.potential_prefactor

    A = sp.lil_matrix((M + 1, M + 1))
    b = np.zeros(M + 1)
    A[0, 0] = 1.0  # u(0) = 0
    for j in range(1, m):
        A[j, j - 1] = A[j, j + 1] = -geom.eps_in / h ** 2
        A[j, j] = 2.0 * geom.eps_in / h ** 2
        b[j] = 4.0 * np.pi * pref * q * r[j] * mollified_delta(
            np.array([r[j], 0.0, 0.0]), np.zeros(3), geom.sigma
        )
    # interface: eps1 R u'(R-) - eps2 R u'(R+) = (eps1 - eps2) u(R)
    e1R, e2R = geom.eps_in * R, geom.eps_out * R
    A[m, m - 2] = e1R / (2.0 * h)
    A[m, m - 1] = -4.0 * e1R / (2.0 * h)
    A[m, m] = 3.0 * e1R / (2.0 * h) + 3.0 * e2R / (2.0 * h) - (geom.eps_in - geom.eps_out)
    A[m, m + 1] = -4.0 * e2R / (2.0 * h)
    A[m, m + 2] = e2R / (2.0 * h)
    for j in range(m + 1, M):
        A[j, j - 1] = A[j, j + 1] = -geom.eps_out / h ** 2
        A[j, j] = 2.0 * geom.eps_out / h ** 2 + kb2
    A[M, M] = 1.0
    b[M] = pref * q / geom.eps_out * np.exp(-geom.kappa_bar_out * Rt / np.sqrt(geom.eps_out))

    u = spsolve(A.tocsr(), b)
    phi = np.empty_like(u)
    phi[1:] = u[1:] / r[1:]
    phi[0] = (4.0 * u[1] - u[2]) / (2.0 * h)  # lim u/r = u'(0)
    return ReferenceGrid(
        [r], phi,
        {"problem": "pb-linear-radial", "m": m, "q": q,
         "eps_in": geom.eps_in, "eps_out": geom.eps_out,
         "kappa": geom.kappa, "sigma": geom.sigma},
    )


def radial_reference_fn(grid: ReferenceGrid, center=None):
    """Wrap a radial grid as a callable over 3-D probe points."""
    c = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64)

    def fn(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return grid.interpolate(np.linalg.norm(pts - c, axis=1))

    return fn
