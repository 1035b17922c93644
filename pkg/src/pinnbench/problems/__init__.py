"""Benchmark problem definitions: residual operators, samplers, references."""

from .burgers import BurgersProblem, burgers_residual
from .riccati import RiccatiProblem, riccati_exact, riccati_residual
from .poisson_boltzmann import (
    PbGeometry,
    PbProblem,
    PhysicalConstants,
    green_boundary,
    load_charges,
    mollified_delta,
)

__all__ = [
    "BurgersProblem",
    "burgers_residual",
    "RiccatiProblem",
    "riccati_exact",
    "riccati_residual",
    "PbGeometry",
    "PbProblem",
    "PhysicalConstants",
    "green_boundary",
    "load_charges",
    "mollified_delta",
    "get_problem",
]


def get_problem(name: str, **kw):
    """Problem registry used by the harness config layer."""
    if name == "burgers":
        return BurgersProblem(**kw)
    if name == "riccati":
        return RiccatiProblem(**kw)
    if name in ("pb-linear", "pb-nonlinear"):
        kw.setdefault("geometry", PbGeometry.single_charge_sphere())
        mode = "linear" if name == "pb-linear" else "nonlinear"
        if kw.setdefault("mode", mode) != mode:
            raise ValueError(f"mode {kw['mode']!r} conflicts with problem {name!r}")
        return PbProblem(**kw)
    raise ValueError(f"unknown problem {name!r}")
