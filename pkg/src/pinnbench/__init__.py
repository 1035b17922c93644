"""PINN training library: tape autodiff, tanh networks, Adam, loss
scalarization policies, benchmark PDE problems, reference oracles, and an
experiment harness."""

__version__ = "0.1.0"
