"""Independent reference implementations used only as test oracles."""

import numpy as np


def backprop_recursion(weights, biases, x, y):
    """Layer-by-layer adjoint recursion for a tanh FCNN with loss
    0.5 * ||phi(x) - y||^2 (no activation after the last layer).

    Returns (dW list, db list).  Kept deliberately separate from the tape
    engine so the two can be cross-checked.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    L = len(weights)
    a = [x]
    z = []
    for ell in range(L):
        zl = weights[ell] @ a[-1] + biases[ell]
        z.append(zl)
        a.append(zl if ell == L - 1 else np.tanh(zl))

    # delta for the output layer: dLoss/d(a_L), with a_L = z_L
    delta = a[-1] - y
    dW = [None] * L
    db = [None] * L
    for ell in range(L - 1, -1, -1):
        dW[ell] = np.outer(delta, a[ell])
        db[ell] = delta.copy()
        if ell > 0:
            delta = (weights[ell].T @ delta) * (1.0 - np.tanh(z[ell - 1]) ** 2)
    return dW, db


def finite_diff_gradient(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def finite_diff_second(f, x, i, j, h=1e-4):
    x = np.asarray(x, dtype=float)

    def shift(di, dj):
        v = x.copy()
        v.flat[i] += di
        v.flat[j] += dj
        return f(v)

    if i == j:
        return (shift(h, 0) - 2 * f(x) + shift(-h, 0)) / (h * h)
    return (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4 * h * h)
