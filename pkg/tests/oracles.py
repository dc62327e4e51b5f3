"""Independent reference solutions used by the tests.

The shooting oracle never touches the variational machinery: it integrates
the recurrence ``x(t+1) = 3x(t) - x(t)^3 - x(t-1)`` backward from the linear
tail and root-finds the tail amplitude that makes the orbit symmetric about
site 0.
"""

import numpy as np
from scipy.optimize import brentq

LAMBDA = (3.0 - np.sqrt(5.0)) / 2.0


def _backward(eps, M):
    # x[M] = eps, x[M+1] = LAMBDA*eps on the stable manifold of the origin
    x = np.zeros(M + 3)
    idx = lambda t: t + 1  # store t = -1..M+1
    x[idx(M + 1)] = LAMBDA * eps
    x[idx(M)] = eps
    for t in range(M, -1, -1):
        x[idx(t - 1)] = 3 * x[idx(t)] - x[idx(t)] ** 3 - x[idx(t + 1)]
    return x


def shooting_bump(M=30, grid=400):
    """Site-centred positive homoclinic of the scalar cubic map on ``[-M-1, M+1]``.

    Returns ``(ts, x)``.
    """
    def mismatch(log_eps):
        x = _backward(np.exp(log_eps), M)
        return x[0] - x[2]  # x(-1) - x(1)

    logs = np.linspace(np.log(1e-3) + M * np.log(LAMBDA), np.log(10.0) + M * np.log(LAMBDA), grid)
    vals = np.array([mismatch(s) for s in logs])
    best = None
    for a, b, fa, fb in zip(logs[:-1], logs[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
            root = brentq(mismatch, a, b, xtol=1e-15, rtol=1e-15)
            x = _backward(np.exp(root), M)
            half = x[1:]  # t = 0..M+1
            if np.all(half > 0) and np.all(np.diff(half) < 0):
                best = half
                break
    if best is None:
        raise RuntimeError("no monotone site-centred orbit found")
    full = np.concatenate([best[:0:-1], best])
    ts = np.arange(-M - 1, M + 2)
    return ts, full
