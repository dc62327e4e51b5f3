"""Action functional, window actions, residual and gradients in two metrics."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import SolverError
from .model import SystemModel
from .seq import IndexSet, Sequence, inner_star, window_energy

__all__ = [
    "OperatorA",
    "operator_for",
    "apply_operator_A",
    "action",
    "window_action",
    "residual",
    "grad_l2",
    "grad_star",
    "star_norm_of_gradient",
]


class OperatorA:
    """Banded SPD matrix of ``u -> -D^2 u(t-1) + L(t) u(t)`` on ``[lo, hi]`` with zero exterior.

    Unknowns are ordered site-major (``(t - lo) * dim + component``), so the
    block-tridiagonal operator is a band matrix of half-bandwidth ``dim``.
    The Cholesky factor is computed once and reused by :meth:`solve`.
    """

    def __init__(self, m: SystemModel, lo: int, hi: int):
        if hi < lo:
            raise ValueError("empty window")
        self.model = m
        self.lo, self.hi = int(lo), int(hi)
        n = m.dim
        self.size = (self.hi - self.lo + 1) * n
        self.ab = self._band()
        try:
            self.chol = cholesky_banded(self.ab, lower=False)
        except LinAlgError as exc:  # pragma: no cover - guarded by the model invariants
            raise SolverError(f"operator A is not positive definite: {exc}") from exc

    @property
    def sites(self) -> int:
        return self.hi - self.lo + 1

    def _band(self) -> np.ndarray:
        n = self.model.dim
        Lt = self.model.L_at(np.arange(self.lo, self.hi + 1))
        ab = np.zeros((n + 1, self.size))
        for c in range(n):
            for c2 in range(c, n):
                # entry (row=(t,c), col=(t,c2)) lives at ab[n - (c2 - c), col]
                ab[n - (c2 - c), c2::n] = Lt[:, c, c2] + (2.0 if c == c2 else 0.0)
        ab[0, n:] = -1.0
        return ab

    def dense(self) -> np.ndarray:
        n = self.model.dim
        A = np.zeros((self.size, self.size))
        for d in range(n + 1):
            diag = self.ab[n - d, d:]
            A[np.arange(self.size - d), np.arange(d, self.size)] = diag
            A[np.arange(d, self.size), np.arange(self.size - d)] = diag
        return A

    def matvec(self, U: np.ndarray) -> np.ndarray:
        """Apply to an ``(sites, dim)`` array (zero exterior)."""
        P = np.pad(U, ((1, 1), (0, 0)))
        Lt = self.model.L_at(np.arange(self.lo, self.hi + 1))
        return 2 * U - P[2:] - P[:-2] + np.einsum("tij,tj->ti", Lt, U)

    def solve(self, R: np.ndarray) -> np.ndarray:
        """Solve ``A X = R`` for ``R`` of shape ``(sites, dim)``."""
        x = cho_solve_banded((self.chol, False), np.asarray(R, dtype=float).reshape(-1))
        return x.reshape(self.sites, self.model.dim)

    def check_support(self, u: Sequence):
        if len(u) and not u.is_zero:
            s = u.support()
            if s[0] < self.lo or s[1] > self.hi:
                raise ValueError(f"sequence support {s} leaves the window [{self.lo}, {self.hi}]")


@lru_cache(maxsize=32)
def _cached_operator(m: SystemModel, lo: int, hi: int) -> OperatorA:
    return OperatorA(m, lo, hi)


def operator_for(m: SystemModel, lo: int, hi: int) -> OperatorA:
    """Shared factorised operator for a model and window (cached)."""
    return _cached_operator(m, int(lo), int(hi))


def apply_operator_A(u: Sequence, m: SystemModel) -> Sequence:
    """``(A u)(t) = -D^2 u(t-1) + L(t) u(t)`` on the support of ``u`` dilated by one."""
    if len(u) == 0:
        return u
    lo, hi = u.base - 1, u.end + 1
    U = u.on(lo - 1, hi + 1)
    Lt = m.L_at(np.arange(lo, hi + 1))
    out = 2 * U[1:-1] - U[2:] - U[:-2] + np.einsum("tij,tj->ti", Lt, U[1:-1])
    return Sequence(lo, out, u.dim)


def _potential_sum(u: Sequence, m: SystemModel, F: IndexSet | None = None) -> float:
    if len(u) == 0:
        return 0.0
    ts = np.arange(u.base, u.end + 1)
    vals = m.V_sites(ts, u.values)
    if F is not None:
        vals = vals[_mask(ts, F)]
    return float(np.sum(vals))


def _mask(ts: np.ndarray, F: IndexSet) -> np.ndarray:
    mask = np.zeros(ts.shape, dtype=bool)
    for a, b in F.intervals:
        mask |= (ts >= a) & (ts <= b)
    return mask


def action(u: Sequence, m: SystemModel) -> float:
    """``f(u) = 1/2 ||u||_*^2 - sum_t V(t, u(t))``."""
    return 0.5 * inner_star(u, u, m) - _potential_sum(u, m)


def window_action(u: Sequence, I: IndexSet, m: SystemModel) -> float:
    """Action restricted to the index set ``I``: ``1/2 ||u||_I^2 - sum_{t in I} V(t, u(t))``."""
    return 0.5 * window_energy(u, I, m) - _potential_sum(u, m, I)


def residual(u: Sequence, m: SystemModel) -> Sequence:
    """``D^2 u(t-1) - L(t) u(t) + V_x(t, u(t))`` on the support of ``u`` dilated by one."""
    if len(u) == 0:
        return u
    Au = apply_operator_A(u, m)
    ts = np.arange(Au.base, Au.end + 1)
    G = m.Vx_sites(ts, u.on(Au.base, Au.end))
    return Sequence(Au.base, G - Au.values, u.dim)


def grad_l2(u: Sequence, m: SystemModel) -> Sequence:
    """Representer of the derivative in the plain l2 pairing: ``A u - V_x(., u)``."""
    return -residual(u, m)


def grad_star(u: Sequence, m: SystemModel, A: OperatorA) -> Sequence:
    """Representer in the energy pairing: solves ``A g = grad_l2(u)`` on A's window."""
    A.check_support(u)
    rhs = grad_l2(u, m).on(A.lo, A.hi)
    g = A.solve(rhs)
    if not np.all(np.isfinite(g)):
        raise SolverError("energy-metric gradient solve produced non-finite values")
    return Sequence(A.lo, g, u.dim)


def star_norm_of_gradient(u: Sequence, m: SystemModel, A: OperatorA) -> float:
    """``||grad_star(u)||_*``, the dual norm of the derivative."""
    rhs = grad_l2(u, m).on(A.lo, A.hi)
    g = A.solve(rhs)
    return float(np.sqrt(max(np.sum(g * rhs), 0.0)))
