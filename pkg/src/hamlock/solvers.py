"""Energy-metric steepest descent and damped Newton refinement on a bounding window."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, solve_banded

from .errors import SolverError
from .functional import OperatorA, operator_for
from .model import SystemModel
from .seq import Sequence

__all__ = [
    "StepControl",
    "FlowTrajectory",
    "SolveReport",
    "descend",
    "newton_refine",
    "WindowProblem",
]

log = logging.getLogger(__name__)

ZERO_NORM = 1e-6


class WindowProblem:
    """Dense-array view of the functional on a fixed window ``[lo, hi]``.

    All solver inner loops work on ``(sites, dim)`` arrays; this class keeps
    the operator factorisation and the site phases together.
    """

    def __init__(self, m: SystemModel, lo: int, hi: int):
        self.m = m
        self.lo, self.hi = int(lo), int(hi)
        self.A: OperatorA = operator_for(m, self.lo, self.hi)
        self.ts = np.arange(self.lo, self.hi + 1)

    @classmethod
    def for_sequence(cls, m: SystemModel, u: Sequence, window=None) -> "WindowProblem":
        if window is None:
            if len(u) == 0:
                raise ValueError("cannot infer a window from the empty sequence")
            window = (u.base, u.end)
        return cls(m, *window)

    def dense(self, u: Sequence) -> np.ndarray:
        self.A.check_support(u)
        return u.on(self.lo, self.hi)

    def wrap(self, U: np.ndarray) -> Sequence:
        return Sequence(self.lo, U, self.m.dim)

    def action(self, U: np.ndarray) -> float:
        P = np.pad(U, ((1, 1), (0, 0)))
        kinetic = np.sum(np.diff(P, axis=0) ** 2)
        quad = np.einsum("ti,tij,tj->", U, self.m.L_at(self.ts), U)
        return float(0.5 * (kinetic + quad) - np.sum(self.m.V_sites(self.ts, U)))

    def action_batch(self, Us: np.ndarray) -> np.ndarray:
        """Actions of a stack ``(K, sites, dim)`` of window arrays."""
        K = Us.shape[0]
        P = np.pad(Us, ((0, 0), (1, 1), (0, 0)))
        kinetic = np.sum(np.diff(P, axis=1) ** 2, axis=(1, 2))
        quad = np.einsum("kti,tij,ktj->k", Us, self.m.L_at(self.ts), Us)
        pot = self.m.V_sites(np.tile(self.ts, K), Us.reshape(-1, self.m.dim)).reshape(K, -1).sum(axis=1)
        return 0.5 * (kinetic + quad) - pot

    def grad_star_batch(self, Us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Energy-metric gradients of a stack and their squared ``*``-norms."""
        K, S, n = Us.shape
        P = np.pad(Us, ((0, 0), (1, 1), (0, 0)))
        AU = 2 * Us - P[:, 2:] - P[:, :-2] + np.einsum("tij,ktj->kti", self.m.L_at(self.ts), Us)
        G2 = AU - self.m.Vx_sites(np.tile(self.ts, K), Us.reshape(-1, n)).reshape(Us.shape)
        rhs = G2.reshape(K, -1).T
        GS = cho_solve_banded((self.A.chol, False), rhs).T.reshape(Us.shape)
        return GS, np.maximum(np.sum(GS * G2, axis=(1, 2)), 0.0)

    def grad_l2(self, U: np.ndarray) -> np.ndarray:
        return self.A.matvec(U) - self.m.Vx_sites(self.ts, U)

    def grad_star(self, U: np.ndarray) -> tuple[np.ndarray, float]:
        """Energy-metric gradient and its squared ``*``-norm."""
        g2 = self.grad_l2(U)
        gs = self.A.solve(g2)
        return gs, float(max(np.sum(gs * g2), 0.0))

    def star_norm(self, U: np.ndarray) -> float:
        return float(np.sqrt(max(np.sum(U * self.A.matvec(U)), 0.0)))

    def residual_full(self, U: np.ndarray) -> np.ndarray:
        """Residual on the window dilated by one (the two outer entries are truncation leakage)."""
        inner = -self.grad_l2(U)
        return np.vstack([U[:1], inner, U[-1:]])

    def jacobian_band(self, U: np.ndarray) -> np.ndarray:
        """Banded ``A - V_xx(., U)`` in LAPACK general-band layout with ``l = u = dim``."""
        n = self.m.dim
        H = self.m.Vxx_sites(self.ts, U)
        N = U.size
        ab = np.zeros((2 * n + 1, N))
        Aab = self.A.ab  # upper symmetric band, half-bandwidth n
        for d in range(n + 1):
            diag = Aab[n - d, d:].copy()
            ab[n - d, d:] += diag          # upper
            if d:
                ab[n + d, : N - d] += diag  # lower (mirror)
        for c in range(n):
            for c2 in range(n):
                d = c2 - c
                # entry (row=(t,c), col=(t,c2)) goes to ab[n + row - col, col]
                ab[n - d, c2::n] -= H[:, c, c2]
        return ab


@dataclass
class StepControl:
    """Step-size control for :func:`descend`."""

    h0: float = 1.0
    armijo: float = 1e-4
    tol: float = 1e-10
    h_min: float = 1e-14
    floor: Optional[float] = None  # stop once the action drops to this level


@dataclass
class FlowTrajectory:
    iterates: list
    actions: list
    grad_norms: list
    step_sizes: list
    converged: bool = False
    stagnated: bool = False

    def __len__(self) -> int:
        return len(self.iterates)

    @property
    def final(self) -> Sequence:
        return self.iterates[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "f", "grad_norm", "step"])
        for i, (f, g, h) in enumerate(zip(self.actions, self.grad_norms, self.step_sizes)):
            w.writerow([i, repr(f), repr(g), repr(h)])
        return buf.getvalue()


def _descend_arrays(P: WindowProblem, U: np.ndarray, steps: int, ctrl: StepControl,
                    record: bool = True):
    f = P.action(U)
    g, g2 = P.grad_star(U)
    Us, fs, gs, hs = [U], [f], [np.sqrt(g2)], [0.0]
    h = ctrl.h0
    converged = stagnated = False
    for _ in range(steps):
        if np.sqrt(g2) <= ctrl.tol:
            converged = True
            break
        if ctrl.floor is not None and f <= ctrl.floor:
            break
        h = min(ctrl.h0, 2.0 * h)
        while True:
            Unew = U - h * g
            with np.errstate(over="ignore", invalid="ignore"):
                fnew = P.action(Unew)
            # non-finite trial values count as rejected steps
            if np.isfinite(fnew) and fnew <= f - ctrl.armijo * h * g2:
                break
            h *= 0.5
            if h < ctrl.h_min:
                stagnated = True
                break
        if stagnated:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            gn, g2n = P.grad_star(Unew)
        if not (np.isfinite(g2n) and np.all(np.isfinite(gn))):
            stagnated = True
            break
        U, f, g, g2 = Unew, fnew, gn, g2n
        if record:
            Us.append(U)
        else:
            Us[-1] = U
        fs.append(f)
        gs.append(float(np.sqrt(g2)))
        hs.append(h)
    else:
        converged = np.sqrt(g2) <= ctrl.tol
    return Us, fs, gs, hs, bool(converged), stagnated


def descend(u0: Sequence, m: SystemModel, steps: int, ctrl: Optional[StepControl] = None,
            window=None) -> FlowTrajectory:
    """Explicit Euler steps ``u <- u - h grad_star(u)`` with Armijo backtracking.

    Each accepted step satisfies ``f(u_new) <= f(u) - c h ||grad_star(u)||_*^2``
    so the recorded actions never increase. Stops early when the gradient
    norm drops below ``ctrl.tol``; a step size below ``ctrl.h_min`` marks the
    trajectory as stagnated and returns what was computed so far.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ctrl = ctrl or StepControl()
    if window is None and u0.is_zero:
        return FlowTrajectory([u0], [0.0], [0.0], [0.0], converged=True)
    P = WindowProblem.for_sequence(m, u0, window)
    Us, fs, gs, hs, conv, stag = _descend_arrays(P, P.dense(u0), steps, ctrl)
    if stag:
        log.warning("descent stagnated after %d steps (step underflow or overflow)", len(fs) - 1)
    return FlowTrajectory([P.wrap(U) for U in Us], fs, gs, hs, conv, stag)


@dataclass
class SolveReport:
    solution: Sequence
    residual_sup: float
    action_value: float
    star_grad_norm: float
    iterations: int
    converged: bool
    window_used: int
    star_norm: float = 0.0
    residual_history: list = field(default_factory=list)
    zero_solution: bool = False
    message: str = ""
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "residual_sup": self.residual_sup,
            "action": self.action_value,
            "star_grad_norm": self.star_grad_norm,
            "star_norm": self.star_norm,
            "iterations": self.iterations,
            "window_used": self.window_used,
            "zero_solution": self.zero_solution,
            "residual_history": list(self.residual_history),
            "message": self.message,
            **self.extras,
        }


def newton_refine(u0: Sequence, m: SystemModel, tol_res: float = 1e-10, max_iter: int = 50,
                  window=None, tol_grad: float = 1e-8, raise_on_failure: bool = False) -> SolveReport:
    """Damped Newton iteration on the lattice equation restricted to a window.

    The Jacobian ``D^2 - L + V_xx(., u)`` is block tridiagonal and solved as
    a band matrix. A step is accepted when the residual 2-norm decreases,
    otherwise halved, at most 30 times.
    """
    if not tol_res > 0:
        raise ValueError("tol_res must be positive")
    P = WindowProblem.for_sequence(m, u0, window)
    n = m.dim
    U = P.dense(u0)
    R = -P.grad_l2(U)
    rnorm = float(np.linalg.norm(R))
    history = [float(np.abs(P.residual_full(U)).max())]
    it = 0
    message = ""
    while history[-1] > tol_res and it < max_iter:
        it += 1
        try:
            delta = solve_banded((n, n), P.jacobian_band(U), R.reshape(-1), check_finite=False)
        except (LinAlgError, ValueError) as exc:
            message = f"singular Jacobian at iteration {it}: {exc}"
            break
        if not np.all(np.isfinite(delta)):
            message = f"singular Jacobian at iteration {it}"
            break
        delta = delta.reshape(U.shape)
        lam = 1.0
        for _ in range(31):
            Unew = U + lam * delta
            Rnew = -P.grad_l2(Unew)
            rn = float(np.linalg.norm(Rnew))
            if np.isfinite(rn) and rn < rnorm:
                break
            lam *= 0.5
        else:
            message = f"line search failed at iteration {it}"
            break
        U, R, rnorm = Unew, Rnew, rn
        history.append(float(np.abs(P.residual_full(U)).max()))
    res_sup = history[-1]
    gs, g2 = P.grad_star(U)
    gnorm = float(np.sqrt(g2))
    converged = res_sup <= tol_res and gnorm <= tol_grad
    if not converged and not message:
        message = f"no convergence within {max_iter} iterations"
    snorm = P.star_norm(U)
    report = SolveReport(
        solution=P.wrap(U),
        residual_sup=res_sup,
        action_value=P.action(U),
        star_grad_norm=gnorm,
        iterations=it,
        converged=bool(converged),
        window_used=(P.hi - P.lo) // 2,
        star_norm=snorm,
        residual_history=history,
        zero_solution=snorm <= ZERO_NORM,
        message=message,
    )
    if raise_on_failure and not converged:
        raise SolverError(message)
    return report
