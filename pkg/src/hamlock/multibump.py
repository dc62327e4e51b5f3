"""Separated bump trains: window systems, gluing, refinement and localisation checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostics import DecayError, decay_rate
from .errors import SeparationError
from .functional import action, window_action
from .model import SystemModel
from .mountainpass import Path
from .seq import IndexSet, Sequence, inner_star, shift, window_energy
from .solvers import newton_refine

__all__ = [
    "SeparationVector",
    "WindowSystem",
    "MultibumpConfig",
    "MultibumpReport",
    "min_spacing",
    "make_separation",
    "windows",
    "glue",
    "glue_path",
    "find_multibump",
]


def min_spacing(N: int) -> int:
    return 2 * N * N + 4 * N


@dataclass(frozen=True)
class SeparationVector:
    """Bump centres ``p_1 < ... < p_k``, multiples of ``T``, gaps at least ``2N^2 + 4N``.

    ``checked=False`` skips validation (negative controls only).
    """

    points: tuple
    N: int
    T: int
    checked: bool = True

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        if not self.checked:
            return
        if not self.points:
            raise SeparationError("need at least one bump centre")
        if self.N < 1 or self.T < 1:
            raise SeparationError("N and T must be positive")
        for p in self.points:
            if p % self.T:
                raise SeparationError(f"centre {p} is not a multiple of the period {self.T}")
        gaps = np.diff(self.points)
        if np.any(gaps < min_spacing(self.N)):
            raise SeparationError(
                f"gap {int(gaps.min())} below the required {min_spacing(self.N)} for N={self.N}")

    @property
    def k(self) -> int:
        return len(self.points)


def make_separation(k: int, N: int, T: int, spacing: int, bound: Optional[int] = None) -> SeparationVector:
    """Evenly spaced centres, shifted by a multiple of ``T`` to sit symmetrically about 0.

    ``bound`` is the half-width of the bounding window; when given, every
    centre must lie inside it.
    """
    if k < 1:
        raise SeparationError("k must be >= 1")
    if spacing < min_spacing(N):
        raise SeparationError(f"spacing {spacing} below the required {min_spacing(N)} for N={N}")
    if spacing % T:
        raise SeparationError(f"spacing {spacing} is not a multiple of the period {T}")
    offset = -T * (((k - 1) * spacing // 2) // T)
    pts = tuple(offset + i * spacing for i in range(k))
    if bound is not None and (pts[0] < -bound or pts[-1] > bound):
        raise SeparationError(f"bump train {pts[0]}..{pts[-1]} exceeds the window [-{bound}, {bound}]")
    return SeparationVector(pts, N, T)


@dataclass
class WindowSystem:
    I: list
    M: list


def _bound(bound) -> tuple[int, int]:
    if isinstance(bound, (int, np.integer)):
        return -int(bound), int(bound)
    return int(bound[0]), int(bound[1])


def windows(P: SeparationVector, bound) -> WindowSystem:
    """Voronoi-type windows ``I_i`` around each centre and gap windows ``M_i``.

    ``I_i = ((p_{i-1}+p_i)/2, (p_i+p_{i+1})/2]`` and
    ``M_i = (p_i + N(N+1), p_{i+1} - N(N+1)]`` with the outer centres at
    minus/plus infinity, all clipped to ``bound`` (half-width or (lo, hi)).
    """
    lo, hi = _bound(bound)
    p = P.points
    k = len(p)
    I = []
    for i in range(k):
        a = lo if i == 0 else (p[i - 1] + p[i]) // 2 + 1
        b = hi if i == k - 1 else (p[i] + p[i + 1]) // 2
        I.append(IndexSet.interval(max(a, lo), min(b, hi)))
    r = P.N * (P.N + 1)
    M = []
    for i in range(k + 1):
        a = lo if i == 0 else p[i - 1] + r + 1
        b = hi if i == k else p[i] - r
        M.append(IndexSet.interval(max(a, lo), min(b, hi)))
    return WindowSystem(I, M)


def glue(v: Sequence, P: SeparationVector, window: Optional[int] = None) -> Sequence:
    """``sum_i v(. - p_i)``; with ``window`` the result is stored on ``[-window, window]``."""
    out = Sequence.zeros(v.dim)
    for p in P.points:
        out = out + shift(v, p)
    if window is not None:
        if len(out) and (out.base < -window or out.end > window):
            s = out.trimmed()
            if len(s) and (s.base < -window or s.end > window):
                raise SeparationError(f"glued train [{s.base}, {s.end}] overflows the window [-{window}, {window}]")
        out = Sequence(-window, out.on(-window, window), v.dim)
    return out


def glue_path(gamma: Path, P: SeparationVector, theta, allow_overlap: bool = False) -> Sequence:
    """``sum_i gamma(theta_i)(. - p_i)`` with ``gamma`` interpolated linearly between nodes."""
    theta = list(theta)
    if len(theta) != P.k:
        raise ValueError("theta needs one entry per bump")
    pieces = [shift(gamma.sample(th).trimmed(), p) for th, p in zip(theta, P.points)]
    if not allow_overlap:
        spans = sorted((s.base, s.end) for s in pieces if len(s))
        for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
            if a1 <= b0 + 1:
                raise SeparationError(f"translated path samples overlap: [{a0},{b0}] and [{a1},{b1}]")
    out = Sequence.zeros(gamma.X.shape[2])
    for s in pieces:
        out = out + s
    return out


@dataclass
class MultibumpConfig:
    window: int = 400
    tol_res: float = 1e-10
    tol_grad: float = 1e-8
    tol_level: float = 1e-6
    eps: Optional[float] = None  # default 1e-10 * ||v||_*^2
    max_newton: int = 50

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MultibumpReport:
    solution: Sequence
    per_window_distance: list
    per_window_action: list
    tail_energies: list
    residual_sup: float
    verdict: str
    failed: list = field(default_factory=list)
    one_bump_action: float = 0.0
    total_action: float = 0.0
    eps: float = 0.0
    r: float = 0.0
    newton: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "failed_clauses": list(self.failed),
            "residual_sup": self.residual_sup,
            "per_window_distance": list(self.per_window_distance),
            "per_window_action": list(self.per_window_action),
            "tail_energies": list(self.tail_energies),
            "one_bump_action": self.one_bump_action,
            "total_action": self.total_action,
            "r": self.r,
            "eps": self.eps,
            "newton": self.newton,
        }


def find_multibump(v: Sequence, P: SeparationVector, m: SystemModel, r: float = 0.1,
                   cfg: Optional[MultibumpConfig] = None) -> MultibumpReport:
    """Refine the glued train and check it lies in the localisation ball around it.

    Clauses: (a) Newton converged with residual within tolerance; (b) every
    window distance ``||u - v(. - p_i)||_{I_i}`` below ``r``; (c) every gap
    energy ``||u||_{M_i}^2`` at most ``eps``; (d) every window action within
    ``tol_level`` of ``f(v)``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    cfg = cfg or MultibumpConfig()
    N_w = cfg.window
    try:
        lam = decay_rate(v)
        ell = -1.0 / np.log(lam) if 0 < lam < 1 else 0.0
    except DecayError:
        ell = 0.0
    s = v.trimmed()
    if P.points[0] + s.base - 2 * ell < -N_w or P.points[-1] + s.end + 2 * ell > N_w:
        raise SeparationError("bump train plus decay margin does not fit in the bounding window")
    u0 = glue(v, P, N_w)
    rep = newton_refine(u0, m, cfg.tol_res, cfg.max_newton, window=(-N_w, N_w), tol_grad=cfg.tol_grad)
    u = rep.solution
    W = windows(P, N_w)
    fv = action(v, m)
    vv = inner_star(v, v, m)
    eps = cfg.eps if cfg.eps is not None else 1e-10 * vv
    dist = [float(np.sqrt(max(window_energy(u - shift(v, p), I, m), 0.0))) for p, I in zip(P.points, W.I)]
    acts = [window_action(u, I, m) for I in W.I]
    tails = [window_energy(u, M, m) if M else 0.0 for M in W.M]
    failed = []
    if not (rep.converged and rep.residual_sup <= cfg.tol_res):
        failed.append("a: residual")
    if not all(d < r for d in dist):
        failed.append("b: window distance")
    if not all(t <= eps for t in tails):
        failed.append("c: gap energy")
    if not all(abs(a - fv) <= cfg.tol_level for a in acts):
        failed.append("d: window action")
    return MultibumpReport(
        solution=u,
        per_window_distance=dist,
        per_window_action=acts,
        tail_energies=tails,
        residual_sup=rep.residual_sup,
        verdict="fail" if failed else "pass",
        failed=failed,
        one_bump_action=fv,
        total_action=action(u, m),
        eps=eps,
        r=r,
        newton=rep.to_dict(),
    )
