"""Mountain-pass search: admissible paths from 0 to a negative-action endpoint,
deformation by energy-metric descent, and extraction of the one-bump solution.

The minimax level of a discretised path is measured over its piecewise-linear
interpolant, which is itself an admissible continuous path. That makes every
recorded level an upper bound for the true mountain-pass value, and inserting
a point of a segment as a new node never changes the level.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import SolverError
from .functional import action
from .model import SystemModel
from .seq import IndexSet, Sequence, window_energy
from .solvers import SolveReport, WindowProblem, newton_refine

__all__ = [
    "Path",
    "MinimaxEstimate",
    "PathConfig",
    "SolverConfig",
    "negative_endpoint",
    "initial_path",
    "deform_path",
    "find_one_bump",
    "recenter",
    "path_level",
]

log = logging.getLogger(__name__)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HAMLOCK_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class PathConfig:
    """Discretisation and deformation controls.

    ``floor_fraction`` sets the level below which nodes are frozen: only nodes
    with ``f > floor_fraction * level`` are moved, so the deformation is the
    identity on low sublevel sets (in particular at both endpoints' levels).
    """

    nodes: int = 64
    delta_path: float = 0.5
    steps_per_round: int = 1
    h0: float = 0.5
    armijo: float = 1e-4
    floor_fraction: float = 0.5
    grad_tol: float = 1e-12
    max_retries: int = 10
    plateau_tol: float = 1e-8
    plateau_rounds: int = 5
    segment_grid: int = 8


@dataclass
class Path:
    """Ordered nodes on a window ``[lo, hi]``; node 0 is the zero sequence.

    ``X`` stacks the node arrays as ``(K, sites, dim)``.
    """

    lo: int
    hi: int
    X: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] < 3:
            raise ValueError("a path needs at least 3 nodes")
        if np.any(self.X[0] != 0.0):
            raise ValueError("first path node must be exactly zero")
        if not self.levels[-1] < 0:
            raise ValueError("last path node must have negative action")

    @property
    def nodes(self) -> list:
        return [Sequence(self.lo, U) for U in self.X]

    @property
    def endpoint(self) -> Sequence:
        return Sequence(self.lo, self.X[-1])

    def __len__(self) -> int:
        return self.X.shape[0]

    def sample(self, theta: float) -> Sequence:
        """Piecewise-linear interpolation in node index, ``theta`` in [0, 1]."""
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        pos = theta * (len(self) - 1)
        i = min(int(np.floor(pos)), len(self) - 2)
        s = pos - i
        return Sequence(self.lo, (1 - s) * self.X[i] + s * self.X[i + 1])


@dataclass
class MinimaxEstimate:
    level: float
    argmax_node: int
    history: list = field(default_factory=list)
    rounds: int = 0
    plateau: bool = False

    def to_dict(self) -> dict:
        return {"level": self.level, "argmax_node": self.argmax_node, "rounds": self.rounds,
                "plateau": self.plateau, "history": list(self.history)}


def negative_endpoint(m: SystemModel, window: int = 80) -> Sequence:
    """``lam * u_hat`` for the smallest power of two ``lam`` with action below -1.

    ``u_hat`` is the witness vector placed at the witness site.
    """
    t0 = m.witness_t
    if abs(t0) > window:
        raise ValueError("witness site lies outside the bounding window")
    uhat = Sequence.delta(t0, m.witness_x)
    lam = 1.0
    for _ in range(61):
        w = lam * uhat
        if action(w, m) < -1.0:
            return w
        lam *= 2.0
    raise SolverError("no negative-action endpoint after 60 doublings; the witness does not satisfy (A5)")


def initial_path(m: SystemModel, nodes: int = 64, window: int = 80) -> Path:
    """Straight segment from 0 to :func:`negative_endpoint`, sampled at ``nodes`` points."""
    if nodes < 3:
        raise ValueError("nodes must be >= 3")
    P = WindowProblem(m, -window, window)
    W = P.dense(negative_endpoint(m, window))
    s = np.linspace(0.0, 1.0, nodes)
    X = s[:, None, None] * W[None]
    X[0] = 0.0
    X[-1] = W
    return Path(-window, window, X, P.action_batch(X))


def path_from_nodes(m: SystemModel, nodes, window=None) -> Path:
    """Build a :class:`Path` from explicit node sequences."""
    if window is None:
        lo = min(u.base for u in nodes if len(u))
        hi = max(u.end for u in nodes if len(u))
    else:
        lo, hi = window
    P = WindowProblem(m, lo, hi)
    X = np.stack([u.on(lo, hi) for u in nodes])
    return Path(lo, hi, X, P.action_batch(X))


# -- level of the piecewise-linear path ---------------------------------------

def _segment_maxima(P: WindowProblem, X: np.ndarray, levels: np.ndarray, grid: int):
    """Return ``(level, segment, s)`` maximising f over the polygonal path."""
    K = X.shape[0]
    D = X[1:] - X[:-1]
    s = np.arange(1, grid) / grid
    pts = X[:-1, None] + s[None, :, None, None] * D[:, None]
    vals = P.action_batch(pts.reshape(-1, *X.shape[1:])).reshape(K - 1, grid - 1)
    full = np.concatenate([levels[:-1, None], vals, levels[1:, None]], axis=1)
    seg_best = full.max(axis=1)
    top = seg_best.max()
    spread = max(abs(top), 1.0) * 1e-3
    best = (float(levels.max()), int(np.argmax(levels)), 0.0)  # node maximum, s=0 at that node
    if best[1] == K - 1:
        best = (best[0], K - 2, 1.0)
    for i in np.flatnonzero(seg_best >= top - spread):
        j = int(np.argmax(full[i]))
        if j == 0 or j == grid:
            # maximum at a node; a refinement next to it may still beat it
            a, b = (0.0, 1.0 / grid) if j == 0 else (1.0 - 1.0 / grid, 1.0)
        else:
            a, b = (j - 1) / grid, (j + 1) / grid
        Xi, Di = X[i], D[i]
        r = minimize_scalar(lambda t: -P.action(Xi + t * Di), bounds=(a, b), method="bounded",
                            options={"xatol": 1e-9})
        cand = [(float(full[i, j]), j / grid), (float(-r.fun), float(r.x))]
        val, pos = max(cand, key=lambda c: c[0])
        if val > best[0]:
            best = (val, int(i), pos)
    return best


def path_level(p: Path, m: SystemModel, grid: int = 8) -> float:
    """Maximum of the action over the polygonal path through the nodes."""
    P = WindowProblem(m, p.lo, p.hi)
    return _segment_maxima(P, p.X, p.levels, grid)[0]


def _insert_point(P, X, levels, seg, s):
    if s <= 0.0 or s >= 1.0:
        return X, levels
    U = X[seg] + s * (X[seg + 1] - X[seg])
    X = np.insert(X, seg + 1, U, axis=0)
    levels = np.insert(levels, seg + 1, P.action(U))
    return X, levels


def _descent_step(P: WindowProblem, X: np.ndarray, f: np.ndarray, cfg: PathConfig):
    """One Armijo-controlled energy-gradient step for every row of ``X``."""
    if X.shape[0] == 0:
        return X, f, np.zeros(0, dtype=bool)
    G, g2 = P.grad_star_batch(X)
    h = np.full(X.shape[0], cfg.h0)
    live = np.sqrt(g2) > cfg.grad_tol
    done = ~live
    Xn, fn = X.copy(), f.copy()
    for _ in range(50):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        trial = X[idx] - h[idx, None, None] * G[idx]
        ft = P.action_batch(trial)
        ok = ft <= f[idx] - cfg.armijo * h[idx] * g2[idx]
        Xn[idx[ok]] = trial[ok]
        fn[idx[ok]] = ft[ok]
        done[idx[ok]] = True
        h[idx[~ok]] *= 0.5
    moved = live & done
    return Xn, fn, moved


def _descend_nodes(P, X, f, active, cfg):
    idx = np.flatnonzero(active)
    moved = np.zeros(X.shape[0], dtype=bool)
    X, f = X.copy(), f.copy()
    nthreads = _threads()
    for _ in range(cfg.steps_per_round):
        if idx.size == 0:
            break
        if nthreads > 1 and idx.size >= 2 * nthreads:
            chunks = np.array_split(idx, nthreads)
            with ThreadPoolExecutor(nthreads) as ex:
                results = list(ex.map(lambda c: _descent_step(P, X[c], f[c], cfg), chunks))
            for c, (Xc, fc, mc) in zip(chunks, results):
                X[c], f[c] = Xc, fc
                moved[c] |= mc
        else:
            Xc, fc, mc = _descent_step(P, X[idx], f[idx], cfg)
            X[idx], f[idx] = Xc, fc
            moved[idx] |= mc
    return X, f, moved


def _densify(P, X, f, moved, delta):
    """Insert midpoints on segments touching a moved node whose length exceeds ``delta``."""
    out_X, out_f = [X[0]], [f[0]]
    for i in range(1, X.shape[0]):
        if moved[i] or moved[i - 1]:
            d = X[i] - X[i - 1]
            if P.star_norm(d) > delta:
                mid = X[i - 1] + 0.5 * d
                out_X.append(mid)
                out_f.append(P.action(mid))
        out_X.append(X[i])
        out_f.append(f[i])
    return np.stack(out_X), np.array(out_f)


def deform_path(p: Path, m: SystemModel, rounds: int, cfg: Optional[PathConfig] = None,
                stop_on_plateau: bool = False) -> tuple[Path, MinimaxEstimate]:
    """Lower the path by descending its high nodes with both endpoints fixed.

    Each round inserts the current maximiser of the polygonal path as a node,
    moves every interior node above the freezing level by ``steps_per_round``
    descent steps, then re-densifies segments that moved apart. A round that
    would raise the level is retried with half the step cap; if it keeps
    failing the path is left as it was, so the recorded levels never increase.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    cfg = cfg or PathConfig()
    P = WindowProblem(m, p.lo, p.hi)
    X, f = p.X.copy(), p.levels.copy()
    level, seg, s = _segment_maxima(P, X, f, cfg.segment_grid)
    history = [level]
    h0 = cfg.h0
    plateau = False
    done_rounds = 0
    for _ in range(rounds):
        done_rounds += 1
        X, f = _insert_point(P, X, f, seg, s)
        floor = cfg.floor_fraction * level
        active = f > floor
        active[0] = active[-1] = False
        accepted = False
        for _ in range(cfg.max_retries):
            step_cfg = PathConfig(**{**cfg.__dict__, "h0": h0})
            Xn, fn, moved = _descend_nodes(P, X, f, active, step_cfg)
            if not moved.any():
                break
            Xn, fn = _densify(P, Xn, fn, moved, cfg.delta_path)
            new_level, new_seg, new_s = _segment_maxima(P, Xn, fn, cfg.segment_grid)
            if new_level <= level:
                accepted = True
                break
            h0 *= 0.5
        if accepted:
            X, f, level, seg, s = Xn, fn, new_level, new_seg, new_s
        history.append(level)
        if stop_on_plateau and len(history) > cfg.plateau_rounds:
            if history[-cfg.plateau_rounds - 1] - history[-1] < cfg.plateau_tol:
                plateau = True
                break
    X, f = _insert_point(P, X, f, seg, s)
    out = Path(p.lo, p.hi, X, f)
    est = MinimaxEstimate(level=float(level), argmax_node=int(np.argmax(f)), history=history,
                          rounds=done_rounds, plateau=plateau)
    return out, est


# -- one-bump pipeline -------------------------------------------------------

@dataclass
class SolverConfig:
    window: int = 80
    path: PathConfig = field(default_factory=PathConfig)
    max_rounds: int = 200
    tol_res: float = 1e-10
    tol_grad: float = 1e-8
    max_newton: int = 50
    tail_margin: int = 5
    tail_tol: float = 1e-16
    max_enlarge: int = 3
    min_norm: float = 1e-3

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["path"] = dict(self.path.__dict__)
        return d


def recenter(u: Sequence, T: int) -> Sequence:
    """Shift by a multiple of ``T`` so the site of largest ``|u(t)|`` lands in ``[0, T)``.

    The result keeps the stored window of ``u``; values pushed past its edge
    are dropped.
    """
    if u.is_zero:
        return u
    peak = u.base + int(np.argmax(u.norms()))
    p = -(peak - peak % T)
    if p == 0:
        return u
    lo, hi = u.base, u.end
    return Sequence(lo, Sequence(u.base + p, u.values).on(lo, hi))


def tail_energy(u: Sequence, m: SystemModel, N_w: int, margin: int) -> float:
    F = IndexSet([(-N_w - 1, -N_w + margin - 1), (N_w - margin + 1, N_w + 1)])
    return window_energy(u, F, m)


def find_one_bump(m: SystemModel, cfg: Optional[SolverConfig] = None,
                  seed: Optional[Sequence] = None) -> SolveReport:
    """Mountain-pass critical point of the action.

    Pipeline: straight path to the negative endpoint, deformation until the
    level plateaus, maximiser of the final path recentred to ``[0, T)``, then
    Newton refinement. Passing ``seed`` skips the path phase. If the Newton
    solution carries too much energy near the window edge, Newton is re-run on
    a window 50% larger.
    """
    cfg = cfg or SolverConfig()
    N_w = cfg.window
    extras: dict = {}
    if seed is None:
        path = initial_path(m, cfg.path.nodes, N_w)
        path, est = deform_path(path, m, cfg.max_rounds, cfg.path, stop_on_plateau=True)
        extras["minimax"] = est.to_dict()
        extras["endpoint_action"] = float(path.levels[-1])
        u0 = path.nodes[est.argmax_node]
    else:
        u0 = Sequence(-N_w, seed.on(-N_w, N_w))
    u0 = recenter(u0, m.period)
    report = None
    for attempt in range(cfg.max_enlarge + 1):
        report = newton_refine(u0, m, cfg.tol_res, cfg.max_newton, window=(-N_w, N_w), tol_grad=cfg.tol_grad)
        tail = tail_energy(report.solution, m, N_w, cfg.tail_margin)
        extras["tail_energy"] = tail
        # a small window also blocks convergence, since edge values count as residual
        if tail <= cfg.tail_tol * max(report.star_norm ** 2, 1e-300):
            break
        N_w = int(np.ceil(1.5 * N_w))
        u0 = Sequence(-N_w, report.solution.on(-N_w, N_w))
        log.info("tail energy %.3g too large; enlarging window to %d", tail, N_w)
    v = recenter(report.solution, m.period)
    report.solution = v
    report.action_value = action(v, m)
    report.extras = extras
    if report.converged and (report.star_norm <= cfg.min_norm or report.action_value <= 0):
        report.converged = False
        report.message = "zero-collapse: Newton converged to the trivial solution"
    return report
