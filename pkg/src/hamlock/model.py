"""System models (L, V) and numerical audits of their structural assumptions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelError

__all__ = [
    "SystemModel",
    "AssumptionGrid",
    "AssumptionReport",
    "Verdict",
    "power_potential",
    "builtin",
    "from_config",
    "check_assumptions",
    "hessian",
    "BUILTINS",
]

# V(ts, X) -> (m,), Vx(ts, X) -> (m, n), Vxx(ts, X) -> (m, n, n); ts already reduced mod T
Potential = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Periodic second-order lattice system ``D^2 x(t-1) - L(t) x(t) + V_x(t, x(t)) = 0``.

    ``L`` has shape ``(period, dim, dim)``; everything is keyed on ``t mod period``
    so periodicity holds by construction. The potential callables are
    vectorised over sites: they receive an integer array of phases and an
    ``(m, dim)`` array of states.
    """

    dim: int
    period: int
    L: np.ndarray
    V: Potential
    Vx: Potential
    alpha: float
    beta: float
    witness_t: int
    witness_x: np.ndarray
    Vxx: Optional[Potential] = None
    name: str = "custom"
    params: tuple = field(default=())

    def __post_init__(self):
        if self.dim < 1 or self.period < 1:
            raise ModelError("dim and period must be positive integers")
        L = np.array(self.L, dtype=float).reshape(self.period, self.dim, self.dim)
        if not np.allclose(L, np.transpose(L, (0, 2, 1)), rtol=0, atol=1e-12 * max(1.0, np.abs(L).max())):
            raise ModelError("L(t) must be symmetric")
        if np.linalg.eigvalsh(L).min() <= 0:
            raise ModelError("L(t) must be positive definite")
        if not self.beta > 2:
            raise ModelError(f"beta must exceed 2 (got {self.beta})")
        if not 0 < self.alpha < self.beta / 2 - 1:
            raise ModelError(f"alpha must lie in (0, beta/2 - 1) = (0, {self.beta / 2 - 1}) (got {self.alpha})")
        L.setflags(write=False)
        x0 = np.atleast_1d(np.asarray(self.witness_x, dtype=float)).copy()
        if x0.shape != (self.dim,):
            raise ModelError("witness point must be an n-vector")
        x0.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "witness_x", x0)
        object.__setattr__(self, "witness_t", int(self.witness_t))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    # -- evaluation helpers -------------------------------------------------

    def phase(self, t) -> np.ndarray:
        return np.mod(np.asarray(t, dtype=int), self.period)

    def L_at(self, ts) -> np.ndarray:
        return self.L[self.phase(ts)]

    def V_sites(self, ts, X) -> np.ndarray:
        return np.asarray(self.V(self.phase(ts), np.asarray(X, dtype=float)), dtype=float)

    def Vx_sites(self, ts, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.asarray(self.Vx(self.phase(ts), X), dtype=float).reshape(X.shape)

    def Vxx_sites(self, ts, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.Vxx is not None:
            return np.asarray(self.Vxx(self.phase(ts), X), dtype=float).reshape(len(X), self.dim, self.dim)
        return _fd_hessian(self, np.asarray(ts), X)

    def V_at(self, t: int, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self.V_sites(np.array([t]), x[None, :])[0])

    def Vx_at(self, t: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.Vx_sites(np.array([t]), x[None, :])[0]

    def Lmat(self, t: int) -> np.ndarray:
        return self.L[int(t) % self.period].copy()

    @property
    def L2(self) -> float:
        """Smallest eigenvalue of L(t) over one period."""
        return float(np.linalg.eigvalsh(self.L).min())

    @property
    def Lmax(self) -> float:
        return float(np.linalg.eigvalsh(self.L).max())

    @property
    def ps_coefficient(self) -> float:
        """``1/2 - 1/beta - alpha/beta``, positive whenever the model is valid."""
        return 0.5 - 1.0 / self.beta - self.alpha / self.beta

    def with_witness(self, t0: int, x0) -> "SystemModel":
        return SystemModel(self.dim, self.period, self.L, self.V, self.Vx, self.alpha, self.beta,
                           t0, x0, self.Vxx, self.name, self.params)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": [float(p) for p in self.params],
            "dim": self.dim,
            "period": self.period,
            "L": self.L.tolist(),
            "alpha": self.alpha,
            "beta": self.beta,
            "witness": {"t": self.witness_t, "x": self.witness_x.tolist()},
        }


def hessian(m: SystemModel, t: int, x) -> np.ndarray:
    """``V_xx(t, x)``: analytic when the model supplies it, else central differences of ``V_x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return m.Vxx_sites(np.array([t]), x[None, :])[0]


def _fd_hessian(m: SystemModel, ts: np.ndarray, X: np.ndarray) -> np.ndarray:
    npts, n = X.shape
    H = np.empty((npts, n, n))
    h = 1e-6 * np.maximum(1.0, np.linalg.norm(X, axis=1))
    for j in range(n):
        E = np.zeros_like(X)
        E[:, j] = h
        H[:, :, j] = (m.Vx_sites(ts, X + E) - m.Vx_sites(ts, X - E)) / (2 * h[:, None])
    return 0.5 * (H + np.transpose(H, (0, 2, 1)))


# -- gallery -----------------------------------------------------------------

def power_potential(beta: float):
    """``V = |x|^beta / beta`` with its gradient and Hessian, vectorised over sites."""

    def V(ts, X):
        return np.linalg.norm(X, axis=1) ** beta / beta

    def Vx(ts, X):
        r = np.linalg.norm(X, axis=1)
        return (r ** (beta - 2))[:, None] * X

    def Vxx(ts, X):
        npts, n = X.shape
        r = np.linalg.norm(X, axis=1)
        H = (r ** (beta - 2))[:, None, None] * np.eye(n)[None]
        safe = r > 0
        if n > 1 and np.any(safe):
            c = np.zeros_like(r)
            c[safe] = (beta - 2) * r[safe] ** (beta - 4)
            H = H + c[:, None, None] * np.einsum("ti,tj->tij", X, X)
        elif n == 1:
            H = (beta - 1) * H
        return H

    return V, Vx, Vxx


def _default_witness(L: np.ndarray, beta: float) -> tuple[int, np.ndarray]:
    """Smallest power-of-two multiple of e_1 at t=0 with positive (A5)-type margin."""
    n = L.shape[1]
    e = np.zeros(n)
    e[0] = 1.0
    for j in range(64):
        x = 2.0 ** j * e
        if np.linalg.norm(x) ** beta / beta - 0.5 * x @ L[0] @ x > 0:
            return 0, x
    raise ModelError("could not find a witness point")


def _power_model(name, params, L, beta, alpha=None, witness=None):
    if not beta > 2:
        raise ModelError(f"beta must exceed 2 (got {beta})")
    L = np.asarray(L, dtype=float)
    V, Vx, Vxx = power_potential(beta)
    if alpha is None:
        alpha = 0.5 * (beta / 2 - 1)
    t0, x0 = witness if witness is not None else _default_witness(L, beta)
    return SystemModel(dim=L.shape[1], period=L.shape[0], L=L, V=V, Vx=Vx, Vxx=Vxx,
                       alpha=alpha, beta=beta, witness_t=t0, witness_x=x0,
                       name=name, params=tuple(params))


def _positive(name, *cs):
    for c in cs:
        if not c > 0:
            raise ModelError(f"{name}: L entries must be positive (got {c})")


def _scalar_power(params):
    c, beta = (list(params) + [1.0, 4.0][len(params):])[:2]
    _positive("scalar_power", c)
    return _power_model("scalar_power", (c, beta), [[[c]]], beta)


def _coupled_pair(params):
    c1, c2 = (list(params) + [1.0, 2.0][len(params):])[:2]
    _positive("coupled_pair", c1, c2)
    return _power_model("coupled_pair", (c1, c2), [np.diag([c1, c2])], 4.0)


def _periodic_scalar(params):
    c0, c1, beta = (list(params) + [1.0, 2.0, 4.0][len(params):])[:3]
    _positive("periodic_scalar", c0, c1)
    return _power_model("periodic_scalar", (c0, c1, beta), [[[c0]], [[c1]]], beta)


BUILTINS = {
    "scalar_power": _scalar_power,
    "coupled_pair": _coupled_pair,
    "periodic_scalar": _periodic_scalar,
}


def builtin(name: str, params=()) -> SystemModel:
    """Instantiate a gallery model.

    ``scalar_power(c, beta)``: n=1, T=1, L=c, V=|x|^beta/beta.
    ``coupled_pair(c1, c2)``: n=2, T=1, L=diag(c1, c2), V=|x|^4/4.
    ``periodic_scalar(c0, c1, beta)``: n=1, T=2, L alternating c0, c1.
    """
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ModelError(f"unknown model {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory([float(p) for p in params])


def from_config(spec: dict) -> SystemModel:
    """Build a model from its JSON form.

    Either ``{"name": ..., "params": [...]}`` for a gallery model or
    ``{"L": [T matrices], "beta": b}`` for a custom table with the power
    potential. ``alpha`` and ``witness`` ({"t": .., "x": [..]}) override defaults.
    """
    witness = spec.get("witness")
    if witness is not None:
        witness = (int(witness["t"]), np.atleast_1d(np.asarray(witness["x"], dtype=float)))
    if "name" in spec and spec["name"] != "custom":
        m = builtin(spec["name"], spec.get("params", ()))
        if "alpha" in spec or witness is not None:
            return _power_model(m.name, m.params, m.L, m.beta, spec.get("alpha", m.alpha),
                                witness or (m.witness_t, m.witness_x))
        return m
    if "L" not in spec:
        raise ModelError("model spec needs either a builtin 'name' or an 'L' table")
    L = np.asarray(spec["L"], dtype=float)
    if L.ndim == 1:
        L = L[:, None, None]
    elif L.ndim == 2:
        L = L[None] if L.shape[0] == L.shape[1] and spec.get("period", 1) == 1 else L[:, :, None]
    beta = float(spec.get("beta", 4.0))
    return _power_model("custom", (), L, beta, spec.get("alpha"), witness)


# -- assumption audit ----------------------------------------------------------

@dataclass
class AssumptionGrid:
    """Sampling plan for :func:`check_assumptions`.

    Radii are log-spaced in ``[r_min, r_max]``; ``r_min`` must not exceed 1e-4.
    """

    r_min: float = 1e-6
    r_max: float = 4.0
    n_radii: int = 25
    n_directions: int = 8
    s_values: tuple = tuple(np.linspace(1.0, 10.0, 19))
    seed: int = 0

    def radii(self) -> np.ndarray:
        return np.geomspace(self.r_min, self.r_max, self.n_radii)

    def directions(self, n: int) -> np.ndarray:
        if n == 1:
            return np.array([[1.0], [-1.0]])
        rng = np.random.default_rng(self.seed)
        D = np.vstack([np.eye(n), -np.eye(n), rng.standard_normal((self.n_directions, n))])
        return D / np.linalg.norm(D, axis=1, keepdims=True)

    def describe(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "n_radii": self.n_radii,
                "n_directions": self.n_directions, "s_min": float(min(self.s_values)),
                "s_max": float(max(self.s_values)), "n_s": len(self.s_values), "seed": self.seed}


@dataclass
class Verdict:
    passed: bool
    margin: float
    violation: Optional[dict] = None
    note: str = ""

    def to_dict(self) -> dict:
        d = {"pass": self.passed, "margin": self.margin}
        if self.violation is not None:
            d["violation"] = self.violation
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class AssumptionReport:
    verdicts: dict
    grid: dict

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {"pass": self.passed, "grid": self.grid,
                "assumptions": {k: v.to_dict() for k, v in self.verdicts.items()}}


def _point(t, x):
    return {"t": int(t), "x": [float(c) for c in np.atleast_1d(x)]}


def check_assumptions(m: SystemModel, grid: Optional[AssumptionGrid] = None) -> AssumptionReport:
    """Sample-based audit of (A1)-(A5) and the superquadratic growth inequality.

    Raises
    ------
    ValueError
        If the grid is empty or does not reach radius 1e-4.
    ModelError
        If ``Vx`` disagrees with central differences of ``V`` beyond 1e-4 relative.
    """
    grid = grid or AssumptionGrid()
    radii = grid.radii()
    if radii.size == 0 or grid.n_radii < 3 or len(grid.s_values) == 0:
        raise ValueError("assumption grid is empty")
    if radii.min() > 1e-4:
        raise ValueError("assumption grid must include radii <= 1e-4")
    dirs = grid.directions(m.dim)
    T = m.period
    # every (t, radius, direction) combination
    tt, rr, dd = np.meshgrid(np.arange(T), np.arange(len(radii)), np.arange(len(dirs)), indexing="ij")
    ts = tt.ravel()
    X = radii[rr.ravel()][:, None] * dirs[dd.ravel()]
    Lt = m.L_at(ts)
    xLx = np.einsum("ti,tij,tj->t", X, Lt, X)
    Vv = m.V_sites(ts, X)
    G = m.Vx_sites(ts, X)

    # consistency of Vx with V
    h = 1e-5 * np.linalg.norm(X, axis=1)
    fd = np.empty_like(X)
    for j in range(m.dim):
        E = np.zeros_like(X)
        E[:, j] = h
        fd[:, j] = (m.V_sites(ts, X + E) - m.V_sites(ts, X - E)) / (2 * h)
    scale = np.maximum(np.linalg.norm(G, axis=1), 1e-300)
    rel = np.linalg.norm(fd - G, axis=1) / scale
    bad = np.argmax(rel)
    if rel[bad] > 1e-4:
        raise ModelError(f"Vx inconsistent with V at {_point(ts[bad], X[bad])}: relative error {rel[bad]:.3g}")

    verdicts = {}

    # (A1) periodicity: shifted phases must give identical values
    shifted = m.V_sites(ts + T, X)
    gap = float(np.max(np.abs(shifted - Vv)))
    Lgap = float(np.max(np.abs(m.L_at(np.arange(T) + T) - m.L_at(np.arange(T)))))
    verdicts["A1"] = Verdict(gap == 0.0 and Lgap == 0.0, -max(gap, Lgap))

    # (A2)
    eig = np.linalg.eigvalsh(m.L)
    asym = float(np.max(np.abs(m.L - np.transpose(m.L, (0, 2, 1)))))
    t_worst = int(np.argmin(eig.min(axis=1)))
    ok2 = eig.min() > 0 and asym <= 1e-12 * max(1.0, np.abs(m.L).max())
    verdicts["A2"] = Verdict(bool(ok2), float(eig.min()),
                             None if ok2 else {"t": t_worst, "eigenvalues": eig[t_worst].tolist()})

    # (A3) V(t,0)=0 and |Vx|/|x| -> 0 on shrinking radii
    V0 = m.V_sites(np.arange(T), np.zeros((T, m.dim)))
    ratio = (np.linalg.norm(G, axis=1) / np.linalg.norm(X, axis=1)).reshape(T, len(radii), len(dirs))
    worst_by_r = ratio.max(axis=(0, 2))
    small = worst_by_r[:3]
    monotone = bool(small[0] <= small[1] <= small[2])
    ok3 = bool(np.all(V0 == 0.0)) and worst_by_r[0] <= 0.01 and monotone
    viol3 = None
    if not ok3:
        k = np.unravel_index(np.argmax(ratio[:, 0, :]), ratio[:, 0, :].shape)
        viol3 = _point(k[0], radii[0] * dirs[k[1]])
        viol3["ratio"] = float(ratio[k[0], 0, k[1]])
    verdicts["A3"] = Verdict(ok3, float(0.01 - worst_by_r[0]), viol3,
                             "" if monotone else "ratio not decreasing over the smallest radii")

    # (A4)
    lhs = m.beta * Vv - np.sum(G * X, axis=1)
    slack = m.alpha * xLx - lhs
    tol4 = 1e-12 * np.maximum(1.0, np.abs(Vv))
    k4 = int(np.argmin(slack + tol4))
    ok4 = bool(np.all(slack >= -tol4))
    verdicts["A4"] = Verdict(ok4, float(slack.min()), None if ok4 else _point(ts[k4], X[k4]))

    # superquadratic growth for s >= 1
    c = m.alpha / (m.beta - 2)
    worst, where = np.inf, None
    ok_g = True
    for s in grid.s_values:
        Vs = m.V_sites(ts, s * X)
        rhs = (Vv - c * xLx) * s ** m.beta + c * s ** 2 * xLx
        gap = Vs - rhs
        tol = 1e-10 * np.maximum(1.0, np.abs(Vs))
        j = int(np.argmin(gap + tol))
        if gap[j] < worst:
            worst = float(gap[j])
        if np.any(gap < -tol):
            ok_g = False
            where = _point(ts[j], X[j])
            where["s"] = float(s)
    verdicts["growth"] = Verdict(ok_g, worst, where)

    # (A5) at the witness
    t0, x0 = m.witness_t, m.witness_x
    margin5 = m.V_at(t0, x0) - 0.5 * float(x0 @ m.Lmat(t0) @ x0)
    ok5 = bool(np.any(x0 != 0)) and margin5 > 0
    verdicts["A5"] = Verdict(ok5, float(margin5), None if ok5 else _point(t0, x0))

    return AssumptionReport(verdicts, grid.describe())
