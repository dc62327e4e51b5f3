"""Concentration-compactness classification, bump decomposition and decay fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import SystemModel
from .seq import Sequence, norm_star, shift

__all__ = [
    "CCVerdict",
    "BumpDecomposition",
    "DecayError",
    "mass_profile",
    "windowed_mass",
    "cc_classify",
    "bump_decompose",
    "decay_rate",
]


class DecayError(ValueError):
    pass


def mass_profile(u: Sequence) -> Sequence:
    """Normalised pointwise mass ``|u(t)|^2 / ||u||_2^2`` as a scalar sequence."""
    m = u.norms() ** 2
    total = m.sum()
    if total == 0:
        raise ValueError("zero sequence has no mass profile")
    return Sequence(u.base, m / total)


def windowed_mass(rho: Sequence, N: int) -> tuple[float, int]:
    """``max_p sum_{|t-p|<=N} rho(t)`` and the lowest maximising centre."""
    r = rho.values[:, 0]
    c = np.concatenate([[0.0], np.cumsum(r)])
    L = len(r)
    # window centred at base + i - N covers stored indices [i - 2N, i]
    lo = np.clip(np.arange(L + 2 * N) - 2 * N, 0, L)
    hi = np.clip(np.arange(L + 2 * N) + 1, 0, L)
    sums = c[hi] - c[lo]
    i = int(np.argmax(sums))
    return float(sums[i]), rho.base + i - N


@dataclass
class CCVerdict:
    kind: str
    centers: list = field(default_factory=list)
    eta: Optional[float] = None
    masses: Optional[np.ndarray] = None  # (iterates, len(N_grid)) windowed masses

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "centers": [int(c) for c in self.centers]}
        if self.eta is not None:
            d["eta"] = self.eta
        return d


def cc_classify(rhos, eps_grid=(0.1, 0.05, 0.01, 0.001), N_grid=(1, 2, 4, 8, 16),
                plateau_tol: float = 0.1, vanish_tol: float = 0.25) -> CCVerdict:
    """Decide which branch of the vanishing / concentration / dichotomy trichotomy
    a finite family of mass profiles follows.

    Concentration: for every ``eps`` some ``N`` in the grid captures mass
    ``>= 1 - eps`` around each profile's best centre, uniformly over the
    family. Dichotomy: over the later half of the family the captured mass is
    flat across the upper half of the ``N`` grid at a level ``eta`` in
    [0.05, 0.95]. Vanishing: the mass captured by the widest window decreases
    over the later half and ends below ``vanish_tol``.
    """
    rhos = list(rhos)
    if not rhos:
        raise ValueError("need at least one profile")
    for k, r in enumerate(rhos):
        if r.dim != 1 or np.any(r.values < 0):
            raise ValueError(f"profile {k} must be a nonnegative scalar sequence")
        if abs(r.values.sum() - 1.0) > 1e-9:
            raise ValueError(f"profile {k} is not normalised (sum {r.values.sum():.12g})")
    N_grid = sorted(int(n) for n in N_grid)
    masses = np.empty((len(rhos), len(N_grid)))
    centers = np.empty((len(rhos), len(N_grid)), dtype=int)
    for k, r in enumerate(rhos):
        for j, N in enumerate(N_grid):
            masses[k, j], centers[k, j] = windowed_mass(r, N)

    def _verdict(kind, j, eta=None):
        return CCVerdict(kind, centers[:, j].tolist(), eta, masses)

    uniform = masses.min(axis=0)
    ok = [any(uniform[j] >= 1 - eps for j in range(len(N_grid))) for eps in eps_grid]
    if all(ok):
        eps = min(eps_grid)
        j = next(j for j in range(len(N_grid)) if uniform[j] >= 1 - eps)
        return _verdict("concentration", j)

    tail = masses[len(rhos) // 2:]
    upper = tail[:, len(N_grid) // 2:]
    eta = float(upper[:, -1].mean())
    spread = (upper.max() - upper.min()) / max(upper.max(), 1e-300)
    if spread <= plateau_tol and 0.05 <= eta <= 0.95:
        return _verdict("dichotomy", len(N_grid) - 1, eta)

    widest = tail[:, -1]
    if np.all(np.diff(widest) <= 1e-12) and widest[-1] < widest[0] and widest[-1] <= vanish_tol:
        return _verdict("vanishing", len(N_grid) - 1)
    return CCVerdict("undetermined", [], None, masses)


def decay_rate(u: Sequence, floor: float = 1e-10) -> float:
    """Geometric decay factor of ``|u(t)|`` fitted on both tails.

    The effective support is where ``|u| > floor * max|u|``; on each side the
    outer quarter of it is fitted by least squares in ``log|u|`` and the two
    factors are averaged. A result ``>= 1`` means the tails do not decay.
    """
    r = u.norms()
    if r.size == 0 or r.max() == 0:
        raise DecayError("zero sequence has no decay rate")
    idx = np.flatnonzero(r > floor * r.max())
    a, b = idx[0], idx[-1]
    q = (b - a + 1) // 4
    if q < 5:
        raise DecayError(f"insufficient tail: {q} points per side, need 5")
    rates = []
    for seg, sign in ((np.arange(a, a + q), 1.0), (np.arange(b - q + 1, b + 1), -1.0)):
        seg = seg[r[seg] > 0]
        if seg.size < 5:
            raise DecayError("insufficient nonzero tail points")
        slope = np.polyfit(seg.astype(float), np.log(r[seg]), 1)[0]
        rates.append(np.exp(-sign * slope))
    return float(np.mean(rates))


def _peak_decay(norms: np.ndarray, c: int, floor: float = 1e-10) -> float:
    """Decay factor fitted on the monotone tails running out of the peak at ``c``."""
    cut = floor * norms[c]
    slopes = []
    for step in (1, -1):
        run = [c]
        while 0 <= run[-1] + step < len(norms) and cut < norms[run[-1] + step] < norms[run[-1]]:
            run.append(run[-1] + step)
        outer = np.array(run[len(run) // 2:])
        if outer.size >= 5:
            slopes.append(np.polyfit(np.abs(outer - c).astype(float), np.log(norms[outer]), 1)[0])
    if not slopes:
        return 0.5
    return float(np.exp(np.mean(slopes)))


@dataclass
class BumpDecomposition:
    """Pieces stored relative to their centres: ``u ~ sum shift(piece, center)``."""

    bumps: list
    remainder_norm: float
    remainder: Optional[Sequence] = None

    @property
    def centers(self) -> list:
        return [c for c, _ in self.bumps]

    def reconstruct(self, dim: int = 1) -> Sequence:
        out = Sequence.zeros(dim)
        for c, piece in self.bumps:
            out = out + shift(piece, c)
        return out

    def to_dict(self) -> dict:
        return {"centers": self.centers, "remainder_norm": self.remainder_norm,
                "pieces": [{"center": c, "support": [p.base + c, p.end + c]} for c, p in self.bumps]}


def bump_decompose(u: Sequence, m: SystemModel, sep: int = 3, thresh: float = 1e-3,
                   max_bumps: int = 64) -> BumpDecomposition:
    """Greedy split of ``u`` into localized pieces.

    Repeatedly takes the site of largest ``|u|``, grows the interval where
    ``|u| > thresh / 10`` around it, pads it by the decay length needed for a
    further 1e-8 drop, and carves it out. The decay length is fitted on the
    tails of the largest peak. Padding stops at local minima of ``|u|`` and
    is clipped to keep every piece at least ``sep`` sites from the pieces
    already taken.
    """
    if sep < 3 or thresh <= 0:
        raise ValueError("need sep >= 3 and thresh > 0")
    if u.is_zero:
        return BumpDecomposition([], 0.0, Sequence.zeros(u.dim))
    R = np.array(u.values)
    norms = np.linalg.norm(R, axis=1)
    lam = _peak_decay(norms, int(np.argmax(norms)))
    pad = int(np.ceil(np.log(1e-8) / np.log(lam))) if 0 < lam < 1 else sep
    taken: list[tuple[int, int]] = []
    bumps = []
    while True:
        c = int(np.argmax(norms))
        if norms[c] < thresh:
            break
        if len(bumps) >= max_bumps:
            raise ValueError(f"more than {max_bumps} bumps; threshold too low")
        a = c
        while a > 0 and norms[a - 1] > thresh / 10:
            a -= 1
        b = c
        while b < len(norms) - 1 and norms[b + 1] > thresh / 10:
            b += 1
        # pad outward while |u| keeps decreasing, so padding never climbs into a neighbour
        for _ in range(pad):
            if a == 0 or not 0 < norms[a - 1] <= norms[a]:
                break
            a -= 1
        for _ in range(pad):
            if b == len(norms) - 1 or not 0 < norms[b + 1] <= norms[b]:
                break
            b += 1
        for ta, tb in taken:
            if tb < c:
                a = max(a, tb + sep + 1)
            elif ta > c:
                b = min(b, ta - sep - 1)
        if not a <= c <= b:
            # too close to a piece already taken: leave the site in the remainder
            norms[c] = 0.0
            continue
        piece = Sequence(u.base + a - (u.base + c), R[a : b + 1].copy(), u.dim)
        bumps.append((u.base + c, piece))
        taken.append((a, b))
        R[a : b + 1] = 0.0
        norms[a : b + 1] = 0.0
    bumps.sort(key=lambda cp: cp[0])
    rem = Sequence(u.base, R, u.dim)
    return BumpDecomposition(bumps, norm_star(rem, m), rem)
