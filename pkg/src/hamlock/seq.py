"""Finitely supported vector-valued sequences on the integer lattice.

A :class:`Sequence` stores one contiguous window of n-vectors starting at
``base``; every index outside the window evaluates to the zero vector.
Index sets are unions of closed integer intervals, always finite (clipped
to a declared bounding window).
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence as _Seq

import numpy as np

if TYPE_CHECKING:
    from .model import SystemModel

__all__ = [
    "Sequence",
    "IndexSet",
    "Cutoff",
    "shift",
    "inner_l2",
    "inner_star",
    "norm_l2",
    "norm_star",
    "window_energy",
    "window_inner",
    "ramp_cutoff",
    "apply_cutoff",
    "to_csv",
    "from_csv",
    "write_csv",
    "read_csv",
    "random_sequence",
]


@dataclass(frozen=True, eq=False)
class Sequence:
    """Element of l^2(Z, R^n) with support inside ``[base, base + len - 1]``.

    ``values`` has shape ``(len, dim)``. The array is made read-only on
    construction so instances can be shared freely.
    """

    base: int
    values: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("values must have shape (length, dim)")
        dim = self.dim or vals.shape[1]
        if vals.shape[1] != dim:
            raise ValueError(f"values have dimension {vals.shape[1]}, expected {dim}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sequence values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dim", int(dim))
        # the empty sequence is the canonical zero element, anchored at 0
        object.__setattr__(self, "base", int(self.base) if len(vals) else 0)

    @classmethod
    def zeros(cls, dim: int = 1) -> "Sequence":
        return cls(0, np.zeros((0, dim)), dim)

    @classmethod
    def delta(cls, t: int, x) -> "Sequence":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(t, x[None, :])

    @classmethod
    def from_function(cls, lo: int, hi: int, fn, dim: int = 1) -> "Sequence":
        ts = np.arange(lo, hi + 1)
        vals = np.array([np.atleast_1d(fn(t)) for t in ts], dtype=float).reshape(len(ts), dim)
        return cls(lo, vals, dim)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def end(self) -> int:
        """Last stored index (``base - 1`` for the empty sequence)."""
        return self.base + len(self) - 1

    @property
    def is_zero(self) -> bool:
        return len(self) == 0 or not np.any(self.values)

    def __call__(self, t: int) -> np.ndarray:
        i = t - self.base
        if 0 <= i < len(self):
            return self.values[i].copy()
        return np.zeros(self.dim)

    def on(self, lo: int, hi: int) -> np.ndarray:
        """Dense ``(hi - lo + 1, dim)`` array of the values on ``[lo, hi]``."""
        out = np.zeros((hi - lo + 1, self.dim))
        a = max(lo, self.base)
        b = min(hi, self.end)
        if a <= b:
            out[a - lo : b - lo + 1] = self.values[a - self.base : b - self.base + 1]
        return out

    def trimmed(self) -> "Sequence":
        """Drop leading and trailing exactly-zero rows."""
        nz = np.flatnonzero(np.any(self.values != 0.0, axis=1))
        if nz.size == 0:
            return Sequence.zeros(self.dim)
        return Sequence(self.base + nz[0], self.values[nz[0] : nz[-1] + 1], self.dim)

    def support(self) -> tuple[int, int] | None:
        t = self.trimmed()
        if len(t) == 0:
            return None
        return t.base, t.end

    def norms(self) -> np.ndarray:
        """Pointwise Euclidean norms |u(t)| over the stored window."""
        return np.linalg.norm(self.values, axis=1)

    def sup_norm(self) -> float:
        return float(self.norms().max()) if len(self) else 0.0

    def _span_with(self, other: "Sequence") -> tuple[int, int]:
        if len(self) == 0 and len(other) == 0:
            return 0, -1
        if len(self) == 0:
            return other.base, other.end
        if len(other) == 0:
            return self.base, self.end
        return min(self.base, other.base), max(self.end, other.end)

    def _check_dim(self, other: "Sequence"):
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Sequence") -> "Sequence":
        self._check_dim(other)
        lo, hi = self._span_with(other)
        if hi < lo:
            return Sequence.zeros(self.dim)
        return Sequence(lo, self.on(lo, hi) + other.on(lo, hi), self.dim)

    def __sub__(self, other: "Sequence") -> "Sequence":
        return self + (-1.0) * other

    def __neg__(self) -> "Sequence":
        return (-1.0) * self

    def __mul__(self, c: float) -> "Sequence":
        return Sequence(self.base, float(c) * self.values, self.dim)

    __rmul__ = __mul__

    def equals(self, other: "Sequence") -> bool:
        """Bitwise equality of base, dimension and stored values."""
        return (
            self.dim == other.dim
            and self.base == other.base
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    def __repr__(self) -> str:
        return f"Sequence(base={self.base}, len={len(self)}, dim={self.dim})"


def shift(u: Sequence, p: int) -> Sequence:
    """Translate: ``shift(u, p)(t) == u(t - p)``."""
    return Sequence(u.base + int(p), u.values, u.dim)


def inner_l2(u: Sequence, v: Sequence) -> float:
    u._check_dim(v)
    lo, hi = u._span_with(v)
    if hi < lo:
        return 0.0
    return float(np.sum(u.on(lo, hi) * v.on(lo, hi)))


def norm_l2(u: Sequence) -> float:
    return float(np.sqrt(inner_l2(u, u)))


def _energy_terms(u: Sequence, v: Sequence, m: "SystemModel", lo: int, hi: int) -> np.ndarray:
    """Per-index summands of <u, v>_F on ``[lo, hi]``.

    Entry ``t - lo`` is ``<du(t-1), dv(t-1)> + <u(t), L(t) v(t)>``.
    """
    U = u.on(lo - 1, hi)
    W = v.on(lo - 1, hi)
    dU = np.diff(U, axis=0)
    dW = np.diff(W, axis=0)
    Lt = m.L_at(np.arange(lo, hi + 1))
    quad = np.einsum("ti,tij,tj->t", U[1:], Lt, W[1:])
    return np.sum(dU * dW, axis=1) + quad


def inner_star(u: Sequence, v: Sequence, m: "SystemModel") -> float:
    """Energy inner product ``sum <du(t-1), dv(t-1)> + sum <u(t), L(t) v(t)>``."""
    u._check_dim(v)
    if u.dim != m.dim:
        raise ValueError(f"dimension mismatch: sequence {u.dim} vs model {m.dim}")
    lo, hi = u._span_with(v)
    if hi < lo:
        return 0.0
    # differences reach one index past the right edge
    return float(np.sum(_energy_terms(u, v, m, lo, hi + 1)))


def norm_star(u: Sequence, m: "SystemModel") -> float:
    return float(np.sqrt(max(inner_star(u, u, m), 0.0)))


class IndexSet:
    """Finite union of disjoint closed integer intervals, kept sorted.

    Parameters
    ----------
    intervals : iterable of (lo, hi)
        Inclusive bounds. Overlapping or adjacent intervals are merged;
        empty ones (``hi < lo``) are dropped.
    """

    __slots__ = ("intervals", "_starts")

    def __init__(self, intervals: Iterable[tuple[int, int]] = ()):
        ivs = sorted((int(a), int(b)) for a, b in intervals if int(b) >= int(a))
        merged: list[tuple[int, int]] = []
        for a, b in ivs:
            if merged and a <= merged[-1][1] + 1:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self.intervals = tuple(merged)
        self._starts = [a for a, _ in merged]

    @classmethod
    def interval(cls, lo: int, hi: int) -> "IndexSet":
        return cls([(lo, hi)])

    @classmethod
    def from_indices(cls, idx: Iterable[int]) -> "IndexSet":
        return cls((int(t), int(t)) for t in idx)

    def __contains__(self, t: int) -> bool:
        i = bisect.bisect_right(self._starts, t) - 1
        return i >= 0 and t <= self.intervals[i][1]

    def __len__(self) -> int:
        return sum(b - a + 1 for a, b in self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __iter__(self):
        for a, b in self.intervals:
            yield from range(a, b + 1)

    def __eq__(self, other) -> bool:
        return isinstance(other, IndexSet) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __repr__(self) -> str:
        return "IndexSet(" + ", ".join(f"[{a},{b}]" for a, b in self.intervals) + ")"

    def indices(self) -> np.ndarray:
        if not self.intervals:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(a, b + 1) for a, b in self.intervals])

    @property
    def min(self) -> int:
        return self.intervals[0][0]

    @property
    def max(self) -> int:
        return self.intervals[-1][1]

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self.intervals + other.intervals)

    __or__ = union

    def intersection(self, other: "IndexSet") -> "IndexSet":
        out = []
        i = j = 0
        A, B = self.intervals, other.intervals
        while i < len(A) and j < len(B):
            lo = max(A[i][0], B[j][0])
            hi = min(A[i][1], B[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if A[i][1] < B[j][1]:
                i += 1
            else:
                j += 1
        return IndexSet(out)

    __and__ = intersection

    def complement(self, bound: "IndexSet") -> "IndexSet":
        """``bound`` minus this set."""
        out = []
        for lo, hi in bound.intervals:
            cur = lo
            for a, b in self.intervals:
                if b < cur or a > hi:
                    continue
                if a > cur:
                    out.append((cur, a - 1))
                cur = max(cur, b + 1)
            if cur <= hi:
                out.append((cur, hi))
        return IndexSet(out)

    def dilate(self, k: int) -> "IndexSet":
        return IndexSet((a - k, b + k) for a, b in self.intervals)

    def distance(self, ts: np.ndarray) -> np.ndarray:
        """Integer distance from each ``t`` in ``ts`` to the set."""
        ts = np.asarray(ts, dtype=int)
        d = np.full(ts.shape, np.iinfo(np.int64).max, dtype=np.int64)
        for a, b in self.intervals:
            d = np.minimum(d, np.maximum(0, np.maximum(a - ts, ts - b)))
        return d


def window_inner(u: Sequence, v: Sequence, F: IndexSet, m: "SystemModel") -> float:
    """``<u, v>_F``: the energy inner product summed over ``t`` in ``F`` only."""
    total = 0.0
    for lo, hi in F.intervals:
        total += float(np.sum(_energy_terms(u, v, m, lo, hi)))
    return total


def window_energy(u: Sequence, F: IndexSet, m: "SystemModel") -> float:
    """``||u||_F^2 = sum_{t in F} (|du(t-1)|^2 + <u(t), L(t) u(t)>)``."""
    return window_inner(u, u, F, m)


@dataclass(frozen=True, eq=False)
class Cutoff:
    """Weight function equal to 1 near ``plateau`` with linear ramps of width ``ramp_width``.

    Weights are stored densely on ``[base, base + len(weights) - 1]`` and are
    zero elsewhere.
    """

    plateau: IndexSet
    ramp_width: int
    base: int
    weights: np.ndarray

    def weight(self, t: int) -> float:
        i = t - self.base
        if 0 <= i < len(self.weights):
            return float(self.weights[i])
        return 0.0

    def weights_on(self, lo: int, hi: int) -> np.ndarray:
        out = np.zeros(hi - lo + 1)
        a = max(lo, self.base)
        b = min(hi, self.base + len(self.weights) - 1)
        if a <= b:
            out[a - lo : b - lo + 1] = self.weights[a - self.base : b - self.base + 1]
        return out

    @property
    def support(self) -> IndexSet:
        """Indices where the weight is nonzero: the plateau dilated by ``ramp_width``."""
        return self.plateau.dilate(self.ramp_width)


def ramp_cutoff(plateau: IndexSet, N0: int) -> Cutoff:
    """Cutoff that is 1 on ``plateau`` and its two edge neighbours, then ramps down.

    At distance ``1 + l`` from the plateau the weight is ``(N0 - l) / N0``,
    so consecutive weights differ by at most ``1 / N0``.
    """
    if N0 < 1:
        raise ValueError("ramp width must be >= 1")
    if not plateau:
        raise ValueError("cutoff plateau must be nonempty")
    base = plateau.min - N0 - 1
    ts = np.arange(base, plateau.max + N0 + 2)
    d = plateau.distance(ts)
    w = np.clip((N0 + 1 - d) / N0, 0.0, 1.0)
    w.setflags(write=False)
    return Cutoff(plateau, int(N0), int(base), w)


def apply_cutoff(c: Cutoff, u: Sequence) -> Sequence:
    if len(u) == 0:
        return u
    w = c.weights_on(u.base, u.end)
    return Sequence(u.base, u.values * w[:, None], u.dim)


# -- CSV ---------------------------------------------------------------------

def to_csv(u: Sequence) -> str:
    """Serialise as ``t,x_1,...,x_n`` rows; floats use shortest round-trip repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x_{i + 1}" for i in range(u.dim)])
    for i, row in enumerate(u.values):
        w.writerow([u.base + i] + [repr(float(x)) for x in row])
    return buf.getvalue()


def from_csv(text: str) -> Sequence:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValueError("sequence CSV must start with a 't,x_1,...' header")
    dim = len(rows[0]) - 1
    if dim < 1:
        raise ValueError("sequence CSV needs at least one value column")
    body = [r for r in rows[1:] if r]
    if not body:
        return Sequence.zeros(dim)
    ts = np.array([int(r[0]) for r in body])
    if np.any(np.diff(ts) != 1):
        raise ValueError("sequence CSV rows must be consecutive integers")
    vals = np.array([[float(x) for x in r[1:]] for r in body])
    return Sequence(int(ts[0]), vals, dim)


def write_csv(path, u: Sequence) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(u))


def read_csv(path) -> Sequence:
    with open(path) as fh:
        return from_csv(fh.read())


def random_sequence(rng: np.random.Generator, lo: int, hi: int, dim: int = 1,
                    scale: float = 1.0) -> Sequence:
    """Gaussian random sequence on ``[lo, hi]``; used by tests and audits."""
    return Sequence(lo, scale * rng.standard_normal((hi - lo + 1, dim)), dim)


def stack(seqs: _Seq[Sequence], lo: int, hi: int) -> np.ndarray:
    """Dense ``(len(seqs), hi - lo + 1, dim)`` array of several sequences."""
    return np.stack([s.on(lo, hi) for s in seqs])
