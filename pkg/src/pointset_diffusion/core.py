"""Domains, point sets, masks and the elementary random-set operations.

Everything downstream (forward chain, posterior, sampling) is built from four
operations: counting, superposition, independent thinning and masking.
Point identity inside an operation is positional; coordinates are never
compared to decide set membership.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised for points outside a domain or mismatched domains."""


class SimplicityError(ValueError):
    """Raised when a point set contains exactly duplicated points."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^d.

    ``ordered_axis`` marks the time axis of a spatio-temporal domain and is
    ``None`` for purely spatial ones.
    """

    lower: tuple
    upper: tuple
    ordered_axis: Optional[int] = None

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) == 0 or len(lower) != len(upper):
            raise DomainError("lower and upper must be nonempty and of equal length")
        if not all(lo < hi for lo, hi in zip(lower, upper)):
            raise DomainError(f"need lower < upper on every axis, got {lower} / {upper}")
        if not all(np.isfinite(lower + upper)):
            raise DomainError("domain bounds must be finite")
        if self.ordered_axis is not None and not 0 <= self.ordered_axis < len(lower):
            raise DomainError(f"ordered_axis {self.ordered_axis} out of range")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int, ordered_axis: Optional[int] = None) -> "Domain":
        """The normalized box [-1, 1]^dim."""
        return cls((-1.0,) * dim, (1.0,) * dim, ordered_axis)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def normalized(self) -> "Domain":
        return Domain.unit(self.dim, self.ordered_axis)

    def normalize(self, X: "PointSet") -> "PointSet":
        """Map a point set on this domain affinely onto [-1, 1]^d."""
        _check_same_domain(X.domain, self)
        pts = 2.0 * (X.points - self.lo) / (self.hi - self.lo) - 1.0
        return PointSet(np.clip(pts, -1.0, 1.0), self.normalized())

    def denormalize(self, X: "PointSet") -> "PointSet":
        """Inverse of :meth:`normalize`."""
        if X.domain.dim != self.dim:
            raise DomainError("dimension mismatch")
        pts = self.lo + (X.points + 1.0) * 0.5 * (self.hi - self.lo)
        return PointSet(np.clip(pts, self.lo, self.hi), self)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "ordered_axis": self.ordered_axis,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        dom = cls(tuple(d["lower"]), tuple(d["upper"]), d.get("ordered_axis"))
        if "dim" in d and int(d["dim"]) != dom.dim:
            raise DomainError(f"header dim {d['dim']} disagrees with bounds of length {dom.dim}")
        return dom


def _check_same_domain(a: Domain, b: Domain) -> None:
    if a != b:
        raise DomainError(f"domain mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class PointSet:
    """A finite point configuration on a domain, stored as an (n, d) array.

    Row order carries no meaning. The array is made read-only on construction.
    """

    points: np.ndarray
    domain: Domain

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, self.domain.dim)
        if not np.all(np.isfinite(pts)):
            raise DomainError("point coordinates must be finite")
        inside = self.domain.contains(pts)
        if not inside.all():
            bad = pts[np.argmin(inside)]
            raise DomainError(f"point {bad.tolist()} lies outside the domain")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def empty(cls, domain: Domain) -> "PointSet":
        return cls(np.zeros((0, domain.dim)), domain)

    @classmethod
    def ingest(cls, points, domain: Domain) -> "PointSet":
        """Construct and additionally reject exact duplicate points."""
        X = cls(points, domain)
        X.check_simple()
        return X

    def check_simple(self) -> None:
        if len(self) > 1 and len(np.unique(self.points, axis=0)) != len(self):
            raise SimplicityError("point set contains exactly duplicated points")

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, index) -> "PointSet":
        """Rows selected by a boolean mask or an integer index array."""
        return PointSet(self.points[index], self.domain)

    def sorted(self) -> np.ndarray:
        """Rows in lexicographic order; handy for order-insensitive comparison."""
        if len(self) == 0:
            return self.points.copy()
        order = np.lexsort(self.points.T[::-1])
        return self.points[order]

    def same_set(self, other: "PointSet") -> bool:
        return self.domain == other.domain and np.array_equal(self.sorted(), other.sorted())

    def __repr__(self) -> str:
        return f"PointSet(n={len(self)}, dim={self.domain.dim})"


@dataclass(frozen=True)
class Mask:
    """Binary predicate C on the domain.

    C(x) = 1 iff x lies in one of ``boxes`` (closed boxes), or, when
    ``predicate`` is given, iff the predicate says so. ``invert`` flips the
    result, so the boxes can describe either the conditioned region or its
    complement.
    """

    boxes: tuple = ()
    predicate: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    invert: bool = False

    def __post_init__(self):
        boxes = []
        for lo, hi in self.boxes:
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise DomainError(f"invalid mask box {lo.tolist()} / {hi.tolist()}")
            boxes.append((tuple(lo.tolist()), tuple(hi.tolist())))
        object.__setattr__(self, "boxes", tuple(boxes))

    @classmethod
    def everywhere(cls) -> "Mask":
        return cls(invert=True)

    @classmethod
    def nowhere(cls) -> "Mask":
        return cls()

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.predicate is not None:
            inside = np.asarray(self.predicate(points), dtype=bool).reshape(len(points))
        else:
            inside = np.zeros(len(points), dtype=bool)
            for lo, hi in self.boxes:
                inside |= np.all((points >= lo) & (points <= hi), axis=1)
        return ~inside if self.invert else inside

    def to_json(self) -> list:
        if self.predicate is not None or self.invert:
            raise ValueError("only plain box-union masks are serializable")
        return [{"lower": list(lo), "upper": list(hi)} for lo, hi in self.boxes]

    @classmethod
    def from_json(cls, boxes: Sequence[dict]) -> "Mask":
        return cls(tuple((b["lower"], b["upper"]) for b in boxes))

    def transformed(self, domain: Domain) -> "Mask":
        """Box mask expressed in the normalized coordinates of ``domain``."""
        if self.predicate is not None:
            raise ValueError("cannot transform a predicate mask")
        scale = 2.0 / (domain.hi - domain.lo)
        boxes = tuple(
            ((np.asarray(lo) - domain.lo) * scale - 1.0, (np.asarray(hi) - domain.lo) * scale - 1.0)
            for lo, hi in self.boxes
        )
        return Mask(boxes, invert=self.invert)


@dataclass(frozen=True)
class LabeledState:
    """A latent X_t split into points retained from X_0 and noise points.

    ``source_idx[i]`` is the row of X_0 that ``retained.points[i]`` came from.
    """

    retained: PointSet
    noise: PointSet
    t: int
    source_idx: np.ndarray = None

    def __post_init__(self):
        _check_same_domain(self.retained.domain, self.noise.domain)
        if self.source_idx is None:
            idx = np.arange(len(self.retained))
        else:
            idx = np.asarray(self.source_idx, dtype=np.int64).reshape(-1)
        if len(idx) != len(self.retained):
            raise ValueError("source_idx must have one entry per retained point")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("source_idx entries must be distinct")
        idx.setflags(write=False)
        object.__setattr__(self, "source_idx", idx)

    @property
    def domain(self) -> Domain:
        return self.retained.domain

    @property
    def points(self) -> PointSet:
        """The unlabeled latent, retained rows first."""
        return superpose(self.retained, self.noise)

    def __len__(self) -> int:
        return len(self.retained) + len(self.noise)


def count(X: PointSet, A: Mask) -> int:
    """Counting measure N(A) of X."""
    if len(X) == 0:
        return 0
    return int(np.count_nonzero(A(X.points)))


def superpose(X: PointSet, Y: PointSet) -> PointSet:
    """Union of two point sets drawn independently on the same domain."""
    _check_same_domain(X.domain, Y.domain)
    if len(Y) == 0:
        return X
    if len(X) == 0:
        return Y
    return PointSet(np.concatenate([X.points, Y.points]), X.domain)


def thin_indices(n: int, keep_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of the rows kept by independent Bernoulli(keep_prob) thinning."""
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError(f"keep_prob must lie in [0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return np.arange(n)
    if keep_prob == 0.0 or n == 0:
        return np.arange(0)
    return np.flatnonzero(rng.random(n) < keep_prob)


def thin(X: PointSet, keep_prob: float, rng: np.random.Generator) -> PointSet:
    """Keep every point of X independently with probability ``keep_prob``."""
    return X.subset(thin_indices(len(X), keep_prob, rng))


def split_by_mask(X: PointSet, C: Mask) -> tuple[PointSet, PointSet]:
    """Return (C(X), C'(X)): the points with C(x) = 1 and with C(x) = 0."""
    if len(X) == 0:
        return X, X
    inside = C(X.points)
    return X.subset(inside), X.subset(~inside)


def uniform_poisson(rate: float, domain: Domain, rng: np.random.Generator) -> PointSet:
    """Homogeneous Poisson process with ``rate`` points per unit volume."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    n = rng.poisson(rate * domain.volume) if rate > 0 else 0
    pts = rng.uniform(domain.lo, domain.hi, size=(n, domain.dim))
    return PointSet(pts, domain)
