"""Voter profiles: multisets of preference vectors, optionally weighted.

Profiles are canonicalized on construction (voters sorted lexicographically,
weights carried along). Every downstream reduction then visits voters in the
same order regardless of input ordering, which makes all aggregates exactly
invariant under permutation of the input, not just up to rounding.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

__all__ = ["VoterProfile", "WeightedProfile", "uniform_profile", "affine_dimension"]


def _canonical_order(points: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    keys = [points[:, j] for j in range(points.shape[1] - 1, -1, -1)]
    if weights is not None:
        keys.insert(0, weights)
    return np.lexsort(keys)


def _validate_points(points) -> np.ndarray:
    a = np.asarray(points, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a (V, d) array of voters, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError("profile needs at least one voter and one dimension")
    if not np.all(np.isfinite(a)):
        raise ValueError("profile has non-finite entries")
    return a


@dataclass(frozen=True)
class VoterProfile:
    """A finite multiset of d-dimensional preference vectors."""

    voters: np.ndarray

    def __post_init__(self):
        a = _validate_points(self.voters)
        a = np.array(a[_canonical_order(a)])
        a.setflags(write=False)
        object.__setattr__(self, "voters", a)

    @property
    def count(self) -> int:
        return self.voters.shape[0]

    @property
    def dim(self) -> int:
        return self.voters.shape[1]

    def weighted(self) -> "WeightedProfile":
        return uniform_profile(self.voters)


@dataclass(frozen=True)
class WeightedProfile:
    """Voters plus strictly positive per-voter weights summing to one."""

    voters: np.ndarray
    weights: np.ndarray = field(default=None)
    scale: float = field(default=None, compare=False)

    def __post_init__(self):
        a = _validate_points(self.voters)
        if self.weights is None:
            w = np.full(a.shape[0], 1.0 / a.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
        if w.shape != (a.shape[0],):
            raise DimensionMismatch("weights must be one positive real per voter")
        if not np.all(w > 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be strictly positive and finite")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total!r} (use from_raw_weights)")
        w = w / total
        order = _canonical_order(a, w)
        a = np.array(a[order])
        w = np.array(w[order])
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "voters", a)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "scale", max(1.0, float(np.max(np.abs(a)))))

    @classmethod
    def from_raw_weights(cls, points, raw_weights) -> "WeightedProfile":
        """Build from positive weights of any scale; they are normalized here."""
        w = np.asarray(raw_weights, dtype=float)
        if w.ndim != 1 or not np.all(w > 0.0):
            raise ValueError("raw weights must be a 1-d array of positive reals")
        return cls(points, w / w.sum())

    @property
    def count(self) -> int:
        return self.voters.shape[0]

    @property
    def dim(self) -> int:
        return self.voters.shape[1]

    def unweighted(self) -> VoterProfile:
        return VoterProfile(self.voters)


def uniform_profile(points) -> WeightedProfile:
    a = _validate_points(points)
    return WeightedProfile(a, np.full(a.shape[0], 1.0 / a.shape[0]))


def affine_dimension(points, rel_tol: float = 1e-9) -> int:
    """Dimension of the affine span of the points."""
    a = _validate_points(points)
    if a.shape[0] == 1:
        return 0
    centered = a - a.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))
