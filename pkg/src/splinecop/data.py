"""Pseudo-observation container shared by the estimation code."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .generator import transform_S


@dataclass
class ObservationSet:
    """``n`` pairs ``(u, v)`` strictly inside the unit square, optional covariates.

    ``x`` has shape ``(n, p)`` with every column in ``[0, 1]``.  ``su`` and
    ``sv`` hold ``S(u)`` and ``S(v)``; they are computed once because every
    likelihood evaluation needs them.
    """

    u: np.ndarray
    v: np.ndarray
    x: np.ndarray | None = None
    covariate_map: AffineMap | None = field(default=None, compare=False, repr=False)
    su: np.ndarray = field(init=False, repr=False)
    sv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        self.v = np.asarray(self.v, dtype=float).ravel()
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must have the same length")
        for name, a in (("u", self.u), ("v", self.v)):
            bad = np.flatnonzero(~((a > 0) & (a < 1)))
            if bad.size:
                raise ValueError(f"{name} must lie strictly inside (0, 1); first offending index {bad[0]}")
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[0] != self.u.size:
                raise ValueError("covariates must have one row per observation")
            if not np.all(np.isfinite(x)) or np.any((x < 0) | (x > 1)):
                raise ValueError("covariates must be rescaled into [0, 1]")
            self.x = x
        self.su = transform_S(self.u)
        self.sv = transform_S(self.v)

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def p(self) -> int:
        return 0 if self.x is None else self.x.shape[1]

    def subset(self, idx) -> "ObservationSet":
        return ObservationSet(self.u[idx], self.v[idx], None if self.x is None else self.x[idx])

    def concat(self, other: "ObservationSet") -> "ObservationSet":
        x = None
        if self.x is not None:
            x = np.vstack([self.x, other.x])
        return ObservationSet(np.concatenate([self.u, other.u]), np.concatenate([self.v, other.v]), x)


@dataclass(frozen=True)
class AffineMap:
    """Per-column map ``x -> (x - lo) / (hi - lo)`` onto ``[0, 1]``."""

    names: tuple
    lo: tuple
    hi: tuple

    @classmethod
    def fit(cls, names, x) -> "AffineMap":
        x = np.asarray(x, dtype=float)
        lo, hi = x.min(axis=0), x.max(axis=0)
        flat = [n for n, a, b in zip(names, lo, hi) if not b > a]
        if flat:
            raise ValueError(f"covariate column(s) {flat} are constant and cannot be rescaled")
        return cls(tuple(names), tuple(map(float, lo)), tuple(map(float, hi)))

    def apply(self, x) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def invert(self, z) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + np.asarray(z, dtype=float) * (hi - lo)

    def to_record(self) -> dict:
        return {"names": list(self.names), "lo": list(self.lo), "hi": list(self.hi)}
