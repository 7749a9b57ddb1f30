"""Cubic B-spline bases on equidistant knots and difference penalties."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline, PPoly

DEGREE = 3


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped cubic B-spline basis with ``K`` functions on ``[lo, hi]``.

    The interior knots are equidistant with spacing ``h = (hi - lo) / (K - 3)``
    and both boundary knots are repeated ``degree + 1`` times.

    Besides the raw design-matrix evaluators, the basis keeps per-interval
    polynomial tables in the local coordinate ``t = (s - x_j) / h``; these
    are what the generator kernels use for fast batched evaluation.
    """

    lo: float
    hi: float
    K: int
    degree: int = DEGREE
    knots: np.ndarray = field(init=False, repr=False, compare=False)
    # (J, K, 4) ascending coefficients of b_k on interval j, in t
    value_table: np.ndarray = field(init=False, repr=False, compare=False)
    # (J, K, 5) ascending coefficients of int_{lo}^{s} b_k, in t
    integral_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"invalid domain: need lo < hi, got ({self.lo}, {self.hi})")
        if self.degree != DEGREE:
            raise ValueError("only cubic bases are supported")
        if self.K < self.degree + 1:
            raise ValueError(f"too few basis functions: K={self.K} < {self.degree + 1}")
        J = self.K - self.degree
        breaks = np.linspace(self.lo, self.hi, J + 1)
        knots = np.concatenate([[self.lo] * self.degree, breaks, [self.hi] * self.degree])
        object.__setattr__(self, "knots", knots)

        h = self.h
        vt = np.zeros((J, self.K, 4))
        for k in range(self.K):
            c = np.zeros(self.K)
            c[k] = 1.0
            pp = PPoly.from_spline(BSpline(knots, c, self.degree, extrapolate=False))
            # pp.x repeats the clamped knots; keep the J genuine intervals
            for j in range(J):
                i = self.degree + j
                # descending powers of (s - x_j) -> ascending powers of t
                desc = pp.c[:, i]
                vt[j, k] = desc[::-1] * h ** np.arange(4)
        it = np.zeros((J, self.K, 5))
        it[:, :, 1:] = h * vt / np.arange(1, 5)
        full = it.sum(axis=2)  # integral over each whole interval
        offsets = np.concatenate([np.zeros((1, self.K)), np.cumsum(full, axis=0)[:-1]])
        it[:, :, 0] = offsets
        object.__setattr__(self, "value_table", vt)
        object.__setattr__(self, "integral_table", it)

    @property
    def n_intervals(self) -> int:
        return self.K - self.degree

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_intervals

    def locate(self, s):
        """Interval index and local coordinate for points clamped to ``[lo, hi]``."""
        s = np.clip(np.asarray(s, dtype=float), self.lo, self.hi)
        z = (s - self.lo) / self.h
        j = np.clip(np.floor(z).astype(np.intp), 0, self.n_intervals - 1)
        return j, z - j

    def evaluate(self, s, what: str = "value") -> np.ndarray:
        """Design matrix of shape ``s.shape + (K,)``.

        ``value`` and ``derivative`` clamp ``s`` into the domain. The
        ``antiderivative`` entries are ``int_lo^min(s, hi) b_k``, so they are
        constant above ``hi`` and zero below ``lo``.
        """
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)):
            raise ValueError("basis evaluation needs finite input")
        j, t = self.locate(s)
        if what == "value":
            # clamp round-off negatives at the clamped ends
            return np.maximum(_horner(self.value_table[j], t), 0.0)
        if what == "derivative":
            c = self.value_table[j][..., 1:] * np.arange(1, 4)
            return _horner(c, t) / self.h
        if what == "antiderivative":
            c = self.integral_table[j]
            return _horner(c, t)
        raise ValueError(f"unknown evaluation mode {what!r}")

    def integrals(self) -> np.ndarray:
        """Integral of each basis function over the whole domain."""
        return (self.knots[self.degree + 1 :] - self.knots[: self.K]) / (self.degree + 1)


def _horner(coef: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate ascending-power polynomials ``coef[..., p]`` at ``t[..., None]``."""
    t = np.asarray(t)[..., None]
    out = coef[..., -1]
    for p in range(coef.shape[-1] - 2, -1, -1):
        out = out * t + coef[..., p]
    return out


def build_basis(lo: float, hi: float, K: int) -> BSplineBasis:
    return BSplineBasis(float(lo), float(hi), int(K))


def eval_basis(basis: BSplineBasis, s, what: str = "value") -> np.ndarray:
    return basis.evaluate(s, what)


@dataclass(frozen=True)
class PenaltyMatrix:
    """``P = D_r' D_r + ridge * I`` together with its rank."""

    P: np.ndarray
    order: int
    ridge: float
    rank: int

    def quad(self, c) -> np.ndarray:
        """Quadratic form ``c' P c`` (batched over leading axes of ``c``)."""
        c = np.asarray(c, dtype=float)
        return np.einsum("...i,ij,...j->...", c, self.P, c)


def difference_matrix(K: int, r: int) -> np.ndarray:
    """The ``(K - r) x K`` matrix of ``r``-th order differences."""
    if not 1 <= r < K:
        raise ValueError(f"invalid difference order r={r} for K={K}")
    return np.diff(np.eye(K), n=r, axis=0)


def difference_penalty(K: int, r: int, ridge: float = 0.0) -> PenaltyMatrix:
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    D = difference_matrix(K, r)
    P = D.T @ D + ridge * np.eye(K)
    rank = K if ridge > 0 else K - r
    return PenaltyMatrix(P=P, order=r, ridge=float(ridge), rank=rank)
