"""Spline Archimedean generator ``phi(u) = exp(-g(S(u)))``.

Every spline-based generator in the package (the unconditional one and the
conditional families) is handled through :class:`SKernel`, which evaluates
``G(s) = scale * g(s - shift)`` and its first two derivatives in the
``s = S(u)`` scale for a batch of parameter rows.  Working in ``s`` keeps the
Newton inversion and the likelihood free of the cancellation that plagues
``u`` close to 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .basis import BSplineBasis, build_basis

EPSILON = 1e-6
TAU_NODES = 128
TAU_DELTA = 1e-9


class InversionError(RuntimeError):
    """Newton inversion of the generator did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def transform_S(u):
    """Quantile function of the Gumbel (extreme value) law, ``-log(-log u)``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)) or np.any(~np.isfinite(u)):
        raise ValueError("S(u) is defined for 0 < u < 1 only")
    return -np.log(-np.log(u))


def inverse_S(s):
    return np.exp(-np.exp(-np.asarray(s, dtype=float)))


def generator_basis(K: int = 11, epsilon: float = EPSILON) -> BSplineBasis:
    """Basis on ``(S(eps), S(1 - eps))`` used for the generator scale."""
    return build_basis(transform_S(epsilon), transform_S(1.0 - epsilon), K)


def _horner(coef, t):
    out = coef[..., -1]
    for p in range(coef.shape[-1] - 2, -1, -1):
        out = out * t + coef[..., p]
    return out


class SKernel:
    """Batched evaluator of ``G(s) = scale * g(s - shift)``.

    ``g' = 1 + sum_k b_k w_k`` on the basis domain with ``g(lo) = 0``, and ``g``
    is continued linearly with the boundary slopes outside it.  ``weights``
    has shape ``(R, K)`` (or ``(K,)``); it broadcasts with ``shift`` and
    ``scale`` to ``R`` rows.  Points passed to :meth:`__call__` must have leading dimension
    ``R`` (any shape when ``R == 1``).
    """

    def __init__(self, basis: BSplineBasis, weights, shift=0.0, scale=1.0):
        w = np.asarray(weights, dtype=float)
        if w.ndim == 1:
            w = w[None, :]
        if w.shape[-1] != basis.K:
            raise ValueError(f"expected {basis.K} weights, got {w.shape[-1]}")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite generator coefficients")
        shift = np.atleast_1d(np.asarray(shift, dtype=float))
        scale = np.atleast_1d(np.asarray(scale, dtype=float))
        R = max(w.shape[0], shift.size, scale.size)
        if w.shape[0] not in (1, R):
            raise ValueError("weights, shift and scale disagree in the number of rows")
        # one weight row shared by all rows (flex-power): tables are built once
        self.shared = w.shape[0] == 1
        Rw = w.shape[0]
        J = basis.n_intervals
        self.basis = basis
        self.R = R
        vt = basis.value_table.transpose(1, 0, 2).reshape(basis.K, -1)
        it = basis.integral_table.transpose(1, 0, 2).reshape(basis.K, -1)
        self.vtab = (w @ vt).reshape(Rw, J, 4)
        self.dtab = self.vtab[..., 1:] * np.arange(1, 4) / basis.h
        self.itab = (w @ it).reshape(Rw, J, 5)
        self.slope_lo = 1.0 + w[:, 0]
        self.slope_hi = 1.0 + w[:, -1]
        self.g_hi = (basis.hi - basis.lo) + w @ basis.integrals()
        self.shift = np.broadcast_to(shift, (R,)).copy()
        self.scale = np.broadcast_to(scale, (R,)).copy()

    def _rows(self, s):
        s = np.asarray(s, dtype=float)
        if self.R == 1:
            return s, None, (lambda a: a[0])
        if s.shape[:1] != (self.R,):
            raise ValueError(f"points need leading dimension {self.R}, got {s.shape}")
        rows = np.arange(self.R).reshape((self.R,) + (1,) * (s.ndim - 1))
        return s, rows, (lambda a: a.reshape((self.R,) + (1,) * (s.ndim - 1)))

    def __call__(self, s, derivatives: int = 2):
        """Return ``(G, G', G'')`` at ``s`` (``G''`` is None if ``derivatives < 2``)."""
        s, rows, per_row = self._rows(s)
        b = self.basis
        z = s - per_row(self.shift)
        j, t = b.locate(z)
        if self.shared:
            vt, it, dt = self.vtab[0][j], self.itab[0][j], self.dtab[0][j]
            slo, shi, ghi = self.slope_lo[0], self.slope_hi[0], self.g_hi[0]
        else:
            vt, it, dt = self.vtab[rows, j], self.itab[rows, j], self.dtab[rows, j]
            slo, shi, ghi = per_row(self.slope_lo), per_row(self.slope_hi), per_row(self.g_hi)
        below = z < b.lo
        above = z > b.hi
        g1 = 1.0 + _horner(vt, t)
        g1 = np.where(below, slo, np.where(above, shi, g1))
        g = (np.clip(z, b.lo, b.hi) - b.lo) + _horner(it, t)
        g = np.where(below, slo * (z - b.lo), g)
        g = np.where(above, ghi + shi * (z - b.hi), g)
        sc = per_row(self.scale)
        g2 = None
        if derivatives >= 2:
            g2 = np.where(below | above, 0.0, _horner(dt, t)) * sc
        return g * sc, g1 * sc, g2

    def min_slope(self):
        """Lower bound on ``G'`` per row (``g' >= 1``)."""
        return self.scale

    # -- quantities in the s = S(u) scale ---------------------------------

    def lam(self, s):
        """``lambda(u) = u log u / G'(S(u))`` evaluated at ``s = S(u)``."""
        _, g1, _ = self(s, derivatives=1)
        e = np.exp(-s)
        return -np.exp(-e) * e / g1

    def log_neg_lam(self, s, g1=None):
        if g1 is None:
            _, g1, _ = self(s, derivatives=1)
        return -np.exp(-s) - s - np.log(g1)

    def one_minus_lam_prime(self, s, g1=None, g2=None):
        """``1 - lambda'(u)`` from the analytic derivative of ``lambda``."""
        if g1 is None or g2 is None:
            _, g1, g2 = self(s)
        return 1.0 - (1.0 - np.exp(-s)) / g1 - g2 / g1**2

    def solve(self, target, s0, tol: float = 1e-10, maxiter: int = 50, max_step: float = 5.0):
        """Solve ``G(s) = target`` by safeguarded Newton steps in ``s``.

        Returns ``(s, iterations)`` where ``iterations`` counts the steps
        needed for ``|G(s) - target| <= tol``; one extra polishing step is
        always taken.
        """
        target = np.asarray(target, dtype=float)
        s = np.array(np.broadcast_to(s0, target.shape), dtype=float)
        g, g1, _ = self(s, derivatives=1)
        r = g - target
        m = self.min_slope()
        if self.R > 1:
            m = m.reshape((self.R,) + (1,) * (target.ndim - 1))
        else:
            m = m[0]
        # |s* - s| <= |r| / min slope
        a = np.where(r > 0, s - r / m, s)
        b = np.where(r > 0, s, s - r / m)
        iterations = 0
        polished = False
        for it in range(maxiter + 1):
            done = np.abs(r) <= tol
            if np.all(done):
                if polished:
                    break
                polished = True
            else:
                iterations = it + 1
            step = np.clip(-r / g1, -max_step, max_step)
            cand = s + step
            outside = (cand < a) | (cand > b)
            cand = np.where(outside & (b > a), 0.5 * (a + b), cand)
            s = cand
            g, g1, _ = self(s, derivatives=1)
            r = g - target
            a = np.where(r < 0, np.maximum(a, s), a)
            b = np.where(r > 0, np.minimum(b, s), b)
        else:
            res = float(np.max(np.abs(r)))
            raise InversionError(f"generator inversion failed, residual {res:.3e}", res)
        return s, iterations

    def copula_s(self, su, sv):
        """``S(C(u, v))`` given ``su = S(u)`` and ``sv = S(v)``."""
        gu, _, _ = self(su, derivatives=1)
        gv, _, _ = self(sv, derivatives=1)
        target = -np.logaddexp(-gu, -gv)
        s0 = -np.log(np.exp(-su) + np.exp(-sv))  # S(u v)
        s, _ = self.solve(target, s0)
        return s

    def tau(self):
        """Kendall's tau per row: ``1 + 4 int_0^1 lambda`` by Gauss-Legendre in ``sqrt(u)``."""
        nodes, weights = _gl_unit()
        s = transform_S(nodes)
        if self.R > 1:
            s = np.broadcast_to(s, (self.R, s.size))
        lam = self.lam(s)
        return np.atleast_1d(1.0 + 4.0 * lam @ weights)


_GL_CACHE: dict = {}


def _gl_unit(n: int = TAU_NODES, delta: float = TAU_DELTA):
    """Nodes and weights for ``int_delta^{1-delta} f(u) du``.

    Gauss-Legendre runs in ``t = sqrt(u)``: the ``u log u`` behaviour of
    ``lambda`` at 0 caps plain Gauss-Legendre in ``u`` at about 4e-9 in tau,
    while ``2 t f(t^2)`` is smooth enough for double-precision accuracy.
    """
    key = (n, delta)
    if key not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        a, b = np.sqrt(delta), np.sqrt(1.0 - delta)
        t = a + 0.5 * (b - a) * (x + 1.0)
        _GL_CACHE[key] = (t * t, w * 0.5 * (b - a) * 2.0 * t)
    return _GL_CACHE[key]


class GeneratorValues(NamedTuple):
    phi: np.ndarray
    phi_prime: np.ndarray
    lam: np.ndarray
    lam_prime: np.ndarray


def fd_lambda_prime(lam, u, rel_step: float = 1e-5):
    """Central difference of a ``lambda`` callable, step ``rel_step * min(u, 1-u)``."""
    u = np.asarray(u, dtype=float)
    h = rel_step * np.minimum(u, 1.0 - u)
    return (lam(u + h) - lam(u - h)) / (2.0 * h)


@dataclass(frozen=True)
class SplineGenerator:
    """Generator with spline coefficients ``theta``.

    ``g'(s) = 1 + sum_k b_k(s) theta_k**2`` on ``(S(eps), S(1 - eps))``,
    anchored at ``g(S(eps)) = 0``.  ``theta = 0`` gives independence and a
    constant ``theta`` gives a Gumbel generator with parameter ``1 + theta**2``.

    Every real ``theta`` gives a decreasing ``phi`` with the right limits, but
    not always a convex one: ``phi`` is convex iff ``g'(g' - 1 + e^{-s}) >= g''``,
    which a steep rise of ``g'`` where it is still near 1 can break.  The
    likelihood flags such points through ``1 - lambda'(C) <= 0``.
    """

    theta: np.ndarray
    epsilon: float = EPSILON
    basis: BSplineBasis | None = None
    kernel: SKernel = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        object.__setattr__(self, "theta", theta)
        if self.basis is None:
            object.__setattr__(self, "basis", generator_basis(theta.size, self.epsilon))
        object.__setattr__(self, "kernel", SKernel(self.basis, theta**2))

    @property
    def K(self) -> int:
        return self.theta.size

    def g(self, s):
        return self.kernel(s, derivatives=1)[0]

    def log_phi(self, u):
        return -self.g(transform_S(u))

    def phi(self, u):
        return np.exp(self.log_phi(u))

    def lam(self, u):
        return self.kernel.lam(transform_S(u))

    def evaluate(self, u) -> GeneratorValues:
        u = np.asarray(u, dtype=float)
        s = transform_S(u)
        g, g1, g2 = self.kernel(s)
        phi = np.exp(-g)
        # S'(u) = -1 / (u log u)
        dS = -1.0 / (u * np.log(u))
        lam = u * np.log(u) / g1
        lam_prime = 1.0 - self.kernel.one_minus_lam_prime(s, g1, g2)
        return GeneratorValues(phi, -g1 * dS * phi, lam, lam_prime)

    def inverse(self, x, u0=None, tol: float = 1e-10):
        """``phi^{-1}(x)`` for ``x > 0`` by Newton steps in ``S`` space."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("phi^{-1} needs x > 0")
        s0 = np.zeros_like(x) if u0 is None else transform_S(np.broadcast_to(u0, x.shape))
        s, _ = self.kernel.solve(-np.log(x), s0, tol=tol)
        return inverse_S(s)

    def cdf(self, u, v):
        su, sv = np.broadcast_arrays(transform_S(u), transform_S(v))
        return inverse_S(self.kernel.copula_s(su, sv))

    def kendall_tau(self) -> float:
        return float(self.kernel.tau()[0])


def eval_generator(gc: SplineGenerator, u) -> GeneratorValues:
    return gc.evaluate(u)


def invert_generator(gc: SplineGenerator, x, u0=None):
    return gc.inverse(x, u0)


def copula_cdf(gc: SplineGenerator, u, v):
    return gc.cdf(u, v)


def kendall_tau(gc: SplineGenerator) -> float:
    return gc.kendall_tau()

