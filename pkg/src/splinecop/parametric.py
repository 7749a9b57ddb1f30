"""Clayton, Frank and Gumbel reference copulas and synthetic data.

The samplers use conditional inversion: draw ``u`` and ``w`` uniformly and
solve ``dC(u, v)/du = w``.  Since ``dC/du = phi'(u) / phi'(C)``, the root is
found for ``c = C(u, v)`` (monotone in ``v``) and ``v = phi^{-1}(phi(c) - phi(u))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import elementwise

from .data import ObservationSet


class Family(str, Enum):
    CLAYTON = "clayton"
    FRANK = "frank"
    GUMBEL = "gumbel"


_ONE_MINUS = np.nextafter(1.0, 0.0)
_TINY = 1e-300


def _family(f) -> Family:
    return f if isinstance(f, Family) else Family(str(f).lower())


def _check_theta(family: Family, theta):
    theta = np.asarray(theta, dtype=float)
    if family is Family.CLAYTON:
        ok = (theta >= -1) & (theta != 0)
    elif family is Family.FRANK:
        ok = np.isfinite(theta) & (theta != 0)
    else:
        # Table of families prints [-1, inf) for Gumbel; the generator needs theta >= 1
        ok = theta >= 1
    if not np.all(ok & np.isfinite(theta)):
        raise ValueError(f"theta={theta} out of range for the {family.value} family")
    return theta


def _log_neg_phi_prime(family: Family, th, u):
    if family is Family.CLAYTON:
        return -(th + 1.0) * np.log(u)
    if family is Family.FRANK:
        return np.log(np.abs(th)) - np.log(np.abs(np.expm1(th * u)))
    return np.log(th) + (th - 1.0) * np.log(-np.log(u)) - np.log(u)


@dataclass(frozen=True)
class ParametricCopula:
    """Closed-form Archimedean generator with vectorized evaluators.

    ``theta`` may be a scalar or an array broadcasting against the evaluation
    points (the covariate-varying samplers use one ``theta`` per observation).
    """

    family: Family
    theta: float | np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "family", _family(self.family))
        object.__setattr__(self, "theta", _check_theta(self.family, self.theta))

    def phi(self, u):
        u, th = np.asarray(u, dtype=float), self.theta
        if self.family is Family.CLAYTON:
            return np.expm1(-th * np.log(u)) / th
        if self.family is Family.FRANK:
            return -np.log(np.expm1(-th * u) / np.expm1(-th))
        return (-np.log(u)) ** th

    def phi_prime(self, u):
        return -np.exp(self.log_neg_phi_prime(u))

    def log_neg_phi_prime(self, u):
        """``log(-phi'(u))``, decreasing in ``u``."""
        return _log_neg_phi_prime(self.family, self.theta, np.asarray(u, dtype=float))

    def phi_inv(self, t):
        t, th = np.asarray(t, dtype=float), self.theta
        if self.family is Family.CLAYTON:
            return np.exp(-np.log1p(th * t) / th)
        if self.family is Family.FRANK:
            return -np.log1p(np.exp(-t) * np.expm1(-th)) / th
        return np.exp(-(t ** (1.0 / th)))

    def lam(self, u):
        """``lambda(u) = phi(u) / phi'(u)``."""
        u, th = np.asarray(u, dtype=float), self.theta
        if self.family is Family.CLAYTON:
            return u * np.expm1(th * np.log(u)) / th
        if self.family is Family.FRANK:
            return np.log(np.expm1(-th * u) / np.expm1(-th)) * np.expm1(th * u) / th
        return u * np.log(u) / th

    def lam_prime(self, u):
        """Closed-form derivative of ``lambda``."""
        u, th = np.asarray(u, dtype=float), self.theta
        if self.family is Family.CLAYTON:
            return ((1.0 + th) * u**th - 1.0) / th
        if self.family is Family.FRANK:
            return 1.0 + np.log(np.expm1(-th * u) / np.expm1(-th)) * np.exp(th * u)
        return (np.log(u) + 1.0) / th

    def cdf(self, u, v):
        return self.phi_inv(self.phi(u) + self.phi(v))

    def tau(self) -> np.ndarray:
        return tau_of_theta(self.family, self.theta)


def make_reference(family, theta) -> ParametricCopula:
    return ParametricCopula(_family(family), theta)


# -- Kendall's tau <-> theta -------------------------------------------------


def debye_integral(theta, atol: float = 1e-12, max_nodes: int = 1024):
    """``int_0^theta t / (e^t - 1) dt`` by Gauss-Legendre with node doubling.

    The order is doubled until two successive rules agree to ``atol`` for
    every entry of ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    n = 16
    prev = _gl_debye(theta, n)
    while True:
        n *= 2
        cur = _gl_debye(theta, n)
        if np.all(np.abs(cur - prev) <= atol) or n >= max_nodes:
            return cur
        prev = cur


def _gl_debye(theta, n):
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * theta[..., None] * (x + 1.0)
    f = np.where(t == 0, 1.0, t / np.expm1(np.where(t == 0, 1.0, t)))
    return 0.5 * theta * (f @ w)


def tau_of_theta(family, theta):
    family = _family(family)
    theta = _check_theta(family, theta)
    if family is Family.CLAYTON:
        return theta / (theta + 2.0)
    if family is Family.GUMBEL:
        return (theta - 1.0) / theta
    small = np.abs(theta) < 1e-2
    th = np.where(small, 1.0, theta)
    d1 = debye_integral(th) / th
    tau = 1.0 - 4.0 / th * (1.0 - d1)
    # series of the Debye function near zero avoids cancellation
    series = theta / 9.0 - theta**3 / 900.0 + theta**5 / 52920.0
    return np.where(small, series, tau)


def theta_of_tau(family, tau, tol: float = 1e-10):
    """Dependence parameter giving Kendall's tau ``tau`` in ``(0, 1)``."""
    family = _family(family)
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise ValueError("theta_of_tau supports 0 < tau < 1 only")
    if family is Family.CLAYTON:
        return 2.0 * tau / (1.0 - tau)
    if family is Family.GUMBEL:
        return 1.0 / (1.0 - tau)
    lo, hi = np.full(tau.shape, 1e-6), np.full(tau.shape, 1.0)
    # Frank tau ~ 1 - 4/theta for large theta
    while np.any(f_hi := tau_of_theta(family, hi) < tau):
        hi = np.where(f_hi, 2.0 * hi, hi)
        if np.any(hi > 1e6):
            raise ValueError(f"no root in bracket for tau={tau}")
    res = elementwise.find_root(
        lambda th, t: tau_of_theta(family, th) - t,
        (lo, hi),
        args=(tau,),
        tolerances=dict(xatol=1e-13, xrtol=1e-15, fatol=tol, frtol=0.0),
    )
    if not np.all(res.success):
        raise ValueError(f"Frank tau inversion failed for tau={tau[~res.success]}")
    return res.x


def tau_theta_map(family, direction: str, value):
    if direction == "tau_of_theta":
        return tau_of_theta(family, value)
    if direction == "theta_of_tau":
        return theta_of_tau(family, value)
    raise ValueError(f"unknown direction {direction!r}")


# -- covariate-dependent tau -------------------------------------------------


@dataclass(frozen=True)
class TauFunction:
    """Kendall's tau as a function of the covariate.

    ``kind="constant"`` uses ``tau0``; ``kind="sine"`` is
    ``0.5 + 0.3 sin(1.6 pi x^1.5)``, which sweeps ``[0.2, 0.8]`` on ``[0, 1]``.
    """

    kind: str = "constant"
    tau0: float = 0.5

    def __post_init__(self):
        if self.kind not in ("constant", "sine"):
            raise ValueError(f"unknown tau function {self.kind!r}")
        if self.kind == "constant" and not -1 < self.tau0 < 1:
            raise ValueError("tau0 must lie in (-1, 1)")

    @property
    def needs_covariate(self) -> bool:
        return self.kind == "sine"

    def __call__(self, x=None):
        if self.kind == "constant":
            return np.full(np.shape(x) if x is not None else (), self.tau0, dtype=float)
        x = np.asarray(x, dtype=float)
        return 0.5 + 0.3 * np.sin(1.6 * np.pi * x**1.5)


def conditional_inverse(cop: ParametricCopula, u, w):
    """``v`` solving ``dC(u, v)/du = w``."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    target = cop.log_neg_phi_prime(u) - np.log(w)
    fam = cop.family

    def f(y, target, th):
        return _log_neg_phi_prime(fam, th, np.exp(y)) - target

    res = elementwise.find_root(
        f,
        (np.full(u.shape, np.log(_TINY)), np.log(u)),
        args=(target, np.broadcast_to(cop.theta, u.shape)),
        tolerances=dict(xatol=1e-15, xrtol=1e-15, fatol=1e-10, frtol=0.0),
    )
    if not np.all(res.success):
        raise RuntimeError("conditional inversion did not converge")
    c = np.exp(res.x)
    v = cop.phi_inv(np.maximum(cop.phi(c) - cop.phi(u), 0.0))
    return np.clip(v, _TINY, _ONE_MINUS)


def sample_data(family, tau_fn: TauFunction, n: int, seed) -> ObservationSet:
    """Draw ``n`` pairs with uniform margins (and a covariate for ``sine``)."""
    if n < 1:
        raise ValueError("n must be positive")
    family = _family(family)
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n) if tau_fn.needs_covariate else None
    u = rng.uniform(size=n)
    w = rng.uniform(size=n)
    u = np.clip(u, _TINY, _ONE_MINUS)
    w = np.clip(w, _TINY, _ONE_MINUS)
    tau = tau_fn(x) if x is not None else float(tau_fn())
    if np.all(np.asarray(tau) == 0):
        v = w
    else:
        if np.any(np.asarray(tau) <= 0):
            raise ValueError(f"sampling supports 0 < tau < 1 only (got {tau})")
        theta = theta_of_tau(family, tau)
        v = conditional_inverse(ParametricCopula(family, theta), u, w)
    return ObservationSet(u, v, None if x is None else x[:, None])
