"""Conditional spline generators: additive, flex-power and tensor forms.

All three reduce, for a fixed covariate value, to an :class:`SKernel`:

* additive:   ``theta_k(x) = gamma_k + sum_j b*(x_j) . beta_j``, weights ``theta_k(x)**2``
* tensor:     ``theta_k(x) = sum_l b*_l(x) Theta[k, l]``, weights ``theta_k(x)**2``
* flex-power: ``phi(t|x) = phi_ref(t**alpha(x))**beta(x)``, i.e.
  ``G(s|x) = beta(x) * g_ref(s - log alpha(x))`` in the ``S`` scale.

Covariates are expected on ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BSplineBasis, build_basis, difference_penalty
from .generator import GeneratorValues, SKernel, SplineGenerator, generator_basis, transform_S


def covariate_basis(Kstar: int = 5) -> BSplineBasis:
    return build_basis(0.0, 1.0, Kstar)


def _as_rows(x, p: int) -> np.ndarray:
    """Covariates as an ``(m, p)`` array; a 1-d input is one point unless ``p == 1``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if p == 1 else x[None, :]
    if x.shape[1] != p:
        raise ValueError(f"expected {p} covariate(s), got {x.shape[1]}")
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise ValueError("covariates must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class AdditiveParams:
    """``gamma`` of length ``K`` and one ``K*`` block of ``beta`` per covariate."""

    gamma: np.ndarray
    beta: np.ndarray  # (p, K*)
    s_basis: BSplineBasis
    x_basis: BSplineBasis

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def n_free(self) -> int:
        """Free parameters once each covariate block is centred: ``K + p (K* - 1)``."""
        return self.gamma.size + self.p * (self.beta.shape[1] - 1)

    def coefficients(self, x) -> np.ndarray:
        """``theta_k(x)`` for each row of ``x``; shape ``(m, K)``."""
        x = _as_rows(x, self.p)
        shift = np.zeros(x.shape[0])
        for j in range(self.p):
            shift += self.x_basis.evaluate(x[:, j]) @ self.beta[j]
        return self.gamma[None, :] + shift[:, None]

    def kernel(self, x) -> SKernel:
        return SKernel(self.s_basis, self.coefficients(x) ** 2)

    def centered_beta(self) -> np.ndarray:
        return self.beta - self.beta.mean(axis=1, keepdims=True)


@dataclass(frozen=True)
class FlexPowerParams:
    """Reference spline generator with covariate-driven interior/exterior powers."""

    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    s_basis: BSplineBasis
    x_basis: BSplineBasis

    p = 1

    def powers(self, x):
        """``alpha(x) in (0, 1]`` and ``beta(x) >= 1`` for each row of ``x``."""
        bx = self.x_basis.evaluate(_as_rows(x, 1)[:, 0])
        return 1.0 / (1.0 + (bx @ self.alpha) ** 2), 1.0 + (bx @ self.beta) ** 2

    def coefficients(self, x):
        a, b = self.powers(x)
        return a, b, self.theta

    def reference(self) -> SplineGenerator:
        return SplineGenerator(self.theta, basis=self.s_basis)

    def kernel(self, x) -> SKernel:
        a, b = self.powers(x)
        return SKernel(self.s_basis, self.theta**2, shift=np.log(a), scale=b)


@dataclass(frozen=True)
class TensorParams:
    """Full ``K x K*`` coefficient matrix."""

    Theta: np.ndarray
    s_basis: BSplineBasis
    x_basis: BSplineBasis

    p = 1

    def coefficients(self, x) -> np.ndarray:
        bx = self.x_basis.evaluate(_as_rows(x, 1)[:, 0])
        return bx @ self.Theta.T

    def kernel(self, x) -> SKernel:
        return SKernel(self.s_basis, self.coefficients(x) ** 2)


ConditionalParams = AdditiveParams | FlexPowerParams | TensorParams


def additive_params(gamma, beta, epsilon: float = 1e-6) -> AdditiveParams:
    gamma = np.asarray(gamma, dtype=float)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    return AdditiveParams(gamma, beta, generator_basis(gamma.size, epsilon), covariate_basis(beta.shape[1]))


def flexpower_params(theta, alpha, beta, epsilon: float = 1e-6) -> FlexPowerParams:
    theta, alpha, beta = (np.asarray(a, dtype=float) for a in (theta, alpha, beta))
    if alpha.shape != beta.shape:
        raise ValueError("alpha and beta need the same number of coefficients")
    return FlexPowerParams(theta, alpha, beta, generator_basis(theta.size, epsilon), covariate_basis(alpha.size))


def tensor_params(Theta, epsilon: float = 1e-6) -> TensorParams:
    Theta = np.asarray(Theta, dtype=float)
    K, Kstar = Theta.shape
    return TensorParams(Theta, generator_basis(K, epsilon), covariate_basis(Kstar))


def conditional_coefficients(cp: ConditionalParams, x):
    return cp.coefficients(x)


def eval_conditional_generator(cp: ConditionalParams, u, x) -> GeneratorValues:
    """Generator quantities at ``u`` given covariate(s) ``x``.

    With a single covariate point ``u`` may have any shape; with ``m`` points
    ``u`` must have length ``m`` (one ``u`` per covariate row).
    """
    kern = cp.kernel(x)
    u = np.asarray(u, dtype=float)
    s = transform_S(u)
    g, g1, g2 = kern(s)
    phi = np.exp(-g)
    ulog = u * np.log(u)
    lam = ulog / g1
    lam_prime = 1.0 - kern.one_minus_lam_prime(s, g1, g2)
    return GeneratorValues(phi, g1 * phi / ulog, lam, lam_prime)


def conditional_tau(cp: ConditionalParams, x) -> np.ndarray:
    """Kendall's tau at each covariate row of ``x``."""
    return cp.kernel(x).tau()


def tensor_penalty(Theta, kappa1: float, kappa2: float, r1: int = 3, r2: int = 2) -> float:
    """``vec(Theta)' (kappa1 I (x) P1 + kappa2 P2 (x) I) vec(Theta)``."""
    Theta = np.asarray(Theta, dtype=float)
    if Theta.ndim != 2:
        raise ValueError("Theta must be a K x K* matrix")
    K, Kstar = Theta.shape
    P1 = difference_penalty(K, r1).P
    P2 = difference_penalty(Kstar, r2).P
    vec = Theta.reshape(-1, order="F")
    M = kappa1 * np.kron(np.eye(Kstar), P1) + kappa2 * np.kron(P2, np.eye(K))
    return float(vec @ M @ vec)
