"""Copula log-likelihood, penalty priors and log marginal posteriors.

The likelihood uses the ``lambda`` form of the Archimedean density

    c(u, v) = -(1 - lambda'(C)) lambda(C) / (lambda(u) lambda(v))
              * phi(u) phi(v) / (phi(u) + phi(v))**2,

evaluated factor by factor in log space, with ``C = phi^{-1}(phi(u) + phi(v))``
from the vectorized Newton solver seeded at ``u v``.  The penalty
parameters carry gamma priors and are integrated out, which leaves one
``(b + c'Pc / 2) ** -(a + rank(P) / 2)`` factor per coefficient block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import PenaltyMatrix, difference_penalty
from .conditional import (
    AdditiveParams,
    FlexPowerParams,
    TensorParams,
    covariate_basis,
)
from .data import ObservationSet
from .generator import EPSILON, InversionError, SKernel, SplineGenerator, generator_basis

log = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300


class DensityError(FloatingPointError):
    """The copula density was non-positive at more than one observation."""

    def __init__(self, message, indices):
        super().__init__(message)
        self.indices = indices


@dataclass(frozen=True)
class BlockPrior:
    """Gamma(a, b) prior on the penalty of one block, plus its penalty shape."""

    a: float = 1.0
    b: float = 1.0
    order: int = 3
    ridge: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("gamma hyperparameters must be positive")


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    prior: BlockPrior
    penalty: PenaltyMatrix = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "penalty", difference_penalty(self.size, self.prior.order, self.prior.ridge))

    def log_prior(self, coef) -> np.ndarray:
        pr = self.prior
        return -(pr.a + 0.5 * self.penalty.rank) * np.log(pr.b + 0.5 * self.penalty.quad(coef))


# -- density ------------------------------------------------------------------


def log_density_terms(kernel: SKernel, su, sv):
    """Per-observation log copula density and the mask of floored entries."""
    gu, g1u, _ = kernel(su, derivatives=1)
    gv, g1v, _ = kernel(sv, derivatives=1)
    lse = np.logaddexp(-gu, -gv)  # log(phi(u) + phi(v))
    s0 = -np.log(np.exp(-su) + np.exp(-sv))
    sc, _ = kernel.solve(-lse, s0)
    _, g1c, g2c = kernel(sc)
    oml = kernel.one_minus_lam_prime(sc, g1c, g2c)
    flagged = ~(oml > 0)
    oml = np.where(flagged, DENSITY_FLOOR, oml)
    terms = (
        np.log(oml)
        + kernel.log_neg_lam(sc, g1c)
        - kernel.log_neg_lam(su, g1u)
        - kernel.log_neg_lam(sv, g1v)
        - gu
        - gv
        - 2.0 * lse
    )
    return terms, flagged


def kernel_log_likelihood(kernel: SKernel, su, sv) -> float:
    terms, flagged = log_density_terms(kernel, su, sv)
    nflag = int(flagged.sum())
    if nflag > 1:
        raise DensityError(f"non-positive copula density at {nflag} observations", np.flatnonzero(flagged))
    if nflag == 1:
        log.debug("density floored at observation %d", int(np.flatnonzero(flagged)[0]))
    return float(terms.sum())


# -- models -------------------------------------------------------------------


class CopulaModel:
    """A spline copula model: parameter packing, kernel construction, priors."""

    kind: str = ""
    blocks: list[Block]

    @property
    def n_params(self) -> int:
        return sum(b.size for b in self.blocks)

    def block_slices(self) -> list[slice]:
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.size))
            start += b.size
        return out

    def split(self, params) -> list[np.ndarray]:
        params = np.asarray(params, dtype=float)
        if params.shape[-1] != self.n_params:
            raise ValueError(f"{self.kind} model expects {self.n_params} parameters, got {params.shape[-1]}")
        return [params[..., sl] for sl in self.block_slices()]

    def kernel(self, params, data: ObservationSet) -> SKernel:
        raise NotImplementedError

    def log_likelihood(self, params, data: ObservationSet) -> float:
        return kernel_log_likelihood(self.kernel(params, data), data.su, data.sv)

    def log_prior(self, params) -> float:
        return float(sum(b.log_prior(c) for b, c in zip(self.blocks, self.split(params))))

    def log_posterior(self, params, data: ObservationSet) -> float:
        return self.log_likelihood(params, data) + self.log_prior(params)

    def objective(self, data: ObservationSet):
        """``params -> log posterior`` with failures mapped to ``-inf``."""

        def f(params):
            try:
                return self.log_posterior(params, data)
            except (DensityError, InversionError, FloatingPointError):
                return -np.inf

        return f

    def null_directions(self) -> np.ndarray:
        """Orthonormal rows spanning directions the likelihood is exactly flat in."""
        return np.zeros((0, self.n_params))

    def hessian(self, data: ObservationSet, rel_step: float = 1e-4):
        """``params -> Hessian`` of the log posterior, likelihood and prior done apart.

        The likelihood part is projected off :meth:`null_directions`, where its
        curvature is exactly zero but finite differences only see noise; the
        prior part is smooth and cheap, so its differences are clean.
        """
        from .inference import numerical_hessian

        N = self.null_directions()
        P = np.eye(self.n_params) - N.T @ N

        def loglik(params):
            try:
                return self.log_likelihood(params, data)
            except (DensityError, InversionError, FloatingPointError):
                return -np.inf

        def H(params):
            Hl = numerical_hessian(loglik, params, rel_step)
            if N.size:
                Hl = P @ Hl @ P
                Hl = 0.5 * (Hl + Hl.T)
            return Hl + numerical_hessian(self.log_prior, params, rel_step)

        return H

    def batch_objective(self, data: ObservationSet):
        """``(m, d)`` draws -> ``(m,)`` log posteriors, ``-inf`` where evaluation fails."""
        f = self.objective(data)
        return lambda draws: np.array([f(p) for p in np.atleast_2d(draws)])

    def initial(self, data: ObservationSet) -> np.ndarray:
        raise NotImplementedError

    def tau(self, params, x=None) -> np.ndarray:
        raise NotImplementedError

    def lam(self, params, u, x=None) -> np.ndarray:
        raise NotImplementedError


def _gumbel_start(data: ObservationSet) -> float:
    """Coefficient level matching the sample Kendall's tau under a Gumbel fit."""
    from scipy.stats import kendalltau

    tau = kendalltau(data.u, data.v)[0]
    tau = float(np.clip(np.nan_to_num(tau), 0.02, 0.95))
    return float(np.sqrt(1.0 / (1.0 - tau) - 1.0))


class UnconditionalModel(CopulaModel):
    kind = "unconditional"

    def __init__(self, K: int = 11, epsilon: float = EPSILON, prior: BlockPrior = BlockPrior()):
        self.K = K
        self.epsilon = epsilon
        self.s_basis = generator_basis(K, epsilon)
        self.blocks = [Block("theta", K, prior)]

    def generator(self, params) -> SplineGenerator:
        return SplineGenerator(np.asarray(params, dtype=float), basis=self.s_basis)

    def kernel(self, params, data=None) -> SKernel:
        return SKernel(self.s_basis, np.asarray(params, dtype=float) ** 2)

    def batch_objective(self, data: ObservationSet, chunk: int = 32):
        single = self.objective(data)

        def f(draws):
            draws = np.atleast_2d(np.asarray(draws, dtype=float))
            out = np.empty(draws.shape[0])
            for start in range(0, draws.shape[0], chunk):
                rows = draws[start : start + chunk]
                kern = SKernel(self.s_basis, rows**2)
                shape = (rows.shape[0], data.n)
                try:
                    terms, flagged = log_density_terms(
                        kern, np.broadcast_to(data.su, shape), np.broadcast_to(data.sv, shape)
                    )
                except InversionError:
                    out[start : start + rows.shape[0]] = [single(p) for p in rows]
                    continue
                ll = np.where(flagged.sum(axis=1) > 1, -np.inf, terms.sum(axis=1))
                prior = self.blocks[0].log_prior(rows)
                out[start : start + rows.shape[0]] = ll + prior
            return out

        return f

    def initial(self, data):
        return np.full(self.K, _gumbel_start(data))

    def tau(self, params, x=None):
        return self.kernel(params).tau()

    def lam(self, params, u, x=None):
        """``lambda(u)`` for one parameter vector or a ``(M, K)`` batch."""
        from .generator import transform_S

        w = np.atleast_2d(np.asarray(params, dtype=float)) ** 2
        s = transform_S(np.asarray(u, dtype=float))
        g1 = 1.0 + self.s_basis.evaluate(s) @ w.T  # (J, M)
        lam = (np.exp(-np.exp(-s)) * -np.exp(-s))[:, None] / g1
        lam = lam.T
        return lam[0] if np.ndim(params) == 1 else lam


class AdditiveModel(CopulaModel):
    """``theta_k(x) = gamma_k + sum_j beta_j(x_j)`` with ridge-identified covariate blocks."""

    kind = "additive"

    def __init__(
        self,
        K: int = 11,
        Kstar: int = 5,
        p: int = 1,
        epsilon: float = EPSILON,
        gamma_prior: BlockPrior = BlockPrior(),
        beta_prior: BlockPrior = BlockPrior(order=2, ridge=1e-6),
    ):
        self.K, self.Kstar, self.p, self.epsilon = K, Kstar, p, epsilon
        self.s_basis = generator_basis(K, epsilon)
        self.x_basis = covariate_basis(Kstar)
        self.blocks = [Block("gamma", K, gamma_prior)] + [Block(f"beta{j + 1}", Kstar, beta_prior) for j in range(p)]

    def params(self, params) -> AdditiveParams:
        parts = self.split(params)
        return AdditiveParams(parts[0], np.array(parts[1:]), self.s_basis, self.x_basis)

    def kernel(self, params, data: ObservationSet) -> SKernel:
        return self.params(params).kernel(data.x)

    def null_directions(self):
        # the covariate basis sums to one, so shifting gamma by -c and one
        # beta_j by +c leaves every theta_k(x) unchanged
        V = np.zeros((self.p, self.n_params))
        V[:, : self.K] = -1.0
        for j in range(self.p):
            V[j, self.K + j * self.Kstar : self.K + (j + 1) * self.Kstar] = 1.0
        Q, _ = np.linalg.qr(V.T)
        return Q.T

    def initial(self, data):
        return np.concatenate([np.full(self.K, _gumbel_start(data)), np.zeros(self.p * self.Kstar)])

    def tau(self, params, x):
        return self.params(params).kernel(x).tau()


class FlexPowerModel(CopulaModel):
    """Reference spline generator with spline-driven interior and exterior powers."""

    kind = "flexpower"

    def __init__(
        self,
        K: int = 11,
        Kstar: int = 5,
        epsilon: float = EPSILON,
        theta_prior: BlockPrior = BlockPrior(),
        alpha_prior: BlockPrior = BlockPrior(order=2),
        beta_prior: BlockPrior = BlockPrior(order=2),
    ):
        self.K, self.Kstar, self.p, self.epsilon = K, Kstar, 1, epsilon
        self.s_basis = generator_basis(K, epsilon)
        self.x_basis = covariate_basis(Kstar)
        self.blocks = [Block("theta", K, theta_prior), Block("alpha", Kstar, alpha_prior), Block("beta", Kstar, beta_prior)]

    def params(self, params) -> FlexPowerParams:
        th, al, be = self.split(params)
        return FlexPowerParams(th, al, be, self.s_basis, self.x_basis)

    def kernel(self, params, data: ObservationSet) -> SKernel:
        return self.params(params).kernel(data.x)

    def initial(self, data):
        # small nonzero powers: the posterior is flat in their sign at zero
        return np.concatenate([np.full(self.K, _gumbel_start(data)), np.full(self.Kstar, 0.3), np.full(self.Kstar, 0.3)])

    def tau(self, params, x):
        return self.params(params).kernel(x).tau()


class TensorModel(CopulaModel):
    """``K x K*`` coefficient surface with s- and x-direction difference penalties.

    The two penalties get separate gamma priors, and each contributes its own
    marginal factor with ranks ``K*(K - r1)`` and ``K(K* - r2)``.
    """

    kind = "tensor"

    def __init__(
        self,
        K: int = 11,
        Kstar: int = 5,
        epsilon: float = EPSILON,
        s_prior: BlockPrior = BlockPrior(order=3),
        x_prior: BlockPrior = BlockPrior(order=2),
    ):
        self.K, self.Kstar, self.p, self.epsilon = K, Kstar, 1, epsilon
        self.s_basis = generator_basis(K, epsilon)
        self.x_basis = covariate_basis(Kstar)
        self.s_prior, self.x_prior = s_prior, x_prior
        self.blocks = [Block("Theta", K * Kstar, BlockPrior(s_prior.a, s_prior.b, order=1))]
        P1 = difference_penalty(K, s_prior.order, s_prior.ridge)
        P2 = difference_penalty(Kstar, x_prior.order, x_prior.ridge)
        self._pen_s = np.kron(np.eye(Kstar), P1.P)
        self._pen_x = np.kron(P2.P, np.eye(K))
        self._rank_s = Kstar * P1.rank
        self._rank_x = K * P2.rank

    def matrix(self, params) -> np.ndarray:
        return np.asarray(params, dtype=float).reshape(self.K, self.Kstar, order="F")

    def params(self, params) -> TensorParams:
        return TensorParams(self.matrix(params), self.s_basis, self.x_basis)

    def kernel(self, params, data: ObservationSet) -> SKernel:
        return self.params(params).kernel(data.x)

    def log_prior(self, params) -> float:
        v = np.asarray(params, dtype=float)
        s, x = self.s_prior, self.x_prior
        return float(
            -(s.a + 0.5 * self._rank_s) * np.log(s.b + 0.5 * v @ self._pen_s @ v)
            - (x.a + 0.5 * self._rank_x) * np.log(x.b + 0.5 * v @ self._pen_x @ v)
        )

    def initial(self, data):
        return np.full(self.K * self.Kstar, _gumbel_start(data))

    def tau(self, params, x):
        return self.params(params).kernel(x).tau()


MODELS = {
    "unconditional": UnconditionalModel,
    "additive": AdditiveModel,
    "flexpower": FlexPowerModel,
    "tensor": TensorModel,
}


@dataclass(frozen=True)
class PriorConfig:
    """Gamma hyperparameters and penalty shapes for the coefficient blocks."""

    a: float = 1.0
    b: float = 1.0
    order: int = 3
    covariate_order: int = 2
    ridge: float = 1e-6

    def generator_block(self) -> BlockPrior:
        return BlockPrior(self.a, self.b, self.order)

    def covariate_block(self, ridge: bool) -> BlockPrior:
        return BlockPrior(self.a, self.b, self.covariate_order, self.ridge if ridge else 0.0)


def build_model(kind: str, K: int = 11, Kstar: int = 5, p: int = 1, epsilon: float = EPSILON, priors: PriorConfig = PriorConfig()) -> CopulaModel:
    if kind == "unconditional":
        return UnconditionalModel(K, epsilon, priors.generator_block())
    if kind == "additive":
        return AdditiveModel(K, Kstar, p, epsilon, priors.generator_block(), priors.covariate_block(ridge=True))
    if kind == "flexpower":
        cb = priors.covariate_block(ridge=False)
        return FlexPowerModel(K, Kstar, epsilon, priors.generator_block(), cb, cb)
    if kind == "tensor":
        return TensorModel(K, Kstar, epsilon, priors.generator_block(), priors.covariate_block(ridge=False))
    raise ValueError(f"unknown model kind {kind!r}")


def log_likelihood(model: CopulaModel, params, data: ObservationSet) -> float:
    return model.log_likelihood(params, data)


def log_marginal_posterior(model_kind: str, params, data: ObservationSet, priors: PriorConfig = PriorConfig(), **model_kw) -> float:
    p = data.p if data.x is not None else 1
    model = build_model(model_kind, p=p, priors=priors, **model_kw)
    return model.log_posterior(params, data)
