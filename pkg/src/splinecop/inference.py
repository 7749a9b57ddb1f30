"""MAP fitting, Student-t importance sampling and adaptive block Metropolis."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize, special

log = logging.getLogger(__name__)

PD_FLOOR = 1e-8


@dataclass
class FitResult:
    """MAP estimate with the Hessian of the log posterior there.

    ``hessian`` is the (possibly regularized) matrix used downstream;
    ``raw_hessian`` is the finite-difference one.  A regularized Hessian
    always comes with ``converged=False``.
    """

    map: np.ndarray
    hessian: np.ndarray
    log_post_at_map: float
    converged: bool
    iterations: int
    grad_norm: float = np.nan
    raw_hessian: np.ndarray | None = None
    message: str = ""

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(-self.hessian)


@dataclass
class PosteriorDraws:
    draws: np.ndarray
    kind: str
    seed: int | None = None
    weights: np.ndarray | None = None
    acceptance: np.ndarray | None = None
    log_post: np.ndarray | None = None
    blocks: list = field(default_factory=list)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[0] < 1:
            raise ValueError("need at least one draw")
        if self.kind not in ("importance", "metropolis"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.M,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
                raise ValueError("weights must be nonnegative, one per draw, and sum to 1")
            self.weights = w

    @property
    def M(self) -> int:
        return self.draws.shape[0]

    @property
    def d(self) -> int:
        return self.draws.shape[1]

    @property
    def ess(self) -> float:
        if self.weights is None:
            return float(self.M)
        return float(1.0 / np.sum(self.weights**2))

    def mean(self) -> np.ndarray:
        if self.weights is None:
            return self.draws.mean(axis=0)
        return self.weights @ self.draws


# -- finite differences --------------------------------------------------------


def numerical_gradient(f: Callable, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


def numerical_hessian(f: Callable, x, rel_step: float = 1e-4) -> np.ndarray:
    """Central second differences; the result is symmetric by construction."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = rel_step * (1.0 + np.abs(x))
    f0 = f(x)
    H = np.empty((d, d))

    def at(i, si, j=None, sj=0.0):
        y = x.copy()
        y[i] += si
        if j is not None:
            y[j] += sj
        return f(y)

    for i in range(d):
        H[i, i] = (at(i, h[i]) - 2.0 * f0 + at(i, -h[i])) / h[i] ** 2
        for j in range(i):
            val = (
                at(i, h[i], j, h[j])
                - at(i, h[i], j, -h[j])
                - at(i, -h[i], j, h[j])
                + at(i, -h[i], j, -h[j])
            ) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    return H


def regularize_negative_hessian(H, floor: float = PD_FLOOR):
    """Smallest diagonal shift making ``-H`` have minimum eigenvalue ``>= floor``."""
    H = 0.5 * (H + H.T)
    lam_min = np.linalg.eigvalsh(-H)[0]
    if lam_min >= floor:
        return H, False
    return H - (floor - lam_min) * np.eye(H.shape[0]), True


# -- MAP -------------------------------------------------------------------------


def map_estimate(
    logpost: Callable,
    init,
    tol: float = 1e-6,
    maxiter: int = 500,
    grad_step: float = 1e-6,
    hess_step: float = 1e-4,
    newton_steps: int = 5,
    hessian: Callable | None = None,
) -> FitResult:
    """Maximize ``logpost`` by BFGS on numerical gradients, then Newton-polish.

    The Newton polish uses the finite-difference Hessian; it is what drives
    the gradient below ``tol`` when the line search stalls on rounding noise.
    ``hessian(x)`` replaces the plain finite-difference Hessian when the
    caller knows more structure (see ``CopulaModel.hessian``).
    """
    if hessian is None:
        hessian = lambda y: numerical_hessian(logpost, y, hess_step)
    x0 = np.asarray(init, dtype=float)
    f0 = logpost(x0)
    if not np.isfinite(f0):
        raise ValueError("log posterior is not finite at the initial point")

    def neg(x):
        v = logpost(x)
        return -v if np.isfinite(v) else np.inf

    def neg_grad(x):
        return -numerical_gradient(logpost, x, grad_step)

    with np.errstate(invalid="ignore", over="ignore"):
        res = optimize.minimize(
            neg, x0, jac=neg_grad, method="BFGS", options=dict(gtol=tol, norm=np.inf, maxiter=maxiter)
        )
    x = res.x if np.isfinite(res.fun) and res.fun <= -f0 else x0
    fx = logpost(x)
    iterations = int(res.nit)
    g = numerical_gradient(logpost, x, grad_step)
    H = hessian(x)
    for k in range(newton_steps):
        gnorm = np.max(np.abs(g))
        # one refinement step is tried even below tol: it is exact for quadratics
        if gnorm <= tol and k > 0:
            break
        # near the optimum the predicted gain drops below the rounding noise
        # of the objective, so a step may also be taken if it lowers the gradient
        ftol = 1e-10 * (1.0 + abs(fx))
        Hr, _ = regularize_negative_hessian(H)
        step = np.linalg.solve(-Hr, g)
        t = 1.0
        while t > 1e-4:
            cand = x + t * step
            fc = logpost(cand)
            if np.isfinite(fc) and fc >= fx - ftol:
                gc = numerical_gradient(logpost, cand, grad_step)
                if fc > fx + ftol or np.max(np.abs(gc)) < gnorm:
                    break
            t *= 0.5
        else:
            break
        x, fx, g = cand, fc, gc
        iterations += 1
        if gnorm <= tol:
            break  # the step was tiny; the Hessian is still current
        H = hessian(x)
    gnorm = float(np.max(np.abs(g)))
    Hreg, shifted = regularize_negative_hessian(H)
    converged = gnorm <= tol and not shifted
    msg = res.message if isinstance(res.message, str) else str(res.message)
    if shifted:
        msg = "negative Hessian not positive definite; diagonal shift applied"
    return FitResult(x, Hreg, float(fx), bool(converged), iterations, gnorm, 0.5 * (H + H.T), msg)


# -- importance sampling -----------------------------------------------------------


def _t_logpdf(x, loc, L, dof):
    """Multivariate Student log density with scale ``L L'``."""
    d = L.shape[0]
    y = linalg.solve_triangular(L, (x - loc).T, lower=True)
    q = np.sum(y**2, axis=0)
    const = special.gammaln(0.5 * (dof + d)) - special.gammaln(0.5 * dof) - 0.5 * d * np.log(dof * np.pi)
    return const - np.sum(np.log(np.diag(L))) - 0.5 * (dof + d) * np.log1p(q / dof)


def importance_sample(
    logpost: Callable,
    fit: FitResult,
    M: int = 2000,
    dof: float = 4.0,
    seed=None,
    batch_logpost: Callable | None = None,
) -> PosteriorDraws:
    """Self-normalized importance sampling from ``t_dof(map, (-H)^{-1})``.

    ``batch_logpost`` (draws ``(m, d)`` -> ``(m,)``) replaces per-draw calls
    when the model supports vectorized evaluation.
    """
    if M < 1:
        raise ValueError("M must be positive")
    cov = np.linalg.inv(-fit.hessian)
    cov = 0.5 * (cov + cov.T)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("proposal covariance is not positive definite") from exc
    # sampled and evaluated through the Cholesky factor: scipy's multivariate_t
    # rejects the ill-conditioned covariances of ridge-identified models
    d = L.shape[0]
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((M, d))
    chi = rng.chisquare(dof, M)
    draws = fit.map + (z @ L.T) / np.sqrt(chi / dof)[:, None]
    lq = _t_logpdf(draws, fit.map, L, dof)
    if batch_logpost is not None:
        lp = np.asarray(batch_logpost(draws), dtype=float)
    else:
        lp = np.array([logpost(th) for th in draws])
    lw = np.where(np.isfinite(lp), lp - lq, -np.inf)
    if not np.any(np.isfinite(lw)):
        raise FloatingPointError("every importance draw has zero posterior density")
    w = np.exp(lw - lw.max())
    w /= w.sum()
    return PosteriorDraws(draws, "importance", seed, weights=w, log_post=lp)


# -- adaptive block Metropolis --------------------------------------------------------


def metropolis_accept(delta: float, u: float) -> bool:
    """Accept with probability ``min(1, exp(delta))`` given ``u ~ U(0, 1)``."""
    if np.isnan(delta):
        return False
    return bool(u <= np.exp(min(delta, 0.0)))


def _block_indices(blocks, d) -> list[np.ndarray]:
    idx = [np.asarray(b, dtype=int) for b in blocks]
    flat = np.sort(np.concatenate(idx)) if idx else np.array([], int)
    if not np.array_equal(flat, np.arange(d)):
        raise ValueError("blocks must partition the coordinates")
    return idx


def adaptive_block_metropolis(
    logpost: Callable,
    blocks: Sequence,
    fit: FitResult,
    M: int = 30000,
    burnin: int = 1000,
    seed=None,
    target_accept: float = 0.20,
    adapt_every: int = 100,
    adapt_rate: float = 1.0,
) -> PosteriorDraws:
    """Sequential block random-walk Metropolis started at the MAP.

    Each block has a Gaussian proposal ``N(current, s_b * Sigma_b)``.
    ``Sigma_b`` starts diagonal with the conditional variances
    ``1 / (-H)_ii`` of the block's coordinates and is replaced at ``burnin // 2`` by the empirical covariance of the block's
    chain; ``log s_b`` moves by ``adapt_rate * (acc - target)`` every
    ``adapt_every`` iterations.  Both stop changing after the burn-in.
    """
    x = np.array(fit.map, dtype=float)
    d = x.size
    idx = _block_indices(blocks, d)
    lp = logpost(x)
    if not np.isfinite(lp):
        raise ValueError("log posterior is not finite at the starting point")
    rng = np.random.default_rng(seed)
    # per-coordinate conditional variances 1 / (-H)_ii; marginal variances
    # explode along directions confounded across blocks (gamma vs beta)
    prec = np.diag(-fit.hessian)
    if np.any(prec <= 0):
        raise ValueError("negative Hessian has a non-positive diagonal")
    chol = [np.diag(1.0 / np.sqrt(prec[b])) for b in idx]
    log_scale = np.array([np.log(2.38**2 / b.size) for b in idx])
    total = burnin + M
    chain = np.empty((total, d))
    lps = np.empty(total)
    window = np.zeros(len(idx))
    moves = np.zeros(len(idx))
    accepted = np.zeros(len(idx))
    for it in range(total):
        for k, b in enumerate(idx):
            prop = x.copy()
            prop[b] += np.exp(0.5 * log_scale[k]) * (chol[k] @ rng.standard_normal(b.size))
            lp_prop = logpost(prop)
            delta = lp_prop - lp if np.isfinite(lp_prop) else -np.inf
            if metropolis_accept(delta, rng.uniform()):
                x, lp = prop, lp_prop
                if it < burnin:
                    window[k] += 1
                    moves[k] += 1
                else:
                    accepted[k] += 1
        chain[it] = x
        lps[it] = lp
        if it < burnin:
            if (it + 1) % adapt_every == 0:
                log_scale += adapt_rate * (window / adapt_every - target_accept)
                window[:] = 0
            if it + 1 == burnin // 2 and it >= 1:
                for k, b in enumerate(idx):
                    if moves[k] <= b.size:
                        log.warning("block %d moved too rarely to refresh its covariance", k)
                        continue
                    emp = np.atleast_2d(np.cov(chain[: it + 1, b], rowvar=False))
                    emp += 1e-12 * np.eye(b.size)
                    try:
                        chol[k] = np.linalg.cholesky(emp)
                    except np.linalg.LinAlgError:
                        log.warning("empirical covariance of block %d not PD; keeping previous", k)
    acc = accepted / M if M else np.zeros(len(idx))
    for k, a in enumerate(acc):
        if a == 0:
            log.warning("block %d rejected every post-burnin proposal", k)
    return PosteriorDraws(chain[burnin:], "metropolis", seed, acceptance=acc, log_post=lps[burnin:], blocks=[b.tolist() for b in idx])
