"""Maximum likelihood for RCON models by Fisher scoring."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotPositiveDefinite, RconError
from .rcon import RconSpec, SampleStats, cumulant, k_of_theta, loglik

MAX_HALVINGS = 30


@dataclass
class MleResult:
    theta_hat: np.ndarray
    iterations: int
    converged: bool
    final_gradient_norm: float
    loglik_trace: list = field(default_factory=list, repr=False)


def default_start(spec: RconSpec) -> np.ndarray:
    theta = np.zeros(spec.n_params)
    theta[: spec.n_vertex_classes] = 1.0
    return theta


def fit_mle(spec: RconSpec, stats: SampleStats, theta_init: Optional[np.ndarray] = None,
            tol: float = 1e-8, max_iter: int = 200) -> MleResult:
    """Solve ``mu(theta) = ybar`` by Fisher scoring with step halving.

    A step is halved until ``K(theta)`` stays positive definite and the
    log-likelihood does not decrease. Non-convergence is reported through
    ``converged`` rather than raised.
    """
    theta = default_start(spec) if theta_init is None else np.array(theta_init, dtype=float)
    try:
        _, mu, F = cumulant(spec, theta)
    except NotPositiveDefinite:
        raise RconError("initial theta is outside the cone") from None
    ll = loglik(spec, theta, stats)
    trace = [ll]
    grad = stats.ybar - mu
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    it = 0
    while gnorm > tol and it < max_iter:
        try:
            step = np.linalg.solve(F, grad)
        except np.linalg.LinAlgError:
            raise RconError("singular Fisher information") from None
        # tiny slack: near the optimum rounding can make ll wobble
        slack = 1e-12 * max(1.0, abs(ll))
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + t * step
            ll_new = loglik(spec, cand, stats)
            if ll_new >= ll - slack:
                break
            t *= 0.5
        else:
            break
        theta = cand
        ll = ll_new
        trace.append(ll)
        it += 1
        _, mu, F = cumulant(spec, theta)
        grad = stats.ybar - mu
        gnorm = float(np.max(np.abs(grad)))
    if gnorm <= tol and it > 0:
        # one polishing step; scoring converges quadratically near the optimum
        cand = theta + np.linalg.solve(F, grad)
        try:
            _, mu_c, _ = cumulant(spec, cand)
        except NotPositiveDefinite:
            mu_c = None
        if mu_c is not None:
            g_c = float(np.max(np.abs(stats.ybar - mu_c)))
            if g_c < gnorm:
                theta, gnorm = cand, g_c
                trace.append(loglik(spec, theta, stats))
    return MleResult(theta, it, gnorm <= tol, gnorm, trace)


def mle_k(spec: RconSpec, stats: SampleStats, **kw) -> tuple[np.ndarray, MleResult]:
    res = fit_mle(spec, stats, **kw)
    return k_of_theta(spec, res.theta_hat), res
