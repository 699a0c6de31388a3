"""Asymptotic covariance of the combined estimator for fixed p.

Every local estimate is asymptotically ``theta0_i + F_i^{-1} score_i / n``.
Scores of overlapping local models are correlated; for Gaussian data the
covariance of two quadratic forms is ``Cov(x'Ax, x'Bx) = 2 tr(A S B S)``
(Isserlis), so the joint covariance of all local estimates needs only the
true covariance ``S = K0^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite
from .graph import ColouredGraph, local_model
from .rcon import build_spec, cone_check, cumulant, inv_pd, k_of_theta, theta_of_k
from .distributed import combiner_weights


@dataclass
class AsymptoticCov:
    gbar: np.ndarray
    jac: np.ndarray
    a: np.ndarray
    theta0_local: dict
    offsets: dict


def local_truth(g: ColouredGraph, K0: np.ndarray, i: int, hops: int):
    """(local model, local spec, true local theta) from the exact marginal
    precision ``(Sigma_NN)^{-1}``."""
    lm = local_model(g, i, hops)
    spec = build_spec(lm.local_graph)
    sigma = inv_pd(K0)
    idx = np.array(lm.vertices)
    Ki = inv_pd(sigma[np.ix_(idx, idx)])
    return lm, spec, theta_of_k(spec, Ki).theta


def asymptotic_cov(g: ColouredGraph, theta0, hops: int, combiner_mode: str = "self_normalizing") -> AsymptoticCov:
    spec = build_spec(g)
    K0 = k_of_theta(spec, theta0)
    if not cone_check(spec, K0).ok:
        raise NotPositiveDefinite("theta0 is outside the cone")
    sigma = inv_pd(K0)

    # stack every local parameter's entries in global coordinates
    rows, cols, owner = [], [], []
    offsets, finv_blocks, theta0_local, class_maps = {}, [], {}, {}
    off = 0
    for i in range(g.p):
        lm, lspec, th0 = local_truth(g, K0, i, hops)
        _, _, F = cumulant(lspec, th0)
        finv_blocks.append(np.linalg.inv(F))
        verts = np.array(lm.vertices)
        r, c, k = lspec.full_entries
        rows.append(verts[r]); cols.append(verts[c]); owner.append(off + k)
        offsets[i] = off
        theta0_local[i] = th0
        class_maps[i] = lm.class_map
        off += lspec.n_params
    rows = np.concatenate(rows); cols = np.concatenate(cols); owner = np.concatenate(owner)
    M = np.zeros((off, len(owner)))
    M[owner, np.arange(len(owner))] = 1.0
    W = sigma[np.ix_(cols, rows)] * sigma[np.ix_(rows, cols)]
    # covariance of per-observation scores: 1/2 tr(delta_q S delta_m S)
    C = 0.5 * M @ W @ M.T

    Finv = np.zeros((off, off))
    for i, blk in enumerate(finv_blocks):
        s = offsets[i]
        Finv[s:s + blk.shape[0], s:s + blk.shape[0]] = blk
    gbar = Finv @ C @ Finv
    gbar = 0.5 * (gbar + gbar.T)

    terms, denom = combiner_weights(g, class_maps, combiner_mode)
    jac = np.zeros((g.n_classes, off))
    for k, tk in terms.items():
        for i, r in tk:
            jac[k, offsets[i] + r] += 1.0 / denom[k]
    a = jac @ gbar @ jac.T
    return AsymptoticCov(gbar, jac, 0.5 * (a + a.T), theta0_local, offsets)
