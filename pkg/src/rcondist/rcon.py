"""RCON parameterization: theta <-> K, cone membership, sufficient
statistics, the cumulant function and data simulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .graph import ColouredGraph


@dataclass(frozen=True, eq=False)
class RconSpec:
    """Parameter layout of an RCON model.

    Each class ``r`` owns a set of upper-triangular positions
    ``(rows[m], cols[m])`` with ``cls[m] == r``. ``sizes[r]`` counts the
    matrix entries of the class, both triangles included.
    """

    p: int
    n_vertex_classes: int
    rows: np.ndarray
    cols: np.ndarray
    cls: np.ndarray
    sizes: np.ndarray
    pos_cls: np.ndarray = field(repr=False)

    @property
    def n_params(self) -> int:
        return len(self.sizes)

    @property
    def full_entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, cols, class) for every nonzero entry, both triangles."""
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        k = np.concatenate([self.cls, self.cls[off]])
        return r, c, k

    def deltas(self) -> np.ndarray:
        """Dense indicator matrices, shape ``(n_params, p, p)``."""
        out = np.zeros((self.n_params, self.p, self.p))
        r, c, k = self.full_entries
        out[k, r, c] = 1.0
        return out

    def incidence(self) -> np.ndarray:
        """Class-by-entry 0/1 matrix over :attr:`full_entries`."""
        _, _, k = self.full_entries
        m = np.zeros((self.n_params, len(k)))
        m[k, np.arange(len(k))] = 1.0
        return m


def build_spec(g: ColouredGraph) -> RconSpec:
    g.check()
    T = g.n_vertex_classes
    rows, cols, cls = [], [], []
    for k, members in enumerate(g.vertex_classes):
        for v in sorted(members):
            rows.append(v); cols.append(v); cls.append(k)
    for k, members in enumerate(g.edge_classes):
        for a, b in sorted(members):
            rows.append(a); cols.append(b); cls.append(T + k)
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    cls = np.array(cls, dtype=np.int64)
    sizes = np.bincount(cls, weights=np.where(rows == cols, 1.0, 2.0), minlength=g.n_classes)
    pos = -np.ones((g.p, g.p), dtype=np.int64)
    pos[rows, cols] = cls
    pos[cols, rows] = cls
    return RconSpec(g.p, T, rows, cols, cls, sizes.astype(np.int64), pos)


def k_of_theta(spec: RconSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({spec.n_params},)")
    K = np.zeros((spec.p, spec.p))
    vals = theta[spec.cls]
    K[spec.rows, spec.cols] = vals
    K[spec.cols, spec.rows] = vals
    return K


class ThetaOfK(NamedTuple):
    theta: np.ndarray
    consistent: bool
    max_spread: float


def theta_of_k(spec: RconSpec, K, tol: float = 1e-9) -> ThetaOfK:
    """Class averages ``tr(delta_r K) / tau_r``.

    ``consistent`` is False when entries within a class differ by more
    than ``tol``.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (spec.p, spec.p):
        raise DimensionMismatch(f"K has shape {K.shape}, expected ({spec.p}, {spec.p})")
    r, c, k = spec.full_entries
    vals = K[r, c]
    theta = np.bincount(k, weights=vals, minlength=spec.n_params) / spec.sizes
    hi = np.full(spec.n_params, -np.inf)
    lo = np.full(spec.n_params, np.inf)
    np.maximum.at(hi, k, vals)
    np.minimum.at(lo, k, vals)
    spread = float(np.max(hi - lo)) if spec.n_params else 0.0
    return ThetaOfK(theta, spread <= tol, spread)


@dataclass
class ConeReport:
    ok: bool
    zero_pattern: bool
    colour: bool
    positive_definite: bool
    min_eigenvalue: float
    violations: list[str]


def cone_check(spec: RconSpec, K, tol: float = 1e-9) -> ConeReport:
    K = np.asarray(K, dtype=float)
    violations = []
    off = spec.pos_cls < 0
    np.fill_diagonal(off, False)
    zero_ok = bool(np.all(np.abs(K[off]) <= tol))
    if not zero_ok:
        violations.append("ZeroPattern")
    colour_ok = theta_of_k(spec, K, tol).consistent
    if not colour_ok:
        violations.append("ColourSpread")
    lam = float(np.linalg.eigvalsh((K + K.T) / 2)[0])
    pd_ok = lam > tol
    if not pd_ok:
        violations.append("NotPositiveDefinite")
    return ConeReport(zero_ok and colour_ok and pd_ok, zero_ok, colour_ok, pd_ok, lam, violations)


def chol_logdet(K) -> float:
    """log|K| via Cholesky; raises NotPositiveDefinite on failure."""
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def inv_pd(K) -> np.ndarray:
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


@dataclass
class SampleStats:
    n: int
    scatter: np.ndarray
    ybar: np.ndarray


def class_traces(spec: RconSpec, M) -> np.ndarray:
    """``tr(delta_r M)`` for every class of a symmetric matrix ``M``."""
    r, c, k = spec.full_entries
    return np.bincount(k, weights=np.asarray(M)[r, c], minlength=spec.n_params)


def stats_from_scatter(spec: RconSpec, scatter, n: int) -> SampleStats:
    scatter = np.asarray(scatter, dtype=float)
    if scatter.shape != (spec.p, spec.p):
        raise DimensionMismatch(f"scatter has shape {scatter.shape}, expected ({spec.p}, {spec.p})")
    ybar = -0.5 * class_traces(spec, scatter) / n if n > 0 else np.zeros(spec.n_params)
    return SampleStats(int(n), scatter, ybar)


def suff_stats(spec: RconSpec, X) -> SampleStats:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.p:
        raise DimensionMismatch(f"data has {X.shape[1]} columns, model has p={spec.p}")
    if X.shape[0] < 1:
        raise DimensionMismatch("need at least one observation")
    return stats_from_scatter(spec, X.T @ X, X.shape[0])


def fisher_matrix(spec: RconSpec, sigma) -> np.ndarray:
    """``F_rs = 1/2 tr(delta_r Sigma delta_s Sigma)``."""
    r, c, _ = spec.full_entries
    W = sigma[np.ix_(c, r)] * sigma[np.ix_(r, c)]
    M = spec.incidence()
    return 0.5 * M @ W @ M.T


def cumulant(spec: RconSpec, theta):
    """Return ``(psi, mu, F)`` with ``psi = -1/2 log|K(theta)|``."""
    K = k_of_theta(spec, theta)
    logdet = chol_logdet(K)
    sigma = inv_pd(K)
    mu = -0.5 * class_traces(spec, sigma)
    F = fisher_matrix(spec, sigma)
    return -0.5 * logdet, mu, F


def loglik(spec: RconSpec, theta, stats: SampleStats) -> float:
    """Gaussian log-likelihood up to the ``2*pi`` constant."""
    K = k_of_theta(spec, theta)
    try:
        logdet = chol_logdet(K)
    except NotPositiveDefinite:
        return -np.inf
    return 0.5 * stats.n * logdet - 0.5 * float(np.sum(K * stats.scatter))


def simulate_data(K, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. rows from ``N(0, K^{-1})``.

    Rows are drawn in order from one stream, so the first ``m`` rows for a
    given seed do not depend on ``n``.
    """
    K = np.asarray(K, dtype=float)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("K not positive definite") from None
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((int(n), K.shape[0]))
    # K = L L^T  =>  rows of Z L^{-1} have covariance K^{-1}
    return np.linalg.solve(L.T, Z.T).T


def read_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))


def write_matrix_csv(path, M) -> None:
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")
