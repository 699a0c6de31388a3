"""Metropolis-Hastings sampling from the coloured G-Wishart distribution.

Two samplers target the same density
``|K|^{(delta-2)/2} exp(-tr(K D)/2)`` on the cone of the model:

* ``rw``  - single-coordinate Gaussian random walk on theta;
* ``psi`` - moves on the free elements of ``Psi = Phi Q^{-1}`` where
  ``K = Phi^t Phi`` and ``D^{-1} = Q^t Q``; the remaining elements are
  completed so that every state satisfies the zero and colour constraints.

The rw sampler needs no Jacobian and serves as the reference for the psi
sampler.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as kern
from .errors import NotPositiveDefinite, RconError
from .rcon import RconSpec, SampleStats, chol_logdet, class_traces, k_of_theta

MODES = ("rw", "psi")
CHECK_EVERY = 1000


@dataclass(frozen=True, eq=False)
class CgwParams:
    delta: float
    d_mat: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d_mat, dtype=float))
        object.__setattr__(self, "d_mat", d)
        if not self.delta > 0:
            raise RconError(f"delta must be positive, got {self.delta}")
        if d.shape[0] != d.shape[1] or not np.allclose(d, d.T):
            raise RconError("D must be a symmetric square matrix")
        try:
            np.linalg.cholesky(d)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("D not positive definite") from None

    @classmethod
    def default(cls, p: int, delta: float = 3.0) -> "CgwParams":
        return cls(delta, np.eye(p))


def log_density(spec: RconSpec, theta, params: CgwParams) -> float:
    """Unnormalized log density; ``-inf`` outside the cone."""
    K = k_of_theta(spec, theta)
    try:
        ld = chol_logdet(K)
    except NotPositiveDefinite:
        return -np.inf
    return 0.5 * (params.delta - 2.0) * ld - 0.5 * float(np.sum(K * params.d_mat))


def posterior_params(prior: CgwParams, stats: SampleStats) -> CgwParams:
    if stats.n == 0:
        return prior
    return CgwParams(prior.delta + stats.n, prior.d_mat + stats.scatter)


class _Target:
    """Precomputed arrays shared by both kernels for one (spec, params)."""

    def __init__(self, spec: RconSpec, params: CgwParams):
        if params.d_mat.shape != (spec.p, spec.p):
            raise RconError(f"D is {params.d_mat.shape}, model has p={spec.p}")
        self.spec = spec
        self.params = params
        self.a = 0.5 * (params.delta - 2.0)
        self.c = class_traces(spec, params.d_mat)
        order = np.argsort(spec.cls, kind="stable")
        self.cls_rows = spec.rows[order].copy()
        self.cls_cols = spec.cols[order].copy()
        self.cls_ptr = np.concatenate([[0], np.cumsum(np.bincount(spec.cls, minlength=spec.n_params))]).astype(np.int64)

        # psi layout: first position of each class in row-major order is free
        p = spec.p
        dinv = np.linalg.inv(params.d_mat)
        self.Q = np.linalg.cholesky((dinv + dinv.T) / 2).T.copy()
        self.pos_cls = spec.pos_cls.copy()
        free_idx = -np.ones((p, p), dtype=np.int64)
        seen = set()
        free_pos = []
        for i in range(p):
            for j in range(i, p):
                r = self.pos_cls[i, j]
                if r >= 0 and r not in seen:
                    seen.add(r)
                    free_idx[i, j] = len(free_pos)
                    free_pos.append((i, j))
        self.free_idx = free_idx
        self.free_pos = free_pos
        self.free_row = np.array([i for i, _ in free_pos], dtype=np.int64)
        self.is_diag = np.array([i == j for i, j in free_pos], dtype=np.bool_)
        n_free_off = np.zeros(p)
        for i, j in free_pos:
            if i != j:
                n_free_off[i] += 1
        # chi degrees of freedom; exact Bartlett values for a saturated model
        self.df = np.array([params.delta + n_free_off[i] if i == j else 0.0 for i, j in free_pos])

    def complete(self, z):
        p = self.spec.p
        Psi = np.zeros((p, p))
        Phi = np.zeros((p, p))
        theta = np.zeros(self.spec.n_params)
        jac = np.zeros(p)
        ok = kern.complete(z, self.Q, self.pos_cls, self.free_idx, 0, Psi, Phi, theta, jac)
        return ok, Psi, Phi, theta, jac

    def psi_log_target(self, Phi, theta, jac) -> float:
        return float(kern.psi_log_target(Phi, theta, jac, self.a, self.c))

    def z_of_k(self, K):
        """Free Psi elements of a cone point ``K``."""
        Phi = np.linalg.cholesky(K).T
        Psi = Phi @ np.linalg.inv(self.Q)
        return np.array([Psi[i, j] for i, j in self.free_pos])


@dataclass
class ChainState:
    """Sampler position. ``theta`` is kept in both modes; ``psi`` only in
    psi mode. ``log_target`` is the density in the coordinates being moved
    (theta for rw, free Psi elements including the Jacobian for psi)."""

    mode: str
    theta: np.ndarray
    log_target: float
    step_sizes: np.ndarray
    accept_counts: np.ndarray
    proposal_counts: np.ndarray
    rng: np.random.Generator
    psi: Optional[np.ndarray] = None
    iteration: int = 0
    completion_failures: int = 0
    _target: Optional[_Target] = field(default=None, repr=False)
    _buf: dict = field(default_factory=dict, repr=False)

    @property
    def k_mat(self) -> np.ndarray:
        return k_of_theta(self._target.spec, self.theta)

    def acceptance_rates(self) -> np.ndarray:
        return self.accept_counts / np.maximum(self.proposal_counts, 1)


def _target_for(state: Optional[ChainState], spec, params) -> _Target:
    if state is not None and state._target is not None \
            and state._target.spec is spec and state._target.params is params:
        return state._target
    return _Target(spec, params)


def init_chain(spec: RconSpec, params: CgwParams, mode: str = "psi", seed=0) -> ChainState:
    """Start at ``K = I`` (vertex classes 1, edge classes 0)."""
    if mode not in MODES:
        raise RconError(f"unknown sampler mode {mode!r}")
    tgt = _Target(spec, params)
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.n_params)
    theta[: spec.n_vertex_classes] = 1.0
    m = spec.n_params
    if mode == "rw":
        K = k_of_theta(spec, theta)
        state = ChainState(
            mode, theta, log_density(spec, theta, params), np.full(m, 0.1),
            np.zeros(m, dtype=np.int64), np.zeros(m, dtype=np.int64), rng, _target=tgt,
        )
        state._buf = {"K": K, "L": np.zeros_like(K), "st": np.array([state.log_target, 0.0, 0.0])}
        return state
    z = tgt.z_of_k(np.eye(spec.p))
    ok, Psi, Phi, th, jac = tgt.complete(z)
    assert ok
    steps = np.where(tgt.is_diag, 0.1, 1.0)
    lt = tgt.psi_log_target(Phi, th, jac)
    state = ChainState(
        mode, th, lt, steps, np.zeros(m + 1, dtype=np.int64), np.zeros(m + 1, dtype=np.int64),
        rng, psi=Psi, _target=tgt,
    )
    state._buf = {"z": z, "Phi": Phi, "jac": jac, "st": np.array([lt, 0.0, 0.0])}
    return state


_EMPTY = np.zeros((0, 0))


def rw_step(state: ChainState, spec: RconSpec, params: CgwParams, adapt: bool = False) -> ChainState:
    """One single-coordinate random-walk proposal (coordinates cycled)."""
    if state.mode != "rw":
        raise RconError("rw_step needs a chain started in rw mode")
    tgt = _target_for(state, spec, params)
    b = state._buf
    kern.rw_steps(state.theta, b["K"], b["L"], b["st"], state.step_sizes, state.accept_counts,
                  state.proposal_counts, 1, adapt, state.rng, tgt.a, tgt.c,
                  tgt.cls_ptr, tgt.cls_rows, tgt.cls_cols)
    state.log_target = float(b["st"][0])
    return state


def psi_step(state: ChainState, spec: RconSpec, params: CgwParams, adapt: bool = False) -> ChainState:
    """One psi iteration: a joint proposal of all free elements (normal
    off-diagonals, chi diagonals), then one local move per free element."""
    if state.mode != "psi":
        raise RconError("psi_step needs a chain started in psi mode")
    _run(state, spec, params, 1, adapt, _EMPTY, 0, 1, 0)
    return state


def _run(state, spec, params, n, adapt, draws, offset, thin, iter0) -> int:
    tgt = _target_for(state, spec, params)
    b = state._buf
    if state.mode == "rw":
        k = kern.rw_chain(state.theta, b["K"], b["L"], b["st"], state.step_sizes,
                          state.accept_counts, state.proposal_counts, n, adapt, state.rng,
                          tgt.a, tgt.c, tgt.cls_ptr, tgt.cls_rows, tgt.cls_cols,
                          draws, offset, thin, iter0)
    else:
        k = kern.psi_chain(b["z"], state.psi, b["Phi"], state.theta, b["jac"], b["st"],
                           state.step_sizes, state.accept_counts, state.proposal_counts, n, adapt,
                           state.rng, tgt.a, tgt.c, tgt.Q, tgt.pos_cls, tgt.free_idx,
                           tgt.free_row, tgt.is_diag, tgt.df, draws, offset, thin, iter0)
        state.completion_failures = int(b["st"][2])
    state.log_target = float(b["st"][0])
    state.iteration += n
    return k


def fresh_log_target(state: ChainState, spec: RconSpec, params: CgwParams) -> float:
    """Recompute the log target of the current state from scratch."""
    if state.mode == "rw":
        return log_density(spec, state.theta, params)
    tgt = _target_for(state, spec, params)
    ok, _, Phi, th, jac = tgt.complete(state._buf["z"].copy())
    if not ok:
        return -np.inf
    return tgt.psi_log_target(Phi, th, jac)


def _check_cache(state, spec, params, tol=1e-9):
    fresh = fresh_log_target(state, spec, params)
    if not abs(fresh - state.log_target) <= tol * max(1.0, abs(fresh)):
        raise RuntimeError(f"cached log target {state.log_target} disagrees with {fresh}")


def batch_means_se(draws: np.ndarray) -> np.ndarray:
    """Monte Carlo standard error per column by non-overlapping batch means."""
    n = draws.shape[0]
    if n < 4:
        return np.full(draws.shape[1], np.nan)
    nb = max(2, int(np.sqrt(n)))
    size = n // nb
    means = draws[: nb * size].reshape(nb, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(nb)


@dataclass
class DrawSummary:
    theta_mean: np.ndarray
    k_mean: np.ndarray
    theta_mcse: np.ndarray
    acceptance: np.ndarray
    joint_acceptance: Optional[float]
    n_draws: int
    mode: str
    completion_failures: int = 0
    draws: Optional[np.ndarray] = None

    def diagnostics(self) -> dict:
        out = {
            "mode": self.mode,
            "n_draws": self.n_draws,
            "acceptance_min": float(self.acceptance.min()) if self.acceptance.size else None,
            "acceptance_mean": float(self.acceptance.mean()) if self.acceptance.size else None,
        }
        if self.joint_acceptance is not None:
            out["joint_acceptance"] = self.joint_acceptance
            out["completion_failures"] = self.completion_failures
        return out


def sample(spec: RconSpec, params: CgwParams, iters: int = 5000, burn_in: int = 1000,
           thin: int = 1, seed=0, mode: str = "psi", keep_draws: bool = False) -> DrawSummary:
    """Run one chain and summarize the retained draws.

    ``iters`` counts iterations after ``burn_in``; an iteration is a sweep
    over all coordinates (rw) or one :func:`psi_step` (psi). Step sizes adapt
    during burn-in only.
    """
    if iters < 1 or burn_in < 0 or thin < 1:
        raise RconError(f"bad chain settings iters={iters} burn_in={burn_in} thin={thin}")
    state = init_chain(spec, params, mode, seed)
    for start in range(0, burn_in, CHECK_EVERY):
        _run(state, spec, params, min(CHECK_EVERY, burn_in - start), True, _EMPTY, 0, 1, 0)
        _check_cache(state, spec, params)
    n_keep = (iters + thin - 1) // thin
    draws = np.empty((n_keep, spec.n_params))
    acc0 = state.accept_counts.copy()
    prop0 = state.proposal_counts.copy()
    k = 0
    for start in range(0, iters, CHECK_EVERY):
        k = _run(state, spec, params, min(CHECK_EVERY, iters - start), False, draws, k, thin, start)
        _check_cache(state, spec, params)
    assert k == n_keep
    acc = (state.accept_counts - acc0) / np.maximum(state.proposal_counts - prop0, 1)
    theta_mean = draws.mean(axis=0)
    joint = None
    if mode == "psi":
        joint = float(acc[-1])
        acc = acc[:-1]
    return DrawSummary(
        theta_mean=theta_mean,
        k_mean=k_of_theta(spec, theta_mean),
        theta_mcse=batch_means_se(draws),
        acceptance=acc,
        joint_acceptance=joint,
        n_draws=n_keep,
        mode=mode,
        completion_failures=state.completion_failures,
        draws=draws if keep_draws else None,
    )


def write_draws_csv(path, draws: np.ndarray) -> None:
    np.savetxt(path, draws, delimiter=",", fmt="%.17g")
