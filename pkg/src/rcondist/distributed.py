"""Distributed estimation over relaxed local models and the combiner."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EstimationError, RconError
from .graph import ColouredGraph, LocalModel, local_model
from .mle import fit_mle
from .rcon import (
    RconSpec, SampleStats, build_spec, cone_check, k_of_theta, stats_from_scatter, write_matrix_csv,
)
from .sampler import CgwParams, posterior_params, sample

METHODS = ("MBE-1hop", "MBE-2hop", "GBE", "GMLE", "DMLE-1hop", "DMLE-2hop")
COMBINE_MODES = ("paper", "self_normalizing")


@dataclass
class BayesConfig:
    """Prior and chain settings; defaults follow the simulation study."""

    delta: float = 3.0
    d_mat: Optional[np.ndarray] = None  # None -> identity of the model size
    iters: int = 5000
    burn_in: int = 1000
    thin: int = 1
    mode: str = "psi"

    def prior(self, p: int) -> CgwParams:
        d = np.eye(p) if self.d_mat is None else np.asarray(self.d_mat, dtype=float)
        return CgwParams(self.delta, d)


@dataclass
class LocalEstimate:
    centre: int
    theta_local: np.ndarray
    class_map: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def excluded(self) -> list[int]:
        """Local classes that never enter the combination."""
        return [r for r, k in enumerate(self.class_map) if k is None]


@dataclass
class GlobalEstimate:
    theta: np.ndarray
    k_mat: np.ndarray
    counts: np.ndarray
    method: str
    contributions: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    positive_definite: bool = True
    hops: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "hops": self.hops,
            "theta": [float(x) for x in self.theta],
            "counts": [int(x) for x in self.counts],
            "positive_definite": self.positive_definite,
            "contributions": {str(k): [list(map(int, t)) for t in v] for k, v in self.contributions.items()},
            "diagnostics": self.diagnostics,
        }

    def write_json(self, path, extra: Optional[dict] = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_k_csv(self, path) -> None:
        write_matrix_csv(path, self.k_mat)


def vertex_seed(seed: int, i: int) -> np.random.SeedSequence:
    """Per-vertex chain seed, independent of scheduling."""
    return np.random.SeedSequence(int(seed), spawn_key=(int(i),))


def _as_stats(data, p: int) -> SampleStats:
    if isinstance(data, SampleStats):
        if data.scatter.shape != (p, p):
            raise DimensionMismatch(f"statistics are for p={data.scatter.shape[0]}, graph has p={p}")
        return data
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[1] != p:
        raise DimensionMismatch(f"data has {X.shape[1]} columns, graph has p={p}")
    return SampleStats(X.shape[0], X.T @ X, np.zeros(0))


def _fit(spec: RconSpec, stats: SampleStats, method: str, cfg: BayesConfig, seed):
    """Posterior mean (method 'bayes') or MLE of one model."""
    if method == "bayes":
        post = posterior_params(cfg.prior(spec.p), stats)
        summ = sample(spec, post, cfg.iters, cfg.burn_in, cfg.thin, seed, cfg.mode)
        return summ.theta_mean, summ.diagnostics()
    if method == "mle":
        res = fit_mle(spec, stats)
        return res.theta_hat, {"iterations": res.iterations, "converged": res.converged,
                               "gradient_norm": res.final_gradient_norm}
    raise RconError(f"unknown local method {method!r}")


def estimate_local(g: ColouredGraph, i: int, hops: int, data, method: str = "bayes",
                   cfg: Optional[BayesConfig] = None, seed=0,
                   lm: Optional[LocalModel] = None) -> LocalEstimate:
    """Fit the relaxed local model centred at ``i`` on columns ``N_i``.

    ``data`` is an ``n x p`` array or global :class:`SampleStats`.
    """
    cfg = cfg or BayesConfig()
    stats = _as_stats(data, g.p)
    lm = lm or local_model(g, i, hops)
    spec = build_spec(lm.local_graph)
    idx = np.array(lm.vertices)
    local_stats = stats_from_scatter(spec, stats.scatter[np.ix_(idx, idx)], stats.n)
    theta, diag = _fit(spec, local_stats, method, cfg, seed)
    diag["p_local"] = lm.p_local
    diag["n_params"] = lm.n_params
    return LocalEstimate(lm.centre, theta, lm.class_map, diag)


def combiner_terms(g: ColouredGraph, class_maps: dict[int, Sequence]) -> dict[int, list[tuple[int, int]]]:
    """Which (vertex, local class) pairs feed each global class.

    Vertex class ``V_k`` takes the models centred at its members; edge
    class ``E_k`` takes the models centred at endpoints of its edges.
    """
    T = g.n_vertex_classes
    members: dict[int, set] = {k: set(c) for k, c in enumerate(g.vertex_classes)}
    for k, c in enumerate(g.edge_classes):
        members[T + k] = {v for e in c for v in e}
    terms: dict[int, list[tuple[int, int]]] = {k: [] for k in range(g.n_classes)}
    for i in sorted(class_maps):
        for r, k in enumerate(class_maps[i]):
            if k is not None and i in members[k]:
                terms[k].append((i, r))
    return terms


def combiner_weights(g: ColouredGraph, class_maps: dict[int, Sequence], mode: str = "self_normalizing"):
    """Return ``(terms, denominators)`` of the combination map."""
    if mode not in COMBINE_MODES:
        raise RconError(f"unknown combine mode {mode!r}")
    terms = combiner_terms(g, class_maps)
    T = g.n_vertex_classes
    denom = np.zeros(g.n_classes)
    for k in range(g.n_classes):
        if not terms[k]:
            raise RconError(f"global class {k} receives no local estimate")
        if mode == "self_normalizing":
            denom[k] = len(terms[k])
        elif k < T:
            denom[k] = len(g.vertex_classes[k])
        else:
            denom[k] = 2 * len(g.edge_classes[k - T])
    return terms, denom


def combine(locals_: Sequence[LocalEstimate], g: ColouredGraph, mode: str = "self_normalizing"):
    """Combine local estimates into global theta.

    Returns ``(theta, counts, contributions)``; unmapped local classes are
    never used.
    """
    by_centre = {le.centre: le for le in locals_}
    terms, denom = combiner_weights(g, {i: le.class_map for i, le in by_centre.items()}, mode)
    theta = np.zeros(g.n_classes)
    for k, tk in terms.items():
        theta[k] = sum(by_centre[i].theta_local[r] for i, r in tk) / denom[k]
    counts = np.array([len(terms[k]) for k in range(g.n_classes)])
    return theta, counts, terms


def _method_parts(method: str) -> tuple[str, Optional[int]]:
    table = {
        "MBE-1hop": ("bayes", 1), "MBE-2hop": ("bayes", 2),
        "DMLE-1hop": ("mle", 1), "DMLE-2hop": ("mle", 2),
        "GBE": ("bayes", None), "GMLE": ("mle", None),
    }
    if method not in table:
        raise RconError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return table[method]


def _finish(g, spec, theta, counts, terms, method, hops, diagnostics) -> GlobalEstimate:
    K = k_of_theta(spec, theta)
    pd = bool(cone_check(spec, K, tol=0.0).positive_definite)
    return GlobalEstimate(theta, K, counts, method, terms, diagnostics, pd, hops)


def estimate_distributed(g: ColouredGraph, data, hops: int, method: str = "bayes",
                         cfg: Optional[BayesConfig] = None, seed: int = 0, workers: int = 1,
                         combine_mode: str = "self_normalizing", progress=None) -> GlobalEstimate:
    """Fit every local model and combine.

    Per-vertex seeds derive from ``(seed, vertex)`` so the result does not
    depend on ``workers``.
    """
    cfg = cfg or BayesConfig()
    stats = _as_stats(data, g.p)
    spec = build_spec(g)

    def one(i):
        est = estimate_local(g, i, hops, stats, method, cfg, vertex_seed(seed, i))
        if progress is not None:
            progress(i)
        return est

    results, failures = {}, {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(one, i) for i in range(g.p)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # collected and re-raised with ids
                    failures[i] = str(exc)
    else:
        for i in range(g.p):
            try:
                results[i] = one(i)
            except Exception as exc:
                failures[i] = str(exc)
    if failures:
        raise EstimationError(failures)
    locals_ = [results[i] for i in range(g.p)]
    theta, counts, terms = combine(locals_, g, combine_mode)
    tag = {"bayes": "MBE", "mle": "DMLE"}[method] + f"-{hops}hop"
    diagnostics = {"combine": combine_mode, "locals": {str(le.centre): le.diagnostics for le in locals_}}
    return _finish(g, spec, theta, counts, terms, tag, hops, diagnostics)


def estimate_global_bayes(g: ColouredGraph, data, cfg: Optional[BayesConfig] = None, seed=0) -> GlobalEstimate:
    cfg = cfg or BayesConfig()
    stats = _as_stats(data, g.p)
    spec = build_spec(g)
    gstats = stats_from_scatter(spec, stats.scatter, stats.n)
    theta, diag = _fit(spec, gstats, "bayes", cfg, seed)
    return _finish(g, spec, theta, np.ones(g.n_classes, dtype=int), {}, "GBE", None, diag)


def estimate_global_mle(g: ColouredGraph, data) -> GlobalEstimate:
    stats = _as_stats(data, g.p)
    spec = build_spec(g)
    gstats = stats_from_scatter(spec, stats.scatter, stats.n)
    theta, diag = _fit(spec, gstats, "mle", BayesConfig(), 0)
    return _finish(g, spec, theta, np.ones(g.n_classes, dtype=int), {}, "GMLE", None, diag)


def run_method(method: str, g: ColouredGraph, data, cfg: Optional[BayesConfig] = None, seed: int = 0,
               workers: int = 1, combine_mode: str = "self_normalizing") -> GlobalEstimate:
    """Dispatch on a method name from :data:`METHODS`."""
    kind, hops = _method_parts(method)
    if hops is not None:
        return estimate_distributed(g, data, hops, kind, cfg, seed, workers, combine_mode)
    if kind == "bayes":
        return estimate_global_bayes(g, data, cfg, seed)
    return estimate_global_mle(g, data)
