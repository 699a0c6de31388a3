"""Simulation scenarios, the NMSE metric and the experiment runner."""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .asymptotics import asymptotic_cov
from .distributed import METHODS, BayesConfig, _method_parts, estimate_distributed, run_method
from .errors import InsufficientReplicates, NotPositiveDefinite, RconError
from .graph import ColouredGraph, complete_graph, cycle_graph, local_model
from .rcon import build_spec, cone_check, simulate_data, theta_of_k

log = logging.getLogger(__name__)

REPORT_COLUMNS = ["scenario", "method", "hops", "n", "replicate", "seed", "nmse", "wall_time_s", "flags"]
AGGREGATE_COLUMNS = ["scenario", "method", "hops", "n", "nmse_mean", "nmse_std", "time_mean_s"]


@dataclass
class Scenario:
    name: str
    graph: ColouredGraph
    k_true: np.ndarray
    notes: str = ""

    @property
    def theta_true(self) -> np.ndarray:
        return theta_of_k(build_spec(self.graph), self.k_true).theta


def _cycle_values(p: int, pattern: str):
    """Diagonal and edge values of the cycle scenarios; ``i`` is 1-based."""
    diag = np.empty(p)
    for i in range(1, p + 1):
        odd = i % 2 == 1
        diag[i - 1] = {
            "a": 0.1 if odd else 0.03,
            "b": 0.1 if odd else 0.3,
            "c": 0.1 + 0.1 * i if odd else 0.03 + 0.01 * i,
        }[pattern]
    edge = {}
    for i in range(1, p):
        odd = i % 2 == 1
        edge[(i - 1, i)] = {
            "a": 0.01 if odd else 0.02,
            "b": 0.01 + 0.001 * i if odd else 0.01 + 0.002 * i,
            "c": 0.01 if odd else 0.02,
        }[pattern]
    edge[(0, p - 1)] = {"a": 0.02, "b": 0.01, "c": 0.02}[pattern]
    return diag, edge


def scenario_cycle(p: int, pattern: str) -> Scenario:
    """Coloured ``p``-cycle with one of the three colouring patterns.

    (a) odd/even vertex classes and odd/even edge classes, the closing edge
    ``(1, p)`` joining the even edges; (b) odd/even vertex classes, every
    edge its own class; (c) every vertex its own class, odd/even edge
    classes.
    """
    if p < 4 or p % 2:
        raise RconError(f"cycle scenarios need an even p >= 4, got {p}")
    if pattern not in ("a", "b", "c"):
        raise RconError(f"unknown cycle pattern {pattern!r}")
    diag, edge = _cycle_values(p, pattern)
    odd_v = [v for v in range(p) if v % 2 == 0]  # 1-based odd
    even_v = [v for v in range(p) if v % 2 == 1]
    odd_e = [(v, v + 1) for v in range(0, p - 1, 2)]
    even_e = [(v, v + 1) for v in range(1, p - 1, 2)] + [(0, p - 1)]
    all_e = sorted(edge)
    vc = [odd_v, even_v] if pattern in ("a", "b") else [[v] for v in range(p)]
    ec = [[e] for e in all_e] if pattern == "b" else [odd_e, even_e]
    g = cycle_graph(p, vc, ec)
    K = np.diag(diag)
    for (a, b), val in edge.items():
        K[a, b] = K[b, a] = val
    return _checked(Scenario(f"cycle{p}{pattern}", g, K, f"{p}-cycle, colouring pattern ({pattern})"))


def scenario_grid(rows: int = 10, cols: int = 10) -> Scenario:
    """``rows x cols`` grid; vertex ``i + rows*(j-1)`` (1-based) sits in
    row ``i`` of column block ``j``.

    Links inside a column block share one class with value 1; links between
    blocks are singletons valued ``1 + 0.01 i + 0.1 j``; diagonals are
    singletons valued ``10 + 0.01 v``.
    """
    p = rows * cols
    idx = lambda i, j: i + rows * (j - 1) - 1  # noqa: E731
    within = [(idx(i, j), idx(i + 1, j)) for j in range(1, cols + 1) for i in range(1, rows)]
    between = [(idx(i, j), idx(i, j + 1)) for j in range(1, cols) for i in range(1, rows + 1)]
    K = np.diag([10 + 0.01 * v for v in range(1, p + 1)])
    for a, b in within:
        K[a, b] = K[b, a] = 1.0
    for j in range(1, cols):
        for i in range(1, rows + 1):
            a, b = idx(i, j), idx(i, j + 1)
            K[a, b] = K[b, a] = 1 + 0.01 * i + 0.1 * j
    ec = ([within] if within else []) + [[e] for e in between]
    g = ColouredGraph.from_lists(p, within + between, [[v] for v in range(p)], ec)
    return _checked(Scenario(f"grid{rows}x{cols}", g, K, f"{rows}x{cols} grid"))


def scenario_identity(p: int = 3) -> Scenario:
    """Complete graph with ``K = I``; handy for diagnostics."""
    return _checked(Scenario(f"identity{p}", complete_graph(p), np.eye(p), "K = I"))


def _checked(sc: Scenario) -> Scenario:
    rep = cone_check(build_spec(sc.graph), sc.k_true)
    if not rep.ok:
        raise NotPositiveDefinite(f"scenario {sc.name}: {rep.violations}")
    return sc


def get_scenario(name: str) -> Scenario:
    """Look up a builtin scenario such as ``cycle20a`` or ``grid10x10``."""
    if name.startswith("cycle") and len(name) > 6:
        return scenario_cycle(int(name[5:-1]), name[-1])
    if name.startswith("grid"):
        r, _, c = name[4:].partition("x")
        return scenario_grid(int(r), int(c or r))
    if name.startswith("identity"):
        return scenario_identity(int(name[8:] or 3))
    raise RconError(f"unknown scenario {name!r}")


def nmse(k_hat, k_true) -> float:
    k_hat = np.asarray(k_hat, dtype=float)
    k_true = np.asarray(k_true, dtype=float)
    if k_hat.shape != k_true.shape:
        raise RconError(f"shape mismatch {k_hat.shape} vs {k_true.shape}")
    den = float(np.sum(k_true ** 2))
    if den == 0.0:
        raise RconError("NMSE undefined for a zero reference matrix")
    return float(np.sum((k_hat - k_true) ** 2)) / den


def derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        cells: dict = {}
        for r in self.rows:
            cells.setdefault((r["scenario"], r["method"], r["hops"], r["n"]), []).append(r)
        out = []
        for (sc, m, h, n), rs in cells.items():
            v = np.array([r["nmse"] for r in rs])
            t = [r["wall_time_s"] for r in rs]
            out.append({
                "scenario": sc, "method": m, "hops": h, "n": n,
                "nmse_mean": float(v.mean()),
                "nmse_std": float(v.std(ddof=1)) if len(v) > 1 else float("nan"),
                "time_mean_s": float(np.mean(t)) if None not in t else float("nan"),
            })
        return out

    def mean_nmse(self, method: str, n: Optional[int] = None) -> float:
        v = [r["nmse"] for r in self.rows if r["method"] == method and (n is None or r["n"] == n)]
        return float(np.mean(v))

    def write(self, out_dir) -> dict:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "report": os.path.join(out_dir, "report.csv"),
            "aggregate": os.path.join(out_dir, "aggregate.csv"),
            "plot_data": os.path.join(out_dir, "plot_data.csv"),
        }
        _write_csv(paths["report"], REPORT_COLUMNS, self.rows)
        agg = self.aggregate()
        _write_csv(paths["aggregate"], AGGREGATE_COLUMNS, agg)
        methods = list(dict.fromkeys(a["method"] for a in agg))
        plot_rows = {}
        for a in agg:
            plot_rows.setdefault((a["scenario"], a["n"]), {"scenario": a["scenario"], "n": a["n"]})[a["method"]] = a["nmse_mean"]
        _write_csv(paths["plot_data"], ["scenario", "n"] + methods, list(plot_rows.values()))
        if self.failures:
            paths["failures"] = os.path.join(out_dir, "failures.csv")
            _write_csv(paths["failures"], ["scenario", "method", "n", "replicate", "error"], self.failures)
        return paths


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def run_experiment(scenario: Scenario, n_list: Sequence[int], reps: int, methods: Sequence[str],
                   seed: int = 0, out_path=None, cfg: Optional[BayesConfig] = None, workers: int = 1,
                   combine_mode: str = "self_normalizing", timings: bool = True) -> ExperimentReport:
    """Simulate, estimate and score every (n, replicate, method) cell.

    Data for replicate ``r`` come from one stream seeded by ``(seed, r)``,
    so smaller samples are prefixes of larger ones. With ``timings=False``
    the wall-time column is left blank and output files are byte-stable.
    """
    for m in methods:
        _method_parts(m)
    cfg = cfg or BayesConfig()
    report = ExperimentReport()
    n_max = max(n_list)
    for rep in range(reps):
        data_seed = derived_seed(seed, rep)
        X_all = simulate_data(scenario.k_true, n_max, data_seed)
        for n in sorted(n_list):
            X = X_all[:n]
            for mi, m in enumerate(methods):
                chain_seed = derived_seed(seed, rep, n, METHODS.index(m))
                t0 = time.perf_counter()
                try:
                    est = run_method(m, scenario.graph, X, cfg, chain_seed, workers, combine_mode)
                except Exception as exc:
                    log.warning("%s %s n=%d rep=%d failed: %s", scenario.name, m, n, rep, exc)
                    report.failures.append({"scenario": scenario.name, "method": m, "n": n,
                                            "replicate": rep, "error": str(exc)})
                    continue
                dt = time.perf_counter() - t0
                flags = [] if est.positive_definite else ["not_pd"]
                for d in _mle_diags(est):
                    if not d.get("converged", True):
                        flags.append("mle_not_converged")
                        break
                report.rows.append({
                    "scenario": scenario.name, "method": m, "hops": _method_parts(m)[1] or 0,
                    "n": n, "replicate": rep, "seed": chain_seed,
                    "nmse": nmse(est.k_mat, scenario.k_true),
                    "wall_time_s": dt if timings else None,
                    "flags": ";".join(flags),
                })
                log.info("%s %s n=%d rep=%d nmse=%.5f (%.2fs)", scenario.name, m, n, rep,
                         report.rows[-1]["nmse"], dt)
    if out_path is not None:
        report.write(out_path)
    return report


def _mle_diags(est):
    d = est.diagnostics
    if "converged" in d:
        yield d
    for v in d.get("locals", {}).values():
        yield v


@dataclass
class NormalityReport:
    empirical_cov: np.ndarray
    a: np.ndarray
    rel_frobenius: float
    bias: np.ndarray
    band: np.ndarray
    reps: int
    n: int

    @property
    def bias_ok(self) -> bool:
        return bool(np.all(np.abs(self.bias) <= self.band))


def normality_check(scenario: Scenario, n: int, reps: int, hops: int = 1, seed: int = 0,
                    method: str = "bayes", cfg: Optional[BayesConfig] = None,
                    combine_mode: str = "self_normalizing") -> NormalityReport:
    """Compare the spread of ``sqrt(n)(theta_hat - theta0)`` over replicates
    with the asymptotic covariance."""
    if reps < 2:
        raise InsufficientReplicates(f"need at least 2 replicates, got {reps}")
    theta0 = scenario.theta_true
    ac = asymptotic_cov(scenario.graph, theta0, hops, combine_mode)
    z = np.empty((reps, len(theta0)))
    for r in range(reps):
        X = simulate_data(scenario.k_true, n, derived_seed(seed, r))
        est = estimate_distributed(scenario.graph, X, hops, method, cfg, derived_seed(seed, r, 1),
                                   combine_mode=combine_mode)
        z[r] = np.sqrt(n) * (est.theta - theta0)
    emp = np.cov(z, rowvar=False, ddof=1)
    rel = float(np.linalg.norm(emp - ac.a) / np.linalg.norm(ac.a))
    band = 3.0 * np.sqrt(np.diag(ac.a) / reps)
    return NormalityReport(emp, ac.a, rel, z.mean(axis=0), band, reps, n)


def condition_report(scenario: Scenario, hops_list: Sequence[int] = (1, 2)) -> dict:
    """Eigenvalue bounds of ``K_true`` and local model sizes."""
    g = scenario.graph
    lam = np.linalg.eigvalsh(scenario.k_true)
    spec = build_spec(g)
    out = {
        "scenario": scenario.name,
        "p": g.p,
        "n_params": spec.n_params,
        "lambda_min": float(lam[0]),
        "lambda_max": float(lam[-1]),
        "max_class_size": int(spec.sizes.max()),
        "local": {},
    }
    for h in hops_list:
        sizes = []
        max_local_tau = 0
        for i in range(g.p):
            lm = local_model(g, i, h)
            ls = build_spec(lm.local_graph)
            sizes.append((lm.p_local, lm.n_params))
            max_local_tau = max(max_local_tau, int(ls.sizes.max()))
        out["local"][h] = {
            "sizes": sizes,
            "max_p_local": max(s[0] for s in sizes),
            "max_s_local": max(s[1] for s in sizes),
            "max_local_class_size": max_local_tau,
        }
    return out
