"""Command-line interface: simulate, estimate, benchmark, check."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from .bench import Scenario, condition_report, get_scenario, nmse, run_experiment
from .distributed import METHODS, BayesConfig, estimate_distributed, run_method
from .errors import DimensionMismatch, EstimationError, InvalidGraph, RconError
from .graph import ColouredGraph, validate_coloured_graph
from .rcon import build_spec, cone_check, k_of_theta, read_matrix_csv, simulate_data, write_matrix_csv

log = logging.getLogger("rcondist")

SCENARIO_PRESETS = ("cycle20a", "cycle20b", "cycle20c", "cycle30a", "cycle30b", "cycle30c", "grid10")

# benchmark presets: scenarios x sample sizes x replicates x methods
BENCH_PRESETS = {
    "table2-desk": dict(scenarios=["cycle20a", "cycle20b", "cycle20c"], n=[100], reps=20,
                        methods=["MBE-1hop", "MBE-2hop", "GBE", "GMLE"]),
    "figure2-desk": dict(scenarios=["cycle20a"], n=[50, 75, 100], reps=20,
                         methods=["MBE-1hop", "MBE-2hop", "GBE", "GMLE"]),
    "table3-desk": dict(scenarios=["cycle20a", "cycle20b", "cycle20c"], n=[100], reps=1,
                        methods=["MBE-1hop", "MBE-2hop", "GBE"]),
    "grid-desk": dict(scenarios=["grid10"], n=[100], reps=1, methods=["MBE-1hop"]),
    "smoke": dict(scenarios=["cycle20a"], n=[100], reps=2, methods=["MBE-1hop", "GMLE"],
                  sampler=dict(iters=500, burn_in=100)),
}


class ConfigError(RconError):
    """Bad or incomplete configuration; exit code 2."""


def _preset_scenario(name: str) -> Scenario:
    if name == "grid10":
        name = "grid10x10"
    try:
        return get_scenario(name)
    except (RconError, ValueError):
        raise ConfigError(f"unknown preset {name!r}") from None


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _matrix(value, base_dir: str) -> np.ndarray:
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        if not os.path.exists(path):
            raise ConfigError(f"matrix file not found: {value}")
        return read_matrix_csv(path)
    return np.asarray(value, dtype=float)


def _model_from(args, cfg: dict) -> Scenario:
    """Resolve the true model from --preset or the config."""
    preset = args.preset or cfg.get("scenario")
    if preset:
        return _preset_scenario(preset)
    if "graph" not in cfg:
        raise ConfigError("no model specified")
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
    try:
        g = ColouredGraph.from_dict(cfg["graph"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed graph: {exc}") from None
    bad = validate_coloured_graph(g)
    if bad:
        raise InvalidGraph(bad)
    spec = build_spec(g)
    if "k_true" in cfg:
        K = _matrix(cfg["k_true"], base)
        if K.shape != (g.p, g.p):
            raise ConfigError(f"k_true has shape {K.shape}, graph has p={g.p}")
    elif "theta" in cfg:
        theta = np.asarray(cfg["theta"], dtype=float)
        if theta.shape != (spec.n_params,):
            raise ConfigError(f"theta needs {spec.n_params} entries, got {theta.size}")
        K = k_of_theta(spec, theta)
    else:
        K = None
    if K is not None:
        rep = cone_check(spec, K)
        if not rep.ok:
            if not rep.positive_definite:
                raise ConfigError("K not positive definite")
            raise ConfigError(f"K violates the model: {', '.join(rep.violations)}")
    return Scenario(cfg.get("name", "custom"), g, K, "from config")


def _bayes_config(cfg: dict, base_dir: str, args=None) -> BayesConfig:
    s = dict(cfg.get("sampler", {}))
    d = s.pop("d", "identity")
    d_mat = None if d in (None, "identity") else _matrix(d, base_dir)
    allowed = {"delta", "iters", "burn_in", "thin", "mode"}
    unknown = set(s) - allowed
    if unknown:
        raise ConfigError(f"unknown sampler settings: {', '.join(sorted(unknown))}")
    bc = BayesConfig(d_mat=d_mat, **s)
    if args is not None:
        for name in ("iters", "burn_in", "mode"):
            v = getattr(args, name, None)
            if v is not None:
                setattr(bc, name, v)
    if bc.delta <= 2 or bc.iters < 1 or bc.burn_in < 0 or bc.thin < 1 or bc.mode not in ("rw", "psi"):
        raise ConfigError(f"sampler settings out of range: {bc}")
    return bc


def _combine_mode(args, cfg) -> str:
    v = args.combine or cfg.get("combine", "self")
    return {"self": "self_normalizing", "self_normalizing": "self_normalizing", "paper": "paper"}.get(v) or \
        _raise(ConfigError(f"unknown combine mode {v!r}"))


def _raise(exc):
    raise exc


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def _workers(args, cfg) -> int:
    w = args.workers if args.workers is not None else cfg.get("workers", os.cpu_count() or 1)
    if w < 1:
        raise ConfigError("workers must be positive")
    return int(w)


def _out_dir(args, cfg) -> str:
    out = args.out or cfg.get("out") or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sc = _model_from(args, cfg)
    if sc.k_true is None:
        raise ConfigError("no model specified")
    n = int(args.n if args.n is not None else cfg.get("n", 100))
    if n < 1:
        raise ConfigError("n must be positive")
    X = simulate_data(sc.k_true, n, _seed(args, cfg))
    out = _out_dir(args, cfg)
    write_matrix_csv(os.path.join(out, "data.csv"), X)
    write_matrix_csv(os.path.join(out, "k_true.csv"), sc.k_true)
    log.info("wrote %d x %d data to %s", n, sc.graph.p, out)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    sc = _model_from(args, cfg)
    data_path = args.data or cfg.get("data")
    if not data_path or not os.path.exists(data_path):
        raise ConfigError(f"data file not found: {data_path}")
    X = read_matrix_csv(data_path)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if sc.graph.p == 1 else X.reshape(1, -1)
    if X.shape[1] != sc.graph.p:
        raise DimensionMismatch(f"data has {X.shape[1]} columns, graph has p={sc.graph.p}")
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
    bc = _bayes_config(cfg, base, args)
    method = args.method or cfg.get("method", "MBE-1hop")
    hops = args.hops if args.hops is not None else cfg.get("hops")
    if hops is not None and method.startswith(("MBE", "DMLE")):
        method = method.split("-")[0] + f"-{hops}hop"
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    seed, workers, mode = _seed(args, cfg), _workers(args, cfg), _combine_mode(args, cfg)
    if method.startswith(("MBE", "DMLE")):
        kind = "bayes" if method.startswith("MBE") else "mle"
        progress = (lambda i: log.info("vertex %d done", i)) if args.verbose else None
        est = estimate_distributed(sc.graph, X, int(method[-4]), kind, bc, seed, workers, mode, progress)
    else:
        est = run_method(method, sc.graph, X, bc, seed, workers, mode)
    extra = {"seed": seed, "n": int(X.shape[0])}
    if sc.k_true is not None:
        extra["nmse"] = nmse(est.k_mat, sc.k_true)
    if not est.positive_definite:
        log.warning("combined K is not positive definite")
    out = _out_dir(args, cfg)
    est.write_json(os.path.join(out, "estimate.json"), extra)
    if args.write_k or cfg.get("write_k", True):
        est.write_k_csv(os.path.join(out, "k_hat.csv"))
    print(json.dumps({"method": est.method, "theta": [float(t) for t in est.theta], **extra}))
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args.config)
    spec = dict(cfg.get("benchmark", {}))
    if args.preset:
        if args.preset not in BENCH_PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(BENCH_PRESETS)}")
        spec = {**BENCH_PRESETS[args.preset], **spec}
    if not spec.get("scenarios"):
        raise ConfigError("no model specified")
    if args.reps is not None:
        spec["reps"] = args.reps
    if args.n is not None:
        spec["n"] = [args.n]
    if args.method:
        spec["methods"] = [args.method]
    for m in spec["methods"]:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    sampler_cfg = {"sampler": {**spec.get("sampler", {}), **cfg.get("sampler", {})}}
    bc = _bayes_config(sampler_cfg, os.getcwd(), args)
    seed, workers, mode = _seed(args, cfg), _workers(args, cfg), _combine_mode(args, cfg)
    out = _out_dir(args, cfg)
    failures = 0
    for name in spec["scenarios"]:
        sc = _preset_scenario(name)
        log.info("benchmark %s: n=%s reps=%d methods=%s", sc.name, spec["n"], spec["reps"], spec["methods"])
        sub = os.path.join(out, sc.name) if len(spec["scenarios"]) > 1 else out
        rep = run_experiment(sc, spec["n"], int(spec["reps"]), spec["methods"], seed, sub, bc, workers, mode,
                             timings=not args.no_timing)
        failures += len(rep.failures)
        for a in rep.aggregate():
            print(f"{a['scenario']},{a['method']},n={a['n']},nmse_mean={a['nmse_mean']:.6g}", file=sys.stderr)
    if failures:
        log.warning("%d cells failed; see failures.csv", failures)
    return 0


def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    sc = _model_from(args, cfg)
    if sc.k_true is None:
        sc = Scenario(sc.name, sc.graph, np.eye(sc.graph.p), "structure only")
    rep = condition_report(sc)
    lines = [
        f"scenario {rep['scenario']}: p={rep['p']} classes={rep['n_params']}",
        f"lambda_min={rep['lambda_min']:.6g} lambda_max={rep['lambda_max']:.6g}",
        f"max class size={rep['max_class_size']}",
    ]
    for h, loc in rep["local"].items():
        lines.append(f"{h}-hop: max p_i={loc['max_p_local']} max S_i={loc['max_s_local']} "
                     f"max local class size={loc['max_local_class_size']}")
        if args.verbose:
            for i, (pi, si) in enumerate(loc["sizes"]):
                lines.append(f"  vertex {i}: p_i={pi} S_i={si}")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", help="builtin scenario (or benchmark preset)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    common.add_argument("--hops", type=int, choices=(1, 2))
    common.add_argument("--combine", choices=("paper", "self"))
    common.add_argument("-n", "--n", type=int, help="sample size")
    common.add_argument("--iters", type=int)
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--mode", choices=("rw", "psi"))
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="rcondist", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate Gaussian data from a model")
    e = sub.add_parser("estimate", parents=[common], help="estimate K from a data CSV")
    e.add_argument("--data", help="headerless n x p CSV")
    e.add_argument("--write-k", action="store_true", help="also write k_hat.csv")
    b = sub.add_parser("benchmark", parents=[common], help="run a simulation study")
    b.add_argument("--reps", type=int)
    b.add_argument("--no-timing", action="store_true", help="leave wall times blank (byte-stable output)")
    sub.add_parser("check", parents=[common], help="validate a model and print diagnostics")
    return p


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "benchmark": cmd_benchmark, "check": cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except EstimationError as exc:
        print(f"error: estimation failed: {exc}", file=sys.stderr)
        for i, msg in sorted(exc.failures.items()):
            print(f"  vertex {i}: {msg}", file=sys.stderr)
        return 1
    except InvalidGraph as exc:
        print("error: invalid coloured graph", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return 2
    except (RconError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
