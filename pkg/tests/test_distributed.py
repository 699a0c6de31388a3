import json

import numpy as np
import pytest

from rcondist.bench import nmse, scenario_cycle
from rcondist.distributed import (
    BayesConfig, LocalEstimate, combine, estimate_distributed, estimate_global_bayes,
    estimate_global_mle, estimate_local, run_method, vertex_seed,
)
from rcondist.errors import DimensionMismatch, EstimationError, RconError
from rcondist.graph import ColouredGraph, complete_graph, cycle_graph, local_model
from rcondist.rcon import build_spec, cone_check, simulate_data

FAST = BayesConfig(iters=400, burn_in=100)


@pytest.fixture(scope="module")
def cyc6():
    sc = scenario_cycle(6, "a")
    return sc, simulate_data(sc.k_true, 200, 1)


def test_complete_graph_local_equals_global(rng):
    g = complete_graph(3)
    X = rng.normal(size=(30, 3))
    for i in range(3):
        loc = estimate_local(g, i, 1, X, "bayes", FAST, seed=7)
        glob = estimate_global_bayes(g, X, FAST, seed=7)
        assert np.array_equal(loc.theta_local, glob.theta)
        assert loc.excluded == []


def test_complete_graph_distributed_mle_is_global(rng):
    g = complete_graph(4)
    X = rng.normal(size=(50, 4))
    a = estimate_distributed(g, X, 1, "mle")
    b = estimate_global_mle(g, X)
    assert np.allclose(a.theta, b.theta, atol=1e-12)
    assert np.allclose(b.k_mat, np.linalg.inv(X.T @ X / 50), atol=1e-8)


def test_local_restricts_columns(cyc6):
    sc, X = cyc6
    loc = estimate_local(sc.graph, 0, 1, X, "mle")
    assert loc.diagnostics["p_local"] == 3
    assert len(loc.theta_local) == local_model(sc.graph, 0, 1).n_params
    lm = local_model(sc.graph, 0, 1)
    assert loc.excluded == [r for r, k in enumerate(lm.class_map) if k is None]
    assert len(loc.excluded) == 3  # two buffer vertices, one buffer edge


def test_combine_constants(cyc6):
    sc, _ = cyc6
    g = sc.graph
    locs = []
    for i in range(6):
        lm = local_model(g, i, 1)
        locs.append(LocalEstimate(i, np.full(lm.n_params, 2.5), lm.class_map))
    theta, counts, _ = combine(locs, g, "self_normalizing")
    assert np.allclose(theta, 2.5)
    assert np.all(counts >= 1)


def test_combine_hand_computed(cyc6):
    """Locals carry value 10*i + r; the combined values are checked against
    sums written out by hand for the 6-cycle (a) colouring."""
    sc, _ = cyc6
    g = sc.graph
    locs = []
    for i in range(6):
        lm = local_model(g, i, 1)
        locs.append(LocalEstimate(i, 10.0 * i + np.arange(lm.n_params), lm.class_map))
    # every 1-hop model: local class 0 = centre vertex class, 1-2 buffer
    # vertices, 3-4 the two incident edges (odd class first), 5 buffer edge
    for le in locs:
        assert le.class_map[1:3] == (None, None) and le.class_map[5] is None
    # vertex class 0 = {0,2,4}: values 10*i + 0
    # vertex class 1 = {1,3,5}
    # edge class 2 (odd edges (0,1),(2,3),(4,5)): every vertex touches one,
    # and it is local class 3 in every model
    # edge class 3 (even edges): local class 4 in every model
    theta, counts, _ = combine(locs, g, "self_normalizing")
    assert theta[0] == pytest.approx((0 + 20 + 40) / 3)
    assert theta[1] == pytest.approx((10 + 30 + 50) / 3)
    assert theta[2] == pytest.approx(sum(10 * i + 3 for i in range(6)) / 6)
    assert theta[3] == pytest.approx(sum(10 * i + 4 for i in range(6)) / 6)
    assert list(counts) == [3, 3, 6, 6]
    # fixed-denominator mode: |V_k| = 3 and 2|E_k| = 6 coincide with the counts here
    theta_p, _, _ = combine(locs, g, "paper")
    assert np.allclose(theta_p, theta)


def test_fixed_denominators_equal_counts_on_uniform_four_cycle():
    base = cycle_graph(4)
    g = ColouredGraph.from_lists(4, base.edges, [[0, 1, 2, 3]], [[e] for e in base.edges])
    locs = []
    rng = np.random.default_rng(0)
    for i in range(4):
        lm = local_model(g, i, 1)
        locs.append(LocalEstimate(i, rng.normal(size=lm.n_params), lm.class_map))
    a, ca, _ = combine(locs, g, "paper")
    b, cb, _ = combine(locs, g, "self_normalizing")
    assert ca[0] == 4
    assert a[0] == pytest.approx(b[0])


def test_combine_bad_mode(cyc6):
    sc, _ = cyc6
    with pytest.raises(RconError):
        combine([], sc.graph, "median")


def test_buffer_exclusion(cyc6):
    sc, X = cyc6
    for hops in (1, 2):
        est = estimate_distributed(sc.graph, X, hops, "mle")
        maps = {i: local_model(sc.graph, i, hops).class_map for i in range(6)}
        for k, terms in est.contributions.items():
            for i, r in terms:
                assert maps[i][r] == k
        # perturbing unmapped local values leaves the combination unchanged
        locs = [estimate_local(sc.graph, i, hops, X, "mle") for i in range(6)]
        t0, _, _ = combine(locs, sc.graph)
        for le in locs:
            le.theta_local[le.excluded] += 1e6
        t1, _, _ = combine(locs, sc.graph)
        assert np.array_equal(t0, t1)


def test_workers_do_not_change_result(cyc6):
    sc, X = cyc6
    a = estimate_distributed(sc.graph, X, 1, "bayes", FAST, seed=3, workers=1)
    b = estimate_distributed(sc.graph, X, 1, "bayes", FAST, seed=3, workers=8)
    assert np.array_equal(a.theta, b.theta)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_vertex_seeds_are_distinct():
    s = {tuple(vertex_seed(0, i).generate_state(2)) for i in range(50)}
    assert len(s) == 50


def test_twenty_cycle_nmse():
    sc = scenario_cycle(20, "a")
    X = simulate_data(sc.k_true, 100, 5)
    est = estimate_distributed(sc.graph, X, 1, "bayes", BayesConfig(), seed=0)
    assert np.isfinite(nmse(est.k_mat, sc.k_true)) and nmse(est.k_mat, sc.k_true) < 0.1
    assert est.method == "MBE-1hop"
    spec = build_spec(sc.graph)
    # zero pattern and colour equalities hold exactly
    assert cone_check(spec, est.k_mat, tol=0.0).zero_pattern
    assert cone_check(spec, est.k_mat, tol=0.0).colour


def test_gbe_scalar_gamma():
    x = np.random.default_rng(2).normal(size=(20, 1))
    g = complete_graph(1)
    est = estimate_global_bayes(g, x, BayesConfig(iters=20000), seed=0)
    target = (3 + 20) / (1 + np.sum(x ** 2))
    assert est.theta[0] == pytest.approx(target, rel=0.02)
    assert cone_check(build_spec(g), est.k_mat).ok


def test_errors_are_aggregated(cyc6):
    sc, X = cyc6
    with pytest.raises(EstimationError) as info:
        estimate_distributed(sc.graph, X, 1, "bayes", BayesConfig(mode="nope"))
    assert sorted(info.value.failures) == list(range(6))
    with pytest.raises(DimensionMismatch):
        estimate_distributed(sc.graph, X[:, :4], 1, "mle")
    with pytest.raises(RconError):
        run_method("MBE-3hop", sc.graph, X)


def test_report_files(cyc6, tmp_path):
    sc, X = cyc6
    est = run_method("DMLE-2hop", sc.graph, X)
    est.write_json(tmp_path / "e.json", {"seed": 0})
    est.write_k_csv(tmp_path / "k.csv")
    d = json.loads((tmp_path / "e.json").read_text())
    assert d["method"] == "DMLE-2hop" and d["hops"] == 2 and len(d["theta"]) == 4
    assert np.allclose(np.loadtxt(tmp_path / "k.csv", delimiter=","), est.k_mat)


@pytest.mark.slow
def test_consistency_in_n():
    sc = scenario_cycle(6, "a")
    for hops in (1, 2):
        med = []
        for n in (100, 400, 1600):
            vals = []
            for r in range(20):
                X = simulate_data(sc.k_true, n, 1000 + r)
                est = estimate_distributed(sc.graph, X, hops, "bayes", BayesConfig(), seed=r)
                vals.append(nmse(est.k_mat, sc.k_true))
            med.append(np.median(vals))
        assert med[0] > med[1] > med[2], (hops, med)
