import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from vicsample.graph import Graph, SbmConfig, generate_sbm
from vicsample.samplers import (SamplingPlan, forman_ricci, make_plan, ricci_node_probs,
                                ricci_node_sample, rotating_partition, sample_size,
                                uniform_dim_sample, uniform_node_sample)

from .helpers import inclusion_chi_square


def _empty_features(n):
    return np.zeros((n, 1))


def familywise_sigma(n, level=3.0):
    """Per-node z bound keeping the two-sided ``level``-sigma false-alarm rate for all n nodes."""
    alpha = 2 * stats.norm.sf(level)
    return stats.norm.isf(alpha / (2 * n))


def inclusion_counts(sampler, n, draws, seed):
    rng = np.random.default_rng(seed)
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(draws):
        counts[sampler(rng)] += 1
    return counts


def test_uniform_full_ratio_returns_everything():
    rng = np.random.default_rng(0)
    assert np.array_equal(uniform_node_sample(17, 1.0, rng), np.arange(17))
    assert np.array_equal(uniform_dim_sample(9, 1.0, rng), np.arange(9))


def test_uniform_tiny_ratio_keeps_one():
    idx = uniform_node_sample(100, 0.01, np.random.default_rng(0))
    assert len(idx) == 1
    assert len(uniform_node_sample(100, 0.001, np.random.default_rng(0))) == 1


@pytest.mark.parametrize("p", [0.0, -0.5, 1.01])
def test_uniform_rejects_bad_ratio(p):
    with pytest.raises(ValueError):
        uniform_node_sample(10, p, np.random.default_rng(0))


def test_uniform_half_of_512_dims():
    idx = uniform_dim_sample(512, 0.5, np.random.default_rng(1))
    assert len(idx) == 256 and len(np.unique(idx)) == 256


def test_uniform_dims_change_across_epochs():
    rng = np.random.default_rng(2)
    subsets = {tuple(uniform_dim_sample(64, 0.25, rng)) for _ in range(100)}
    assert len(subsets) >= 2


def test_uniform_selection_frequency_chi_square():
    n, p, draws = 20, 0.25, 100_000
    counts = inclusion_counts(lambda rng: uniform_node_sample(n, p, rng), n, draws, seed=11)
    k = sample_size(n, p)
    freq = counts / draws
    sigma = np.sqrt((k / n) * (1 - k / n) / draws)
    assert np.all(np.abs(freq - k / n) < familywise_sigma(n) * sigma)
    assert inclusion_chi_square(counts, draws, k)[1] > 1e-3


def test_forman_single_edge():
    s = forman_ricci(Graph.from_edges(2, [(0, 1)], _empty_features(2)))
    assert s.edge_curvature.tolist() == [2.0]


def test_forman_triangle():
    s = forman_ricci(Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)], _empty_features(3)))
    assert s.edge_curvature.tolist() == [3.0, 3.0, 3.0]
    assert s.node_flow.tolist() == [6.0, 6.0, 6.0]


def test_forman_star():
    s = forman_ricci(Graph.from_edges(5, [(0, i) for i in range(1, 5)], _empty_features(5)))
    assert s.edge_curvature.tolist() == [-1.0] * 4
    assert s.node_flow.tolist() == [-4.0, -1.0, -1.0, -1.0, -1.0]


def brute_force_forman(n, edges):
    adj = np.zeros((n, n), dtype=int)
    for u, v in edges:
        if u != v:
            adj[u, v] = adj[v, u] = 1
    deg = adj.sum(axis=1)
    out = {}
    for u in range(n):
        for v in range(u + 1, n):
            if adj[u, v]:
                out[(u, v)] = 4 - deg[u] - deg[v] + 3 * int((adj[u] & adj[v]).sum())
    return out


@pytest.mark.parametrize("seed", range(4))
def test_forman_matches_brute_force_and_is_relabel_invariant(seed):
    g = generate_sbm(SbmConfig(8, 3, 0.6, 0.15, feature_dim=2, seed=seed))
    s = forman_ricci(g)
    oracle = brute_force_forman(g.num_nodes, g.edge_array())
    assert {tuple(e): c for e, c in zip(s.edges.tolist(), s.edge_curvature)} == oracle
    flow = np.zeros(g.num_nodes)
    for (u, v), c in oracle.items():
        flow[u] += c
        flow[v] += c
    assert np.array_equal(s.node_flow, flow)

    perm = np.random.default_rng(seed).permutation(g.num_nodes)
    h = Graph.from_edges(g.num_nodes, perm[g.edge_array()], g.features)
    t = forman_ricci(h)
    assert sorted(t.edge_curvature) == sorted(s.edge_curvature)
    assert np.array_equal(t.node_flow[perm], s.node_flow)


def test_ricci_probs_shift_and_normalize():
    assert np.allclose(ricci_node_probs(np.array([-1.0, 0.0, 3.0])), [0.0, 0.2, 0.8],
                       atol=0, rtol=0)
    assert ricci_node_probs(np.array([0.0, 2.0])).tolist() == [0.0, 1.0]
    assert np.array_equal(ricci_node_probs(np.full(4, 7.0)), np.full(4, 0.25))
    with pytest.raises(ValueError):
        ricci_node_probs(np.array([]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50))
def test_ricci_probs_is_distribution(flows):
    p = ricci_node_probs(np.array(flows))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12


def test_ricci_sample_point_mass():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert ricci_node_sample(np.array([0.0, 0.0, 1.0]), 1 / 3, rng).tolist() == [2]


def test_ricci_sample_exhausts_support():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert ricci_node_sample(np.array([0.0, 0.2, 0.8]), 2 / 3, rng).tolist() == [1, 2]


def test_ricci_sample_pads_uniformly_when_support_too_small():
    rng = np.random.default_rng(0)
    idx = ricci_node_sample(np.array([0.0, 0.0, 1.0, 0.0]), 0.75, rng)
    assert len(idx) == 3 and 2 in idx


def test_ricci_sample_with_uniform_probs_is_uniform():
    n, p, draws = 20, 0.25, 100_000
    probs = np.full(n, 1.0 / n)
    counts = inclusion_counts(lambda rng: ricci_node_sample(probs, p, rng), n, draws, seed=5)
    k = sample_size(n, p)
    assert inclusion_chi_square(counts, draws, k)[1] > 1e-3
    sigma = np.sqrt((k / n) * (1 - k / n) / draws)
    assert np.all(np.abs(counts / draws - k / n) < familywise_sigma(n) * sigma)


def test_ricci_sample_prefers_high_probability_nodes():
    probs = np.array([0.05, 0.05, 0.1, 0.8])
    counts = inclusion_counts(lambda rng: ricci_node_sample(probs, 0.25, rng), 4, 5000, seed=1)
    assert counts[3] > counts[2] > counts[0]


def test_rotating_partition_examples():
    assert rotating_partition(8, 4, 0).tolist() == [0, 1, 2, 3]
    assert rotating_partition(8, 4, 1).tolist() == [4, 5, 6, 7]
    assert rotating_partition(8, 4, 2).tolist() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        rotating_partition(8, 3, 0)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 100))
def test_rotating_partition_covers_each_dim_once(m, splits, start):
    d = m * splits
    seen = np.concatenate([rotating_partition(d, m, start + i) for i in range(splits)])
    assert sorted(seen.tolist()) == list(range(d))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 300), st.integers(1, 64), st.floats(0.001, 1.0), st.floats(0.001, 1.0),
       st.sampled_from(["uniform", "ricci"]), st.integers(0, 2**32 - 1))
def test_plans_satisfy_cardinality_contract(n, d, p, q, method, seed):
    rng = np.random.default_rng(seed)
    probs = ricci_node_probs(rng.standard_normal(n))
    plan = make_plan(n, d, node_ratio=p, dim_ratio=q, method=method, rng=rng,
                     ricci_probs=probs)
    plan.validate(n, d)
    if plan.node_indices is not None:
        assert len(plan.node_indices) == max(1, round(p * n))
    if plan.dim_indices is not None:
        assert len(plan.dim_indices) == max(1, round(q * d))


def test_plan_validate_rejects_wrong_size():
    plan = SamplingPlan(node_indices=np.array([0, 1]), node_ratio=0.5)
    with pytest.raises(ValueError):
        plan.validate(10, 4)


def test_ricci_plan_requires_probs():
    with pytest.raises(ValueError):
        make_plan(10, 4, node_ratio=0.5, method="ricci", rng=np.random.default_rng(0))


def test_ricci_scores_csv(tmp_path):
    s = forman_ricci(Graph.from_edges(3, [(0, 1), (1, 2)], _empty_features(3)))
    s.to_csv(tmp_path / "e.csv", tmp_path / "n.csv")
    edges = (tmp_path / "e.csv").read_text().splitlines()
    nodes = (tmp_path / "n.csv").read_text().splitlines()
    assert edges[0] == "u,v,curvature" and len(edges) == 3
    assert nodes[0] == "node,flow,prob" and len(nodes) == 4
    probs = [float(r.split(",")[2]) for r in nodes[1:]]
    assert sum(probs) == pytest.approx(1.0)
