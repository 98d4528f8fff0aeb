import numpy as np
import pytest

from vicsample import autodiff as ad
from vicsample.graph import Graph, SbmConfig, generate_sbm
from vicsample.nn import (AdamState, ExpanderParams, GcnEncoderParams, NonFiniteGradient,
                          adam_step, encode, expand, load_checkpoint, normalize_adjacency,
                          save_checkpoint, sgd_step)

from .helpers import central_difference, dense_normalized_adjacency, max_relative_error


def _graph(n, edges, f=1, seed=0):
    rng = np.random.default_rng(seed)
    return Graph.from_edges(n, edges, rng.standard_normal((n, f)))


def test_normalize_single_edge():
    a = normalize_adjacency(_graph(2, [(0, 1)])).toarray()
    assert np.allclose(a, [[0.5, 0.5], [0.5, 0.5]], atol=0, rtol=1e-15)


def test_normalize_isolated_node():
    a = normalize_adjacency(_graph(3, [(0, 1)])).toarray()
    assert a[2, 2] == 1.0
    assert a[2, :2].sum() == 0 and a[:2, 2].sum() == 0


def test_normalize_triangle():
    a = normalize_adjacency(_graph(3, [(0, 1), (1, 2), (0, 2)])).toarray()
    assert np.allclose(a, np.full((3, 3), 1 / 3), atol=1e-15)


def test_normalize_regular_graph_preserves_ones():
    # cycle C6 is 2-regular
    g = _graph(6, [(i, (i + 1) % 6) for i in range(6)])
    a = normalize_adjacency(g)
    assert np.allclose(a @ np.ones(6), 1.0, atol=1e-14)


def test_normalize_matches_dense_oracle_and_bounds():
    g = generate_sbm(SbmConfig(5, 2, 0.6, 0.2, feature_dim=3, seed=4))
    a = normalize_adjacency(g).toarray()
    dense = dense_normalized_adjacency(g.num_nodes, g.edge_array())
    assert np.allclose(a, dense, atol=1e-15)
    assert np.allclose(a, a.T)
    rows = a.sum(axis=1)
    dmax = g.degrees().max() + 1
    assert np.all(rows > 0) and np.all(rows <= np.sqrt(dmax) + 1e-12)


def test_encode_zero_weights():
    g = generate_sbm(SbmConfig(4, 2, 0.5, 0.5, feature_dim=3, seed=1))
    p = GcnEncoderParams(np.zeros((3, 4)), np.zeros((4, 2)))
    assert not encode(g, p).any()


def test_encode_single_isolated_node_identity():
    x = np.array([[0.5, 2.0, 1.5]])
    g = Graph.from_edges(1, [], x)
    h = encode(g, GcnEncoderParams(np.eye(3), np.eye(3)))
    assert np.array_equal(h, x)


@pytest.mark.parametrize("seed", range(6))
def test_encode_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
    g = Graph.from_edges(n, edges, rng.standard_normal((n, 3)))
    p = GcnEncoderParams(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)))
    a = dense_normalized_adjacency(n, edges)
    oracle = a @ np.maximum(a @ g.features @ p.w1, 0) @ p.w2
    assert np.allclose(encode(g, p), oracle, atol=1e-12, rtol=0)


def test_encode_shape_mismatch():
    g = _graph(3, [(0, 1)], f=2)
    with pytest.raises(ValueError):
        encode(g, GcnEncoderParams(np.zeros((3, 4)), np.zeros((4, 2))))


def test_expand_zero_and_shape():
    h = np.random.default_rng(0).standard_normal((5, 8))
    zero = ExpanderParams(np.zeros((8, 4)), np.zeros(4), np.zeros((4, 3)), np.zeros(3))
    assert not expand(h, zero).any()
    p = ExpanderParams.init(8, seed=0)
    assert expand(h, p).shape == (5, 512)
    with pytest.raises(ValueError):
        expand(np.zeros((5, 7)), p)


def test_expand_hand_computed_one_dim():
    h = np.array([[2.0], [-3.0]])
    p = ExpanderParams(np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1))
    assert np.array_equal(expand(h, p), [[2.0], [0.0]])


def test_backward_of_sum_is_ones():
    tape = ad.GradTape()
    w = tape.param(np.arange(6.0).reshape(2, 3), "w")
    grads = tape.backward(ad.tsum(w))
    assert np.array_equal(grads["w"], np.ones((2, 3)))


def test_backward_squared_norm_linear_net():
    rng = np.random.default_rng(3)
    x, w = rng.standard_normal((5, 3)), rng.standard_normal((3, 2))
    tape = ad.GradTape()
    wt = tape.param(w, "w")
    z = ad.matmul(x, wt)
    grads = tape.backward(ad.tsum(ad.square(z)))
    # d/dW ||XW||^2 = 2 X^T X W
    assert np.allclose(grads["w"], 2 * x.T @ x @ w, atol=1e-12)


def test_backward_without_forward_raises():
    tape = ad.GradTape()
    w = tape.param(np.ones(3), "w")
    with pytest.raises(ad.TapeError):
        tape.backward(w)
    other = ad.GradTape()
    v = other.param(np.ones(2), "v")
    with pytest.raises(ad.TapeError):
        tape.backward(ad.tsum(v))


def test_tape_visits_each_node_once():
    tape = ad.GradTape()
    x = tape.param(np.array([1.0, 2.0]), "x")
    y = x * x
    z = ad.tsum(y + y)  # y has two consumers
    grads = tape.backward(z)
    assert np.array_equal(grads["x"], 4 * np.array([1.0, 2.0]))


def test_full_network_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    g = generate_sbm(SbmConfig(3, 2, 0.7, 0.3, feature_dim=3, seed=2))
    enc = GcnEncoderParams.init(3, 4, 4, seed=1)
    exp = ExpanderParams.init(4, 5, 4, seed=1)
    exp.b1[:] = rng.uniform(0.05, 0.2, size=exp.b1.shape)
    params = {**enc.named(), **exp.named()}
    target = rng.standard_normal((g.num_nodes, 5))

    def loss_of(p, tape=None):
        z = expand(encode(g, (p["encoder.w1"], p["encoder.w2"])),
                   (p["expander.w1"], p["expander.b1"], p["expander.w2"], p["expander.b2"]))
        return ad.tsum(ad.square(z - target))

    tape = ad.GradTape()
    tp = {k: tape.param(v, k) for k, v in params.items()}
    grads = tape.backward(loss_of(tp))
    for name, val in params.items():
        def f(x, name=name):
            return float(loss_of({**params, name: x}))
        num = central_difference(f, val)
        assert max_relative_error(grads[name], num) < 1e-4, name


def test_sgd_step():
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.5, 0.5])}
    assert np.array_equal(sgd_step(p, g, 1.0)["w"], [0.5, -2.5])
    assert np.array_equal(sgd_step(p, {"w": np.zeros(2)}, 0.1)["w"], p["w"])


def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    out = adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(out["w"], p["w"])


def test_adam_single_step_hand_computed():
    state = AdamState(lr=0.1)
    out = adam_step({"x": np.array([1.0])}, {"x": np.array([2.0])}, state)
    # m = 0.1*2 = 0.2, v = 0.001*4 = 0.004; m_hat = 2, v_hat = 4
    expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8)
    assert out["x"][0] == pytest.approx(expected, abs=1e-15)
    assert state.m["x"][0] == pytest.approx(0.2)
    assert state.v["x"][0] == pytest.approx(0.004)


def test_nonfinite_gradient_aborts():
    with pytest.raises(NonFiniteGradient, match="w"):
        sgd_step({"w": np.ones(2)}, {"w": np.array([1.0, np.nan])}, 0.1)
    with pytest.raises(NonFiniteGradient):
        adam_step({"w": np.ones(2)}, {"w": np.array([np.inf, 0.0])}, AdamState())


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"encoder.w1": rng.standard_normal((3, 4)),
               "expander.b2": np.array([np.pi, -0.0, 1e-310])}
    save_checkpoint(tmp_path / "ck.npz", tensors)
    back = load_checkpoint(tmp_path / "ck.npz")
    assert set(back) == set(tensors)
    for k in tensors:
        assert back[k].tobytes() == tensors[k].tobytes()
        assert back[k].shape == tensors[k].shape
