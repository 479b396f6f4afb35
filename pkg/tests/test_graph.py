import math

import numpy as np
import pytest

from ensograph.adiff import Tensor, backward, grad_check, reduce_sum
from ensograph.errors import ValidationError
from ensograph.graph import (
    GraphLearnConfig,
    correlation_graph,
    export_edges,
    learn_adjacency,
    normalize,
    topk_sparsify,
)
from helpers import random_anoms, small_grid


def _embeddings(rng, n, d):
    e1 = Tensor(rng.standard_normal((n, d)), requires_grad=True)
    e2 = Tensor(rng.standard_normal((n, d)), requires_grad=True)
    return e1, e2


def test_two_node_adjacency_hand_value():
    e1 = Tensor(np.array([[1.0], [0.0]]))
    e2 = Tensor(np.array([[0.0], [1.0]]))
    a = learn_adjacency(e1, e2, alpha=1.0).data
    # score matrix [[0, 1], [-1, 0]]: relu(tanh(.)) keeps only the 0->1 edge
    assert abs(a[0, 1] - math.tanh(1.0)) < 1e-12
    assert a[1, 0] == 0.0
    assert a[0, 0] == 0.0 and a[1, 1] == 0.0


def test_adjacency_invariants_over_random_embeddings():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, d = int(rng.integers(2, 25)), int(rng.integers(1, 6))
        e1, e2 = _embeddings(rng, n, d)
        a = learn_adjacency(e1, e2, alpha=float(rng.uniform(0.5, 5.0))).data
        assert np.all(a >= 0.0)
        assert np.all(a < 1.0)
        assert np.all(np.diag(a) == 0.0)
        assert np.all(a * a.T == 0.0)  # at most one direction per pair


def test_alpha_sharpens_toward_binary():
    rng = np.random.default_rng(1)
    e1, e2 = _embeddings(rng, 10, 4)
    soft = learn_adjacency(e1, e2, alpha=0.5).data
    hard = learn_adjacency(e1, e2, alpha=50.0).data
    live = soft > 0
    assert np.all(hard[live] >= soft[live])
    # edges with a clearly positive score saturate; near-zero scores may not
    assert np.all(hard[soft > 0.2] > 0.99)
    assert np.all(hard < 1.0)


def test_topk_keeps_k_largest_per_row():
    a = Tensor(np.array([
        [0.0, 0.9, 0.1, 0.5],
        [0.2, 0.0, 0.8, 0.3],
        [0.7, 0.6, 0.0, 0.1],
        [0.4, 0.3, 0.2, 0.0],
    ]))
    out = topk_sparsify(a, 2).data
    np.testing.assert_array_equal(out, [
        [0.0, 0.9, 0.0, 0.5],
        [0.0, 0.0, 0.8, 0.3],
        [0.7, 0.6, 0.0, 0.0],
        [0.4, 0.3, 0.0, 0.0],
    ])


def test_topk_breaks_ties_toward_lower_column():
    a = np.zeros((4, 4))
    a[0] = [0.0, 0.5, 0.5, 0.5]
    out = topk_sparsify(Tensor(a), 2).data
    np.testing.assert_array_equal(out[0], [0.0, 0.5, 0.5, 0.0])


def test_topk_with_k_at_or_above_n_is_identity():
    rng = np.random.default_rng(2)
    a = Tensor(np.abs(rng.standard_normal((5, 5))))
    np.testing.assert_array_equal(topk_sparsify(a, 5).data, a.data)
    np.testing.assert_array_equal(topk_sparsify(a, 9).data, a.data)


def test_topk_row_budget_over_random_matrices():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(2, 30))
        k = int(rng.integers(1, n + 1))
        a = Tensor(np.abs(rng.standard_normal((n, n))))
        out = topk_sparsify(a, k).data
        assert np.all((out > 0).sum(axis=1) <= k)
        # retained entries are unchanged
        live = out > 0
        np.testing.assert_array_equal(out[live], a.data[live])


def test_topk_gradient_flows_only_through_kept_entries():
    a = Tensor(np.array([[0.0, 0.9, 0.1], [0.2, 0.0, 0.8], [0.7, 0.6, 0.0]]),
               requires_grad=True)
    backward(reduce_sum(topk_sparsify(a, 1)))
    np.testing.assert_array_equal(a.grad, [[0.0, 1.0, 0.0],
                                           [0.0, 0.0, 1.0],
                                           [1.0, 0.0, 0.0]])


def test_normalize_rows_sum_to_one_with_self_loops():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(1, 15))
        a = Tensor(np.abs(rng.standard_normal((n, n))))
        out = normalize(a).data
        np.testing.assert_allclose(out.sum(axis=1), np.ones(n), atol=1e-12)
    # zero matrix normalizes to the identity
    np.testing.assert_array_equal(normalize(Tensor(np.zeros((3, 3)))).data, np.eye(3))


def test_full_graph_pipeline_is_differentiable():
    rng = np.random.default_rng(5)
    e1, e2 = _embeddings(rng, 6, 3)

    def f():
        a = learn_adjacency(e1, e2, alpha=2.0)
        return reduce_sum(normalize(topk_sparsify(a, 3)))

    for r in grad_check(f, {"e1": e1, "e2": e2}):
        assert r.passed, f"{r.name}: rel err {r.max_rel_err:.2e}"


def test_correlation_graph_matches_corrcoef():
    rng = np.random.default_rng(6)
    anoms = random_anoms(rng, n_time=60)
    nodes = [(i, j) for i in range(anoms.grid.n_lat) for j in range(anoms.grid.n_lon)]
    tau = 0.1
    a = correlation_graph(anoms, nodes, tau)
    ii = np.array([i for i, _ in nodes])
    jj = np.array([j for _, j in nodes])
    ref = np.abs(np.corrcoef(anoms.values[:, ii, jj].astype(np.float64).T))
    np.fill_diagonal(ref, 0.0)
    ref[ref < tau] = 0.0
    np.testing.assert_allclose(a, ref, atol=1e-7)
    assert np.all(np.diag(a) == 0.0)
    np.testing.assert_allclose(a, a.T, atol=1e-12)


def test_correlation_graph_rejects_missing_and_flat_nodes():
    rng = np.random.default_rng(7)
    anoms = random_anoms(rng, n_time=30)
    nodes = [(0, 0), (0, 1), (1, 0)]
    anoms.missing[4, 0, 1] = True
    with pytest.raises(ValidationError):
        correlation_graph(anoms, nodes, 0.5)

    flat = random_anoms(rng, n_time=30)
    flat.values[:, 1, 0] = 0.25
    with pytest.raises(ValidationError, match=r"\(1, 0\)"):
        correlation_graph(flat, nodes, 0.5)


def test_export_edges_sorted_and_complete(tmp_path):
    grid = small_grid(n_lat=2, n_lon=2)
    nodes = [(0, 0), (0, 1), (1, 0), (1, 1)]
    a = np.zeros((4, 4))
    a[0, 1] = 0.9
    a[2, 3] = 0.4
    a[1, 2] = 0.9
    path = tmp_path / "edges.csv"
    n = export_edges(a, grid, nodes, path)
    assert n == 3
    lines = path.read_text().splitlines()
    assert lines[0] == "src_lat,src_lon,dst_lat,dst_lon,weight"
    # descending weight, then source node id
    assert lines[1].startswith("-2,190,") and lines[1].endswith("0.9")
    assert lines[2].startswith("-2,192,")
    assert lines[3].endswith("0.4")


def test_export_edges_empty_graph(tmp_path):
    grid = small_grid(n_lat=2, n_lon=2)
    nodes = [(0, 0), (0, 1), (1, 0), (1, 1)]
    path = tmp_path / "edges.csv"
    assert export_edges(np.zeros((4, 4)), grid, nodes, path) == 0
    assert path.read_text() == "src_lat,src_lon,dst_lat,dst_lon,weight\n"


def test_graph_config_validation():
    with pytest.raises(ValueError):
        GraphLearnConfig(embed_dim=0)
    with pytest.raises(ValueError):
        GraphLearnConfig(alpha=0.0)
    with pytest.raises(ValueError):
        GraphLearnConfig(topk=0)
