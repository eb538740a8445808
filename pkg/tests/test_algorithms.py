import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeycluster.algorithms import (
    NOISE,
    DistanceMatrix,
    Partition,
    adjacency,
    ami,
    ami_from_labels,
    connected_components,
    dtw,
    dtw_matrix,
    greedy_modularity,
    jaccard_distance,
    jaccard_matrix,
    modularity,
    optics,
    optics_labels,
    sort_items,
    spectral_cluster,
)
from honeycluster.algorithms.optics import reachability_plot
from honeycluster.algorithms.spectral import choose_k, normalized_laplacian
from oracles import (
    ami_reference,
    best_bipartition_modularity,
    bfs_components,
    dtw_reference,
    modularity_reference,
    same_grouping,
)


def two_cliques(k=4):
    """Two k-cliques joined by a single bridge edge."""
    edges = []
    for off in (0, k):
        edges += [(off + i, off + j) for i in range(k) for j in range(i + 1, k)]
    edges.append((k - 1, k))
    return 2 * k, edges


# --- DTW ---------------------------------------------------------------------


def test_dtw_matches_reference_on_random_pairs():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.integers(0, 10, rng.integers(1, 31)).astype(float)
        b = rng.integers(0, 10, rng.integers(1, 31)).astype(float)
        assert dtw(a, b) == dtw_reference(a, b)


def test_dtw_band_matches_reference():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(1, 25))
        a, b = rng.random(n), rng.random(n)
        band = int(rng.integers(0, n + 1))
        assert dtw(a, b, band) == pytest.approx(dtw_reference(a, b, band), abs=1e-12)


def test_dtw_band_zero_is_l1():
    a, b = np.array([1.0, 5, 2]), np.array([2.0, 1, 2])
    assert dtw(a, b, 0) == 5.0


def test_dtw_rejects_narrow_band():
    with pytest.raises(ValueError):
        dtw([1, 2, 3, 4], [1.0], band=1)


def test_dtw_matrix_is_symmetric_and_matches_pairs():
    rng = np.random.default_rng(3)
    series = rng.random((6, 15))
    d = dtw_matrix(series, 4)
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0)
    for i in range(6):
        for j in range(6):
            assert d[i, j] == pytest.approx(dtw_reference(series[i], series[j], 4), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(0, 5), min_size=1, max_size=12),
    st.lists(st.integers(0, 5), min_size=1, max_size=12),
)
def test_dtw_symmetric_and_nonnegative(a, b):
    assert dtw(a, b) == dtw(b, a) >= 0
    assert dtw(a, a) == 0


# --- AMI ---------------------------------------------------------------------


def test_ami_matches_reference_on_random_partitions():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        u = rng.integers(0, rng.integers(1, 8), n)
        v = rng.integers(0, rng.integers(1, 8), n)
        assert abs(ami_from_labels(u, v) - ami_reference(u, v)) <= 1e-10


def test_ami_agrees_with_sklearn():
    from sklearn.metrics import adjusted_mutual_info_score

    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(5, 60))
        u, v = rng.integers(0, 5, n), rng.integers(0, 4, n)
        ref = adjusted_mutual_info_score(u, v, average_method="arithmetic")
        assert ami_from_labels(u, v) == pytest.approx(ref, abs=1e-9)


def test_ami_treats_noise_as_singletons():
    u = [0, 0, NOISE, NOISE, 1, 1]
    as_singletons = [0, 0, 2, 3, 1, 1]
    v = [0, 0, 1, 1, 1, 1]
    assert ami_from_labels(u, v) == ami_from_labels(as_singletons, v)


def test_ami_on_partitions_uses_shared_items():
    p1 = Partition.from_labels(["a", "b", "c", "d"], [0, 0, 1, 1])
    p2 = Partition.from_labels(["b", "a", "d", "c", "z"], [5, 5, 7, 7, 1])
    assert ami(p1, p2) == 1.0
    assert ami(p1, Partition.from_labels(["a", "q"], [0, 0])) is None


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-1, 4), min_size=2, max_size=30), st.randoms())
def test_ami_symmetric_and_permutation_invariant(labels, rnd):
    other = labels[:]
    rnd.shuffle(other)
    a = ami_from_labels(labels, other)
    assert a == pytest.approx(ami_from_labels(other, labels), abs=1e-12)
    assert a <= 1.0 + 1e-12
    renamed = [x if x < 0 else x + 10 for x in labels]
    assert ami_from_labels(renamed, other) == pytest.approx(a, abs=1e-12)


# --- graphs ------------------------------------------------------------------


def test_connected_components_matches_bfs():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(1, 30))
        m = int(rng.integers(0, 2 * n))
        edges = [tuple(int(x) for x in rng.integers(0, n, 2)) for _ in range(m)]
        edges = [(x, y) for x, y in edges if x != y]
        nodes = [f"n{i}" for i in range(n)]
        part = connected_components(nodes, [(nodes[x], nodes[y]) for x, y in edges])
        assert same_grouping([part.labels[v] for v in nodes], bfs_components(n, edges))


def test_greedy_modularity_two_cliques_reaches_exhaustive_optimum():
    n, edges = two_cliques(4)
    nodes = [f"v{i}" for i in range(n)]
    res = greedy_modularity(nodes, [(nodes[x], nodes[y]) for x, y in edges])
    best = best_bipartition_modularity(n, edges)
    assert res.modularity_Q == pytest.approx(best, abs=1e-12)
    labels = [res.labels.labels[v] for v in nodes]
    assert same_grouping(labels, [0] * 4 + [1] * 4)


def test_modularity_matches_reference_and_networkx():
    import networkx as nx

    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(4, 15))
        g = nx.gnm_random_graph(n, int(rng.integers(3, 2 * n)), seed=int(rng.integers(1 << 30)))
        if g.number_of_edges() == 0:
            continue
        labels = rng.integers(0, 3, n)
        edges = list(g.edges())
        adj = adjacency([str(i) for i in range(n)], [(str(x), str(y)) for x, y in edges])
        q = modularity(adj, labels)
        assert q == pytest.approx(modularity_reference(n, edges, labels), abs=1e-12)
        comms = [{i for i in range(n) if labels[i] == c} for c in set(labels.tolist())]
        assert q == pytest.approx(nx.community.modularity(g, comms), abs=1e-12)


def test_greedy_modularity_matches_networkx_on_karate():
    import networkx as nx

    g = nx.karate_club_graph()
    nodes = [str(v) for v in g.nodes()]
    res = greedy_modularity(nodes, [(str(x), str(y)) for x, y in g.edges()])
    comms = nx.community.greedy_modularity_communities(g, weight=None)
    ref = nx.community.modularity(g, comms, weight=None)
    assert res.modularity_Q == pytest.approx(ref, abs=1e-12)


# --- spectral ----------------------------------------------------------------


def clique_union(sizes):
    n = sum(sizes)
    adj = np.zeros((n, n), dtype=np.int64)
    truth, start = [], 0
    for c, s in enumerate(sizes):
        adj[start : start + s, start : start + s] = 1
        truth += [c] * s
        start += s
    np.fill_diagonal(adj, 0)
    return adj, truth


@pytest.mark.parametrize("sizes", [(5, 9), (6, 12, 20), (5, 5, 7, 15), (8, 11, 5, 19, 6)])
def test_spectral_recovers_disjoint_cliques(sizes):
    adj, truth = clique_union(sizes)
    res = spectral_cluster(adj, k_min=2, k_max=10, seed=0)
    k = len(sizes)
    assert int(np.sum(np.abs(res.eigenvalues) < 1e-9)) == k
    assert res.chosen_k == k
    assert same_grouping(res.labels.label_array.tolist(), truth)


def test_normalized_laplacian_spectrum_matches_scipy():
    from scipy.sparse.csgraph import laplacian

    adj, _ = clique_union((4, 6))
    adj[3, 4] = adj[4, 3] = 1
    ours = np.linalg.eigvalsh(normalized_laplacian(adj))
    ref = np.linalg.eigvalsh(laplacian(adj.astype(float), normed=True))
    assert np.allclose(ours, ref, atol=1e-12)


def test_choose_k_picks_largest_gap():
    eig = np.array([0, 0, 0, 0.9, 0.95, 1.0])
    assert choose_k(eig, 2, 5) == (3, False)


def test_spectral_isolated_nodes_become_singletons():
    adj, _ = clique_union((5, 5, 1))
    res = spectral_cluster(adj, list("abcdefghijk"), seed=0)
    labels = res.labels.labels
    assert labels["k"] not in {labels[x] for x in "abcdefghij"}


# --- OPTICS ------------------------------------------------------------------


def blobs(seed=0, centers=((0, 0), (10, 10), (0, 10)), n=15):
    rng = np.random.default_rng(seed)
    pts = np.concatenate([rng.normal(c, 0.5, (n, 2)) for c in centers])
    truth = np.repeat(np.arange(len(centers)), n)
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    return pts, d, truth


def test_optics_reachability_matches_sklearn():
    from sklearn.cluster import OPTICS

    pts, d, _ = blobs(1)
    ref = OPTICS(min_samples=3, metric="precomputed").fit(d)
    plot = reachability_plot(d, 3)
    assert np.array_equal(plot.ordering, ref.ordering_)
    ours = plot.reachability[plot.ordering]
    theirs = ref.reachability_[ref.ordering_]
    assert np.allclose(ours[1:], theirs[1:], atol=1e-9)
    assert np.allclose(plot.core, ref.core_distances_, atol=1e-9)


def test_optics_labels_match_sklearn_xi():
    from sklearn.cluster import OPTICS

    for seed in range(5):
        for min_samples, xi in ((3, 0.05), (5, 0.1), (4, 0.2)):
            _, d, _ = blobs(seed)
            ref = OPTICS(min_samples=min_samples, xi=xi, metric="precomputed").fit(d).labels_
            ours = optics_labels(d, min_samples, xi)
            assert same_grouping(ours.tolist(), ref.tolist())


def test_optics_recovers_separated_groups():
    # three tight groups of equidistant points, far apart
    d = np.ones((15, 15))
    for g in range(3):
        d[g * 5 : g * 5 + 5, g * 5 : g * 5 + 5] = 0.01
    np.fill_diagonal(d, 0)
    labels = optics_labels(d, 3, 0.05)
    assert same_grouping(labels.tolist(), np.repeat([0, 1, 2], 5).tolist())


def test_optics_small_input_is_all_noise():
    assert optics_labels(np.zeros((2, 2)), 3).tolist() == [NOISE, NOISE]


def test_optics_independent_of_input_order():
    _, d, _ = blobs(2)
    names = [f"10.0.0.{i}" for i in range(len(d))]
    perm = np.random.default_rng(0).permutation(len(d))
    p1 = optics(DistanceMatrix(tuple(names), d))
    p2 = optics(DistanceMatrix(tuple(names[i] for i in perm), d[np.ix_(perm, perm)]))
    assert p1.same_clustering(p2)


# --- distances / partition ---------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sets(st.integers(0, 8), max_size=6), min_size=1, max_size=8))
def test_jaccard_matrix_matches_pairwise(sets):
    d = jaccard_matrix(sets)
    for i, a in enumerate(sets):
        for j, b in enumerate(sets):
            assert d[i, j] == pytest.approx(jaccard_distance(a, b))
            assert 0 <= d[i, j] <= 1


def test_sort_items_orders_ipv4_numerically():
    assert sort_items(["10.0.0.10", "9.1.1.1", "10.0.0.2"]) == ["9.1.1.1", "10.0.0.2", "10.0.0.10"]


def test_partition_roundtrip_and_validation():
    p = Partition.from_labels(["b", "a", "c"], [7, 7, NOISE], "t")
    assert Partition.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        Partition(("a", "b"), {"a": 0, "b": 2})
    with pytest.raises(ValueError):
        Partition.from_clusters([["a"], ["a"]])
