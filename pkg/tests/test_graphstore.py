import json

import numpy as np
import pytest

from hhrgnn.graphstore import (Graph, GenParamsHeterogeneous, GenParamsHomogeneous,
                               GraphFormatError, SplitSet, generate_heterogeneous,
                               generate_homogeneous, load_graph, load_splits, make_splits,
                               save_graph, save_splits)
from hhrgnn.sparsela import RelationSpec, compile_relation


def write_fixture(d, meta, features, edges, labels):
    d.mkdir(parents=True, exist_ok=True)
    (d / "graph.json").write_text(json.dumps(meta))
    (d / "features.csv").write_text(features)
    (d / "edges.tsv").write_text(edges)
    (d / "labels.csv").write_text(labels)
    return d


@pytest.fixture
def tiny_dir(tmp_path):
    meta = {"num_nodes": 4, "feature_dim": 2, "num_classes": 2, "node_types": [0, 0, 0, 0],
            "edge_type_names": ["cites"], "node_type_names": ["doc"]}
    return write_fixture(tmp_path / "g", meta,
                         "0.5,1\n1,0\n0,0\n-1.25,2\n",
                         "0\t1\t0\n1\t2\t0\n3\t0\t0\n",
                         "0,1\n2,0\n")


def test_load_hand_written_fixture(tiny_dir):
    g = load_graph(tiny_dir)
    assert g.num_nodes == 4
    assert g.feature_dim == 2
    assert len(g.edges) == 3
    assert g.labels == {0: 1, 2: 0}
    np.testing.assert_array_equal(g.features[3], [-1.25, 2.0])
    assert g.is_homogeneous


def test_load_cora_sized_export(tmp_path):
    # Table 1 sizes for Cora: 2708 nodes, 5429 edges, 1433 features, 7 classes
    n, m, d, f = 2708, 5429, 1433, 7
    rng = np.random.default_rng(0)
    meta = {"num_nodes": n, "feature_dim": d, "num_classes": f, "node_types": [0] * n,
            "edge_type_names": ["cites"], "node_type_names": ["paper"]}
    row = ",".join(["0"] * d) + "\n"
    pairs = set()
    while len(pairs) < m:
        a, b = rng.integers(0, n, 2)
        if a != b:
            pairs.add((int(a), int(b)))
    edges = "".join(f"{a}\t{b}\t0\n" for a, b in sorted(pairs))
    labels = "".join(f"{i},{i % f}\n" for i in range(n))
    g = load_graph(write_fixture(tmp_path / "cora", meta, row * n, edges, labels))
    assert (g.num_nodes, len(g.edges), g.feature_dim, g.num_classes) == (n, m, d, f)


@pytest.mark.parametrize("labels, message", [
    ("999,0\n", "out of range"),
    ("0,5\n", "out of range"),
])
def test_label_validation(tmp_path, labels, message):
    meta = {"num_nodes": 10, "feature_dim": 1, "num_classes": 2}
    d = write_fixture(tmp_path / "g", meta, "0\n" * 10, "", labels)
    with pytest.raises(GraphFormatError, match=message):
        load_graph(d)


def test_missing_file(tiny_dir):
    (tiny_dir / "edges.tsv").unlink()
    with pytest.raises(GraphFormatError, match="missing file"):
        load_graph(tiny_dir)


def test_dimension_mismatch(tiny_dir):
    meta = json.loads((tiny_dir / "graph.json").read_text())
    meta["feature_dim"] = 3
    (tiny_dir / "graph.json").write_text(json.dumps(meta))
    with pytest.raises(GraphFormatError, match="feature_dim"):
        load_graph(tiny_dir)


def test_row_count_mismatch(tiny_dir):
    (tiny_dir / "features.csv").write_text("0,0\n1,1\n")
    with pytest.raises(GraphFormatError, match="rows"):
        load_graph(tiny_dir)


def test_out_of_range_edge(tiny_dir):
    (tiny_dir / "edges.tsv").write_text("0\t4\t0\n")
    with pytest.raises(GraphFormatError, match="endpoint"):
        load_graph(tiny_dir)


def test_bad_edge_type(tiny_dir):
    (tiny_dir / "edges.tsv").write_text("0\t1\t1\n")
    with pytest.raises(GraphFormatError, match="edge type"):
        load_graph(tiny_dir)


def test_duplicate_edges_rejected(tiny_dir):
    (tiny_dir / "edges.tsv").write_text("0\t1\t0\n0\t1\t0\n")
    with pytest.raises(GraphFormatError, match="duplicate"):
        load_graph(tiny_dir)


# ---------------------------------------------------------------------------
# Generators

def test_planted_forced_cliques():
    g = generate_homogeneous(GenParamsHomogeneous(nodes_per_class=3, num_classes=2,
                                                  p_in=1.0, p_out=0.0, seed=5))
    assert g.num_nodes == 6
    undirected = {tuple(sorted(e[:2])) for e in g.edges.tolist()}
    assert len(undirected) == 6
    assert undirected == {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)}
    assert len(g.edges) == 12
    assert g.labels == {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1}


def test_planted_determinism():
    p = GenParamsHomogeneous(nodes_per_class=20, num_classes=3, seed=11)
    a, b = generate_homogeneous(p), generate_homogeneous(p)
    assert a == b
    assert a.features.tobytes() == b.features.tobytes()
    assert a.edges.tobytes() == b.edges.tobytes()
    assert generate_homogeneous(GenParamsHomogeneous(nodes_per_class=20, num_classes=3,
                                                     seed=12)) != a


def test_planted_cross_class_edge_count():
    g = generate_homogeneous(GenParamsHomogeneous(nodes_per_class=100, num_classes=3,
                                                  p_in=0.10, p_out=0.01, seed=1))
    y = g.label_array()
    src, dst = g.edges[:, 0], g.edges[:, 1]
    cross = int(np.sum(y[src] != y[dst])) // 2
    # binomial over 3 * 100 * 100 cross-class pairs at p = 0.01
    n_pairs, p = 3 * 100 * 100, 0.01
    mean, sd = n_pairs * p, np.sqrt(n_pairs * p * (1 - p))
    assert mean == pytest.approx(300)
    assert abs(cross - mean) < 4 * sd


def test_planted_symmetric():
    g = generate_homogeneous(GenParamsHomogeneous(nodes_per_class=15, seed=2))
    fwd = {tuple(e) for e in g.edges[:, :2].tolist()}
    assert fwd == {(b, a) for a, b in fwd}


@pytest.mark.parametrize("kw", [dict(num_classes=0), dict(nodes_per_class=0),
                                dict(p_in=0.01, p_out=0.1), dict(signal=-1.0)])
def test_planted_rejects_bad_params(kw):
    with pytest.raises(ValueError):
        generate_homogeneous(GenParamsHomogeneous(**kw))


def test_hetero_schema_and_reverse_types():
    g = generate_heterogeneous(GenParamsHeterogeneous(seed=3))
    assert g.num_node_types == 3 and g.num_edge_types == 4
    assert g.edge_type_names == ["AP", "PA", "PC", "CP"]
    types = g.node_type
    assert all(types[n] == 0 for n in g.labels)
    for t, rev in [(0, 1), (2, 3)]:
        a = {tuple(e) for e in g.edges_of_type(t).tolist()}
        b = {tuple(e) for e in g.edges_of_type(rev).tolist()}
        assert b == {(d, s) for s, d in a}
    # "AP" edges feed papers into authors
    ap = g.edges_of_type(0)
    assert set(types[ap[:, 0]]) == {1} and set(types[ap[:, 1]]) == {0}


def test_hetero_forced_wiring_reaches_conferences():
    p = GenParamsHeterogeneous(authors_per_class=4, num_classes=2, num_papers=6,
                               num_conferences=2, p_ap_in=1.0, p_ap_out=0.0, p_pc=1.0,
                               seed=0)
    g = generate_heterogeneous(p)
    apc = compile_relation(g, RelationSpec.metapath("AP", "PC", normalization="none"))
    dense = apc.matrix.to_dense()
    authors = [n for n in range(g.num_nodes) if g.node_type[n] == 0]
    confs = [n for n in range(g.num_nodes) if g.node_type[n] == 2]
    assert np.all(dense[np.ix_(authors, confs)] == 1)
    # each author only links to papers of its own class
    ap = g.edges_of_type(0)
    p_cls = {pid: (pid - 8) % 2 for pid in range(8, 14)}
    for paper, author in ap.tolist():
        assert p_cls[paper] == g.labels[author]


def test_hetero_determinism():
    p = GenParamsHeterogeneous(seed=9)
    assert generate_heterogeneous(p) == generate_heterogeneous(p)


def test_hetero_ap_edge_count():
    p = GenParamsHeterogeneous(seed=4)
    g = generate_heterogeneous(p)
    n_ap = len(g.edges_of_type(0))
    per_class_papers = p.num_papers // p.num_classes
    n_authors = p.authors_per_class * p.num_classes
    same = n_authors * per_class_papers
    cross = n_authors * (p.num_papers - per_class_papers)
    mean = same * p.p_ap_in + cross * p.p_ap_out
    sd = np.sqrt(same * p.p_ap_in * (1 - p.p_ap_in) + cross * p.p_ap_out * (1 - p.p_ap_out))
    assert mean == pytest.approx(720)
    assert abs(n_ap - mean) < 4 * sd


# ---------------------------------------------------------------------------
# Round trip and splits

@pytest.mark.parametrize("make", [
    lambda: generate_homogeneous(GenParamsHomogeneous(nodes_per_class=10, seed=1)),
    lambda: generate_heterogeneous(GenParamsHeterogeneous(authors_per_class=5, num_papers=12,
                                                          num_conferences=3, seed=1)),
])
def test_save_load_round_trip(tmp_path, make):
    g = make()
    assert load_graph(save_graph(g, tmp_path / "g")) == g


def labeled_graph(n, num_classes):
    return Graph(num_nodes=n, node_type=np.zeros(n, dtype=int), edges=np.zeros((0, 3)),
                 features=np.zeros((n, 1)), labels={i: i % num_classes for i in range(n)},
                 num_classes=num_classes)


def test_split_arithmetic():
    g = labeled_graph(60, 3)
    s = make_splits(g, train_per_class=5, val_count=15, seed=0)
    assert (len(s.train), len(s.val), len(s.test)) == (15, 15, 30)
    assert not set(s.train) & set(s.val) and not set(s.val) & set(s.test)
    assert not set(s.train) & set(s.test)
    counts = np.bincount([g.labels[i] for i in s.train])
    assert counts.tolist() == [5, 5, 5]


def test_split_determinism():
    g = labeled_graph(60, 3)
    assert make_splits(g, 5, 15, seed=4) == make_splits(g, 5, 15, seed=4)
    assert make_splits(g, 5, 15, seed=4) != make_splits(g, 5, 15, seed=5)


def test_planetoid_sizes():
    g = labeled_graph(2708, 7)
    s = make_splits(g, 20, 500, seed=0)
    assert len(s.train) == 140 and len(s.val) == 500
    assert len(s.test) == 2708 - 640


def test_split_only_labeled_nodes():
    g = generate_heterogeneous(GenParamsHeterogeneous(seed=0))
    s = make_splits(g, 20, 30, seed=0)
    assert set(s.train + s.val + s.test) <= set(g.labels)
    assert len(s.train + s.val + s.test) == len(g.labels)


def test_insufficient_labels():
    with pytest.raises(ValueError):
        make_splits(labeled_graph(12, 3), train_per_class=5, val_count=1)
    with pytest.raises(ValueError):
        make_splits(labeled_graph(30, 3), train_per_class=5, val_count=15)


def test_splits_file_round_trip(tmp_path):
    g = labeled_graph(30, 3)
    s = make_splits(g, 3, 6, seed=1)
    save_splits(s, tmp_path / "splits.json")
    assert load_splits(tmp_path / "splits.json", g) == s


def test_overlapping_splits_rejected():
    with pytest.raises(GraphFormatError):
        SplitSet(train=[1, 2], val=[2], test=[3]).validate()
    with pytest.raises(GraphFormatError):
        SplitSet(train=[1], val=[], test=[3]).validate()
