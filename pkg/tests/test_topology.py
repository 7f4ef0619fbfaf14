import numpy as np
import pytest

from hierfed.topology import (
    EmptyServer,
    LayerSkip,
    OrphanNode,
    TooDeep,
    TopologyError,
    build_topology,
    build_topology_from_edges,
    layer_counts,
    reduce_depth,
)

FIG1_SIZES = [11, 4, 2, 1]
FIG1_PARENTS = [[0, 0, 0, 1, 2, 2, 3, 3, 3, 3, 3], [0, 0, 1, 1], [0, 0]]


def fig1():
    return build_topology(FIG1_SIZES, parents=FIG1_PARENTS)


def baseline_6layer():
    return build_topology([96, 32, 16, 8, 4, 2, 1], fanouts=[3, 2, 2, 2, 2, 2])


def random_tree(rng, max_devices=20, max_layers=4):
    n_layers = int(rng.integers(1, max_layers + 1))
    sizes = [1]
    for _ in range(n_layers):
        sizes.append(int(rng.integers(sizes[-1], max(sizes[-1] + 1, min(sizes[-1] * 3, max_devices)) + 1)))
    sizes = sizes[::-1]
    parents = []
    for n in range(n_layers):
        # every upper node gets one child first, the rest land randomly
        p = list(range(sizes[n + 1])) + [int(rng.integers(0, sizes[n + 1])) for _ in range(sizes[n] - sizes[n + 1])]
        rng.shuffle(p)
        parents.append(p)
    return build_topology(sizes, parents=parents)


class TestBuild:
    def test_fig1_subtree_counts(self):
        t = fig1()
        assert t.subtree_devices[1] == (3, 1, 2, 5)
        assert t.subtree_devices[2] == (4, 7)
        assert t.subtree_devices[3] == (11,)

    def test_single_device_chain(self):
        t = build_topology([1, 1], parents=[[0]])
        assert t.num_layers == 1
        assert t.subtree_devices[1] == (1,)

    def test_six_layer_setup(self):
        t = baseline_6layer()
        assert all(c == 3 for c in t.subtree_devices[1])
        assert all(c == 48 for c in t.subtree_devices[5])
        assert sum(t.subtree_devices[5]) == 96

    def test_children_match_parents(self):
        t = fig1()
        assert t.children_of(1, 3) == (6, 7, 8, 9, 10)
        assert t.children_of(2, 1) == (2, 3)
        assert t.device_indices(2, 0) == [0, 1, 2, 3]

    def test_orphan_out_of_range(self):
        with pytest.raises(OrphanNode):
            build_topology([2, 1, 1], parents=[[0, 5], [0]])

    def test_orphan_short_list(self):
        with pytest.raises(OrphanNode):
            build_topology([3, 2, 1], parents=[[0, 1], [0, 0]])

    def test_empty_server(self):
        with pytest.raises(EmptyServer):
            build_topology([2, 2, 1], parents=[[0, 0], [0, 0]])

    def test_layer_skip(self):
        edges = {(0, 0): (2, 0), (0, 1): (1, 0), (1, 0): (2, 0)}
        with pytest.raises(LayerSkip):
            build_topology_from_edges([2, 1, 1], edges)

    def test_edges_roundtrip(self):
        edges = {(0, 0): (1, 0), (0, 1): (1, 0), (1, 0): (2, 0)}
        t = build_topology_from_edges([2, 1, 1], edges)
        assert t.subtree_devices[1] == (2,)

    def test_top_layer_must_be_cloud(self):
        with pytest.raises(TopologyError):
            build_topology([4, 2], parents=[[0, 0, 1, 1]])


class TestReduceDepth:
    def test_vi_reduction_examples(self):
        t6 = baseline_6layer()
        t4 = reduce_depth(t6, 2)
        assert t4.layer_sizes == (96, 8, 4, 2, 1)
        assert all(c == 12 for c in t4.subtree_devices[1])
        t1 = reduce_depth(t6, 5)
        assert t1.layer_sizes == (96, 1)
        assert t1.subtree_devices[1] == (96,)

    def test_identity(self):
        t6 = baseline_6layer()
        assert reduce_depth(t6, 0) is t6

    def test_too_deep(self):
        with pytest.raises(TooDeep):
            reduce_depth(baseline_6layer(), 6)

    def test_composition(self):
        t6 = baseline_6layer()
        for a, b in [(1, 1), (2, 1), (1, 3)]:
            left = reduce_depth(t6, a + b)
            right = reduce_depth(reduce_depth(t6, a), b)
            assert left.layer_sizes == right.layer_sizes
            assert left.parents == right.parents

    def test_arbitrary_tree_rejected(self):
        with pytest.raises(TopologyError):
            reduce_depth(fig1(), 1)


class TestCountsAndInvariants:
    def test_layer_counts_examples(self):
        assert layer_counts(fig1()) == (4, 2, 11)
        assert layer_counts(build_topology([1, 1], parents=[[0]])) == (1,)
        assert layer_counts(baseline_6layer()) == (32, 16, 8, 4, 2, 96)

    def test_conservation_randomized(self):
        rng = np.random.default_rng(1234)
        for _ in range(50):
            t = random_tree(rng)
            for layer in range(1, t.num_layers + 1):
                for node in range(t.layer_sizes[layer]):
                    kids = t.children_of(layer, node)
                    assert t.subtree_count(layer, node) == sum(
                        t.subtree_count(layer - 1, c) for c in kids
                    )
                assert sum(t.subtree_devices[layer]) == t.n_devices
