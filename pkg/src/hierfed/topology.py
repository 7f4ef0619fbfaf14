"""Multi-layer aggregation trees: devices at layer 0, edge layers above, cloud on top.

A tree with N aggregation layers has N+1 node layers: layer 0 holds the
devices, layers 1..N-1 hold edge servers, and layer N holds the single cloud
node. Node ids are dense integers per layer, assigned in construction order,
so every map is index-based and iteration order is reproducible.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field


class TopologyError(ValueError):
    """Base class for malformed hierarchy descriptions."""


class OrphanNode(TopologyError):
    """A non-cloud node has no (valid) parent."""


class EmptyServer(TopologyError):
    """An internal node has zero children."""


class LayerSkip(TopologyError):
    """A parent edge does not connect adjacent layers."""


class TooDeep(TopologyError):
    """Depth reduction asked to remove more edge layers than exist."""


@dataclass(frozen=True)
class Topology:
    """Validated N-layer hierarchy.

    Attributes:
        layer_sizes: node counts per layer, ``layer_sizes[0]`` devices up to
            ``layer_sizes[N] == 1`` (cloud).
        parents: ``parents[n][i]`` is the parent index (in layer n+1) of node
            i at layer n, for n = 0..N-1.
        children: ``children[n][j]`` is the tuple of layer-(n-1) child indices
            of node j at layer n, for n = 1..N.
        subtree_devices: ``subtree_devices[n][i]`` is the number of layer-0
            descendants of node i at layer n (1 for devices themselves).
        fanouts: per-layer uniform fan-out rule when the tree was built from
            one (devices per layer-1 node first), else None. Required by
            reduce_depth.
    """

    layer_sizes: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    children: tuple[tuple[tuple[int, ...], ...], ...] = field(repr=False)
    subtree_devices: tuple[tuple[int, ...], ...] = field(repr=False)
    fanouts: tuple[int, ...] | None = None

    @property
    def num_layers(self) -> int:
        """Number of aggregation layers N."""
        return len(self.layer_sizes) - 1

    @property
    def n_devices(self) -> int:
        return self.layer_sizes[0]

    def children_of(self, layer: int, index: int) -> tuple[int, ...]:
        """Child indices (in layer-1 below) of node `index` at `layer` >= 1."""
        return self.children[layer - 1][index]

    def subtree_count(self, layer: int, index: int) -> int:
        """Number of devices in the subtree rooted at (layer, index)."""
        return self.subtree_devices[layer][index]

    def device_indices(self, layer: int, index: int) -> list[int]:
        """All layer-0 descendants of (layer, index), ascending."""
        if layer == 0:
            return [index]
        out: list[int] = []
        for c in self.children_of(layer, index):
            out.extend(self.device_indices(layer - 1, c))
        return sorted(out)


def build_topology(
    layer_sizes: list[int] | tuple[int, ...],
    parents: list[list[int]] | None = None,
    fanouts: list[int] | tuple[int, ...] | None = None,
) -> Topology:
    """Construct and validate a hierarchy.

    Exactly one of `parents` / `fanouts` must be given. `parents[n][i]` names
    the parent (index in layer n+1) of node i at layer n. `fanouts[n]` is the
    uniform number of layer-n children per layer-(n+1) node; children are
    assigned in contiguous index blocks.

    Raises OrphanNode, EmptyServer, or LayerSkip on malformed input.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise TopologyError("need at least devices and a cloud layer")
    if any(s < 1 for s in sizes):
        raise TopologyError(f"layer sizes must be positive, got {sizes}")
    if sizes[-1] != 1:
        raise TopologyError(f"top layer must hold exactly the cloud, got {sizes[-1]}")

    if (parents is None) == (fanouts is None):
        raise TopologyError("give exactly one of parents= or fanouts=")

    kept_fanouts: tuple[int, ...] | None = None
    if fanouts is not None:
        kept_fanouts = tuple(int(f) for f in fanouts)
        if len(kept_fanouts) != len(sizes) - 1:
            raise TopologyError("fanouts must have one entry per aggregation layer")
        parents = []
        for n, f in enumerate(kept_fanouts):
            if f < 1 or sizes[n] != f * sizes[n + 1]:
                raise TopologyError(
                    f"fan-out {f} at layer {n} inconsistent with sizes "
                    f"{sizes[n]} -> {sizes[n + 1]}"
                )
            parents.append([i // f for i in range(sizes[n])])

    assert parents is not None
    if len(parents) != len(sizes) - 1:
        raise TopologyError("parents must cover every non-cloud layer")

    parent_tuples: list[tuple[int, ...]] = []
    for n, layer_parents in enumerate(parents):
        if len(layer_parents) != sizes[n]:
            raise OrphanNode(
                f"layer {n}: {len(layer_parents)} parent entries for {sizes[n]} nodes"
            )
        for i, p in enumerate(layer_parents):
            if not isinstance(p, numbers.Integral) or isinstance(p, bool):
                raise OrphanNode(f"node {i} at layer {n} has non-integer parent {p!r}")
            if not 0 <= p < sizes[n + 1]:
                raise OrphanNode(
                    f"node {i} at layer {n} names parent {p} outside layer {n + 1}"
                )
        parent_tuples.append(tuple(int(p) for p in layer_parents))

    children: list[tuple[tuple[int, ...], ...]] = []
    for n in range(1, len(sizes)):
        buckets: list[list[int]] = [[] for _ in range(sizes[n])]
        for i, p in enumerate(parent_tuples[n - 1]):
            buckets[p].append(i)
        for j, b in enumerate(buckets):
            if not b:
                raise EmptyServer(f"node {j} at layer {n} has no children")
        children.append(tuple(tuple(b) for b in buckets))

    subtree: list[tuple[int, ...]] = [tuple([1] * sizes[0])]
    for n in range(1, len(sizes)):
        subtree.append(
            tuple(sum(subtree[n - 1][c] for c in children[n - 1][j]) for j in range(sizes[n]))
        )
    assert subtree[-1][0] == sizes[0]

    return Topology(
        layer_sizes=sizes,
        parents=tuple(parent_tuples),
        children=tuple(children),
        subtree_devices=tuple(subtree),
        fanouts=kept_fanouts,
    )


def build_topology_from_edges(
    layer_sizes: list[int] | tuple[int, ...],
    edges: dict[tuple[int, int], tuple[int, int]],
) -> Topology:
    """Build from explicit (layer, index) -> (layer, index) parent edges.

    Unlike build_topology's positional form this can express (and therefore
    reject) layer-skipping edges.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    parents: list[list[int | None]] = [[None] * sizes[n] for n in range(len(sizes) - 1)]
    for (n, i), (pn, pi) in edges.items():
        if pn != n + 1:
            raise LayerSkip(f"edge ({n},{i}) -> ({pn},{pi}) skips layers")
        if not (0 <= n < len(sizes) - 1 and 0 <= i < sizes[n]):
            raise TopologyError(f"edge source ({n},{i}) outside the tree")
        parents[n][i] = pi
    for n, layer_parents in enumerate(parents):
        for i, p in enumerate(layer_parents):
            if p is None:
                raise OrphanNode(f"node {i} at layer {n} has no parent edge")
    return build_topology(sizes, parents=[[int(p) for p in lp] for lp in parents])  # type: ignore[union-attr]


def reduce_depth(t: Topology, removed_lower_layers: int) -> Topology:
    """Drop the lowest k edge layers, reattaching devices to the survivors.

    Only defined for trees built from a uniform fan-out rule; the merged
    device fan-out is the product of the removed levels' fan-outs.
    """
    k = int(removed_lower_layers)
    if k < 0:
        raise TopologyError("removed_lower_layers must be >= 0")
    if k == 0:
        return t
    if k >= t.num_layers:
        raise TooDeep(f"cannot remove {k} of {t.num_layers} aggregation layers")
    if t.fanouts is None:
        raise TopologyError("reduce_depth needs a uniform fan-out topology")
    merged = math.prod(t.fanouts[: k + 1])
    new_fanouts = (merged,) + t.fanouts[k + 1 :]
    new_sizes = (t.layer_sizes[0],) + t.layer_sizes[k + 1 :]
    return build_topology(new_sizes, fanouts=new_fanouts)


def layer_counts(t: Topology) -> tuple[int, ...]:
    """Edge-server counts (C_1, ..., C_{N-1}) followed by the device total."""
    return tuple(t.layer_sizes[1:-1]) + (t.n_devices,)
