"""Bipartite user-item graph clustering by modularity maximization.

The graph's null model only spans user-item pairs: the expected weight of
an edge between user i and item j is degree(i) * degree(j) / E, and
modularity is the normalized excess of realized over expected weight
inside clusters.  Local moves in the style of Louvain maximize it over a
single level (no graph contraction): nodes are scanned in ascending node
id and moved to the adjacent cluster with the largest strictly positive
gain, until a full pass changes nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingTable, ItemRecord, ParseError, ValidationError

USER = "user"
ITEM = "item"


@dataclass(frozen=True)
class BipartiteGraph:
    """Deduplicated user-item interaction graph.

    Node ids are dense integers: users first (sorted by external id),
    then items (sorted by external id), so every derived quantity is
    invariant to input edge order.
    """

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    adjacency: tuple[tuple[int, ...], ...]  # node id -> sorted neighbor node ids

    @classmethod
    def from_edges(cls, edges) -> "BipartiteGraph":
        """Build from (user_id, item_id) pairs; duplicates collapse."""
        pairs = {(str(u), str(i)) for u, i in edges}
        if not pairs:
            raise ValidationError("graph needs at least one edge")
        users = tuple(sorted({u for u, _ in pairs}))
        items = tuple(sorted({i for _, i in pairs}))
        uidx = {u: n for n, u in enumerate(users)}
        iidx = {i: len(users) + n for n, i in enumerate(items)}
        neighbors: list[set[int]] = [set() for _ in range(len(users) + len(items))]
        for u, i in pairs:
            a, b = uidx[u], iidx[i]
            neighbors[a].add(b)
            neighbors[b].add(a)
        adjacency = tuple(tuple(sorted(ns)) for ns in neighbors)
        return cls(user_ids=users, item_ids=items, adjacency=adjacency)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_nodes(self) -> int:
        return len(self.user_ids) + len(self.item_ids)

    @property
    def n_edges(self) -> int:
        return sum(len(ns) for ns in self.adjacency) // 2

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def is_user(self, node: int) -> bool:
        return node < self.n_users

    def node_label(self, node: int) -> str:
        if self.is_user(node):
            return self.user_ids[node]
        return self.item_ids[node - self.n_users]


@dataclass
class ClusterAssignment:
    """Node id -> dense cluster id map over a bipartite graph."""

    graph: BipartiteGraph
    labels: np.ndarray  # int array, one entry per node
    move_log: list[tuple[int, int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.graph.n_nodes,):
            raise ValidationError("labels must cover every node exactly once")
        self.labels = labels

    @property
    def n_clusters(self) -> int:
        return int(len(np.unique(self.labels)))

    def item_clusters(self) -> dict[str, int]:
        """External item id -> cluster id (the downstream interface)."""
        offset = self.graph.n_users
        return {
            item: int(self.labels[offset + n])
            for n, item in enumerate(self.graph.item_ids)
        }

    def relabeled(self) -> "ClusterAssignment":
        """Dense cluster ids in [0, count), ordered by first node occurrence."""
        mapping: dict[int, int] = {}
        out = np.empty_like(self.labels)
        for node, lab in enumerate(self.labels):
            key = int(lab)
            if key not in mapping:
                mapping[key] = len(mapping)
            out[node] = mapping[key]
        return ClusterAssignment(self.graph, out, list(self.move_log))


def modularity(graph: BipartiteGraph, labels: np.ndarray) -> float:
    """Bipartite modularity of a node labeling.

    Q = (1/E) * sum over user-item pairs in the same cluster of
    (A_uv - deg(u) * deg(v) / E).
    """
    labels = np.asarray(labels)
    if labels.shape != (graph.n_nodes,):
        raise ValidationError("labels must cover every node exactly once")
    e = graph.n_edges
    total = 0.0
    for u in range(graph.n_users):
        ku = graph.degree(u)
        neighbor_set = set(graph.adjacency[u])
        for v in range(graph.n_users, graph.n_nodes):
            if labels[u] != labels[v]:
                continue
            a_uv = 1.0 if v in neighbor_set else 0.0
            total += a_uv - ku * graph.degree(v) / e
    return total / e


class _MoveState:
    """Bookkeeping for O(degree) local-move gains.

    For a user node, only the total item degree inside each cluster
    matters; for an item node, only the total user degree.  Those sums
    and per-cluster link counts give the modularity change of a move
    without touching the rest of the graph.
    """

    def __init__(self, graph: BipartiteGraph, labels: np.ndarray):
        self.graph = graph
        self.labels = labels
        self.e = graph.n_edges
        self.user_degree_sum: dict[int, int] = {}
        self.item_degree_sum: dict[int, int] = {}
        for node in range(graph.n_nodes):
            lab = int(labels[node])
            side = self.user_degree_sum if graph.is_user(node) else self.item_degree_sum
            side[lab] = side.get(lab, 0) + graph.degree(node)

    def links_to(self, node: int) -> dict[int, int]:
        counts: dict[int, int] = {}
        for nb in self.graph.adjacency[node]:
            lab = int(self.labels[nb])
            counts[lab] = counts.get(lab, 0) + 1
        return counts

    def gain(self, node: int, target: int, links: dict[int, int]) -> float:
        """Modularity change of moving `node` to cluster `target`."""
        current = int(self.labels[node])
        if target == current:
            return 0.0
        k = self.graph.degree(node)
        other = self.item_degree_sum if self.graph.is_user(node) else self.user_degree_sum
        links_new = links.get(target, 0)
        links_old = links.get(current, 0)
        deg_new = other.get(target, 0)
        deg_old = other.get(current, 0)
        delta_links = links_new - links_old
        delta_null = k * (deg_new - deg_old) / self.e
        return (delta_links - delta_null) / self.e

    def apply(self, node: int, target: int) -> None:
        current = int(self.labels[node])
        k = self.graph.degree(node)
        side = self.user_degree_sum if self.graph.is_user(node) else self.item_degree_sum
        side[current] -= k
        if side[current] == 0:
            del side[current]
        side[target] = side.get(target, 0) + k
        self.labels[node] = target


def louvain(graph: BipartiteGraph, seed: int = 0, max_passes: int = 50) -> ClusterAssignment:
    """Single-level local-move modularity maximization.

    Deterministic: the seed is accepted for interface stability but the
    scan order is ascending node id and ties break to the lowest cluster
    id, so output depends only on the graph.  Every accepted move
    strictly increases modularity; the move log records
    (node, from_cluster, to_cluster, gain) for audit.
    """
    del seed  # deterministic by design; see module docstring
    if max_passes < 1:
        raise ValidationError("max_passes must be >= 1")
    labels = np.arange(graph.n_nodes, dtype=np.int64)
    state = _MoveState(graph, labels)
    move_log: list[tuple[int, int, int, float]] = []
    fresh = graph.n_nodes  # ids below n_nodes are taken by the singleton init
    for _ in range(max_passes):
        moved = False
        for node in range(graph.n_nodes):
            links = state.links_to(node)
            current = int(labels[node])
            best_target = current
            best_gain = 0.0
            # Neighbor clusters in ascending id, then a fresh singleton
            # escape; strict improvement keeps every accepted move a real
            # modularity increase and ties resolve to the lowest id.
            for target in sorted(links) + [fresh]:
                if target == current:
                    continue
                gain = state.gain(node, target, links)
                if gain > best_gain + 1e-13:
                    best_gain = gain
                    best_target = target
            if best_target != current:
                move_log.append((node, current, best_target, best_gain))
                state.apply(node, best_target)
                if best_target == fresh:
                    fresh += 1
                moved = True
        if not moved:
            break
    return ClusterAssignment(graph, labels, move_log).relabeled()


def cluster_centroids(table: EmbeddingTable, item_clusters: dict[str, int]) -> dict[int, np.ndarray]:
    """Mean embedding per cluster over the clustered items present in `table`."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for item_id in sorted(item_clusters):
        if item_id not in table:
            continue
        cid = item_clusters[item_id]
        emb = table[item_id].embedding
        if cid in sums:
            sums[cid] = sums[cid] + emb
            counts[cid] += 1
        else:
            sums[cid] = emb.copy()
            counts[cid] = 1
    if not sums:
        raise ValidationError("no clustered item has an embedding in the table")
    return {cid: sums[cid] / counts[cid] for cid in sorted(sums)}


def assign_new_items(items, centroids: dict[int, np.ndarray]) -> dict[str, int]:
    """Nearest-centroid (largest dot product) labels for unseen items.

    Ties break to the lowest cluster id.
    """
    if not centroids:
        raise ValidationError("no centroids to assign against")
    cids = sorted(centroids)
    mat = np.stack([centroids[c] for c in cids])
    out: dict[str, int] = {}
    for rec in items:
        sims = mat @ rec.embedding
        best = int(np.argmax(sims))  # first max = lowest cluster id
        out[rec.item_id] = cids[best]
    return out


def save_clusters(path: str, item_clusters: dict[str, int]) -> None:
    """Write item cluster lines ordered by item_id."""
    with open(path, "w", encoding="utf-8") as fh:
        for item_id in sorted(item_clusters):
            doc = {"cluster_id": int(item_clusters[item_id]), "item_id": item_id}
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_clusters(path: str) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                item_id = doc["item_id"]
                cid = int(doc["cluster_id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad cluster line ({exc})", line=lineno) from exc
            if item_id in out:
                raise ParseError(f"duplicate cluster entry for {item_id!r}", lineno)
            if cid < 0:
                raise ParseError("cluster_id must be >= 0", lineno)
            out[item_id] = cid
    return out
