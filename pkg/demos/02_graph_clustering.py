"""Interaction graphs and modularity-driven clustering.

Builds a user/item bipartite graph from raw interaction pairs, walks
through what modularity rewards, replays the greedy move log, and shows
community recovery on a graph with two planted blocks.

Run: python3 demos/02_graph_clustering.py
"""

import numpy as np

from diverank.clustering import BipartiteGraph, louvain, modularity


def section(title):
    print("\n" + "-" * 64)
    print(title)
    print("-" * 64)


def planted_graph(rng, per_block=5):
    """Two dense blocks of users and items with a few cross edges."""
    edges = []
    n = 2 * per_block
    for u in range(n):
        for i in range(n):
            same = (u < per_block) == (i < per_block)
            p = 0.9 if same else 0.05
            if rng.random() < p:
                edges.append((f"u{u}", f"x{i}"))
    return BipartiteGraph.from_edges(edges)


def main():
    section("1. A graph from raw interaction pairs")
    edges = [
        ("ana", "jazz_01"), ("ana", "jazz_02"), ("ana", "jazz_03"),
        ("bo", "jazz_01"), ("bo", "jazz_02"),
        ("cat", "salsa_01"), ("cat", "salsa_02"),
        ("dee", "salsa_01"), ("dee", "salsa_02"), ("dee", "jazz_03"),
    ]
    graph = BipartiteGraph.from_edges(edges)
    print(f"{graph.n_users} users + {len(graph.item_ids)} items = "
          f"{graph.n_nodes} nodes, {graph.n_edges} edges")
    print("users:", graph.user_ids)
    print("items:", graph.item_ids)

    section("2. Modularity scores partitions, not nodes")
    singletons = np.arange(graph.n_nodes)
    genre = np.array([0, 0, 1, 1, 0, 0, 0, 1, 1])  # jazz block vs salsa block
    lumped = np.zeros(graph.n_nodes, dtype=int)
    for name, labels in [("each node alone", singletons),
                         ("everything in one cluster", lumped),
                         ("split along genres", genre)]:
        print(f"Q({name}) = {modularity(graph, labels):+.4f}")
    print("the genre split wins: edges concentrate inside its clusters")

    section("3. Greedy optimization and its audit trail")
    result = louvain(graph)
    print(f"louvain found {result.n_clusters} clusters, "
          f"Q = {modularity(graph, result.labels):.4f}")
    for node, src, dst, gain in result.move_log:
        print(f"  move {graph.node_label(node):>8} from cluster {src} "
              f"to {dst}: dQ = +{gain:.4f}")
    print("item -> cluster view:", result.item_clusters())

    section("4. Recovering two planted blocks")
    rng = np.random.default_rng(5)
    planted = planted_graph(rng)
    found = louvain(planted)
    labels = found.labels
    block_a = sorted(planted.node_label(n) for n in range(planted.n_nodes)
                     if labels[n] == labels[0])
    print(f"clusters found: {found.n_clusters}")
    print("members with u0:", block_a)
    print("dense blocks come back out even with a handful of cross edges")


if __name__ == "__main__":
    main()
