"""Synthetic dataset generator for the path-pattern classification task.

Each graph embeds a 4-node typed path: positives carry A-B-C-D, negatives
A-B-E-D. Background nodes with uniformly random types over {A,B,C,D,E} are
attached with Erdos-Renyi edges, so telling the classes apart requires
finding the embedded path, not counting node types.
"""

from __future__ import annotations

import numpy as np

from attnwalk.graphs import AttributedGraph, Dataset, TypeVocabulary, build_graph
from attnwalk.rng import stream

TYPE_NAMES = ("A", "B", "C", "D", "E")
POSITIVE_PATH = (0, 1, 2, 3)  # A, B, C, D
NEGATIVE_PATH = (0, 1, 4, 3)  # A, B, E, D


def _one_graph(rng: np.random.Generator, positive: bool, bg_nodes: int, bg_edge_prob: float) -> AttributedGraph:
    r = len(TYPE_NAMES)
    pattern = POSITIVE_PATH if positive else NEGATIVE_PATH
    n = 4 + bg_nodes
    types = np.empty(n, dtype=np.int64)
    types[:4] = pattern
    types[4:] = rng.integers(0, r, size=bg_nodes)

    edges = [(0, 1), (1, 2), (2, 3)]
    # Erdos-Renyi over every pair except within the embedded path.
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if not (u < 4 and v < 4)]
    mask = rng.random(len(pairs)) < bg_edge_prob
    edges.extend(p for p, keep in zip(pairs, mask) if keep)

    degree = np.zeros(n, dtype=np.int64)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
    for node in range(4, n):
        if degree[node] == 0:
            other = int(rng.integers(0, n - 1))
            if other >= node:
                other += 1
            edges.append((node, other))
            degree[node] += 1
            degree[other] += 1

    attrs = np.zeros((n, r))
    attrs[np.arange(n), types] = 1.0
    return build_graph(types, attrs, edges, label=1 if positive else 0)


def generate_synthetic(
    n_graphs: int = 500,
    bg_nodes: int = 10,
    bg_edge_prob: float = 0.15,
    seed: int = 0,
) -> Dataset:
    """Generate a balanced dataset of path-pattern graphs, deterministic per seed."""
    if n_graphs <= 0 or n_graphs % 2 != 0:
        raise ValueError("n_graphs must be a positive even count")
    if bg_nodes < 4:
        raise ValueError("bg_nodes must be at least 4")
    if not 0.0 < bg_edge_prob < 1.0:
        raise ValueError("bg_edge_prob must lie strictly between 0 and 1")
    graphs = []
    for i in range(n_graphs):
        rng = stream(seed, "synth", i)
        graphs.append(_one_graph(rng, positive=(i % 2 == 0), bg_nodes=bg_nodes, bg_edge_prob=bg_edge_prob))
    return Dataset(
        graphs=graphs,
        vocab=TypeVocabulary(TYPE_NAMES),
        attr_dim=len(TYPE_NAMES),
        num_classes=2,
    )
