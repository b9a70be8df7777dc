"""Attributed-graph data model, dataset I/O, and neighborhood access.

Datasets are immutable after load. The walk policy sees a graph only
through ``neighbor_view`` (plus ``node_count`` for choosing a start), which
is what keeps its working set at one node's neighborhood; ``AccessLogGraph``
wraps a graph to audit that contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class DatasetError(Exception):
    """Raised for malformed dataset files or data that cannot satisfy a request."""


@dataclass(frozen=True)
class TypeVocabulary:
    """Ordered node-type names; order is lexicographic for reproducibility."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DatasetError("type vocabulary contains duplicate names")
        if list(self.names) != sorted(self.names):
            raise DatasetError("type vocabulary must be lexicographically sorted")

    @classmethod
    def from_types(cls, types) -> "TypeVocabulary":
        return cls(tuple(sorted(set(types))))

    @property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class NeighborView:
    """One-hop neighborhood of a node: ids, types, and an attrs matrix."""

    neighbor_ids: np.ndarray
    neighbor_types: np.ndarray
    neighbor_attrs: np.ndarray


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected simple graph with per-node attributes, types, and a label.

    ``adjacency`` holds one sorted int64 array of neighbor ids per node.
    """

    adjacency: tuple[np.ndarray, ...]
    attrs: np.ndarray
    types: np.ndarray
    label: int

    @property
    def node_count(self) -> int:
        return self.types.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.attrs.shape[1]

    def neighbor_view(self, node: int) -> NeighborView:
        if not 0 <= node < self.node_count:
            raise IndexError(f"node id {node} out of range [0, {self.node_count})")
        ids = self.adjacency[node]
        return NeighborView(
            neighbor_ids=ids,
            neighbor_types=self.types[ids],
            neighbor_attrs=self.attrs[ids],
        )


class AccessLogGraph:
    """Graph adapter recording which nodes had their neighborhoods viewed."""

    def __init__(self, graph: AttributedGraph):
        self._graph = graph
        self.viewed_nodes: list[int] = []

    @property
    def node_count(self) -> int:
        return self._graph.node_count

    @property
    def label(self) -> int:
        return self._graph.label

    def neighbor_view(self, node: int) -> NeighborView:
        self.viewed_nodes.append(int(node))
        return self._graph.neighbor_view(node)


@dataclass
class Dataset:
    graphs: list[AttributedGraph]
    vocab: TypeVocabulary
    attr_dim: int
    num_classes: int

    def __len__(self) -> int:
        return len(self.graphs)

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def subset(self, ids) -> "Dataset":
        return Dataset(
            graphs=[self.graphs[i] for i in ids],
            vocab=self.vocab,
            attr_dim=self.attr_dim,
            num_classes=self.num_classes,
        )


def neighbor_view(graph: AttributedGraph, node: int) -> NeighborView:
    """One-hop neighborhood of ``node``; the walk policy's only graph access."""
    return graph.neighbor_view(node)


def build_graph(
    node_types: np.ndarray,
    attrs: np.ndarray,
    edges,
    label: int,
    *,
    graph_index: int | None = None,
) -> AttributedGraph:
    """Assemble and validate a graph from an undirected edge list."""
    where = f"graph {graph_index}" if graph_index is not None else "graph"
    n = len(node_types)
    neighbors: list[set[int]] = [set() for _ in range(n)]
    seen = set()
    for e in edges:
        if len(e) != 2:
            raise DatasetError(f"{where}: edge {e!r} is not a pair")
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetError(f"{where}: edge ({u}, {v}) references a missing node")
        if u == v:
            raise DatasetError(f"{where}: self-loop on node {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise DatasetError(f"{where}: duplicate edge ({u}, {v})")
        seen.add(key)
        neighbors[u].add(v)
        neighbors[v].add(u)
    adjacency = []
    for node, ns in enumerate(neighbors):
        if not ns:
            raise DatasetError(f"{where}: node {node} has degree 0")
        row = np.array(sorted(ns), dtype=np.int64)
        row.setflags(write=False)
        adjacency.append(row)
    attrs = np.ascontiguousarray(attrs, dtype=np.float64)
    if not np.all(np.isfinite(attrs)):
        raise DatasetError(f"{where}: non-finite attribute values")
    types = np.ascontiguousarray(node_types, dtype=np.int64)
    attrs.setflags(write=False)
    types.setflags(write=False)
    return AttributedGraph(adjacency=tuple(adjacency), attrs=attrs, types=types, label=int(label))


def load_dataset(path) -> Dataset:
    """Load and validate a dataset from the JSON schema.

    Top level: {"attr_dim": int, "num_classes": int, "graphs": [...]};
    each graph: {"label": int, "nodes": [{"type": str, "attrs": [...]}, ...],
    "edges": [[u, v], ...]} with 0-based ids and each undirected edge once.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot parse dataset file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError("dataset document must be a JSON object")
    for key in ("attr_dim", "num_classes", "graphs"):
        if key not in doc:
            raise DatasetError(f"dataset document missing key {key!r}")
    attr_dim = int(doc["attr_dim"])
    num_classes = int(doc["num_classes"])
    if attr_dim < 1 or num_classes < 1:
        raise DatasetError("attr_dim and num_classes must be positive")

    type_names = set()
    for gi, gdoc in enumerate(doc["graphs"]):
        for node in gdoc.get("nodes", []):
            if not isinstance(node.get("type"), str):
                raise DatasetError(f"graph {gi}: node type must be a string")
            type_names.add(node["type"])
    if not type_names:
        raise DatasetError("dataset contains no nodes")
    vocab = TypeVocabulary.from_types(type_names)
    type_index = vocab.index

    graphs = []
    for gi, gdoc in enumerate(doc["graphs"]):
        nodes = gdoc.get("nodes")
        if not nodes:
            raise DatasetError(f"graph {gi}: has no nodes")
        label = int(gdoc.get("label", -1))
        if not 0 <= label < num_classes:
            raise DatasetError(f"graph {gi}: label {label} outside [0, {num_classes})")
        types = np.array([type_index[node["type"]] for node in nodes], dtype=np.int64)
        attrs = np.zeros((len(nodes), attr_dim))
        for ni, node in enumerate(nodes):
            row = node.get("attrs")
            if row is None or len(row) != attr_dim:
                raise DatasetError(f"graph {gi}: node {ni} needs exactly {attr_dim} attrs")
            attrs[ni] = row
        graphs.append(build_graph(types, attrs, gdoc.get("edges", []), label, graph_index=gi))
    return Dataset(graphs=graphs, vocab=vocab, attr_dim=attr_dim, num_classes=num_classes)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to the JSON schema (each undirected edge once)."""
    doc = {
        "attr_dim": dataset.attr_dim,
        "num_classes": dataset.num_classes,
        "graphs": [],
    }
    names = dataset.vocab.names
    for g in dataset.graphs:
        edges = []
        for u in range(g.node_count):
            for v in g.adjacency[u]:
                if u < v:
                    edges.append([int(u), int(v)])
        doc["graphs"].append(
            {
                "label": int(g.label),
                "nodes": [
                    {"type": names[g.types[i]], "attrs": list(map(float, g.attrs[i]))}
                    for i in range(g.node_count)
                ],
                "edges": edges,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
