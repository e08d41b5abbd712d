"""Typed heterogeneous graphs, edge-type dependency sets and ETUD projection.

Nodes carry a string id and a node type; edges carry a source, a target, an
edge type and a non-negative weight.  Edge types are keyed by the triple
``(name, start type, end type)`` so the same relation name may be reused
between different node-type pairs (``performsIn`` links artists to songs and
to albums).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NodeType",
    "EdgeType",
    "TypeRegistry",
    "HeteroGraph",
    "HomoGraph",
    "GraphError",
    "dependency_sets",
    "apply_etud",
    "load_graph",
    "save_graph",
    "load_etud",
    "save_etud",
    "read_records",
]


class GraphError(ValueError):
    """Raised for malformed graph input or inconsistent typing."""


@dataclass(frozen=True)
class NodeType:
    id: int
    name: str


@dataclass(frozen=True)
class EdgeType:
    id: int
    name: str
    start: NodeType
    end: NodeType

    @property
    def qualified(self) -> str:
        return f"{self.name}[{self.start.name}->{self.end.name}]"


class TypeRegistry:
    """Registration-ordered node and edge types."""

    def __init__(self) -> None:
        self.node_types: list[NodeType] = []
        self.edge_types: list[EdgeType] = []
        self._nodes_by_name: dict[str, NodeType] = {}
        self._edges_by_key: dict[tuple[str, int, int], EdgeType] = {}

    def register_node_type(self, name: str) -> NodeType:
        if not name:
            raise GraphError("node type name must be non-empty")
        nt = self._nodes_by_name.get(name)
        if nt is None:
            nt = NodeType(len(self.node_types), name)
            self.node_types.append(nt)
            self._nodes_by_name[name] = nt
        return nt

    def node_type(self, name: str) -> NodeType:
        try:
            return self._nodes_by_name[name]
        except KeyError:
            raise GraphError(f"unknown node type {name!r}") from None

    def register_edge_type(
        self, name: str, start: NodeType | str, end: NodeType | str
    ) -> EdgeType:
        if not name:
            raise GraphError("edge type name must be non-empty")
        start = self._resolve(start)
        end = self._resolve(end)
        key = (name, start.id, end.id)
        et = self._edges_by_key.get(key)
        if et is None:
            et = EdgeType(len(self.edge_types), name, start, end)
            self.edge_types.append(et)
            self._edges_by_key[key] = et
        return et

    def _resolve(self, nt: NodeType | str) -> NodeType:
        name = nt if isinstance(nt, str) else nt.name
        known = self._nodes_by_name.get(name)
        if known is None or (isinstance(nt, NodeType) and known != nt):
            raise GraphError(f"unknown node type {name!r}")
        return known

    def label(self, et: EdgeType) -> str:
        """File-level key: the bare name unless another type shares it."""
        if sum(e.name == et.name for e in self.edge_types) > 1:
            return et.qualified
        return et.name

    def lookup_edge_label(self, label: str) -> EdgeType:
        for et in self.edge_types:
            if et.qualified == label:
                return et
        matches = [et for et in self.edge_types if et.name == label]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise GraphError(f"unknown edge type {label!r}")
        raise GraphError(
            f"ambiguous edge type {label!r}; use one of "
            + ", ".join(et.qualified for et in matches)
        )

    def __len__(self) -> int:
        return len(self.edge_types)


@dataclass(frozen=True, eq=False)
class HeteroGraph:
    """Immutable directed typed multigraph.

    Edges are stored column-wise in numpy arrays: ``src``, ``dst`` (dense
    node indices), ``etype`` (edge type ids) and ``weight``.
    """

    registry: TypeRegistry
    node_ids: tuple[str, ...]
    node_type: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray
    weight: np.ndarray
    index: dict[str, int] = field(repr=False)

    @classmethod
    def build(
        cls,
        registry: TypeRegistry,
        nodes: Iterable[tuple[str, str]],
        edges: Iterable[tuple[str, str, str | EdgeType, float]],
    ) -> "HeteroGraph":
        """Build a graph from ``(node id, type name)`` pairs and edge tuples.

        Edge types may be given as :class:`EdgeType` objects or as names, in
        which case the endpoint types are taken from the referenced nodes.
        """
        node_ids: list[str] = []
        ntypes: list[int] = []
        index: dict[str, int] = {}
        for nid, tname in nodes:
            if nid in index:
                raise GraphError(f"duplicate node id {nid!r}")
            index[nid] = len(node_ids)
            node_ids.append(nid)
            ntypes.append(registry.register_node_type(tname).id)

        src, dst, ety, wts = [], [], [], []
        for s, t, et, w in edges:
            for nid in (s, t):
                if nid not in index:
                    raise GraphError(f"edge references unknown node {nid!r}")
            i, j = index[s], index[t]
            if not isinstance(et, EdgeType):
                et = registry.register_edge_type(
                    et,
                    registry.node_types[ntypes[i]],
                    registry.node_types[ntypes[j]],
                )
            w = float(w)
            if not (w >= 0.0 and math.isfinite(w)):
                raise GraphError(f"edge {s}->{t} has invalid weight {w!r}")
            src.append(i)
            dst.append(j)
            ety.append(et.id)
            wts.append(w)

        g = cls(
            registry=registry,
            node_ids=tuple(node_ids),
            node_type=np.asarray(ntypes, dtype=np.int64),
            src=np.asarray(src, dtype=np.int64),
            dst=np.asarray(dst, dtype=np.int64),
            etype=np.asarray(ety, dtype=np.int64),
            weight=np.asarray(wts, dtype=np.float64),
            index=index,
        )
        g.check()
        return g

    def check(self) -> None:
        """Assert type consistency of every edge."""
        if len(self.src) == 0:
            return
        starts = np.array([et.start.id for et in self.registry.edge_types])
        ends = np.array([et.end.id for et in self.registry.edge_types])
        bad = (self.node_type[self.src] != starts[self.etype]) | (
            self.node_type[self.dst] != ends[self.etype]
        )
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            et = self.registry.edge_types[self.etype[k]]
            raise GraphError(
                f"edge {self.node_ids[self.src[k]]}->{self.node_ids[self.dst[k]]} "
                f"does not match edge type {et.qualified}"
            )
        if (self.weight < 0).any():
            raise GraphError("negative edge weight")

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def edge_types(self) -> list[EdgeType]:
        return self.registry.edge_types

    def nodes_of_type(self, name: str) -> np.ndarray:
        nt = self.registry.node_type(name)
        return np.flatnonzero(self.node_type == nt.id)

    def out_edges(self, node: str) -> list[tuple[str, EdgeType, float]]:
        i = self.index[node]
        ks = np.flatnonzero(self.src == i)
        return [
            (self.node_ids[self.dst[k]], self.edge_types[self.etype[k]], float(self.weight[k]))
            for k in ks
        ]

    def edge_records(self) -> list[tuple[str, str, str, float]]:
        return [
            (
                self.node_ids[s],
                self.node_ids[t],
                self.registry.label(self.edge_types[e]),
                float(w),
            )
            for s, t, e, w in zip(self.src, self.dst, self.etype, self.weight)
        ]


@dataclass(frozen=True, eq=False)
class HomoGraph:
    """Single-relation weighted graph sharing the node set of its source."""

    node_ids: tuple[str, ...]
    node_type: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    index: dict[str, int] = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def symmetric_adjacency(self) -> sp.csr_matrix:
        """``W + W^T`` as CSR; parallel edges are summed."""
        n = self.num_nodes
        rows = np.concatenate([self.src, self.dst])
        cols = np.concatenate([self.dst, self.src])
        vals = np.concatenate([self.weight, self.weight])
        a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        a.sum_duplicates()
        return a

    @classmethod
    def from_edges(
        cls,
        node_ids: Sequence[str],
        edges: Iterable[tuple[str, str, float]],
    ) -> "HomoGraph":
        index = {nid: i for i, nid in enumerate(node_ids)}
        triples = [(index[s], index[t], float(w)) for s, t, w in edges]
        arr = np.asarray(triples, dtype=np.float64).reshape(-1, 3)
        return cls(
            node_ids=tuple(node_ids),
            node_type=np.zeros(len(node_ids), dtype=np.int64),
            src=arr[:, 0].astype(np.int64),
            dst=arr[:, 1].astype(np.int64),
            weight=arr[:, 2].copy(),
            index=index,
        )


class _DisjointSet:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def dependency_sets(edge_types: Sequence[EdgeType]) -> list[frozenset[EdgeType]]:
    """Group edge types that share a start or an end node type.

    The grouping is transitively closed.  Groups are returned ordered by
    their smallest edge-type id; the result does not depend on the order of
    ``edge_types``.
    """
    if not edge_types:
        raise GraphError("no edge types registered")
    ets = sorted(edge_types, key=lambda e: e.id)
    ds = _DisjointSet(len(ets))
    first_by_start: dict[int, int] = {}
    first_by_end: dict[int, int] = {}
    for k, et in enumerate(ets):
        ds.union(k, first_by_start.setdefault(et.start.id, k))
        ds.union(k, first_by_end.setdefault(et.end.id, k))
    groups: dict[int, list[EdgeType]] = {}
    for k, et in enumerate(ets):
        groups.setdefault(ds.find(k), []).append(et)
    return [frozenset(g) for _, g in sorted(groups.items())]


def _etud_vector(registry: TypeRegistry, w: Mapping | Sequence[float] | np.ndarray) -> np.ndarray:
    n = len(registry.edge_types)
    if isinstance(w, Mapping):
        vec = np.full(n, np.nan)
        for key, val in w.items():
            if isinstance(key, EdgeType):
                vec[key.id] = float(val)
            elif isinstance(key, (int, np.integer)):
                vec[int(key)] = float(val)
            else:
                vec[registry.lookup_edge_label(key).id] = float(val)
    else:
        vec = np.asarray(w, dtype=np.float64)
        if vec.shape != (n,):
            raise GraphError(f"expected {n} edge-type weights, got shape {vec.shape}")
    return vec


def apply_etud(g: HeteroGraph, w: Mapping | Sequence[float] | np.ndarray) -> HomoGraph:
    """Multiply each edge weight by the usefulness weight of its type.

    ``w`` is either a vector indexed by edge-type id or a mapping keyed by
    :class:`EdgeType`, edge-type id, or file label.
    """
    vec = _etud_vector(g.registry, w)
    present = np.unique(g.etype)
    missing = present[np.isnan(vec[present])]
    if missing.size:
        names = ", ".join(g.registry.label(g.edge_types[k]) for k in missing)
        raise GraphError(f"missing ETUD weight for edge type(s): {names}")
    if (vec[present] < 0).any():
        raise GraphError("ETUD weights must be non-negative")
    return HomoGraph(
        node_ids=g.node_ids,
        node_type=g.node_type,
        src=g.src,
        dst=g.dst,
        weight=g.weight * vec[g.etype],
        index=g.index,
    )


# --
# File IO


def read_records(path: str | os.PathLike, min_fields: int, max_fields: int) -> Iterable[tuple[int, list[str]]]:
    """Yield ``(line number, fields)`` for TAB-separated non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if not min_fields <= len(fields) <= max_fields or any(not f for f in fields):
                raise GraphError(f"{path}:{lineno}: malformed line {line!r}")
            yield lineno, fields


def load_graph(nodes_path: str | os.PathLike, edges_path: str | os.PathLike) -> HeteroGraph:
    registry = TypeRegistry()
    nodes = [(f[0], f[1]) for _, f in read_records(nodes_path, 2, 2)]
    index = {}
    for nid, tname in nodes:
        if nid in index:
            raise GraphError(f"{nodes_path}: duplicate node id {nid!r}")
        index[nid] = tname

    edges = []
    for lineno, f in read_records(edges_path, 3, 4):
        s, t, name = f[0], f[1], f[2]
        for nid in (s, t):
            if nid not in index:
                raise GraphError(f"{edges_path}:{lineno}: unknown node {nid!r}")
        try:
            w = float(f[3]) if len(f) == 4 else 1.0
        except ValueError:
            raise GraphError(f"{edges_path}:{lineno}: bad weight {f[3]!r}") from None
        if not (w >= 0.0 and math.isfinite(w)):
            raise GraphError(f"{edges_path}:{lineno}: bad weight {f[3]!r}")
        if "[" in name and name.endswith("]"):
            base, ends = name[:-1].split("[", 1)
            start_name, _, end_name = ends.partition("->")
            if (index[s], index[t]) != (start_name, end_name):
                raise GraphError(
                    f"{edges_path}:{lineno}: edge type {name} does not match "
                    f"node types {index[s]}->{index[t]}"
                )
            name = base
        edges.append((s, t, name, w))
    return HeteroGraph.build(registry, nodes, edges)


def _atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return repr(float(x))


def save_graph(g: HeteroGraph, nodes_path: str | os.PathLike, edges_path: str | os.PathLike) -> None:
    nt = g.registry.node_types
    _atomic_write(
        nodes_path,
        "".join(f"{nid}\t{nt[t].name}\n" for nid, t in zip(g.node_ids, g.node_type)),
    )
    _atomic_write(
        edges_path,
        "".join(f"{s}\t{t}\t{lab}\t{_fmt(w)}\n" for s, t, lab, w in g.edge_records()),
    )


def load_etud(path: str | os.PathLike, registry: TypeRegistry) -> np.ndarray:
    """Read an ETUD file into a vector indexed by edge-type id."""
    vec = np.full(len(registry.edge_types), np.nan)
    for lineno, f in read_records(path, 2, 2):
        try:
            et = registry.lookup_edge_label(f[0])
            vec[et.id] = float(f[1])
        except (GraphError, ValueError) as exc:
            raise GraphError(f"{path}:{lineno}: {exc}") from None
    return vec


def save_etud(path: str | os.PathLike, registry: TypeRegistry, weights: Sequence[float]) -> None:
    _atomic_write(
        path,
        "".join(
            f"{registry.label(et)}\t{_fmt(weights[et.id])}\n" for et in registry.edge_types
        ),
    )
