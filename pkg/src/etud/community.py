"""Community detection on projected graphs and the partition file format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .hetnet import GraphError, HomoGraph, _atomic_write, read_records

__all__ = [
    "Partition",
    "modularity",
    "louvain",
    "louvain_with_trace",
    "label_propagation",
    "import_partition",
    "export_partition",
    "ALGORITHMS",
]

_EPS = 1e-9


def _canonical(labels: Sequence[int]) -> np.ndarray:
    """Relabel to 0..C-1 in order of first appearance."""
    seen: dict = {}
    return np.array([seen.setdefault(c, len(seen)) for c in labels], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Partition:
    """Exactly one community per node, ids dense and in first-seen order."""

    node_ids: tuple[str, ...]
    labels: np.ndarray
    _index: dict[str, int] = field(repr=False, compare=False)

    @classmethod
    def from_labels(cls, node_ids: Sequence[str], labels: Sequence) -> "Partition":
        if len(node_ids) != len(labels):
            raise ValueError("labels must cover every node")
        return cls(tuple(node_ids), _canonical(list(labels)), {n: i for i, n in enumerate(node_ids)})

    @classmethod
    def from_mapping(cls, node_ids: Sequence[str], assignment: Mapping[str, object]) -> "Partition":
        missing = [n for n in node_ids if n not in assignment]
        if missing:
            raise GraphError("partition is missing node(s): " + ", ".join(map(str, missing)))
        return cls.from_labels(node_ids, [assignment[n] for n in node_ids])

    @property
    def num_communities(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_communities)

    def community_of(self, node: str) -> int:
        try:
            return int(self.labels[self._index[node]])
        except KeyError:
            raise KeyError(f"node {node!r} is not in the partition") from None

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.node_ids, self.labels.tolist()))

    def members(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.num_communities)]
        for nid, c in zip(self.node_ids, self.labels):
            out[c].append(nid)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.node_ids == other.node_ids and np.array_equal(self.labels, other.labels)

    __hash__ = None  # type: ignore[assignment]


def _modularity(a: sp.csr_matrix, labels: np.ndarray, resolution: float = 1.0) -> float:
    two_m = a.sum()
    if two_m <= 0:
        return 0.0
    k = np.asarray(a.sum(axis=1)).ravel()
    ncom = int(labels.max()) + 1
    coo = a.tocoo()
    same = labels[coo.row] == labels[coo.col]
    inside = np.bincount(labels[coo.row[same]], weights=coo.data[same], minlength=ncom)
    tot = np.bincount(labels, weights=k, minlength=ncom)
    return float(np.sum(inside / two_m - resolution * (tot / two_m) ** 2))


def modularity(g: HomoGraph, p: Partition, resolution: float = 1.0) -> float:
    """Newman modularity of ``p`` on the symmetrized weights of ``g``."""
    if p.node_ids != g.node_ids:
        raise GraphError("partition does not match the graph's node set")
    return _modularity(g.symmetric_adjacency(), p.labels, resolution)


def _move_nodes(a: sp.csr_matrix, comm: np.ndarray, resolution: float, rng: np.random.Generator) -> int:
    """One local-moving sweep in a random order; returns the number of moves."""
    n = a.shape[0]
    k = np.asarray(a.sum(axis=1)).ravel()
    two_m = k.sum()
    tot = np.bincount(comm, weights=k, minlength=n)
    indptr, indices, data = a.indptr, a.indices, a.data
    moves = 0
    for i in rng.permutation(n):
        ci = comm[i]
        links: dict[int, float] = {}
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                c = comm[j]
                links[c] = links.get(c, 0.0) + data[p]
        tot[ci] -= k[i]
        scale = 2.0 / two_m
        best = ci
        best_gain = (links.get(ci, 0.0) - resolution * tot[ci] * k[i] / two_m) * scale
        for c in sorted(links):
            gain = (links[c] - resolution * tot[c] * k[i] / two_m) * scale
            if gain > best_gain + _EPS:
                best, best_gain = c, gain
        tot[best] += k[i]
        if best != ci:
            comm[i] = best
            moves += 1
    return moves


def louvain_with_trace(
    g: HomoGraph, rng: np.random.Generator, resolution: float = 1.0
) -> tuple[Partition, list[float]]:
    """Louvain plus the modularity of the flat partition after every sweep."""
    a0 = g.symmetric_adjacency()
    a0.eliminate_zeros()
    n = g.num_nodes
    flat = np.arange(n)
    trace = [_modularity(a0, flat, resolution)]
    if a0.nnz == 0:
        return Partition.from_labels(g.node_ids, flat), trace

    a = a0
    while True:
        comm = np.arange(a.shape[0])
        level_moves = 0
        while True:
            moved = _move_nodes(a, comm, resolution, rng)
            if moved == 0:
                break
            level_moves += moved
            trace.append(_modularity(a0, comm[flat], resolution))
        if level_moves == 0:
            break
        comm = _canonical(comm)
        flat = comm[flat]
        agg = sp.csr_matrix(
            (np.ones(len(comm)), (comm, np.arange(len(comm)))),
            shape=(int(comm.max()) + 1, len(comm)),
        )
        a = sp.csr_matrix(agg @ a @ agg.T)
        a.sort_indices()
    return Partition.from_labels(g.node_ids, flat), trace


def louvain(g: HomoGraph, rng: np.random.Generator, resolution: float = 1.0) -> Partition:
    """Two-phase Louvain: local moving, then aggregation, until stable.

    Node visit order is reshuffled by ``rng`` on every sweep.  A move is
    accepted only when it raises modularity by more than 1e-9.
    """
    return louvain_with_trace(g, rng, resolution)[0]


def label_propagation(g: HomoGraph, rng: np.random.Generator, max_rounds: int = 100) -> Partition:
    """Asynchronous weighted label propagation.

    Each node adopts the label with the largest total incident weight among
    its neighbours, ties going to the smallest label.  Stops after a round
    with no change or after ``max_rounds``.
    """
    a = g.symmetric_adjacency()
    a.eliminate_zeros()
    n = g.num_nodes
    labels = np.arange(n)
    indptr, indices, data = a.indptr, a.indices, a.data
    for _ in range(max_rounds):
        changed = False
        for i in rng.permutation(n):
            weights: dict[int, float] = {}
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    lab = labels[j]
                    weights[lab] = weights.get(lab, 0.0) + data[p]
            if not weights:
                continue
            top = max(weights.values())
            new = min(lab for lab, w in weights.items() if w == top)
            if new != labels[i]:
                labels[i] = new
                changed = True
        if not changed:
            break
    return Partition.from_labels(g.node_ids, labels)


ALGORITHMS = {
    "louvain": lambda g, rng: louvain(g, rng),
    "label_propagation": lambda g, rng: label_propagation(g, rng),
}


def export_partition(p: Partition, path: str | os.PathLike) -> None:
    _atomic_write(path, "".join(f"{nid}\t{c}\n" for nid, c in zip(p.node_ids, p.labels)))


def import_partition(path: str | os.PathLike, node_ids: Sequence[str] | None = None) -> Partition:
    """Read ``node_id<TAB>community_id`` lines.

    Community ids may be arbitrary strings; they are renumbered densely.
    With ``node_ids`` the file must cover exactly that node set and the
    result follows its order; otherwise file order is used.
    """
    assignment: dict[str, str] = {}
    for lineno, f in read_records(path, 2, 2):
        if f[0] in assignment:
            raise GraphError(f"{path}:{lineno}: duplicate node {f[0]!r}")
        assignment[f[0]] = f[1]
    if node_ids is None:
        return Partition.from_labels(list(assignment), list(assignment.values()))
    known = set(node_ids)
    extra = [n for n in assignment if n not in known]
    if extra:
        raise GraphError(f"{path}: unknown node(s): " + ", ".join(extra))
    try:
        return Partition.from_mapping(node_ids, assignment)
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from None
