"""Personalized PageRank by power iteration on a symmetrized weighted graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .hetnet import GraphError, HomoGraph

__all__ = [
    "PprScores",
    "WalkOperator",
    "personalized_pagerank",
    "personalized_pagerank_many",
    "rank_by_score",
    "DAMPING",
    "TOL",
    "MAX_ITER",
]

DAMPING = 0.85
TOL = 1e-8
MAX_ITER = 100


@dataclass(frozen=True)
class PprScores:
    scores: np.ndarray
    seed: str
    damping: float
    iterations: int
    node_ids: tuple[str, ...]

    def __getitem__(self, node: str) -> float:
        return float(self.scores[self.node_ids.index(node)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.node_ids, self.scores.tolist()))


class WalkOperator:
    """Transposed random-walk matrix of a :class:`HomoGraph`.

    Each directed edge is walkable in both directions; the step probability
    is proportional to the (summed) edge weight.  Nodes without positive
    incident weight are dangling and send their mass back to the seed.
    """

    def __init__(self, g: HomoGraph) -> None:
        a = g.symmetric_adjacency()
        a.eliminate_zeros()
        deg = np.asarray(a.sum(axis=1)).ravel()
        self.dangling = deg <= 0
        inv = np.zeros_like(deg)
        inv[~self.dangling] = 1.0 / deg[~self.dangling]
        # a is symmetric, so (D^-1 A)^T = A D^-1
        self.pt = sp.csr_matrix(a @ sp.diags(inv))
        self.pt.sort_indices()
        self.node_ids = g.node_ids
        self.index = g.index

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def run(
        self,
        seeds: Sequence[int],
        damping: float = DAMPING,
        tol: float = TOL,
        max_iter: int = MAX_ITER,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Iterate all seeds as columns of one matrix.

        Returns ``(scores, iterations)`` with ``scores`` of shape
        ``(n, len(seeds))``.  A column stops updating as soon as its own L1
        change drops below ``tol``, so each column equals a single-seed run.
        """
        if not 0.0 < damping < 1.0:
            raise ValueError(f"damping must lie in (0, 1), got {damping}")
        if tol <= 0:
            raise ValueError("tol must be positive")
        seeds = np.asarray(seeds, dtype=np.int64)
        m = len(seeds)
        cols = np.arange(m)
        x = np.zeros((self.n, m))
        x[seeds, cols] = 1.0
        iters = np.zeros(m, dtype=np.int64)
        active = np.ones(m, dtype=bool)
        dangling = np.flatnonzero(self.dangling)
        for _ in range(max_iter):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            xa = x[:, idx]
            new = damping * (self.pt @ xa)
            back = damping * xa[dangling].sum(axis=0) + (1.0 - damping)
            new[seeds[idx], np.arange(idx.size)] += back
            delta = np.abs(new - xa).sum(axis=0)
            x[:, idx] = new
            iters[idx] += 1
            active[idx[delta < tol]] = False
        return x, iters


def personalized_pagerank_many(
    g: HomoGraph | WalkOperator,
    seeds: Iterable[str],
    damping: float = DAMPING,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
) -> list[PprScores]:
    op = g if isinstance(g, WalkOperator) else WalkOperator(g)
    seeds = list(seeds)
    try:
        idx = [op.index[s] for s in seeds]
    except KeyError as exc:
        raise GraphError(f"unknown seed node {exc.args[0]!r}") from None
    x, iters = op.run(idx, damping, tol, max_iter)
    return [
        PprScores(x[:, k].copy(), s, damping, int(iters[k]), op.node_ids)
        for k, s in enumerate(seeds)
    ]


def personalized_pagerank(
    g: HomoGraph | WalkOperator,
    seed: str,
    damping: float = DAMPING,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
) -> PprScores:
    """Random walk with restart to ``seed``.

    Teleport mass ``1 - damping`` always returns to the seed, as does the
    mass sitting on dangling nodes.  Iteration starts from the indicator of
    the seed and stops when the L1 change falls below ``tol``.
    """
    return personalized_pagerank_many(g, [seed], damping, tol, max_iter)[0]


def rank_by_score(scores: PprScores, candidates: Iterable[str]) -> list[str]:
    """Candidates by descending score; equal scores by ascending node id."""
    index = {nid: i for i, nid in enumerate(scores.node_ids)}
    return sorted(candidates, key=lambda c: (-scores.scores[index[c]], c))
