"""Stage functions shared by the CLI and the acceptance tests."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .community import ALGORITHMS, Partition
from .etud_ga import GaConfig, Generation, evolve, finalize
from .hetnet import GraphError, HeteroGraph, HomoGraph, apply_etud, dependency_sets
from .metrics import COST_CUTOFFS, NDCG_CUTOFFS, ListeningHistory, cost_at_table, ndcg_at_k
from .ppr import WalkOperator, rank_by_score, PprScores

__all__ = [
    "STAGES",
    "stage_rng",
    "project",
    "learn_etud",
    "detect",
    "evaluate",
    "within_community_ndcg",
]

# master seed -> per-stage generator: SeedSequence([master, STAGES[name]])
STAGES = {"generate": 0, "split": 1, "learn": 2, "detect": 3}


def stage_rng(master_seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, STAGES[stage]]))


def project(g: HeteroGraph, etud: np.ndarray | None = None) -> HomoGraph:
    """ETUD projection; without an ETUD every edge type weighs 1."""
    if etud is None:
        etud = np.ones(len(g.edge_types))
    return apply_etud(g, etud)


def learn_etud(
    g: HeteroGraph,
    train_users: Sequence[str],
    history: ListeningHistory,
    cfg: GaConfig,
    rng: np.random.Generator,
    on_generation=None,
) -> tuple[np.ndarray, np.ndarray, list[Generation]]:
    """Evolve and normalize; returns ``(etud, raw best, trace)``."""
    best, trace = evolve(g, train_users, history, cfg, rng, on_generation)
    return finalize(best, dependency_sets(g.edge_types)), best, trace


def detect(g: HomoGraph, algorithm: str, rng: np.random.Generator) -> Partition:
    try:
        algo = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {algorithm!r}; supported: {', '.join(sorted(ALGORITHMS))}"
        ) from None
    return algo(g, rng)


def within_community_ndcg(
    g: HomoGraph,
    partition: Partition,
    users: Iterable[str],
    history: ListeningHistory,
    cutoffs: Sequence[int] = NDCG_CUTOFFS,
    songs: Sequence[str] | None = None,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> dict[int, float]:
    """Mean NDCG of in-community songs ranked by the user's personalized PageRank."""
    users = sorted(users)
    if not users:
        return {k: 0.0 for k in cutoffs}
    song_set = set(songs) if songs is not None else None
    members = partition.members()
    op = WalkOperator(g)
    try:
        seeds = [op.index[u] for u in users]
    except KeyError as exc:
        raise GraphError(f"user {exc.args[0]!r} not in graph") from None
    x, iters = op.run(seeds, damping, tol, max_iter)
    totals = {k: 0.0 for k in cutoffs}
    for col, u in enumerate(users):
        cands = [
            n for n in members[partition.community_of(u)]
            if n != u and (song_set is None or n in song_set)
        ]
        if not cands:
            continue
        scores = PprScores(x[:, col], u, damping, int(iters[col]), op.node_ids)
        ranked = rank_by_score(scores, cands)
        grades = history.grades.get(u, {})
        for k in cutoffs:
            totals[k] += ndcg_at_k(ranked, grades, k)
    return {k: totals[k] / len(users) for k in cutoffs}


def evaluate(
    hetero: HeteroGraph,
    partition: Partition,
    users: Sequence[str],
    history: ListeningHistory,
    etud: np.ndarray | None = None,
    item_type: str = "song",
    cost_cutoffs: Sequence[int] = COST_CUTOFFS,
    ndcg_cutoffs: Sequence[int] = NDCG_CUTOFFS,
) -> dict:
    """Cost@n and within-community NDCG@k for one partition."""
    if partition.node_ids != hetero.node_ids:
        missing = set(hetero.node_ids) - set(partition.node_ids)
        raise GraphError(
            "partition does not cover the graph"
            + (f" (missing {len(missing)} node(s))" if missing else "")
        )
    users = sorted(users)
    costs = cost_at_table(partition, users, history, cost_cutoffs)
    songs = [hetero.node_ids[i] for i in hetero.nodes_of_type(item_type)]
    ndcg = within_community_ndcg(
        project(hetero, etud), partition, users, history, ndcg_cutoffs, songs=songs
    )
    rec = {"communities": partition.num_communities}
    rec.update({f"Cost@{n}": costs[n] for n in cost_cutoffs})
    rec.update({f"NDCG@{k}": ndcg[k] for k in ndcg_cutoffs})
    return rec
