"""Genetic search for an edge-type usefulness distribution (ETUD).

A chromosome holds one gene in [0, 1] per edge type.  Its raw similarity is
the sum over training users of NDCG@k between the songs ranked by
personalized PageRank on the ETUD-weighted graph and the user's graded
listening history; fitness is the softmax of raw similarity across the
population.

Random draws come from one ``numpy.random.Generator`` in a fixed order:
population init, the training-user subsample, then per generation the
selection draws, the per-pair crossover draws and the per-member mutation
draws.  Fitness evaluation draws nothing, so threading it cannot change
results.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .hetnet import EdgeType, GraphError, HeteroGraph, apply_etud
from .metrics import ListeningHistory, ndcg_at_k
from .ppr import DAMPING, MAX_ITER, TOL, WalkOperator

__all__ = [
    "GaConfig",
    "ConfigError",
    "SimilarityEvaluator",
    "Generation",
    "init_population",
    "softmax",
    "fitness",
    "select",
    "crossover",
    "mutate",
    "evolve",
    "finalize",
]

log = logging.getLogger(__name__)

MUTATION_FLOOR = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class GaConfig:
    population: int = 1000
    crossover_threshold: float = 0.95
    mutation_threshold: float = 0.1
    patience: int = 10
    sim_k: int = 10
    seed: int = 0
    fitness_sample: int | None = None
    max_generations: int = 200
    damping: float = DAMPING
    tol: float = TOL
    max_iter: int = MAX_ITER
    item_type: str = "song"
    threads: int = 1

    def validate(self) -> "GaConfig":
        if self.population < 2 or self.population % 2:
            raise ConfigError(f"population must be even and >= 2, got {self.population}")
        for name in ("crossover_threshold", "mutation_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.patience < 1 or self.sim_k < 1 or self.max_generations < 1:
            raise ConfigError("patience, sim_k and max_generations must be >= 1")
        if self.fitness_sample is not None and self.fitness_sample < 1:
            raise ConfigError("fitness_sample must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "GaConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError("unknown GA config field(s): " + ", ".join(sorted(unknown)))
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)


def init_population(cfg: GaConfig, num_edge_types: int, rng: np.random.Generator) -> np.ndarray:
    """``(P, num_edge_types)`` genes drawn uniformly from [0, 1]."""
    cfg.validate()
    if num_edge_types < 1:
        raise ConfigError("need at least one edge type")
    return rng.random((cfg.population, num_edge_types))


def softmax(raw: np.ndarray) -> np.ndarray:
    z = np.exp(raw - raw.max())
    return z / z.sum()


class SimilarityEvaluator:
    """Raw similarity of chromosomes against a fixed user set, memoized.

    The memo is keyed by the exact gene bytes and only skips recomputation
    of a deterministic value.
    """

    def __init__(
        self,
        g: HeteroGraph,
        users: Iterable[str],
        history: ListeningHistory,
        cfg: GaConfig,
    ) -> None:
        self.g = g
        self.cfg = cfg
        self.users = sorted(users)
        if not self.users:
            raise ConfigError("no training users")
        missing = [u for u in self.users if u not in g.index]
        if missing:
            raise GraphError("training user(s) not in graph: " + ", ".join(missing[:5]))
        self.seeds = [g.index[u] for u in self.users]
        self.grades = [history.grades.get(u, {}) for u in self.users]
        songs = g.nodes_of_type(cfg.item_type)
        # tie-break by ascending node id
        by_id = sorted(songs, key=lambda i: g.node_ids[i])
        self.songs = np.asarray(by_id, dtype=np.int64)
        self.song_ids = [g.node_ids[i] for i in self.songs]
        self._memo: dict[bytes, float] = {}

    def ranked_songs(self, scores: np.ndarray, k: int) -> list[str]:
        s = scores[self.songs]
        # stable sort on -score keeps the id order among ties
        order = np.argsort(-s, kind="stable")[:k]
        return [self.song_ids[i] for i in order]

    def per_user(self, genes: np.ndarray) -> np.ndarray:
        op = WalkOperator(apply_etud(self.g, genes))
        x, _ = op.run(self.seeds, self.cfg.damping, self.cfg.tol, self.cfg.max_iter)
        k = self.cfg.sim_k
        out = np.zeros(len(self.users))
        for col, grades in enumerate(self.grades):
            if grades:
                out[col] = ndcg_at_k(self.ranked_songs(x[:, col], k), grades, k)
        return out

    def similarity(self, genes: np.ndarray) -> float:
        key = np.ascontiguousarray(genes, dtype=np.float64).tobytes()
        val = self._memo.get(key)
        if val is None:
            val = float(self.per_user(genes).sum())
            self._memo[key] = val
        return val

    def __call__(self, pop: np.ndarray) -> np.ndarray:
        todo = {}
        for w in pop:
            key = w.tobytes()
            if key not in self._memo and key not in todo:
                todo[key] = w
        if self.cfg.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.cfg.threads) as ex:
                vals = list(ex.map(lambda w: float(self.per_user(w).sum()), todo.values()))
            self._memo.update(zip(todo, vals))
        else:
            for key, w in todo.items():
                self._memo[key] = float(self.per_user(w).sum())
        return np.array([self._memo[w.tobytes()] for w in pop])


def fitness(
    pop: np.ndarray,
    g: HeteroGraph,
    train_users: Iterable[str],
    history: ListeningHistory,
    cfg: GaConfig,
) -> np.ndarray:
    """Softmax over the population of summed per-user NDCG@sim_k."""
    return softmax(SimilarityEvaluator(g, train_users, history, cfg)(pop))


def select(pop: np.ndarray, fit: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bootstrap: P draws with replacement, probability proportional to fitness."""
    if len(fit) != len(pop):
        raise ValueError("fitness and population sizes differ")
    idx = rng.choice(len(pop), size=len(pop), replace=True, p=fit)
    return pop[idx].copy()


def crossover(
    w1: np.ndarray, w2: np.ndarray, t_c: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Genes with a shared draw r_j >= t_c become each parent's share w_ij / (w_1j + w_2j)."""
    if w1.shape != w2.shape:
        raise ValueError("parents differ in length")
    hit = rng.random(w1.shape) >= t_c
    total = w1 + w2
    ok = hit & (total > 0)
    c1, c2 = w1.copy(), w2.copy()
    c1[ok] = w1[ok] / total[ok]
    c2[ok] = w2[ok] / total[ok]
    return c1, c2


def mutate(w: np.ndarray, t_m: float, rng: np.random.Generator) -> np.ndarray:
    """Mutate each gene with probability t_m against a clamped N(0, 1) partner.

    A mutated gene becomes ``w / (w + x)`` with ``x`` drawn from N(0, 1)
    and clamped to [1e-6, 1].  One uniform and one normal draw are consumed
    per gene whether or not it mutates.
    """
    hit = rng.random(w.shape) >= 1.0 - t_m
    x = np.clip(rng.standard_normal(w.shape), MUTATION_FLOOR, 1.0)
    out = w.copy()
    out[hit] = np.clip(w[hit] / (w[hit] + x[hit]), 0.0, 1.0)
    return out


class Generation(NamedTuple):
    index: int
    best_similarity: float
    best: np.ndarray


def evolve(
    g: HeteroGraph,
    train_users: Sequence[str],
    history: ListeningHistory,
    cfg: GaConfig,
    rng: np.random.Generator,
    on_generation=None,
) -> tuple[np.ndarray, list[Generation]]:
    """Run the GA until the best chromosome is unchanged for ``patience`` generations.

    The best chromosome of every generation is carried unmodified into slot
    0 of the next one.  Stops early at ``max_generations``.
    """
    cfg.validate()
    pop = init_population(cfg, len(g.edge_types), rng)
    users = sorted(train_users)
    if cfg.fitness_sample is not None and cfg.fitness_sample < len(users):
        users = sorted(rng.choice(users, size=cfg.fitness_sample, replace=False).tolist())
    evaluate = SimilarityEvaluator(g, users, history, cfg)

    trace: list[Generation] = []
    stable = 0
    prev = None
    for gen in range(cfg.max_generations):
        raw = evaluate(pop)
        b = int(np.argmax(raw))
        best = pop[b].copy()
        trace.append(Generation(gen, float(raw[b]), best))
        if on_generation is not None:
            on_generation(trace[-1], pop, raw)
        log.debug("generation %d best similarity %.6f", gen, raw[b])
        if prev is not None and np.allclose(best, prev, rtol=0.0, atol=1e-12):
            stable += 1
        else:
            stable = 0
        prev = best
        if stable >= cfg.patience or gen + 1 == cfg.max_generations:
            break

        parents = select(pop, softmax(raw), rng)
        children = np.empty_like(parents)
        for i in range(0, len(parents), 2):
            children[i], children[i + 1] = crossover(
                parents[i], parents[i + 1], cfg.crossover_threshold, rng
            )
        for i in range(len(children)):
            children[i] = mutate(children[i], cfg.mutation_threshold, rng)
        children[0] = best
        pop = children
    return trace[-1].best, trace


def finalize(best: np.ndarray, deps: Sequence[Iterable[EdgeType]]) -> np.ndarray:
    """Normalize genes to sum to 1 within each dependency set.

    A set whose genes are all zero becomes uniform.
    """
    out = np.full(len(best), np.nan)
    for group in deps:
        ids = np.array(sorted(et.id for et in group), dtype=np.int64)
        s = best[ids].sum()
        out[ids] = best[ids] / s if s > 0 else 1.0 / len(ids)
    if np.isnan(out).any():
        raise ValueError("dependency sets do not cover every edge type")
    return out
