"""Listening histories, NDCG@k and the between-community searching cost."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .hetnet import GraphError, _atomic_write, read_records

__all__ = [
    "ListeningHistory",
    "CommunityRank",
    "quartile_grades",
    "ndcg_at_k",
    "top_songs",
    "rank_communities",
    "searching_cost",
    "user_searching_cost",
    "cost_at_table",
    "COST_CUTOFFS",
    "NDCG_CUTOFFS",
]

COST_CUTOFFS = (5, 10, 20, 50, 100)
NDCG_CUTOFFS = (5, 10, 20, 100)


def quartile_grades(plays: Mapping[str, int]) -> dict[str, int]:
    """Grade each song 1..4 by the quartile of the user's play counts.

    grade = ceil(4 * F(count)) with F the empirical CDF of the user's play
    counts, so equal counts share a grade and the most-played song gets 4.
    """
    counts = np.sort(np.fromiter(plays.values(), dtype=np.int64, count=len(plays)))
    n = len(counts)
    out = {}
    for song, c in plays.items():
        rank = int(np.searchsorted(counts, c, side="right"))
        out[song] = max(1, math.ceil(4 * rank / n))
    return out


@dataclass
class ListeningHistory:
    """Per-user song play counts with quartile relevance grades."""

    plays: dict[str, dict[str, int]]
    grades: dict[str, dict[str, int]] = field(init=False)

    def __post_init__(self) -> None:
        for user, songs in self.plays.items():
            for song, c in songs.items():
                if int(c) != c or c < 1:
                    raise ValueError(f"play count for ({user}, {song}) must be a positive integer")
        self.grades = {u: quartile_grades(s) for u, s in self.plays.items()}

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, int]]) -> "ListeningHistory":
        plays: dict[str, dict[str, int]] = {}
        for user, song, count in records:
            songs = plays.setdefault(user, {})
            songs[song] = songs.get(song, 0) + int(count)
        return cls(plays)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ListeningHistory":
        records = []
        for lineno, f in read_records(path, 3, 3):
            try:
                c = int(f[2])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: bad play count {f[2]!r}") from None
            if c < 1:
                raise GraphError(f"{path}:{lineno}: play count must be >= 1")
            records.append((f[0], f[1], c))
        return cls.from_records(records)

    def save(self, path: str | os.PathLike) -> None:
        _atomic_write(
            path,
            "".join(
                f"{u}\t{s}\t{c}\n" for u, songs in self.plays.items() for s, c in songs.items()
            ),
        )

    def __contains__(self, user: str) -> bool:
        return user in self.plays

    def listened(self, user: str, song: str) -> bool:
        return song in self.plays.get(user, {})

    @property
    def users(self) -> list[str]:
        return list(self.plays)


def ndcg_at_k(ranked: Sequence[str], grades: Mapping[str, int], k: int) -> float:
    """NDCG with raw grades as gains and a log2(position + 1) discount.

    Unlisted songs have gain 0.  The ideal DCG uses the user's own graded
    songs, so a perfect candidate list can still score below 1 when it
    omits graded songs.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ideal = sorted(grades.values(), reverse=True)[:k]
    if not ideal:
        return 0.0
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    dcg = sum(grades.get(s, 0) / math.log2(i + 2) for i, s in enumerate(ranked[:k]))
    return dcg / idcg


@dataclass(frozen=True)
class CommunityRank:
    community: int
    listened: int
    size: int


def top_songs(plays: Mapping[str, int], top_n: int) -> list[str]:
    """The ``top_n`` most-played songs; ties by ascending song id."""
    return sorted(plays, key=lambda s: (-plays[s], s))[:top_n]


def rank_communities(partition, user: str, history: ListeningHistory, top_n: int) -> list[CommunityRank]:
    """Communities holding the user's top-n songs, most listened first."""
    if user not in history:
        raise KeyError(f"user {user!r} has no listening history")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    counts: dict[int, int] = {}
    for song in top_songs(history.plays[user], top_n):
        c = partition.community_of(song)
        counts[c] = counts.get(c, 0) + 1
    sizes = partition.sizes
    order = sorted(counts, key=lambda c: (-counts[c], c))
    return [CommunityRank(c, counts[c], int(sizes[c])) for c in order]


def user_searching_cost(partition, user: str, history: ListeningHistory, top_n: int) -> float:
    plays = history.plays.get(user)
    if not plays:
        return 0.0
    retrieved = top_songs(plays, top_n)
    total = len(retrieved)
    members: dict[int, list[str]] = {}
    for s in retrieved:
        members.setdefault(partition.community_of(s), []).append(s)
    cost = 0.0
    prev = 1
    for rank in rank_communities(partition, user, history, top_n):
        jump = math.log(prev * rank.size)
        for s in members[rank.community]:
            cost += rank.listened / (plays[s] * total) * jump
        prev = rank.size
    return cost


def searching_cost(partition, users: Iterable[str], history: ListeningHistory, top_n: int) -> float:
    """Total community-jumping cost of retrieving each user's top-n songs.

    Users visit communities by decreasing count of retrieved songs.  Every
    song in the k-th community costs ``n_k / (plays * total)`` times
    ``ln(|C_{k-1}| * |C_k|)``, with ``|C_0| = 1``.  Summed in ascending
    user-id order; users without history contribute 0.
    """
    return float(sum(user_searching_cost(partition, u, history, top_n) for u in sorted(users)))


def cost_at_table(
    partition, users: Iterable[str], history: ListeningHistory, cutoffs: Sequence[int] = COST_CUTOFFS
) -> dict[int, float]:
    users = list(users)
    return {n: searching_cost(partition, users, history, n) for n in cutoffs}
