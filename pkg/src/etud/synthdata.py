"""Desk-scale music networks with planted taste groups.

Users, songs and every catalogue node type are split into ``groups`` taste
groups.  Signal edge types (user -> song) are denser inside a group than
across groups; noise edge types (user -> song) ignore the groups.
Catalogue edges (artist/album/playlist/genre links) attach inside the
owner's group with probability ``coherence`` and uniformly otherwise.
Every ``plays`` edge gets a geometric play count, and the listening history
is exactly the set of ``plays`` edges.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .community import Partition
from .hetnet import HeteroGraph, TypeRegistry
from .metrics import ListeningHistory

__all__ = ["SynthConfig", "SynthData", "generate", "split_users", "NODE_PREFIX"]

NODE_PREFIX = {
    "user": "u",
    "song": "s",
    "artist": "ar",
    "album": "al",
    "playlist": "pl",
    "genre": "g",
}

# (name, start, end) of the catalogue relations, in the order they are drawn
STRUCTURE = [
    ("performsIn", "artist", "song"),
    ("include", "album", "song"),
    ("performsIn", "artist", "album"),
    ("categorizedAs", "album", "genre"),
    ("categorizedAs", "artist", "genre"),
    ("includes", "playlist", "song"),
    ("makes", "user", "playlist"),
]


@dataclass
class SynthConfig:
    users: int = 200
    songs: int = 400
    artists: int = 40
    albums: int = 60
    playlists: int = 50
    genres: int = 8
    groups: int = 4
    signal: dict = field(default_factory=lambda: {"plays": [0.05, 0.002]})
    noise: dict = field(default_factory=lambda: {"comments": 0.01, "bookmarks": 0.01})
    coherence: float = 0.5
    playlist_size: int = 10
    play_mean: float = 5.0
    play_type: str = "plays"
    seed: int = 0

    def validate(self) -> "SynthConfig":
        for name in NODE_PREFIX:
            if getattr(self, name + "s") < 1:
                raise ValueError(f"{name} count must be >= 1")
        if self.groups < 1:
            raise ValueError("groups must be >= 1")
        for name, (p_in, p_out) in self.signal.items():
            if not (0.0 <= p_out < p_in <= 1.0):
                raise ValueError(f"signal type {name!r} needs 0 <= p_out < p_in <= 1")
        for name, p in self.noise.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"noise type {name!r} probability outside [0, 1]")
        if set(self.signal) & set(self.noise):
            raise ValueError("an edge type cannot be both signal and noise")
        if self.play_type not in self.signal and self.play_type not in self.noise:
            raise ValueError(f"play_type {self.play_type!r} is not a generated user->song type")
        if not 0.0 <= self.coherence <= 1.0:
            raise ValueError("coherence must lie in [0, 1]")
        if self.play_mean < 1.0:
            raise ValueError("play_mean must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError("unknown synth config field(s): " + ", ".join(sorted(unknown)))
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthData:
    graph: HeteroGraph
    history: ListeningHistory
    groups: Partition


def _ids(kind: str, n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"{NODE_PREFIX[kind]}{i:0{width}d}" for i in range(n)]


def _balanced_groups(n: int, groups: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % groups)


def _pick(owner_group: int, cand_groups: np.ndarray, coherence: float, rng: np.random.Generator) -> int:
    """An index inside ``owner_group`` w.p. coherence, else a uniform one."""
    same = np.flatnonzero(cand_groups == owner_group)
    pool = same if (len(same) and rng.random() < coherence) else np.arange(len(cand_groups))
    return int(rng.choice(pool))


def generate(cfg: SynthConfig, rng: np.random.Generator | None = None) -> SynthData:
    """Draw a graph, its listening history and the ground-truth group map.

    Uses ``rng`` when given, else a generator seeded with ``cfg.seed``.
    """
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    kinds = list(NODE_PREFIX)
    ids = {k: _ids(k, getattr(cfg, k + "s")) for k in kinds}
    grp = {k: _balanced_groups(len(ids[k]), cfg.groups, rng) for k in kinds}

    reg = TypeRegistry()
    for k in kinds:
        reg.register_node_type(k)
    nodes = [(nid, k) for k in kinds for nid in ids[k]]
    edges: list[tuple[str, str, object, float]] = []
    plays: list[tuple[str, str, int]] = []

    same = grp["user"][:, None] == grp["song"][None, :]
    user_song = list(cfg.signal.items()) + list(cfg.noise.items())
    for name, prob in user_song:
        et = reg.register_edge_type(name, "user", "song")
        if name in cfg.signal:
            p_in, p_out = prob
            p = np.where(same, p_in, p_out)
        else:
            p = np.full(same.shape, float(prob))
        hit = rng.random(same.shape) < p
        for u, s in zip(*np.nonzero(hit)):
            edges.append((ids["user"][u], ids["song"][s], et, 1.0))
            if name == cfg.play_type:
                plays.append((ids["user"][u], ids["song"][s], int(rng.geometric(1.0 / cfg.play_mean))))

    for name, start, end in STRUCTURE:
        et = reg.register_edge_type(name, start, end)
        if (start, end) == ("playlist", "song"):
            for i, pid in enumerate(ids["playlist"]):
                k = min(cfg.playlist_size, len(ids["song"]))
                chosen: list[int] = []
                while len(chosen) < k:
                    s = _pick(grp["playlist"][i], grp["song"], cfg.coherence, rng)
                    if s not in chosen:
                        chosen.append(s)
                for s in chosen:
                    edges.append((pid, ids["song"][s], et, 1.0))
        else:
            # each end node gets one owner of the start type
            for j, nid in enumerate(ids[end]):
                i = _pick(grp[end][j], grp[start], cfg.coherence, rng)
                edges.append((ids[start][i], nid, et, 1.0))

    graph = HeteroGraph.build(reg, nodes, edges)
    history = ListeningHistory.from_records(plays)
    groups = Partition.from_labels(
        graph.node_ids, np.concatenate([grp[k] for k in kinds]).tolist()
    )
    return SynthData(graph, history, groups)


def split_users(users: Sequence[str], train_fraction: float, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Random train/test split of users; both halves returned sorted."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    users = sorted(users)
    n_train = int(round(train_fraction * len(users)))
    perm = rng.permutation(len(users))
    train = sorted(users[i] for i in perm[:n_train])
    test = sorted(users[i] for i in perm[n_train:])
    return train, test
