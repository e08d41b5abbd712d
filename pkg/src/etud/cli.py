"""Command-line pipeline: generate -> learn -> detect -> evaluate -> report.

Every command takes the global ``--seed`` (master seed), ``--config`` (JSON
file) and ``--threads`` flags.  Stage generators are derived from the master
seed as ``SeedSequence([seed, counter])`` with counters generate=0, split=1,
learn=2, detect=3, so each stage is reproducible on its own.

Evaluation and report files are JSON lines, one record per
(algorithm, edge-type) row with the fields::

    algorithm, edge_type ("Yes" = ETUD applied, "No" = all-ones),
    communities, Cost@5 .. Cost@100, NDCG@5 .. NDCG@100

``report`` adds ``better``: a map from metric to "yes"/"no" comparing the
row with its counterpart of the other edge-type setting (lower cost and
higher NDCG win; "-" when there is no counterpart).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .community import ALGORITHMS, Partition, export_partition, import_partition
from .etud_ga import ConfigError, GaConfig
from .hetnet import GraphError, _atomic_write, load_etud, load_graph, save_etud, save_graph
from .metrics import ListeningHistory
from .pipeline import detect, evaluate, learn_etud, project, stage_rng
from .ppr import personalized_pagerank_many
from .synthdata import SynthConfig, generate, split_users

log = logging.getLogger("etud")

GA_FLAGS = {
    "population": int,
    "crossover_threshold": float,
    "mutation_threshold": float,
    "patience": int,
    "sim_k": int,
    "fitness_sample": int,
    "max_generations": int,
    "damping": float,
}


SECTIONS = {"synth", "ga"}


class CliError(Exception):
    pass


# --
# helpers


def sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace) -> None:
        self.data: dict = {
            "command": command,
            "version": __version__,
            "seed": args.seed,
            "config": None,
            "inputs": {},
            "outputs": [],
            "timings": {},
        }
        self._t0 = time.perf_counter()

    def input(self, path) -> None:
        if path is not None:
            self.data["inputs"][str(path)] = sha256(path)

    def output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def timed(self, stage: str, start: float) -> None:
        self.data["timings"][stage] = round(time.perf_counter() - start, 6)

    def write(self, path: Path) -> None:
        self.data["timings"]["total"] = round(time.perf_counter() - self._t0, 6)
        _atomic_write(path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def read_config(path: str | None, section: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    if SECTIONS & set(data):
        section_data = data.get(section, {})
        if not isinstance(section_data, dict):
            raise CliError(f"config file {path}: section {section!r} must be an object")
        return dict(section_data)
    return dict(data)


def read_users(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def write_users(path: Path, users: Sequence[str]) -> None:
    _atomic_write(path, "".join(u + "\n" for u in users))


def ensure_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory {path} is not writable")
    return out


def parent_dir(path: str) -> Path:
    ensure_dir(str(Path(path).resolve().parent))
    return Path(path)


def manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


# --
# commands


def cmd_generate(args: argparse.Namespace) -> None:
    out = ensure_dir(args.out)
    man = Manifest("generate", args)
    cfg = SynthConfig.from_dict(read_config(args.config, "synth"))
    cfg.seed = args.seed
    man.data["config"] = cfg.to_dict()
    man.input(args.config)

    t = time.perf_counter()
    data = generate(cfg, stage_rng(args.seed, "generate"))
    g = data.graph
    users = [g.node_ids[i] for i in g.nodes_of_type("user")]
    train, test = split_users(users, args.train_fraction, stage_rng(args.seed, "split"))
    man.timed("generate", t)

    files = {
        "nodes": out / "nodes.tsv",
        "edges": out / "edges.tsv",
        "history": out / "history.tsv",
        "groups": out / "groups.tsv",
        "train": out / "train_users.txt",
        "test": out / "test_users.txt",
    }
    save_graph(g, files["nodes"], files["edges"])
    data.history.save(files["history"])
    export_partition(data.groups, files["groups"])
    write_users(files["train"], train)
    write_users(files["test"], test)
    for f in files.values():
        man.output(f)
    man.output(out / "manifest.json")
    man.write(out / "manifest.json")
    log.info("generated %d nodes, %d edges, %d train / %d test users", g.num_nodes, g.num_edges, len(train), len(test))


def ga_config(args: argparse.Namespace) -> GaConfig:
    d = read_config(args.config, "ga")
    for name in GA_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    d["seed"] = args.seed
    d["threads"] = args.threads
    return GaConfig.from_dict(d)


def cmd_learn(args: argparse.Namespace) -> None:
    out = ensure_dir(args.out)
    man = Manifest("learn", args)
    cfg = ga_config(args)
    man.data["config"] = cfg.to_dict()
    for p in (args.config, args.nodes, args.edges, args.history, args.train_users):
        man.input(p)

    t = time.perf_counter()
    try:
        g = load_graph(args.nodes, args.edges)
        history = ListeningHistory.load(args.history)
        train = read_users(args.train_users)
    except GraphError as exc:
        raise CliError(f"load: {exc}") from None
    man.timed("load", t)

    t = time.perf_counter()
    try:
        etud, best, trace = learn_etud(g, train, history, cfg, stage_rng(args.seed, "learn"))
    except (GraphError, ConfigError) as exc:
        raise CliError(f"learn: {exc}") from None
    man.timed("evolve", t)
    man.data["generations"] = len(trace)

    save_etud(out / "etud.tsv", g.registry, etud)
    save_etud(out / "best_chromosome.tsv", g.registry, best)
    _atomic_write(
        out / "generations.tsv",
        "".join(
            f"{gen.index}\t{gen.best_similarity!r}\t{json.dumps(gen.best.tolist())}\n" for gen in trace
        ),
    )
    for name in ("etud.tsv", "best_chromosome.tsv", "generations.tsv", "manifest.json"):
        man.output(out / name)
    man.write(out / "manifest.json")
    log.info("learned ETUD after %d generations", len(trace))


def load_optional_etud(path: str | None, g) -> np.ndarray | None:
    if path is None:
        return None
    w = load_etud(path, g.registry)
    if np.isnan(w).any():
        missing = [g.registry.label(et) for et in g.edge_types if np.isnan(w[et.id])]
        raise GraphError(f"{path}: missing weight for edge type(s): {', '.join(missing)}")
    return w


def cmd_detect(args: argparse.Namespace) -> None:
    out = parent_dir(args.out)
    man = Manifest("detect", args)
    man.data["config"] = {"algorithm": args.algorithm, "import": args.import_path, "etud": args.etud}
    for p in (args.nodes, args.edges, args.etud, args.import_path):
        man.input(p)
    if args.import_path is None and args.algorithm not in ALGORITHMS:
        raise CliError(
            f"unknown algorithm {args.algorithm!r}; supported: {', '.join(sorted(ALGORITHMS))}"
        )
    t = time.perf_counter()
    try:
        g = load_graph(args.nodes, args.edges)
        if args.import_path is not None:
            p = import_partition(args.import_path, g.node_ids)
        else:
            h = project(g, load_optional_etud(args.etud, g))
            p = detect(h, args.algorithm, stage_rng(args.seed, "detect"))
    except GraphError as exc:
        raise CliError(f"detect: {exc}") from None
    man.timed("detect", t)
    export_partition(p, out)
    man.output(out)
    man.data["communities"] = p.num_communities
    man.write(manifest_path(out))
    log.info("%d communities", p.num_communities)


def cmd_evaluate(args: argparse.Namespace) -> None:
    out = parent_dir(args.out)
    man = Manifest("evaluate", args)
    for p in (args.nodes, args.edges, args.history, args.test_users, args.partition, args.etud):
        man.input(p)
    t = time.perf_counter()
    try:
        g = load_graph(args.nodes, args.edges)
        history = ListeningHistory.load(args.history)
        users = read_users(args.test_users)
        partition = import_partition(args.partition, g.node_ids)
        etud = load_optional_etud(args.etud, g)
        rec = evaluate(g, partition, users, history, etud, item_type=args.item_type)
    except (GraphError, KeyError) as exc:
        raise CliError(f"evaluate: {exc}") from None
    man.timed("evaluate", t)
    row = {"algorithm": args.label, "edge_type": "Yes" if etud is not None else "No"}
    row.update(rec)
    _atomic_write(out, json.dumps(row) + "\n")
    man.output(out)

    if args.dump_scores:
        ddir = ensure_dir(args.dump_scores)
        h = project(g, etud)
        for s in personalized_pagerank_many(h, sorted(users)):
            path = ddir / f"{s.seed}.tsv"
            _atomic_write(path, "".join(f"{n}\t{v!r}\n" for n, v in zip(s.node_ids, s.scores.tolist())))
            man.output(path)
    man.write(manifest_path(out))
    print(format_table([row]))


# --
# report


def metric_columns(rows: list[dict]) -> list[str]:
    cols = [k for k in rows[0] if k.startswith(("Cost@", "NDCG@"))]
    for r in rows[1:]:
        other = [k for k in r if k.startswith(("Cost@", "NDCG@"))]
        if other != cols:
            raise CliError(f"column mismatch: {cols} vs {other}")
    return cols


def merge_report(rows: list[dict]) -> list[dict]:
    if not rows:
        raise CliError("no evaluation records")
    cols = metric_columns(rows)
    order: dict[str, int] = {}
    for r in rows:
        order.setdefault(r["algorithm"], len(order))
    rows = sorted(rows, key=lambda r: (order[r["algorithm"]], r["edge_type"] != "No"))
    keyed = {(r["algorithm"], r["edge_type"]): r for r in rows}
    merged = []
    for r in rows:
        other = keyed.get((r["algorithm"], "Yes" if r["edge_type"] == "No" else "No"))
        better = {}
        for c in cols:
            if other is None:
                better[c] = "-"
            elif c.startswith("Cost@"):
                better[c] = "yes" if r[c] < other[c] else "no"
            else:
                better[c] = "yes" if r[c] > other[c] else "no"
        row = {k: v for k, v in r.items() if k != "better"}
        row["better"] = better
        merged.append(row)
    return merged


def format_table(rows: list[dict]) -> str:
    cols = metric_columns(rows)
    head = ["Algorithm", "Edge-type", "Comm. #"] + cols
    lines = ["\t".join(head)]
    for r in rows:
        cells = [r["algorithm"], r["edge_type"], str(r["communities"])]
        for c in cols:
            mark = "*" if r.get("better", {}).get(c) == "yes" else ""
            cells.append(f"{r[c]:.4f}{mark}")
        lines.append("\t".join(cells))
    return "\n".join(lines)


def cmd_report(args: argparse.Namespace) -> None:
    rows = []
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CliError(f"{path}:{lineno}: {exc}") from None
    merged = merge_report(rows)
    text = format_table(merged)
    if args.out:
        out = parent_dir(args.out)
        _atomic_write(out, "".join(json.dumps(r) + "\n" for r in merged))
    if args.text:
        _atomic_write(parent_dir(args.text), text + "\n")
    print(text)


# --
# parser


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommand copies must not overwrite values given before the subcommand
        def d(v):
            return argparse.SUPPRESS if suppress else v

        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
        p.add_argument("--config", default=d(None), help="JSON config; may hold 'synth' and 'ga' sections")
        p.add_argument("--threads", type=int, default=d(1), help="fitness evaluation threads")
        p.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return p

    top = global_flags(False)
    common = global_flags(True)

    parser = argparse.ArgumentParser(
        prog="etud",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[top],
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic planted network")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("learn", parents=[common], help="evolve and finalize an ETUD")
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--train-users", required=True)
    p.add_argument("--out", required=True, help="output directory")
    for name, typ in GA_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("detect", parents=[common], help="detect communities on the projected graph")
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--etud", help="ETUD file; omitted means all-ones")
    p.add_argument("--algorithm", default="louvain", help="one of: " + ", ".join(sorted(ALGORITHMS)))
    p.add_argument("--import", dest="import_path", help="take the partition from an external file")
    p.add_argument("--out", required=True, help="partition file")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", parents=[common], help="Cost@n and within-community NDCG@k")
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--test-users", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--etud", help="ETUD used for ranking; marks the row edge_type=Yes")
    p.add_argument("--label", default="louvain", help="algorithm name for the report row")
    p.add_argument("--item-type", default="song")
    p.add_argument("--dump-scores", help="directory for per-user node_id<TAB>score files")
    p.add_argument("--out", required=True, help="JSON-lines record file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="merge evaluation records into one table")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", help="merged JSON-lines file")
    p.add_argument("--text", help="tab-separated text table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (CliError, ConfigError, GraphError, ValueError, OSError) as exc:
        print(f"etud {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
