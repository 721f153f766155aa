"""Stage-wise command line pipeline: ingest, split, cluster, sample, stats, eval.

Every stage writes its artifacts plus ``<stage>.manifest.json`` into ``--out``.
Options can also come from ``--config FILE`` (``key=value`` lines, keys named
like the long flags); flags given on the command line win.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .artifacts import ArtifactError
from .clustering import cluster_scores, dbscan, read_assignment, write_assignment
from .graph import FORMATS, GraphFormatError, load_edge_list, read_canonical, split, write_canonical
from .sampler import (KERNELS, PRESETS, SamplerConfig, generate_ensemble, inputs_from_clusters,
                      node_copy_sample, read_ensemble, write_provenance)
from .similarity import ConcurrenceMatrix, concurrence_matrix, pairwise_similarity
from .stats import (RankingJudgment, concurrence_report, degree_report, evaluate, key_value_lines,
                    neighborhood_concurrence, preference_report)

log = logging.getLogger("peco")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_graph(path):
    artifacts.verify(path)
    return read_canonical(path)


def _emit(summary: dict, path: Path = None) -> None:
    text = key_value_lines(summary)
    sys.stdout.write(text)
    if path is not None:
        path.write_text(text)


def cmd_ingest(args) -> int:
    out = _out(args)
    g = load_edge_list(args.input, args.format, header=args.header)
    graph_path = write_canonical(g, out / "graph.tsv")
    outputs = [graph_path] + [p for p in [out / "graph.labels.tsv"] if p.exists()]
    artifacts.write_manifest(out, "ingest", {"format": args.format, "header": args.header},
                             [args.input], outputs)
    _emit({"users": g.num_users, "items": g.num_items, "interactions": g.num_edges,
           "density": g.density})
    return 0


def cmd_split(args) -> int:
    fractions = tuple(float(x) for x in args.fractions.split(","))
    if len(fractions) != 3 or abs(sum(fractions) - 1) > 1e-9:
        raise UsageError("--fractions needs three comma-separated values summing to 1")
    out = _out(args)
    g = _load_graph(args.graph)
    ds = split(g, fractions, seed=args.seed)
    paths = []
    for name, part in (("train", ds.train), ("val", ds.validation), ("test", ds.test)):
        paths.append(write_canonical(part, out / f"{name}.tsv", labels=False))
    artifacts.write_manifest(out, "split", {"fractions": list(fractions), "seed": args.seed},
                             [args.graph], paths)
    _emit({"train": ds.train.num_edges, "val": ds.validation.num_edges, "test": ds.test.num_edges})
    return 0


def cmd_cluster(args) -> int:
    for name in ("user_eps", "item_eps"):
        if getattr(args, name) <= 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    for name in ("user_min_pts", "item_min_pts"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")
    if args.topk is not None and args.topk < 1:
        raise UsageError("--topk must be >= 1")
    out = _out(args)
    g = _load_graph(args.graph)
    cu = dbscan(pairwise_similarity(g, "users", max_distance=args.user_eps), args.user_eps, args.user_min_pts)
    ci = dbscan(pairwise_similarity(g, "items", max_distance=args.item_eps), args.item_eps, args.item_min_pts)
    S = concurrence_matrix(g, topk=args.topk)
    e = cluster_scores(g, cu, ci)
    paths = [out / "user_clusters.tsv", out / "item_clusters.tsv", out / "cluster_scores.csv",
             out / "concurrence.npz"]
    write_assignment(cu, paths[0])
    write_assignment(ci, paths[1])
    paths[2].write_text(e.to_csv())
    S.save(paths[3])
    if args.dump_similarity:
        paths.append(S.to_tsv(out / "concurrence.tsv"))
    config = {k: getattr(args, k) for k in ("user_eps", "user_min_pts", "item_eps", "item_min_pts", "topk")}
    artifacts.write_manifest(out, "cluster", config, [args.graph], paths)
    _emit({"user_clusters": cu.n_clusters, "item_clusters": ci.n_clusters,
           "concurrence_pairs": S.nnz // 2, "cluster_score_total": e.total})
    return 0


def _load_clusters(g, cluster_dir):
    d = Path(cluster_dir)
    for name in ("user_clusters.tsv", "item_clusters.tsv", "concurrence.npz"):
        artifacts.verify(d / name)
    try:
        cu = read_assignment(d / "user_clusters.tsv", "users")
        ci = read_assignment(d / "item_clusters.tsv", "items")
        S = ConcurrenceMatrix.load(d / "concurrence.npz", "items")
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot load cluster artifacts from {d}: {exc}") from exc
    if cu.n_nodes != g.num_users or ci.n_nodes != g.num_items or S.n != g.num_items:
        raise ArtifactError(f"cluster artifacts in {d} do not match the graph")
    manifest = artifacts.read_manifest(d, "cluster")
    return cu, ci, S, manifest


def cmd_sample(args) -> int:
    alpha, retain = PRESETS[args.preset] if args.preset else (0.0, 0.0)
    alpha = args.alpha if args.alpha is not None else alpha
    retain = args.retain if args.retain is not None else retain
    try:
        cfg = SamplerConfig(alpha=alpha, retain=retain, ensemble_size=args.ensemble, seed=args.seed,
                            uniform_fallback=not args.no_fallback, kernel=args.kernel)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not 0 <= args.epsilon <= 1:
        raise UsageError("--epsilon must lie in [0, 1]")
    if args.model == "peco" and not args.clusters:
        raise UsageError("--clusters is required for the peco model")
    out = _out(args)
    g = _load_graph(args.graph)
    inputs = [args.graph]
    if args.model == "node-copy":
        sim = pairwise_similarity(g, "users")
        members = [node_copy_sample(g, sim, args.epsilon, seed=args.seed + k, threads=args.threads)
                   for k in range(args.ensemble)]
        for k, m in enumerate(members):
            write_canonical(m.graph, out / f"sample_{k}.tsv", labels=False)
        write_provenance(members, out / "provenance.json")
    else:
        cu, ci, S, _ = _load_clusters(g, args.clusters)
        inputs += [Path(args.clusters) / n for n in ("user_clusters.tsv", "item_clusters.tsv", "concurrence.npz")]
        gen = inputs_from_clusters(g, cu, ci, S)
        members = generate_ensemble(g, cfg, gen, out_dir=out, threads=args.threads)
    paths = [out / f"sample_{k}.tsv" for k in range(len(members))] + [out / "provenance.json"]
    config = {"model": args.model, **cfg.to_dict(), "preset": args.preset}
    if args.model == "node-copy":
        config["epsilon"] = args.epsilon
    artifacts.write_manifest(out, "sample", config, inputs, paths)
    _emit({"model": args.model, "alpha": cfg.alpha, "retain": cfg.retain, "ensemble": len(members),
           "seed": cfg.seed})
    return 0


def cmd_stats(args) -> int:
    out = _out(args)
    g = _load_graph(args.graph)
    cu, ci, S, manifest = _load_clusters(g, args.clusters)
    for name in ("provenance.json",):
        artifacts.verify(Path(args.samples) / name)
    try:
        ensemble = read_ensemble(args.samples)
    except (OSError, ValueError, KeyError) as exc:
        raise ArtifactError(f"cannot load ensemble from {args.samples}: {exc}") from exc
    for m in ensemble:
        if m.source_digest != g.digest():
            raise ArtifactError("ensemble was not sampled from this graph")
    topk = manifest.get("config", {}).get("topk")
    deg = degree_report(g, ensemble)
    csv_path = out / "degree_report.csv"
    csv_path.write_text(deg.to_csv())
    e = cluster_scores(g, cu, ci)
    summary = {"ensemble": len(ensemble), **deg.summary(), **concurrence_report(S, ensemble, topk=topk),
               **preference_report(e, ensemble, cu, ci)}
    orig_nc = neighborhood_concurrence(S, g)
    samp_nc = np.nanmean([np.nanmean(neighborhood_concurrence(S, m.graph)) for m in ensemble])
    summary["neighborhood_concurrence_original"] = float(np.nanmean(orig_nc)) if np.any(~np.isnan(orig_nc)) else None
    summary["neighborhood_concurrence_sampled"] = float(samp_nc)
    summary_path = out / "stats.txt"
    _emit(summary, summary_path)
    inputs = [args.graph, Path(args.clusters) / "concurrence.npz", Path(args.samples) / "provenance.json"]
    artifacts.write_manifest(out, "stats", {"topk": topk}, inputs, [csv_path, summary_path])
    return 0


def _read_rankings(path) -> dict:
    ranks = {}
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                u, items = line.split("\t", 1)
                ranks[int(u)] = [int(x) for x in items.split(",") if x]
            except ValueError as exc:
                raise GraphFormatError(f"{path}: line {lineno}: {exc}") from exc
    return ranks


def _popularity_rankings(train, K) -> dict:
    order = np.lexsort((np.arange(train.num_items), -train.degrees("items")))
    ranks = {}
    for u in range(train.num_users):
        seen = set(train.items_of(u).tolist())
        ranks[u] = [int(i) for i in order[:K + len(seen)] if int(i) not in seen][:K]
    return ranks


def cmd_eval(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    out = _out(args)
    test = _load_graph(args.test)
    if args.ranking:
        artifacts.verify(args.ranking)
        ranks = _read_rankings(args.ranking)
    else:
        if not args.train:
            raise UsageError("either --ranking or --train is required")
        ranks = _popularity_rankings(_load_graph(args.train), args.k)
    judgments = [RankingJudgment(ranks.get(u, []), frozenset(test.items_of(u).tolist()))
                 for u in range(test.num_users)]
    summary = evaluate(judgments, args.k)
    path = out / "eval.txt"
    _emit(summary, path)
    inputs = [p for p in (args.test, args.train, args.ranking) if p]
    artifacts.write_manifest(out, "eval", {"k": args.k, "ranker": "file" if args.ranking else "popularity"},
                             inputs, [path])
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
    common.add_argument("--config", help="key=value file; command-line flags take precedence")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="peco", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="read an edge list into canonical form")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=FORMATS, default="tsv")
    p.add_argument("--header", action="store_true", help="skip the first line")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", parents=[common], help="per-user train/val/test split")
    p.add_argument("--graph", required=True)
    p.add_argument("--fractions", default="0.6,0.2,0.2")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("cluster", parents=[common], help="DBSCAN clusters and concurrence matrix")
    p.add_argument("--graph", required=True)
    p.add_argument("--user-eps", type=float, default=0.7)
    p.add_argument("--user-min-pts", type=int, default=4)
    p.add_argument("--item-eps", type=float, default=0.7)
    p.add_argument("--item-min-pts", type=int, default=4)
    p.add_argument("--topk", type=int, default=None, help="keep the K largest concurrence scores per item")
    p.add_argument("--dump-similarity", action="store_true", help="also write concurrence.tsv")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sample", parents=[common], help="draw an ensemble of graphs")
    p.add_argument("--graph", required=True)
    p.add_argument("--clusters", help="output directory of the cluster stage (PECO only)")
    p.add_argument("--model", choices=("peco", "node-copy"), default="peco")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--retain", type=float, default=None)
    p.add_argument("--ensemble", type=int, default=1)
    p.add_argument("--kernel", choices=KERNELS, default="fast")
    p.add_argument("--epsilon", type=float, default=0.5, help="Node-Copy copy probability")
    p.add_argument("--no-fallback", action="store_true",
                   help="fail instead of drawing uniformly when all candidate weights are zero")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("stats", parents=[common], help="degree / concurrence / preference preservation")
    p.add_argument("--graph", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--samples", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", parents=[common], help="recall@K and NDCG@K")
    p.add_argument("--test", required=True)
    p.add_argument("--train", help="rank by training popularity when no --ranking is given")
    p.add_argument("--ranking", help="file of 'user<TAB>item,item,...' lines")
    p.add_argument("--k", type=int, default=20)
    p.set_defaults(func=cmd_eval)
    parser._subcommands = sub.choices
    return parser


def read_config(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or known.command not in parser._subcommands:
        return
    sub = parser._subcommands[known.command]
    actions = {a.dest: a for a in sub._actions}
    try:
        values = read_config(known.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from exc
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help", "func"):
            raise UsageError(f"unknown config key {key!r} for {known.command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config {key}={value}: choose from {sorted(action.choices)}")
            defaults[key] = action.type(value) if action.type else value
        action.required = False
    sub.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"peco: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"peco: error: bad config value: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("peco: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"peco: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFormatError, ArtifactError, OSError, ValueError, KeyError) as exc:
        print(f"peco: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
