"""Time every pipeline stage on a synthetic graph of yelp2018 size."""

import resource
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from _config import parse
from peco.cli import main
from peco.synthetic import planted_bipartite, write_edge_list


@dataclass(frozen=True)
class BenchConfig:
    n_users: int = 45_000
    n_items: int = 45_000
    n_edges: int = 1_000_000
    n_blocks: int = 100
    topk: int = 200
    preset: str = "yelp2018"
    threads: int = 1
    seed: int = 0
    workdir: str = ""


def run(cfg: BenchConfig) -> dict:
    work = Path(cfg.workdir or tempfile.mkdtemp(prefix="peco-bench-"))
    work.mkdir(parents=True, exist_ok=True)
    g = planted_bipartite(cfg.n_users, cfg.n_items, cfg.n_edges, n_blocks=cfg.n_blocks, seed=cfg.seed)
    write_edge_list(g, work / "edges.tsv")
    graph = str(work / "g" / "graph.tsv")
    common = ["--threads", str(cfg.threads), "--seed", str(cfg.seed)]
    stages = {
        "ingest": ["ingest", "--input", str(work / "edges.tsv"), "--out", str(work / "g")],
        "cluster": ["cluster", "--graph", graph, "--out", str(work / "c"), "--topk", str(cfg.topk)],
        "sample": ["sample", "--graph", graph, "--clusters", str(work / "c"), "--out", str(work / "s"),
                   "--preset", cfg.preset],
        "stats": ["stats", "--graph", graph, "--clusters", str(work / "c"), "--samples", str(work / "s"),
                  "--out", str(work / "st")],
    }
    timings = {}
    for name, argv in stages.items():
        start = time.perf_counter()
        if main(argv + common) != 0:
            raise SystemExit(f"stage {name} failed")
        timings[name] = time.perf_counter() - start
    timings["total"] = sum(timings.values())
    timings["max_rss_mb"] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024
    timings["edges"] = g.num_edges
    return timings


if __name__ == "__main__":
    cfg = parse(BenchConfig, __doc__)
    print(asdict(cfg), file=sys.stderr)
    for key, value in run(cfg).items():
        print(f"{key}={value:.2f}" if isinstance(value, float) else f"{key}={value}")
