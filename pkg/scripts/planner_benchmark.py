"""Three-way planner benchmark plus the static-cache ablation on a synthetic campus.

    python3 scripts/planner_benchmark.py --seed 1 --per-bucket 10 --orders 6
"""

import argparse
import json
import time
from pathlib import Path

from osmagnav.bench import generate_queries, run_benchmark, run_cache_ablation
from osmagnav.model import parse_osmag
from osmagnav.passage_graph import build_base_graph, build_caches
from osmagnav.synthetic import generate_synthetic_campus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--per-bucket", type=int, default=10)
    ap.add_argument("--orders", type=int, default=6)
    ap.add_argument("--ablation-queries", type=int, default=20)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    xml, _ = generate_synthetic_campus(args.seed)
    graph = parse_osmag(xml)
    t0 = time.perf_counter()
    pg, _ = build_base_graph(graph)
    cache = build_caches(pg, graph)
    print(f"graph: {len(pg.vertices)} passages, {pg.num_edges()} edges, built in {time.perf_counter() - t0:.1f} s")

    queries = generate_queries(graph, pg, cache, per_bucket=args.per_bucket, seed=args.seed)
    report = run_benchmark(graph, pg, cache, queries, orders=args.orders, seed=args.seed)
    print(report.table())

    pool = [q for q in queries if q.bucket != "short"] + [q for q in queries if q.bucket == "short"]
    ablation = run_cache_ablation(graph, pg, cache, pool[: args.ablation_queries], trials=args.trials)
    print(json.dumps(ablation.summary(), indent=1))

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "benchmark.json").write_text(report.to_json())
    (args.out / "ablation.json").write_text(ablation.to_json())
    print(f"wrote {args.out}/benchmark.json and {args.out}/ablation.json")


if __name__ == "__main__":
    main()
