"""Operator-facing command line: search, resume, eval, export-best, baseline, stats.

Output directory layout is fixed so downstream tooling can rely on paths:

    out/
      config.yaml            effective configuration echo
      events.log             one JSON record per search event
      generations/stats.jsonl  per-generation statistics
      best/normal.genotype.txt
      best/reduction.genotype.txt
      best/descriptor-search.json   compiled at the search width
      best/descriptor-full.json     compiled at the full-training width
      snapshot.json          resumable search state

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 trainer-protocol failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .compiler import assemble_network
from .evolution import BestEver, SearchResult, random_baseline, run_search
from .fitness import (
    ProtocolError,
    SurrogateEvaluator,
    TrainerClient,
    build_request,
    relative_improvement,
    surrogate_eval,
)
from .persistence import (
    export_descriptor,
    import_descriptor,
    read_snapshot,
    write_snapshot,
)
from .search_space import config_to_dict, default_config, load_config

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PROTOCOL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else default_config()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    generations = getattr(args, "budget_generations", None)
    seconds = getattr(args, "budget_seconds", None)
    if generations is not None and seconds is not None:
        raise UsageError("give either --budget-generations or --budget-seconds, not both")
    if generations is not None:
        changes.update(budget_generations=generations, budget_seconds=None)
    if seconds is not None:
        changes.update(budget_seconds=seconds, budget_generations=None)
    if changes:
        cfg = replace(cfg, **changes)
        cfg.validate()
    return cfg


def _make_evaluator(args, cfg, out_dir: Path | None):
    if args.evaluator == "surrogate":
        return SurrogateEvaluator(seed=cfg.rng_seed)
    if not args.trainer_cmd:
        raise UsageError("--evaluator external requires --trainer-cmd")
    weight_dir = str((out_dir / "weights") if out_dir else Path("weights"))
    Path(weight_dir).mkdir(parents=True, exist_ok=True)
    return TrainerClient(
        args.trainer_cmd.split(), weight_dir=weight_dir, seed=cfg.rng_seed,
        timeout=args.trainer_timeout,
    )


def _write_run_artifacts(out: Path, cfg, result: SearchResult, *, append_events: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "generations").mkdir(exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
    mode = "a" if append_events else "w"
    with open(out / "events.log", mode) as fh:
        for event in result.events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
    with open(out / "generations" / "stats.jsonl", mode) as fh:
        for row in result.stats:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_best(out / "best", cfg, result.best)
    write_snapshot(result.state, cfg, out / "snapshot.json")


def _write_best(best_dir: Path, cfg, best: BestEver | None) -> None:
    if best is None:
        return
    best_dir.mkdir(parents=True, exist_ok=True)
    (best_dir / "normal.genotype.txt").write_text(best.normal_genotype.to_text() + "\n")
    (best_dir / "reduction.genotype.txt").write_text(best.reduction_genotype.to_text() + "\n")
    for name, width in (("descriptor-search.json", cfg.search_width), ("descriptor-full.json", cfg.full_width)):
        descriptor = assemble_network(
            best.normal_genotype, best.reduction_genotype,
            best.normal_genes, best.reduction_genes,
            profile=cfg.profile, width=width,
            normal_repeats=cfg.normal_repeats, classes=cfg.classes,
        )
        export_descriptor(descriptor, best_dir / name)


def cmd_search(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    evaluator = _make_evaluator(args, cfg, out)
    try:
        result = run_search(cfg, evaluator)
    finally:
        evaluator.close()
    _write_run_artifacts(out, cfg, result, append_events=False)
    best = result.best
    print(f"generations: {result.state.generation}  best fitness: {best.fitness:.4f} "
          f"(individual {best.individual_id}, generation {best.generation})")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_resume(args) -> int:
    snap_path = Path(args.snapshot)
    cfg, state = read_snapshot(snap_path)
    overrides = {}
    if args.budget_generations is not None:
        overrides = {"budget_generations": args.budget_generations, "budget_seconds": None}
    if args.budget_seconds is not None:
        overrides = {"budget_seconds": args.budget_seconds, "budget_generations": None}
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    out = Path(args.out) if args.out else snap_path.parent
    evaluator = _make_evaluator(args, cfg, out)
    try:
        result = run_search(cfg, evaluator, state=state)
    finally:
        evaluator.close()
    _write_run_artifacts(out, cfg, result, append_events=True)
    print(f"resumed to generation {result.state.generation}; best fitness {result.best.fitness:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    descriptor = import_descriptor(args.descriptor)
    if args.epochs == 0:
        record = {"candidate_id": 0, "fitness": 0.0, "epochs": 0, "wall_time": 0.0}
    else:
        request = build_request(descriptor, candidate_id=0, epochs_to_train=args.epochs, cumulative_epochs=args.epochs)
        if args.evaluator == "surrogate":
            rec = surrogate_eval(request, seed=args.seed or 0)
        else:
            if not args.trainer_cmd:
                raise UsageError("--evaluator external requires --trainer-cmd")
            client = TrainerClient(
                args.trainer_cmd.split(), weight_dir=args.weight_dir or "weights",
                seed=args.seed or 0, timeout=args.trainer_timeout,
            )
            try:
                rec = client.evaluate(request)
            finally:
                client.close()
        record = {"candidate_id": rec.candidate_id, "fitness": rec.fitness, "epochs": rec.epochs, "wall_time": rec.wall_time}
    if args.format == "structured":
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"fitness: {record['fitness']:.6f}  epochs: {record['epochs']}  wall_time: {record['wall_time']:.3f}s")
    return EXIT_OK


def cmd_export_best(args) -> int:
    cfg, state = read_snapshot(args.snapshot)
    if state.best_ever is None:
        print("snapshot holds no evaluated candidate yet", file=sys.stderr)
        return EXIT_RUNTIME
    _write_best(Path(args.out), cfg, state.best_ever)
    print(f"best candidate (fitness {state.best_ever.fitness:.4f}) exported to {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _load_cfg(args)
    evaluator = _make_evaluator(args, cfg, None)
    try:
        fits = random_baseline(cfg, evaluator, args.count)
    finally:
        evaluator.close()
    print(json.dumps({"count": args.count, "fitnesses": fits, "mean": sum(fits) / len(fits) if fits else None}, sort_keys=True))
    return EXIT_OK


def _parse_accs(text: str) -> list[float]:
    path = Path(text)
    if path.exists():
        text = path.read_text().replace("\n", ",")
    values = [float(t) for t in text.replace(",", " ").split()]
    if not values:
        raise UsageError("empty accuracy list")
    return values


def cmd_stats(args) -> int:
    search = _parse_accs(args.search_accs)
    baseline = _parse_accs(args.baseline_accs)
    acc_m = sum(search) / len(search)
    acc_r = sum(baseline) / len(baseline)
    ri = relative_improvement(acc_m, acc_r)
    print(json.dumps({
        "search_mean": acc_m, "baseline_mean": acc_r,
        "relative_improvement": ri,
    }, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evocell", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_eval_flags(p):
        p.add_argument("--evaluator", choices=("surrogate", "external"), default="surrogate")
        p.add_argument("--trainer-cmd", default=None, help="command line spawning a trainer process")
        p.add_argument("--trainer-timeout", type=float, default=None)

    p = sub.add_parser("search", help="run an architecture search")
    p.add_argument("--config", default=None, help="YAML config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget-generations", type=int, default=None)
    p.add_argument("--budget-seconds", type=float, default=None)
    p.add_argument("--out", required=True)
    add_eval_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("resume", help="continue a search from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", default=None, help="defaults to the snapshot's directory")
    p.add_argument("--budget-generations", type=int, default=None)
    p.add_argument("--budget-seconds", type=float, default=None)
    add_eval_flags(p)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval", help="score a model descriptor")
    p.add_argument("descriptor")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--weight-dir", default=None)
    add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-best", help="export the best candidate from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_best)

    p = sub.add_parser("baseline", help="evaluate random candidates for the comparison population")
    p.add_argument("--config", default=None)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    add_eval_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("stats", help="means and relative improvement of two accuracy lists")
    p.add_argument("--search-accs", required=True, help="comma-separated values or a file")
    p.add_argument("--baseline-accs", required=True)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProtocolError as exc:
        print(f"trainer protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
