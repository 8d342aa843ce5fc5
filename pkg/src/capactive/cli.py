"""Command-line entry point: score, select, simulate, evaluate, report, validate.

Exit codes: 0 success, 1 usage error, 2 data or config error, 3 capability
error (an acquisition the generator cannot support).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionScore, rank_and_select
from .core import (
    ACQUISITIONS,
    CapabilityError,
    ConfigError,
    DataError,
    RunConfig,
    by_id,
    derive_seed,
    load_config,
    load_pool,
    read_jsonl,
    seed_split,
    tokenize,
    validate_config,
    write_jsonl,
)
from .embedder import FileEmbedder, HashingEmbedder, load_embeddings
from .generator import FP_REPLAY, ReplayGenerator, SyntheticGenerator, WorldConfig, build_world, load_candidate_dump
from .loop import _ScoringContext, check_capabilities, run_active_learning, score_pool
from .metrics import evaluate_corpus
from .multimodal import fit_visual_clusters

log = logging.getLogger("capactive")

EXIT_USAGE, EXIT_DATA, EXIT_CAPABILITY = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON run config (may hold a nested 'world' object)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--acquisition", choices=ACQUISITIONS, help="overrides the config acquisition")
    p.add_argument("--pool", type=Path, help="pool JSONL (replay mode)")
    p.add_argument("--candidates", type=Path, help="candidate dump JSONL (replay mode)")
    p.add_argument("--embeddings", type=Path, help="caption embedding JSONL (default: hashing embedder)")
    p.add_argument("--eval", type=Path, help="evaluation set JSONL with references")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="scoring worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capactive", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="score every pool video; writes scores.jsonl")
    _common(p)

    p = sub.add_parser("select", help="pick the top-B ids from a score file; writes selection.jsonl")
    _common(p)
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--budget", type=int, required=True)

    p = sub.add_parser("simulate", help="run the full query loop")
    _common(p)
    p.add_argument("--resume", action="store_true", help="continue from OUT/state.json")
    p.add_argument("--stop-after", type=int, help="stop after this many rounds")
    p.add_argument("--timings", action="store_true", help="also write timings.json (not reproducible)")

    p = sub.add_parser("evaluate", help="BLEU-4 / ROUGE-L / CIDEr-D of a hypothesis file")
    _common(p)
    p.add_argument("--hyps", type=Path, required=True, help='JSONL {"video_id", "caption"}')

    p = sub.add_parser("report", help="merge run directories into learning_curves.csv")
    _common(p)
    p.add_argument("runs", nargs="+", type=Path, help="simulate output directories")

    p = sub.add_parser("validate", help="check a config and any given input files")
    _common(p, out_required=False)
    return parser


# -- shared plumbing -------------------------------------------------------------

def _effective_config(args) -> tuple[RunConfig, dict]:
    if args.config is not None:
        cfg, world = load_config(args.config)
    else:
        cfg, world = RunConfig(), {}
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.acquisition is not None:
        overrides["acquisition"] = args.acquisition
    cfg = validate_config(dataclasses.replace(cfg, **overrides))
    WorldConfig.from_json(world)
    return cfg, world


def _embedder(args):
    if args.embeddings is None:
        return HashingEmbedder()
    return FileEmbedder(load_embeddings(args.embeddings))


def _data(args, cfg: RunConfig, world: dict, need_eval: bool = False):
    """(pool, eval_set, generator) from replay files or the synthetic world."""
    if args.candidates is None:
        if args.pool is not None or args.eval is not None:
            raise UsageError("--pool/--eval need --candidates (without it the synthetic world is used)")
        w, train, evals = build_world(WorldConfig.from_json(world), cfg.seed)
        return train, evals, SyntheticGenerator(w, cfg.seed)
    if args.pool is None:
        raise UsageError("--candidates needs --pool")
    pool = load_pool(args.pool)
    evals = load_pool(args.eval) if args.eval is not None else []
    if need_eval and not evals:
        raise UsageError("replay simulation needs --eval")
    dump = load_candidate_dump(args.candidates)
    missing = [v.id for v in [*pool, *evals] if (v.id, "base") not in dump.rows]
    if missing:
        raise DataError(f"candidate dump has no base row for {missing[0]!r}")
    return pool, evals, ReplayGenerator(dump, [*pool, *evals])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# -- commands ------------------------------------------------------------------

def cmd_score(args) -> int:
    cfg, world = _effective_config(args)
    pool, _, gen = _data(args, cfg, world)
    check_capabilities(cfg, gen)
    visual = None
    if cfg.acquisition == "msase_fp" and FP_REPLAY not in gen.capabilities:
        labeled = by_id(pool)
        state = seed_split(pool, cfg.seed_fraction, cfg.seed)
        visual = fit_visual_clusters(gen, [labeled[i] for i in state.labeled], cfg.visual_clusters,
                                     derive_seed(cfg.seed, "visual", 0))
    ctx = _ScoringContext(cfg, gen, _embedder(args), 0, visual)
    scores = score_pool(pool, ctx, args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    write_jsonl(args.out / "scores.jsonl", (s.to_json() for s in scores))
    return 0


def cmd_select(args) -> int:
    scores = [AcquisitionScore.from_json(r) for r in read_jsonl(args.scores)]
    if args.budget < 0:
        raise UsageError("--budget must be nonnegative")
    chosen = rank_and_select(scores, args.budget)
    value = {s.video_id: s for s in scores}
    args.out.mkdir(parents=True, exist_ok=True)
    write_jsonl(args.out / "selection.jsonl",
                ({"rank": r, "video_id": i, "value": value[i].value, "kind": value[i].kind}
                 for r, i in enumerate(chosen, 1)))
    return 0


def cmd_simulate(args) -> int:
    cfg, world = _effective_config(args)
    pool, evals, gen = _data(args, cfg, world, need_eval=True)
    args.out.mkdir(parents=True, exist_ok=True)
    effective = cfg.to_json()
    if args.candidates is None:
        effective["world"] = dataclasses.asdict(WorldConfig.from_json(world))
    report = run_active_learning(cfg, pool, evals, gen, _embedder(args), jobs=args.jobs, out_dir=args.out,
                                 resume=args.resume, stop_after=args.stop_after)
    _write_json(args.out / "effective_config.json", effective)
    if all(r.accuracy is not None for r in report.rows):
        with open(args.out / "accuracy.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iteration", "labeled_fraction", "accuracy"))
            for r in report.rows:
                w.writerow([r.iteration, repr(r.labeled_fraction), repr(r.accuracy)])
    if args.timings:
        _write_json(args.out / "timings.json", [{"iteration": r.iteration, "wall_time": r.wall_time}
                                                for r in report.rows])
    return 0


def _hypotheses(path: Path) -> dict[str, tuple]:
    out = {}
    for n, row in enumerate(read_jsonl(path), 1):
        try:
            vid, caption = str(row["video_id"]), row["caption"]
        except KeyError as exc:
            raise DataError(f"{path}:{n}: missing {exc}") from exc
        if vid in out:
            raise DataError(f"{path}:{n}: duplicate hypothesis for {vid!r}")
        out[vid] = tokenize(caption) if isinstance(caption, str) else tuple(caption)
    return out


def cmd_evaluate(args) -> int:
    if args.eval is None:
        raise UsageError("evaluate needs --eval (references)")
    hyps = _hypotheses(args.hyps)
    refs = {v.id: v.references for v in load_pool(args.eval)}
    ids = sorted(hyps)
    missing = [i for i in ids if not refs.get(i)]
    if missing:
        raise DataError(f"no references for {missing[0]!r}")
    report = evaluate_corpus([hyps[i] for i in ids], [refs[i] for i in ids])
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "metrics.json", report.to_json())
    print(json.dumps(report.to_json(), sort_keys=True))
    return 0


def _read_run(run: Path) -> tuple[str, list[dict]]:
    try:
        cfg = json.loads((run / "effective_config.json").read_text(encoding="utf-8"))
        with open(run / "report.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, ValueError) as exc:
        raise DataError(f"unreadable run directory {run}: {exc}") from exc
    acc = {}
    if (run / "accuracy.csv").exists():
        with open(run / "accuracy.csv", newline="", encoding="utf-8") as fh:
            acc = {r["iteration"]: r["accuracy"] for r in csv.DictReader(fh)}
    for r in rows:
        r["accuracy"] = acc.get(r["iteration"])
    return cfg.get("acquisition", run.name), rows


def cmd_report(args) -> int:
    groups: dict[tuple[str, int], list[dict]] = defaultdict(list)
    for run in args.runs:
        method, rows = _read_run(run)
        for r in rows:
            groups[method, int(r["iteration"])].append(r)
    cols = ("labeled_fraction", "bleu4", "rougeL", "ciderD", "accuracy")
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "learning_curves.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "iteration", "runs", *cols))
        for (method, it), rows in sorted(groups.items()):
            means = []
            for c in cols:
                vals = [float(r[c]) for r in rows if r.get(c) not in (None, "")]
                means.append(repr(float(np.mean(vals))) if len(vals) == len(rows) else "")
            w.writerow([method, it, len(rows), *means])
    return 0


def cmd_validate(args) -> int:
    cfg, world = _effective_config(args)
    if args.embeddings is not None:
        load_embeddings(args.embeddings)
    if args.candidates is not None:
        pool, evals, gen = _data(args, cfg, world)
        check_capabilities(cfg, gen)
    else:
        pool = load_pool(args.pool) if args.pool is not None else []
        evals = load_pool(args.eval) if args.eval is not None else []
    if {v.id for v in pool} & {v.id for v in evals}:
        raise DataError("pool and eval set share ids")
    print(f"ok: {cfg.acquisition}, seed {cfg.seed}, digest {cfg.digest()[:12]}")
    return 0


COMMANDS = {
    "score": cmd_score,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("capactive: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"capactive: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapabilityError as exc:
        print(f"capactive: capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (ConfigError, DataError, OSError) as exc:
        print(f"capactive: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
