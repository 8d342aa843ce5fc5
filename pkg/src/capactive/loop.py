"""The pool-based query loop: score, rank, select, label, update, evaluate."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .acquisition import (
    AcquisitionScore,
    mean_likelihood_score,
    random_scores,
    rank_and_select,
    ranked,
    sase_entropy,
    sequential_entropy,
)
from .core import (
    CapabilityError,
    ConfigError,
    DataError,
    PoolState,
    RunConfig,
    VideoExample,
    by_id,
    derive_seed,
    iteration_budgets,
    read_jsonl,
    seed_split,
    validate_config,
)
from .embedder import HashingEmbedder
from .generator import (
    DECODE,
    FP_REPLAY,
    STOCHASTIC,
    VISUAL,
    CaptionGenerator,
    SyntheticGenerator,
    WorldConfig,
    build_world,
)
from .metrics import evaluate_corpus
from .multimodal import PerturbationSpec, expand_candidates_fp, expand_candidates_mp, fit_visual_clusters

log = logging.getLogger(__name__)

STATE_VERSION = "capactive-state/1"
REPORT_HEADER = ("iteration", "labeled_fraction", "bleu4", "rougeL", "ciderD")


@dataclass(frozen=True)
class SelectionRecord:
    iteration: int
    video_id: str
    value: float
    rank: int
    kind: str

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReportRow:
    iteration: int
    labeled_fraction: float
    bleu4: float
    rougeL: float
    ciderD: float
    accuracy: float | None = None
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    rows: list[ReportRow] = field(default_factory=list)
    selections: list[SelectionRecord] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow([r.iteration, repr(r.labeled_fraction), repr(r.bleu4), repr(r.rougeL), repr(r.ciderD)])

    @property
    def final_accuracy(self) -> float | None:
        return self.rows[-1].accuracy if self.rows else None


def query_labels(ids: Sequence[str], oracle: Mapping[str, VideoExample]) -> list[tuple[str, tuple]]:
    out = []
    for i in ids:
        v = oracle.get(i)
        if v is None or not v.references:
            raise DataError(f"oracle has no references for {i!r}")
        out.append((i, v.references))
    return out


def check_capabilities(cfg: RunConfig, generator: CaptionGenerator) -> None:
    caps = generator.capabilities
    if cfg.acquisition == "msase_fp" and FP_REPLAY not in caps and not {VISUAL, DECODE} <= caps:
        raise CapabilityError("msase_fp needs visual features and a feature decoder (or fp:<k> dump rows)")
    if cfg.acquisition == "msase_mp" and STOCHASTIC not in caps:
        raise CapabilityError("msase_mp needs stochastic decoding passes (mp:<p> dump rows)")


# -- scoring sweep ----------------------------------------------------------------

@dataclass
class _ScoringContext:
    cfg: RunConfig
    generator: CaptionGenerator
    embedder: object
    iteration: int
    visual_model: object = None


_CTX: _ScoringContext | None = None


def _install(ctx: _ScoringContext) -> None:
    global _CTX
    _CTX = ctx


def score_video(video: VideoExample, ctx: _ScoringContext) -> AcquisitionScore:
    cfg = ctx.cfg
    k = cfg.beam_width
    kind = cfg.acquisition
    if kind == "msase_fp":
        cs = expand_candidates_fp(video, ctx.generator, ctx.visual_model,
                                  PerturbationSpec(cfg.epsilon, cfg.nearest_K), k)
    elif kind == "msase_mp":
        cs = expand_candidates_mp(video, ctx.generator, cfg.dropout_passes, k,
                                  derive_seed(cfg.seed, "mp", ctx.iteration))
    else:
        cs = ctx.generator.generate(video, k)
    if cfg.length_normalize:
        cs = cs.length_normalized()
    if kind == "se":
        return sequential_entropy(cs)
    if kind == "mean_likelihood":
        return mean_likelihood_score(cs)
    emb = ctx.embedder.matrix([c.tokens for c in cs.candidates])
    seed = derive_seed(cfg.seed, ctx.iteration, video.id)
    return sase_entropy(cs, emb, cfg.effective_clusters, cfg.sase_mode, seed, kind=kind)


def _score_in_worker(video: VideoExample) -> AcquisitionScore:
    return score_video(video, _CTX)


def score_pool(videos: Sequence[VideoExample], ctx: _ScoringContext, jobs: int = 1) -> list[AcquisitionScore]:
    """Score every video; results come back ordered by video id whatever `jobs` is."""
    videos = sorted(videos, key=lambda v: v.id)
    if ctx.cfg.acquisition == "random":
        return random_scores([v.id for v in videos], ctx.cfg.seed, ctx.iteration)
    if jobs <= 1 or len(videos) < 2:
        return [score_video(v, ctx) for v in videos]
    chunk = max(1, len(videos) // (4 * jobs))
    with ProcessPoolExecutor(jobs, initializer=_install, initargs=(ctx,)) as ex:
        return list(ex.map(_score_in_worker, videos, chunksize=chunk))


# -- evaluation ---------------------------------------------------------------------

def evaluate_generator(generator: CaptionGenerator, eval_set: Sequence[VideoExample], k: int):
    """Score each eval video's top-1 candidate against its references."""
    hyps = [generator.generate(v, k).top().tokens for v in eval_set]
    refs = [v.references for v in eval_set]
    report = evaluate_corpus(hyps, refs)
    acc = generator.concept_accuracy(eval_set, k) if hasattr(generator, "concept_accuracy") else None
    return report, acc


# -- state file ---------------------------------------------------------------------

def save_state(path, cfg: RunConfig, state: PoolState, rows: Sequence[ReportRow]) -> None:
    blob = {
        "version": STATE_VERSION,
        "cfg_digest": cfg.digest(),
        "pool_state": state.to_json(),
        "iteration": state.iteration,
        "rng_state": {"scheme": "blake2b-derived", "seed": cfg.seed, "next_iteration": state.iteration + 1},
        # wall time stays out so that state files are reproducible
        "report": [{k: v for k, v in r.to_json().items() if k != "wall_time"} for r in rows],
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(blob, sort_keys=True, indent=1), encoding="utf-8")
    tmp.replace(path)


def load_state(path, cfg: RunConfig) -> tuple[PoolState, list[ReportRow]]:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
        version = blob["version"]
        digest = blob["cfg_digest"]
        state = PoolState.from_json(blob["pool_state"])
        rows = [ReportRow(**r) for r in blob["report"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"corrupted state file {path}: {exc}") from exc
    if version != STATE_VERSION:
        raise DataError(f"state file version {version!r} != {STATE_VERSION!r}")
    if digest != cfg.digest():
        raise ConfigError("config", "state file was written with a different config")
    return state, rows


# -- the loop -----------------------------------------------------------------------

def run_active_learning(cfg: RunConfig, pool: Sequence[VideoExample], eval_set: Sequence[VideoExample],
                        generator: CaptionGenerator, embedder=None, *, jobs: int = 1,
                        out_dir: str | Path | None = None, resume: bool = False,
                        stop_after: int | None = None) -> RunReport:
    """Run the seeded query loop for `cfg.iterations` rounds.

    With `out_dir`, the selection log, state file and report are written
    there after every round; `resume=True` continues from the state file.
    `stop_after` halts after that many rounds (for interruption tests).
    """
    validate_config(cfg)
    check_capabilities(cfg, generator)
    embedder = embedder or HashingEmbedder()
    if not pool:
        raise DataError("empty pool")
    if not eval_set:
        raise DataError("empty evaluation set")
    overlap = {v.id for v in pool} & {v.id for v in eval_set}
    if overlap:
        raise DataError(f"pool and eval set share ids, e.g. {sorted(overlap)[0]!r}")
    oracle = by_id(pool)
    budgets = iteration_budgets(len(pool), cfg)

    out = Path(out_dir) if out_dir is not None else None
    log_path = out / "selection_log.jsonl" if out else None
    state_path = out / "state.json" if out else None

    report = RunReport()
    if resume:
        if state_path is None or not state_path.exists():
            raise DataError("nothing to resume: no state file")
        state, report.rows = load_state(state_path, cfg)
        report.selections = [SelectionRecord(**r) for r in read_jsonl(log_path)] if log_path.exists() else []
        # rebuild the model from the accumulated labels
        generator.update([oracle[i] for i in state.labeled])
    else:
        state = seed_split(pool, cfg.seed_fraction, cfg.seed)
        generator.update([oracle[i] for i in state.labeled])
        t0 = time.perf_counter()
        metrics, acc = evaluate_generator(generator, eval_set, cfg.beam_width)
        report.rows.append(ReportRow(0, len(state.labeled) / len(pool), metrics.bleu4, metrics.rougeL,
                                     metrics.ciderD, acc, time.perf_counter() - t0))
        if out:
            out.mkdir(parents=True, exist_ok=True)
            log_path.write_text("", encoding="utf-8")
            save_state(state_path, cfg, state, report.rows)

    done_now = 0
    while state.iteration < len(budgets):
        if stop_after is not None and done_now >= stop_after:
            break
        t0 = time.perf_counter()
        it = state.iteration + 1
        b = budgets[it - 1]
        if b > len(state.unlabeled):
            raise DataError(f"budget exhausted: need {b}, only {len(state.unlabeled)} unlabeled")
        unlabeled = [oracle[i] for i in state.unlabeled]
        visual = None
        if cfg.acquisition == "msase_fp" and FP_REPLAY not in generator.capabilities:
            visual = fit_visual_clusters(generator, [oracle[i] for i in state.labeled], cfg.visual_clusters,
                                         derive_seed(cfg.seed, "visual", it))
        ctx = _ScoringContext(cfg, generator, embedder, it, visual)
        scores = score_pool(unlabeled, ctx, jobs)
        chosen = rank_and_select(scores, b)
        value = {s.video_id: s.value for s in scores}
        records = [SelectionRecord(it, vid, value[vid], r, cfg.acquisition) for r, vid in enumerate(chosen, 1)]
        query_labels(chosen, oracle)
        state = state.move(chosen)
        generator.update([oracle[i] for i in state.labeled])
        metrics, acc = evaluate_generator(generator, eval_set, cfg.beam_width)
        report.rows.append(ReportRow(it, len(state.labeled) / len(pool), metrics.bleu4, metrics.rougeL,
                                     metrics.ciderD, acc, time.perf_counter() - t0))
        report.selections.extend(records)
        if out:
            with open(log_path, "a", encoding="utf-8") as fh:
                for r in records:
                    fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
            save_state(state_path, cfg, state, report.rows)
        done_now += 1
        log.info("iteration %d: selected %d, labeled fraction %.3f", it, len(chosen), report.rows[-1].labeled_fraction)

    if out:
        report.write_csv(out / "report.csv")
    return report


def simulate_synthetic(cfg: RunConfig, world_cfg: WorldConfig | None = None, **kwargs) -> RunReport:
    """Build the synthetic world for `cfg.seed` and run the loop on it."""
    world, train, evals = build_world(world_cfg or WorldConfig(), cfg.seed)
    return run_active_learning(cfg, train, evals, SyntheticGenerator(world, cfg.seed), **kwargs)


__all__ = [
    "SelectionRecord", "ReportRow", "RunReport", "query_labels", "check_capabilities", "score_pool",
    "score_video", "evaluate_generator", "save_state", "load_state", "run_active_learning", "ranked",
    "simulate_synthetic",
    "STATE_VERSION", "REPORT_HEADER",
]
