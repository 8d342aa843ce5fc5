"""Domain types, run configuration and pool bookkeeping."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ACQUISITIONS = ("random", "se", "mean_likelihood", "sase", "msase_fp", "msase_mp")
SASE_MODES = ("max", "mean")

_WS = re.compile(r"[ \t\n\r\x0b\x0c]+")


class CapactiveError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CapactiveError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


class DataError(CapactiveError):
    pass


class CapabilityError(CapactiveError):
    pass


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(t for t in _WS.split(text.lower()) if t)


def caption_key(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of str/int/bytes parts."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        b = p if isinstance(p, bytes) else repr(p).encode()
        h.update(len(b).to_bytes(4, "little"))
        h.update(b)
    return int.from_bytes(h.digest(), "little")


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


@dataclass(frozen=True)
class VideoExample:
    id: str
    visual_feature: tuple[float, ...] = ()
    references: tuple[tuple[str, ...], ...] | None = None

    def feature_array(self) -> np.ndarray:
        return np.asarray(self.visual_feature, dtype=np.float64)

    def to_json(self) -> dict:
        row = {"id": self.id, "visual_feature": list(self.visual_feature)}
        if self.references is not None:
            row["references"] = [list(r) for r in self.references]
        return row

    @classmethod
    def from_json(cls, row: dict) -> "VideoExample":
        if "id" not in row:
            raise DataError("pool row without 'id'")
        refs = row.get("references")
        if refs is not None:
            refs = tuple(tokenize(r) if isinstance(r, str) else tuple(t.lower() for t in r) for r in refs)
        feature = tuple(float(x) for x in row.get("visual_feature") or ())
        return cls(str(row["id"]), feature, refs)


@dataclass(frozen=True)
class Candidate:
    tokens: tuple[str, ...]
    logprob: float
    origin: str = "base"

    def __post_init__(self):
        if not self.tokens:
            raise DataError("candidate with empty token sequence")
        if not math.isfinite(self.logprob):
            raise DataError(f"non-finite logprob {self.logprob!r}")

    @property
    def caption(self) -> str:
        return caption_key(self.tokens)


def _candidate_order(c: Candidate):
    return (-c.logprob, c.tokens)


@dataclass(frozen=True)
class CandidateSet:
    """A video's candidate captions, descending by logprob (ties by tokens)."""

    video_id: str
    candidates: tuple[Candidate, ...]
    origin: str = "base"

    def __post_init__(self):
        if not self.candidates:
            raise DataError(f"empty candidate set for {self.video_id!r}")
        keys = [_candidate_order(c) for c in self.candidates]
        if any(a > b for a, b in zip(keys, keys[1:])):
            raise DataError(f"candidate set for {self.video_id!r} is not sorted")

    @classmethod
    def build(cls, video_id: str, candidates: Iterable[Candidate], origin: str = "base") -> "CandidateSet":
        return cls(video_id, tuple(sorted(candidates, key=_candidate_order)), origin)

    def __len__(self):
        return len(self.candidates)

    @property
    def logprobs(self) -> np.ndarray:
        return np.array([c.logprob for c in self.candidates], dtype=np.float64)

    def top(self) -> Candidate:
        return self.candidates[0]

    def truncate(self, k: int) -> "CandidateSet":
        return CandidateSet(self.video_id, self.candidates[:k], self.origin)

    def length_normalized(self) -> "CandidateSet":
        return CandidateSet.build(
            self.video_id,
            (dataclasses.replace(c, logprob=c.logprob / len(c.tokens)) for c in self.candidates),
            self.origin,
        )


@dataclass(frozen=True)
class PoolState:
    labeled: tuple[str, ...]
    unlabeled: tuple[str, ...]
    iteration: int = 0

    def __post_init__(self):
        if set(self.labeled) & set(self.unlabeled):
            raise DataError("labeled and unlabeled sets overlap")
        if len(set(self.labeled)) != len(self.labeled) or len(set(self.unlabeled)) != len(self.unlabeled):
            raise DataError("duplicate id in pool state")

    def move(self, ids: Sequence[str]) -> "PoolState":
        """Move `ids` from unlabeled to labeled and advance the iteration."""
        chosen = set(ids)
        missing = chosen - set(self.unlabeled)
        if missing:
            raise DataError(f"ids not in unlabeled pool: {sorted(missing)[:5]}")
        return PoolState(
            self.labeled + tuple(ids),
            tuple(i for i in self.unlabeled if i not in chosen),
            self.iteration + 1,
        )

    def to_json(self) -> dict:
        return {"labeled": list(self.labeled), "unlabeled": list(self.unlabeled), "iteration": self.iteration}

    @classmethod
    def from_json(cls, row: dict) -> "PoolState":
        return cls(tuple(row["labeled"]), tuple(row["unlabeled"]), int(row["iteration"]))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    beam_width: int = 10
    # None: 10 for sase, 30 for the multimodal kinds
    caption_clusters: int | None = None
    sase_mode: str = "max"
    acquisition: str = "sase"
    epsilon: float = 0.015
    nearest_K: int = 5
    visual_clusters: int = 300
    dropout_passes: int = 5
    seed_fraction: float = 0.05
    step_fraction: float = 0.05
    iterations: int = 4
    length_normalize: bool = False

    @property
    def effective_clusters(self) -> int:
        if self.caption_clusters is not None:
            return self.caption_clusters
        return 30 if self.acquisition in ("msase_fp", "msase_mp") else 10

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, row: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(row) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        return cls(**row)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def validate_config(cfg: RunConfig) -> RunConfig:
    """Return `cfg` unchanged, or raise ConfigError naming the first violated invariant."""
    if not _is_int(cfg.seed) or not (-(2**63) <= cfg.seed < 2**64):
        raise ConfigError("seed", "must be a 64-bit integer")
    for name in ("beam_width", "nearest_K", "visual_clusters", "dropout_passes"):
        v = getattr(cfg, name)
        if not _is_int(v) or v < 1:
            raise ConfigError(name, "must be a positive integer")
    # zero iterations is allowed: the run reports the seed row only
    if not _is_int(cfg.iterations) or cfg.iterations < 0:
        raise ConfigError("iterations", "must be a nonnegative integer")
    if cfg.caption_clusters is not None and (not _is_int(cfg.caption_clusters) or cfg.caption_clusters < 1):
        raise ConfigError("caption_clusters", "must be >= 1")
    if cfg.sase_mode not in SASE_MODES:
        raise ConfigError("sase_mode", f"must be one of {SASE_MODES}")
    if cfg.acquisition not in ACQUISITIONS:
        raise ConfigError("acquisition", f"must be one of {ACQUISITIONS}")
    if not isinstance(cfg.epsilon, (int, float)) or not math.isfinite(cfg.epsilon) or cfg.epsilon < 0:
        raise ConfigError("epsilon", "must be a finite nonnegative real")
    for name in ("seed_fraction", "step_fraction"):
        v = getattr(cfg, name)
        if not isinstance(v, (int, float)) or not (0 < v <= 1):
            raise ConfigError(name, "must lie in (0, 1]")
    if cfg.seed_fraction + cfg.iterations * cfg.step_fraction > 1 + 1e-12:
        raise ConfigError("budget", "seed_fraction + iterations * step_fraction exceeds 1")
    if cfg.nearest_K > cfg.visual_clusters:
        raise ConfigError("nearest_K", "nearest_K > visual_clusters")
    if not isinstance(cfg.length_normalize, bool):
        raise ConfigError("length_normalize", "must be a boolean")
    return cfg


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def seed_split(pool: Sequence[VideoExample], fraction: float, seed: int) -> PoolState:
    if not pool:
        raise DataError("empty pool")
    if not (0 < fraction <= 1):
        raise ConfigError("seed_fraction", "must lie in (0, 1]")
    ids = sorted(v.id for v in pool)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate ids in pool")
    n_labeled = round_half_up(fraction * len(ids))
    order = np.random.default_rng(derive_seed("seed_split", seed)).permutation(len(ids))
    chosen = {ids[i] for i in order[:n_labeled]}
    return PoolState(
        tuple(i for i in ids if i in chosen),
        tuple(i for i in ids if i not in chosen),
        0,
    )


def iteration_budgets(pool_size: int, cfg: RunConfig) -> list[int]:
    """Per-iteration selection counts: floor share, remainder on the last iteration."""
    if cfg.iterations == 0:
        return []
    total = round_half_up(cfg.iterations * cfg.step_fraction * pool_size)
    share = total // cfg.iterations
    budgets = [share] * cfg.iterations
    budgets[-1] += total - share * cfg.iterations
    return budgets


# -- file formats -----------------------------------------------------------

def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: {exc}") from exc
    return rows


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_pool(path: str | Path) -> list[VideoExample]:
    pool = [VideoExample.from_json(r) for r in read_jsonl(path)]
    ids = [v.id for v in pool]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate video ids")
    dims = {len(v.visual_feature) for v in pool if v.visual_feature}
    if len(dims) > 1:
        raise DataError(f"{path}: visual features of differing dimension {sorted(dims)}")
    return pool


def write_pool(path: str | Path, pool: Iterable[VideoExample]) -> None:
    write_jsonl(path, (v.to_json() for v in pool))


def load_config(path: str | Path) -> tuple[RunConfig, dict]:
    """Read a config file; returns the RunConfig and any nested `world` section."""
    try:
        with open(path, encoding="utf-8") as fh:
            row = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not isinstance(row, dict):
        raise DataError(f"{path}: config must be a JSON object")
    world = row.pop("world", None) or {}
    return RunConfig.from_json(row), world


def by_id(pool: Iterable[VideoExample]) -> dict[str, VideoExample]:
    return {v.id: v for v in pool}


__all__ = [
    "ACQUISITIONS", "SASE_MODES", "CapactiveError", "ConfigError", "DataError", "CapabilityError",
    "tokenize", "caption_key", "derive_seed", "rng_for", "VideoExample", "Candidate", "CandidateSet",
    "PoolState", "RunConfig", "validate_config", "seed_split", "iteration_budgets", "round_half_up",
    "read_jsonl", "write_jsonl", "load_pool", "write_pool", "load_config", "by_id",
]
