"""Acquisition scores over candidate sets and top-B selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import kmeans_fit
from .core import CandidateSet, DataError, derive_seed

ENTROPY_KINDS = ("se", "sase", "msase_fp", "msase_mp")


@dataclass(frozen=True)
class AcquisitionScore:
    video_id: str
    value: float
    kind: str
    # cluster index -> (cluster score, cluster probability)
    detail: dict | None = None

    def to_json(self) -> dict:
        row = {"video_id": self.video_id, "kind": self.kind, "value": self.value}
        if self.detail is not None:
            row["detail"] = {str(c): [s, p] for c, (s, p) in self.detail.items()}
        return row

    @classmethod
    def from_json(cls, row: dict) -> "AcquisitionScore":
        detail = row.get("detail")
        if detail is not None:
            detail = {int(c): (float(s), float(p)) for c, (s, p) in detail.items()}
        return cls(str(row["video_id"]), float(row["value"]), str(row["kind"]), detail)


def normalize_scores(logprobs) -> np.ndarray:
    """Overflow-safe softmax of log-likelihood scores."""
    s = np.asarray(logprobs, dtype=np.float64)
    if s.size == 0:
        raise DataError("cannot normalize an empty score list")
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite score")
    e = np.exp(s - s.max())
    return e / e.sum()


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    h = float(-(nz * np.log(nz)).sum())
    # rounding can push a uniform distribution a few ulps past ln(n)
    return min(max(h, 0.0), math.log(len(p)))


def sequential_entropy(cs: CandidateSet) -> AcquisitionScore:
    return AcquisitionScore(cs.video_id, _entropy(normalize_scores(cs.logprobs)), "se")


def mean_likelihood_score(cs: CandidateSet) -> AcquisitionScore:
    return AcquisitionScore(cs.video_id, float(np.mean(cs.logprobs)), "mean_likelihood")


def _as_matrix(embeddings) -> np.ndarray:
    if len(embeddings) and hasattr(embeddings[0], "vector"):
        return np.stack([e.vector for e in embeddings])
    return np.asarray(embeddings, dtype=np.float64)


def cluster_scores(logprobs: np.ndarray, assignments: np.ndarray, n_clusters: int, mode: str) -> np.ndarray:
    if mode == "max":
        return np.array([logprobs[assignments == c].max() for c in range(n_clusters)])
    if mode == "mean":
        return np.array([logprobs[assignments == c].mean() for c in range(n_clusters)])
    raise DataError(f"unknown SASE mode {mode!r}")


def sase_entropy(cs: CandidateSet, embeddings, C: int, mode: str, seed: int,
                 kind: str = "sase") -> AcquisitionScore:
    """Entropy over semantic clusters of the candidates.

    Each cluster is scored by the max (or mean) of its members' logprobs;
    the cluster scores are softmax-normalized before taking the entropy.
    """
    emb = _as_matrix(embeddings)
    if len(emb) != len(cs):
        raise DataError(f"{len(emb)} embeddings for {len(cs)} candidates")
    model = kmeans_fit(emb, C, seed)
    scores = cluster_scores(cs.logprobs, model.assignments, model.n_clusters, mode)
    p = normalize_scores(scores)
    detail = {c: (float(scores[c]), float(p[c])) for c in range(len(p))}
    return AcquisitionScore(cs.video_id, _entropy(p), kind, detail)


def random_scores(ids: Sequence[str], seed: int, iteration: int = 0) -> list[AcquisitionScore]:
    if not ids:
        raise DataError("no ids to score")
    ordered = sorted(ids)
    draws = np.random.default_rng(derive_seed("random", seed, iteration)).random(len(ordered))
    return [AcquisitionScore(i, float(v), "random") for i, v in zip(ordered, draws)]


def rank_and_select(scores: Sequence[AcquisitionScore], B: int) -> list[str]:
    """Top-B video ids: descending value (ascending for mean_likelihood), ties by id."""
    kinds = {s.kind for s in scores}
    if len(kinds) > 1:
        raise DataError(f"mixed acquisition kinds {sorted(kinds)}")
    if B > len(scores):
        raise DataError(f"budget {B} exceeds {len(scores)} scored videos")
    if B <= 0:
        return []
    sign = 1.0 if kinds == {"mean_likelihood"} else -1.0
    ranked = sorted(scores, key=lambda s: (sign * s.value, s.video_id))
    return [s.video_id for s in ranked[:B]]


def ranked(scores: Sequence[AcquisitionScore]) -> list[AcquisitionScore]:
    sign = 1.0 if scores and scores[0].kind == "mean_likelihood" else -1.0
    return sorted(scores, key=lambda s: (sign * s.value, s.video_id))
