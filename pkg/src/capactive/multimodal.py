"""Candidate-set expansion through visual feature and model perturbation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import ClusterModel, kmeans_fit
from .core import CandidateSet, CapabilityError, DataError, VideoExample
from .generator import DECODE, FP_REPLAY, STOCHASTIC, VISUAL, CaptionGenerator, relabel

log = logging.getLogger(__name__)

COINCIDE_TOL = 1e-12


@dataclass(frozen=True)
class VisualClusterModel:
    inner: ClusterModel
    source: str = "labeled_pool"

    @property
    def centers(self) -> np.ndarray:
        return self.inner.centers


@dataclass(frozen=True)
class PerturbationSpec:
    epsilon: float = 0.015
    nearest_K: int = 5

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise DataError("epsilon must be finite and nonnegative")
        if self.nearest_K < 1:
            raise DataError("nearest_K must be >= 1")


def fit_visual_clusters(generator: CaptionGenerator, videos: Sequence[VideoExample], C_v: int, seed: int,
                        source: str = "labeled_pool") -> VisualClusterModel:
    if not videos:
        raise DataError("no videos to cluster")
    if VISUAL not in generator.capabilities:
        raise CapabilityError("generator exposes no visual features")
    feats = np.stack([generator.encode_visual(v) for v in videos])
    if len(videos) < C_v:
        log.warning("visual clusters clamped from %d to %d labeled videos", C_v, len(videos))
    return VisualClusterModel(kmeans_fit(feats, C_v, seed), source)


def perturb_feature(f_v, model, spec: PerturbationSpec) -> list[np.ndarray]:
    """Move `f_v` by L2 magnitude epsilon toward each of its nearest centers.

    f_per[k] = (1 - eps) * f_v + eps * (c_k - f_v) / ||c_k - f_v||, where c_k
    runs over centers by increasing distance, skipping centers that coincide
    with `f_v`.
    """
    f = np.asarray(f_v, dtype=np.float64)
    centers = np.asarray(model.centers, dtype=np.float64)
    if centers.shape[1] != f.shape[0]:
        raise DataError(f"feature dimension {f.shape[0]} != center dimension {centers.shape[1]}")
    dist = np.sqrt(((centers - f) ** 2).sum(axis=1))
    order = [int(i) for i in np.argsort(dist, kind="stable") if dist[i] >= COINCIDE_TOL]
    if not order:
        raise DataError("every cluster center coincides with the feature")
    eps = spec.epsilon
    return [(1 - eps) * f + eps * (centers[i] - f) / dist[i] for i in order[: spec.nearest_K]]


def _merge(video_id: str, sets: Sequence[CandidateSet]) -> CandidateSet:
    return CandidateSet.build(video_id, (c for cs in sets for c in cs.candidates), "merged")


def expand_candidates_fp(video: VideoExample, generator: CaptionGenerator, model: VisualClusterModel | None,
                         spec: PerturbationSpec, k: int) -> CandidateSet:
    """Base candidates plus one decode per perturbed feature (duplicates kept)."""
    base = generator.generate(video, k)
    if FP_REPLAY in generator.capabilities:
        extra = [generator.perturbed_decode(video, i, None, k) for i in range(1, spec.nearest_K + 1)]
        return _merge(video.id, [base, *extra])
    if not {VISUAL, DECODE} <= generator.capabilities:
        raise CapabilityError("feature perturbation needs a visual encoder and a feature decoder")
    if model is None:
        raise DataError("feature perturbation needs a fitted visual cluster model")
    perturbed = perturb_feature(generator.encode_visual(video), model, spec)
    extra = [generator.perturbed_decode(video, i, f, k) for i, f in enumerate(perturbed, 1)]
    return _merge(video.id, [base, *extra])


def expand_candidates_mp(video: VideoExample, generator: CaptionGenerator, L_mp: int, k: int,
                         seed: int | None = None) -> CandidateSet:
    """Base candidates plus `L_mp` stochastic decoding passes (duplicates kept)."""
    base = relabel(generator.generate(video, k), "base")
    if L_mp == 0:
        return base
    if STOCHASTIC not in generator.capabilities:
        raise CapabilityError("model perturbation needs stochastic decoding passes")
    passes = [generator.stochastic_pass(video, k, p, seed) for p in range(1, L_mp + 1)]
    return _merge(video.id, [base, *passes])
