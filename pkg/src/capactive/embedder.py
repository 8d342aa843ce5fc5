"""Caption embeddings: a hashed n-gram embedder and a file-backed lookup."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import DataError, caption_key, read_jsonl, tokenize

HASH_DIM = 256
HASH_SEED = 0x5EED
_HASH_KEY = HASH_SEED.to_bytes(8, "little")


@dataclass(frozen=True, eq=False)
class CaptionEmbedding:
    vector: np.ndarray
    caption_key: str


def _features(tokens: Sequence[str]) -> list[str]:
    feats = [f"w|{t}" for t in tokens]
    feats += [f"b|{a} {b}" for a, b in zip(tokens, tokens[1:])]
    for t in tokens:
        padded = f"<{t}>"
        feats += [f"c|{padded[i:i + 3]}" for i in range(len(padded) - 2)]
    return feats


def _bucket(feature: str) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(feature.encode(), digest_size=8, key=_HASH_KEY).digest(), "little")
    return h % HASH_DIM, (1.0 if (h >> 63) == 0 else -1.0)


@lru_cache(maxsize=1 << 16)
def _hashed_vector(tokens: tuple[str, ...]) -> np.ndarray:
    vec = np.zeros(HASH_DIM)
    for feat in _features(tokens):
        idx, sign = _bucket(feat)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        # signed collisions cancelled everything; fall back to unsigned counts
        for feat in _features(tokens):
            vec[_bucket(feat)[0]] += 1.0
        norm = np.linalg.norm(vec)
    vec /= norm
    vec.setflags(write=False)
    return vec


def embed_caption(tokens: Sequence[str]) -> CaptionEmbedding:
    """Unit-norm signed feature-hashing embedding of word 1/2-grams and char trigrams."""
    tokens = tuple(tokens)
    if not tokens:
        raise DataError("cannot embed an empty caption")
    return CaptionEmbedding(_hashed_vector(tokens), caption_key(tokens))


class HashingEmbedder:
    dim = HASH_DIM

    def embed(self, tokens: Sequence[str]) -> CaptionEmbedding:
        return embed_caption(tokens)

    def matrix(self, token_seqs: Sequence[Sequence[str]]) -> np.ndarray:
        return np.stack([embed_caption(t).vector for t in token_seqs])


class FileEmbedder:
    """Looks captions up in a precomputed table (e.g. sentence-encoder vectors)."""

    def __init__(self, table: Mapping[str, CaptionEmbedding]):
        if not table:
            raise DataError("empty embedding table")
        self.table = dict(table)
        self.dim = len(next(iter(self.table.values())).vector)

    def embed(self, tokens: Sequence[str]) -> CaptionEmbedding:
        key = caption_key(tokens)
        try:
            return self.table[key]
        except KeyError:
            raise DataError(f"no embedding for caption {key!r}") from None

    def matrix(self, token_seqs: Sequence[Sequence[str]]) -> np.ndarray:
        return np.stack([self.embed(t).vector for t in token_seqs])


def load_embeddings(path: str | Path) -> dict[str, CaptionEmbedding]:
    table: dict[str, CaptionEmbedding] = {}
    raw: dict[str, np.ndarray] = {}
    dim = None
    for n, row in enumerate(read_jsonl(path), 1):
        try:
            key = caption_key(tokenize(row["caption"]))
            vec = np.asarray(row["vector"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{n}: malformed embedding row") from exc
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise DataError(f"{path}:{n}: vector must be a finite 1-D list")
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise DataError(f"{path}:{n}: dimension {len(vec)} != {dim}")
        if key in raw:
            if not np.array_equal(raw[key], vec):
                raise DataError(f"{path}:{n}: duplicate caption {key!r} with a different vector")
            continue
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise DataError(f"{path}:{n}: zero vector")
        raw[key] = vec
        unit = vec / norm
        unit.setflags(write=False)
        table[key] = CaptionEmbedding(unit, key)
    return table
