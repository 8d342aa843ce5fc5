"""Caption generators: the capability contract, a synthetic world, and dump replay.

A generator exposes the encoder/decoder split of a captioning model:
``encode_visual`` gives the visual feature of a video, ``decode_from_feature``
turns a feature into ranked candidates, and ``generate`` is their
composition.  ``stochastic_pass`` is a dropout-style decode used for model
perturbation; ``update`` folds newly labeled examples into the model.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    Candidate,
    CandidateSet,
    CapabilityError,
    DataError,
    VideoExample,
    caption_key,
    read_jsonl,
    rng_for,
    tokenize,
)
from .embedder import CaptionEmbedding

log = logging.getLogger(__name__)

VISUAL = "visual"
DECODE = "decode"
STOCHASTIC = "stochastic"
FP_REPLAY = "fp_replay"

_ORIGIN = re.compile(r"^(base|fp:[1-9][0-9]*|mp:[1-9][0-9]*)$")


def relabel(cs: CandidateSet, origin: str) -> CandidateSet:
    return CandidateSet(
        cs.video_id,
        tuple(dataclasses.replace(c, origin=origin) for c in cs.candidates),
        origin,
    )


class CaptionGenerator:
    """Base generator; optional capabilities raise CapabilityError unless overridden."""

    capabilities: frozenset = frozenset()

    def generate(self, video: VideoExample, k: int) -> CandidateSet:
        return self.decode_from_feature(self.encode_visual(video), k, video.id)

    def encode_visual(self, video: VideoExample) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} has no visual encoder")

    def decode_from_feature(self, feature, k: int, video_id: str = "") -> CandidateSet:
        raise CapabilityError(f"{type(self).__name__} cannot decode arbitrary features")

    def stochastic_pass(self, video: VideoExample, k: int, pass_index: int, seed: int | None = None) -> CandidateSet:
        raise CapabilityError(f"{type(self).__name__} has no stochastic decoding")

    def perturbed_decode(self, video: VideoExample, index: int, feature, k: int) -> CandidateSet:
        """Candidates for the `index`-th perturbed feature of `video`."""
        return relabel(self.decode_from_feature(feature, k, video.id), f"fp:{index}")

    def update(self, labeled: Sequence[VideoExample]) -> None:
        pass


# -- synthetic world ----------------------------------------------------------

SUBJECTS = (
    ("man", "guy", "gentleman", "fellow"),
    ("woman", "lady", "female", "madam"),
    ("dog", "puppy", "hound", "doggy"),
    ("cat", "kitten", "kitty", "feline"),
    ("child", "kid", "youngster", "toddler"),
    ("chef", "cook", "baker", "cuisinier"),
    ("player", "athlete", "sportsman", "competitor"),
    ("singer", "vocalist", "performer", "crooner"),
)
ACTIONS = (
    ("running", "jogging", "sprinting", "racing"),
    ("cooking", "frying", "baking", "grilling"),
    ("singing", "chanting", "humming", "serenading"),
    ("dancing", "grooving", "twirling", "waltzing"),
    ("swimming", "paddling", "diving", "floating"),
    ("talking", "speaking", "chatting", "conversing"),
    ("eating", "snacking", "dining", "feasting"),
    ("jumping", "leaping", "hopping", "bouncing"),
    ("sleeping", "napping", "resting", "dozing"),
    ("climbing", "scaling", "ascending", "clambering"),
)
PLACES = (
    ("in a park", "at the park", "in the park", "at a park"),
    ("in a kitchen", "at the kitchen", "in the kitchen", "inside a kitchen"),
    ("on a stage", "at the stage", "on the stage", "onstage tonight"),
    ("at the beach", "on a beach", "by the sea", "near the ocean"),
    ("in a room", "inside a room", "in the room", "indoors somewhere"),
    ("on a street", "along the street", "on the road", "down a road"),
)
TEMPLATE = "a {subject} is {action} {place}"


@dataclass(frozen=True)
class WorldConfig:
    n_train: int = 200
    n_eval: int = 100
    n_concepts: int = 100
    zipf_exponent: float = 0.0
    confusable_fraction: float = 0.35
    overconfident_fraction: float = 0.07
    fluent_fraction: float = 0.15
    n_distractors: int = 2
    confusion_low: float = 0.3
    confusion_high: float = 0.9
    # per-video confusion strength = concept strength * U(1 - x, 1 + x)
    per_video_spread: float = 0.3
    n_paraphrases: int = 3
    noise: float = 0.1
    # how strongly candidate logprobs carry the concept mixture weight
    score_temperature: float = 0.02
    jitter: float = 0.018
    # fluent and learned concepts spread their paraphrase scores by a
    # per-concept amount drawn from [learned_spread_low, learned_spread_high]
    learned_spread_low: float = 0.01
    learned_spread_high: float = 0.09
    peaked_spread: float = 3.0
    seed: int | None = None

    @classmethod
    def from_json(cls, row: Mapping) -> "WorldConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(row) - names
        if unknown:
            raise DataError(f"unknown world field {sorted(unknown)[0]!r}")
        return cls(**row)


Mixture = tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class SyntheticWorld:
    """Ground truth for simulation: latent concepts, paraphrase banks, confusions.

    Concept kinds: *clear* concepts have a single-concept mixture and decode
    one fluent guess over a weak tail, unless they are *fluent*, in which
    case their paraphrases come out at near-equal scores (as learned
    concepts do).  *Confusable* ones mix in distractor concepts.
    *Overconfident* ones have a confusable mixture but, until learned,
    their deterministic decode commits to the top distractor; only
    stochastic passes reveal the mixture.
    """

    vocabulary: tuple[str, ...]
    templates: tuple[str, ...]
    paraphrases: tuple[tuple[tuple[str, ...], ...], ...]   # concept -> caption bank
    mixtures: tuple[Mixture, ...]                          # concept -> ((concept, weight), ...), true first
    concept_of: Mapping[str, int]
    confusion: Mapping[str, Mixture]                       # video id -> its own mixture
    noise: float = 0.1
    learned: frozenset = frozenset()
    overconfident: frozenset = frozenset()
    fluent: frozenset = frozenset()
    score_temperature: float = 0.02
    jitter: float = 0.018
    fluency: tuple[float, ...] = ()                        # concept -> score spread once fluent
    peaked_spread: float = 3.0
    seed: int = 0
    _caption_concept: Mapping[str, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._caption_concept is None:
            table = {caption_key(p): c for c, bank in enumerate(self.paraphrases) for p in bank}
            object.__setattr__(self, "_caption_concept", table)
        for key, mix in [*enumerate(self.mixtures), *self.confusion.items()]:
            if abs(sum(w for _, w in mix) - 1.0) > 1e-9:
                raise DataError(f"mixture weights for {key!r} do not sum to 1")
        for c, mix in enumerate(self.mixtures):
            if mix[0][0] != c:
                raise DataError(f"mixture for concept {c} must list it first")
        missing = set(self.concept_of) - set(self.confusion)
        if missing:
            raise DataError(f"no confusion entry for {sorted(missing)[0]!r}")

    @property
    def n_concepts(self) -> int:
        return len(self.paraphrases)

    def is_confusable(self, concept: int) -> bool:
        return len(self.mixtures[concept]) > 1 and concept not in self.overconfident

    def concept_of_caption(self, tokens: Sequence[str]) -> int | None:
        return self._caption_concept.get(caption_key(tokens))


def _zipf_weights(n: int, a: float, rng) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** a
    out = np.empty(n)
    out[rng.permutation(n)] = w
    return out / out.sum()


def _mixture(c: int, distractors: Sequence[int], strength: float) -> Mixture:
    share = np.arange(len(distractors), 0, -1, dtype=float)
    share = strength * share / share.sum()
    return ((c, 1.0 - float(share.sum())),) + tuple((d, float(w)) for d, w in zip(distractors, share))


def build_world(cfg: WorldConfig = WorldConfig(), seed: int = 0) -> tuple[SyntheticWorld, list[VideoExample], list[VideoExample]]:
    """Build a world plus its train pool and held-out eval set."""
    seed = cfg.seed if cfg.seed is not None else seed
    if not 1 <= cfg.n_paraphrases <= 4:
        raise DataError("n_paraphrases must be in 1..4")
    if cfg.confusable_fraction + cfg.overconfident_fraction + cfg.fluent_fraction > 1:
        raise DataError("concept kind fractions sum past 1")
    rng = rng_for("world", seed)
    triples = [(s, a, p) for s in range(len(SUBJECTS)) for a in range(len(ACTIONS)) for p in range(len(PLACES))]
    if cfg.n_concepts > len(triples) or cfg.n_concepts < 1:
        raise DataError(f"n_concepts must be in 1..{len(triples)}")
    picked = [triples[i] for i in rng.permutation(len(triples))[: cfg.n_concepts]]

    paraphrases = tuple(
        tuple(tokenize(TEMPLATE.format(subject=SUBJECTS[s][j], action=ACTIONS[a][j], place=PLACES[p][j]))
              for j in range(cfg.n_paraphrases))
        for s, a, p in picked
    )

    order = [int(c) for c in rng.permutation(cfg.n_concepts)]
    n_conf = int(round(cfg.confusable_fraction * cfg.n_concepts))
    n_over = int(round(cfg.overconfident_fraction * cfg.n_concepts))
    mixed = set(order[: n_conf + n_over])
    overconfident = frozenset(order[n_conf: n_conf + n_over])
    n_fluent = int(round(cfg.fluent_fraction * cfg.n_concepts))
    fluent = frozenset(order[n_conf + n_over: n_conf + n_over + n_fluent])
    if cfg.n_concepts < 2 or cfg.n_distractors < 1:
        mixed, overconfident = set(), frozenset()

    mixtures, distractors_of, strength_of = [], {}, {}
    for c, (s, a, _) in enumerate(picked):
        if c not in mixed:
            mixtures.append(((c, 1.0),))
            continue
        # distractors favour concepts that share the subject or the action
        related = [d for d, (s2, a2, _) in enumerate(picked) if d != c and (s2 == s or a2 == a)]
        others = [d for d in range(cfg.n_concepts) if d != c and d not in related]
        ranked_pool = list(rng.permutation(related)) + list(rng.permutation(others))
        distractors_of[c] = [int(d) for d in ranked_pool[: cfg.n_distractors]]
        strength_of[c] = rng.uniform(cfg.confusion_low, cfg.confusion_high)
        mixtures.append(_mixture(c, distractors_of[c], strength_of[c]))

    if cfg.learned_spread_high < cfg.learned_spread_low:
        raise DataError("learned_spread_high must be >= learned_spread_low")
    fluency = rng.uniform(cfg.learned_spread_low, cfg.learned_spread_high, cfg.n_concepts)

    freq = _zipf_weights(cfg.n_concepts, cfg.zipf_exponent, rng)
    train_concepts = rng.choice(cfg.n_concepts, size=cfg.n_train, p=freq)
    eval_concepts = rng.choice(cfg.n_concepts, size=cfg.n_eval, p=freq)
    concept_of = {f"v{i:04d}": int(c) for i, c in enumerate(train_concepts)}
    concept_of.update({f"e{i:04d}": int(c) for i, c in enumerate(eval_concepts)})

    confusion = {}
    for vid, c in concept_of.items():
        if c not in mixed:
            confusion[vid] = mixtures[c]
            continue
        factor = rng.uniform(1 - cfg.per_video_spread, 1 + cfg.per_video_spread)
        confusion[vid] = _mixture(c, distractors_of[c], float(np.clip(strength_of[c] * factor, 0.0, 0.95)))

    vocab = sorted({w for groups in (SUBJECTS, ACTIONS, PLACES) for g in groups for phrase in g for w in phrase.split()})
    world = SyntheticWorld(
        vocabulary=tuple(vocab),
        templates=(TEMPLATE,),
        paraphrases=paraphrases,
        mixtures=tuple(mixtures),
        concept_of=concept_of,
        confusion=confusion,
        noise=cfg.noise,
        overconfident=overconfident,
        fluent=fluent,
        score_temperature=cfg.score_temperature,
        jitter=cfg.jitter,
        fluency=tuple(float(x) for x in fluency),
        peaked_spread=cfg.peaked_spread,
        seed=seed,
    )

    def make(vid: str) -> VideoExample:
        feature = synthetic_encode(world, vid)
        return VideoExample(vid, tuple(float(x) for x in feature), paraphrases[concept_of[vid]])

    train = [make(f"v{i:04d}") for i in range(cfg.n_train)]
    evals = [make(f"e{i:04d}") for i in range(cfg.n_eval)]
    return world, train, evals


def synthetic_encode(world: SyntheticWorld, video_id: str) -> np.ndarray:
    """One-hot of the true concept plus seeded Gaussian noise with sigma = noise * 0.1."""
    try:
        c = world.concept_of[video_id]
    except KeyError:
        raise DataError(f"unknown video id {video_id!r}") from None
    f = np.zeros(world.n_concepts)
    f[c] = 1.0
    if world.noise > 0:
        f += rng_for("visual", world.seed, video_id).normal(0.0, world.noise * 0.1, world.n_concepts)
    return f


def synthetic_decode(world: SyntheticWorld, feature, k: int, seed: int, video_id: str = "",
                     widen: float = 1.0, tag: str = "base") -> CandidateSet:
    """Decode `k` candidates for the concept nearest to `feature`.

    A learned concept yields its paraphrases with logprobs spread by less
    than `world.jitter`.  An unlearned confusable concept mixes the true
    concept with its distractors at comparable logprobs; `widen` scales the
    distractor mass relative to the true concept.  An unlearned clear
    concept, or an overconfident one decoded without widening, yields one
    fluent guess and a tail of lower-scored variants.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    f = np.asarray(feature, dtype=np.float64)
    c = int(np.argmax(f[: world.n_concepts]))
    own = world.confusion.get(video_id)
    mix = own if own is not None and own[0][0] == c else world.mixtures[c]
    if c in world.learned:
        mix = ((c, 1.0),)
    elif c in world.overconfident and widen == 1.0 and len(mix) > 1:
        mix = ((mix[1][0], 1.0),)
    concepts = [m for m, _ in mix]
    weights = np.array([w for _, w in mix])
    if widen != 1.0 and len(mix) > 1:
        weights[1:] *= widen
        weights /= weights.sum()
    fluent = c in world.learned or c in world.fluent
    peaked = not fluent and len(mix) == 1

    rng = rng_for("decode", seed, tag, f.tobytes())
    draws = rng.choice(len(concepts), size=k, p=weights)
    offsets = rng.integers(0, 1 << 16, size=len(concepts))
    if peaked:
        spread = world.peaked_spread
    elif fluent:
        spread = world.fluency[c] if world.fluency else world.jitter
    else:
        spread = world.jitter
    jitter = rng.uniform(0.0, spread, size=k)
    if peaked:
        jitter[np.argmin(jitter)] = 0.0
    seen = [0] * len(concepts)
    out = []
    for slot, j in enumerate(draws):
        bank = world.paraphrases[concepts[j]]
        tokens = bank[(offsets[j] + seen[j]) % len(bank)]
        seen[j] += 1
        lp = -1.0 + world.score_temperature * math.log(weights[j]) - jitter[slot]
        out.append(Candidate(tokens, lp, tag))
    return CandidateSet.build(video_id, out, tag)


def synthetic_generate(world: SyntheticWorld, video: VideoExample, k: int, seed: int) -> CandidateSet:
    return synthetic_decode(world, synthetic_encode(world, video.id), k, seed, video.id)


def synthetic_update(world: SyntheticWorld, labeled: Iterable) -> SyntheticWorld:
    """Mark the concepts of `labeled` (examples or ids) as learned; idempotent."""
    ids = [v.id if isinstance(v, VideoExample) else str(v) for v in labeled]
    unknown = [i for i in ids if i not in world.concept_of]
    if unknown:
        raise DataError(f"unknown video ids {unknown[:5]}")
    added = {world.concept_of[i] for i in ids}
    if added <= world.learned:
        return world
    return dataclasses.replace(world, learned=world.learned | frozenset(added))


class SyntheticGenerator(CaptionGenerator):
    capabilities = frozenset({VISUAL, DECODE, STOCHASTIC})
    mp_widen = 1.5

    def __init__(self, world: SyntheticWorld, seed: int = 0):
        self.world = world
        self.seed = seed

    def encode_visual(self, video: VideoExample) -> np.ndarray:
        return synthetic_encode(self.world, video.id)

    def decode_from_feature(self, feature, k: int, video_id: str = "") -> CandidateSet:
        return synthetic_decode(self.world, feature, k, self.seed, video_id)

    def stochastic_pass(self, video: VideoExample, k: int, pass_index: int, seed: int | None = None) -> CandidateSet:
        s = self.seed if seed is None else seed
        return synthetic_decode(self.world, self.encode_visual(video), k, s, video.id,
                                widen=self.mp_widen, tag=f"mp:{pass_index}")

    def update(self, labeled: Sequence[VideoExample]) -> None:
        self.world = synthetic_update(self.world, labeled)

    def concept_accuracy(self, videos: Sequence[VideoExample], k: int) -> float:
        """Fraction of videos whose top-1 candidate paraphrases the true concept."""
        if not videos:
            return 0.0
        hits = sum(
            self.world.concept_of_caption(self.generate(v, k).top().tokens) == self.world.concept_of[v.id]
            for v in videos
        )
        return hits / len(videos)


def paraphrase_benchmark(seed: int = 0, n_paraphrase: int = 50, n_confusable: int = 50, k: int = 10,
                         spread: float = 0.05):
    """Candidate sets where lexical and semantic uncertainty disagree.

    A *paraphrase* video's k candidates are distinct rewordings of one
    concept; a *confusable* video splits its candidates between two
    concepts.  All scores sit within `spread` nats of each other.  Returns
    (candidate sets, caption -> CaptionEmbedding table, confusable ids); the
    table maps every rewording of a concept to that concept's unit vector,
    standing in for a sentence encoder that recognises paraphrases.
    """
    if k < 2:
        raise DataError("k must be >= 2")
    rng = rng_for("paraphrase-benchmark", seed)
    triples = [(s, a, p) for s in range(len(SUBJECTS)) for a in range(len(ACTIONS)) for p in range(len(PLACES))]
    n = n_paraphrase + n_confusable
    picked = [triples[i] for i in rng.permutation(len(triples))[: n + n_confusable]]
    dim = len(picked)
    table: dict[str, CaptionEmbedding] = {}

    def rewordings(c: int, m: int) -> list[tuple[str, ...]]:
        s, a, p = picked[c]
        combos = rng.permutation(4 ** 3)[:m]
        out = []
        for x in combos:
            i, j, l = x // 16, (x // 4) % 4, x % 4
            tokens = tokenize(TEMPLATE.format(subject=SUBJECTS[s][i], action=ACTIONS[a][j], place=PLACES[p][l]))
            key = caption_key(tokens)
            table[key] = CaptionEmbedding(np.eye(dim)[c], key)
            out.append(tokens)
        return out

    sets, confusable = [], set()
    for v in range(n):
        vid = f"b{v:03d}"
        if v < n_paraphrase:
            captions = rewordings(v, k)
        else:
            confusable.add(vid)
            captions = rewordings(v, k - k // 2) + rewordings(n + v - n_paraphrase, k // 2)
        scores = -1.0 - rng.uniform(0.0, spread, size=k)
        sets.append(CandidateSet.build(vid, (Candidate(t, float(lp)) for t, lp in zip(captions, scores))))
    return sets, table, confusable


# -- replay of real-model candidate dumps ---------------------------------------

@dataclass
class CandidateDump:
    rows: dict[tuple[str, str], tuple[Candidate, ...]]
    features: dict[str, np.ndarray]

    def origins(self, video_id: str) -> list[str]:
        return sorted(o for v, o in self.rows if v == video_id)

    @property
    def video_ids(self) -> list[str]:
        return sorted({v for v, _ in self.rows})


def load_candidate_dump(path: str | Path) -> CandidateDump:
    rows: dict[tuple[str, str], tuple[Candidate, ...]] = {}
    features: dict[str, np.ndarray] = {}
    for n, row in enumerate(read_jsonl(path), 1):
        try:
            vid = str(row["video_id"])
            origin = str(row.get("origin", "base"))
            cands = tuple(Candidate(tokenize(c["caption"]), float(c["logprob"]), origin) for c in row["candidates"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{n}: malformed candidate row") from exc
        if not _ORIGIN.match(origin):
            raise DataError(f"{path}:{n}: bad origin {origin!r}")
        if not cands:
            raise DataError(f"{path}:{n}: no candidates")
        if (vid, origin) in rows:
            raise DataError(f"{path}:{n}: duplicate row for ({vid}, {origin})")
        rows[vid, origin] = cands
        if row.get("visual_feature"):
            features[vid] = np.asarray(row["visual_feature"], dtype=np.float64)
    return CandidateDump(rows, features)


def replay_generate(dump: CandidateDump, video_id: str, k: int, origin: str = "base") -> CandidateSet:
    try:
        cands = dump.rows[video_id, origin]
    except KeyError:
        raise DataError(f"no {origin!r} candidates for video {video_id!r}") from None
    return CandidateSet.build(video_id, cands, origin).truncate(k)


class ReplayGenerator(CaptionGenerator):
    """Serves precomputed beams; perturbation rows are used only when the dump has them."""

    def __init__(self, dump: CandidateDump, pool: Sequence[VideoExample] = ()):
        self.dump = dump
        self.features = dict(dump.features)
        for v in pool:
            if v.visual_feature and v.id not in self.features:
                self.features[v.id] = v.feature_array()
        caps = set()
        if self.features:
            caps.add(VISUAL)
        origins = {o for _, o in dump.rows}
        if any(o.startswith("mp:") for o in origins):
            caps.add(STOCHASTIC)
        if any(o.startswith("fp:") for o in origins):
            caps.add(FP_REPLAY)
        self.capabilities = frozenset(caps)

    def generate(self, video: VideoExample, k: int) -> CandidateSet:
        return replay_generate(self.dump, video.id, k)

    def encode_visual(self, video: VideoExample) -> np.ndarray:
        try:
            return self.features[video.id]
        except KeyError:
            raise CapabilityError(f"no visual feature for {video.id!r}") from None

    def stochastic_pass(self, video: VideoExample, k: int, pass_index: int, seed: int | None = None) -> CandidateSet:
        if STOCHASTIC not in self.capabilities:
            raise CapabilityError("candidate dump has no mp:<pass> rows")
        return replay_generate(self.dump, video.id, k, f"mp:{pass_index}")

    def perturbed_decode(self, video: VideoExample, index: int, feature, k: int) -> CandidateSet:
        if FP_REPLAY not in self.capabilities:
            raise CapabilityError("candidate dump has no fp:<k> rows")
        return replay_generate(self.dump, video.id, k, f"fp:{index}")


__all__ = [
    "CaptionGenerator", "SyntheticGenerator", "ReplayGenerator", "SyntheticWorld", "WorldConfig",
    "CandidateDump", "build_world", "synthetic_encode", "synthetic_decode", "synthetic_generate",
    "synthetic_update", "load_candidate_dump", "replay_generate", "relabel", "paraphrase_benchmark",
    "VISUAL", "DECODE", "STOCHASTIC", "FP_REPLAY",
]
