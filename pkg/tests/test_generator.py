import json

import numpy as np
import pytest

from capactive.core import CapabilityError, DataError, VideoExample
from capactive.generator import (
    DECODE,
    FP_REPLAY,
    STOCHASTIC,
    VISUAL,
    ReplayGenerator,
    SyntheticGenerator,
    WorldConfig,
    build_world,
    load_candidate_dump,
    paraphrase_benchmark,
    replay_generate,
    synthetic_decode,
    synthetic_encode,
    synthetic_generate,
    synthetic_update,
)


def concepts_in(world, cs):
    return {world.concept_of_caption(c.tokens) for c in cs.candidates}


def first_of(world, videos, predicate):
    return next(v for v in videos if predicate(world.concept_of[v.id]))


def test_world_shapes(small_world):
    world, train, evals = small_world
    assert len(train) == 40 and len(evals) == 20
    assert set(world.concept_of) == {v.id for v in train + evals}
    for mix in world.confusion.values():
        assert sum(w for _, w in mix) == pytest.approx(1.0, abs=1e-9)


def test_world_is_deterministic():
    a = build_world(WorldConfig(n_train=30, n_eval=10), seed=5)
    b = build_world(WorldConfig(n_train=30, n_eval=10), seed=5)
    assert a[1] == b[1] and a[0].confusion == b[0].confusion


def test_learned_concept_emits_tight_paraphrases(small_world):
    world, train, _ = small_world
    v = train[0]
    learned = synthetic_update(world, [v])
    cs = synthetic_generate(learned, v, 3, seed=1)
    assert len(cs) == 3
    assert concepts_in(learned, cs) == {world.concept_of[v.id]}
    assert cs.logprobs.max() - cs.logprobs.min() < 0.1


def test_confusable_concept_mixes_concepts(small_world):
    world, train, _ = small_world
    v = first_of(world, train, world.is_confusable)
    cs = synthetic_generate(world, v, 10, seed=0)
    assert len(concepts_in(world, cs)) >= 2


def test_labelling_a_confusable_video_makes_its_concept_paraphrase_only(small_world):
    world, train, _ = small_world
    v = first_of(world, train, world.is_confusable)
    c = world.concept_of[v.id]
    after = synthetic_update(world, [v])
    for u in train:
        if world.concept_of[u.id] == c:
            assert concepts_in(after, synthetic_generate(after, u, 10, seed=0)) == {c}


def test_generate_is_deterministic(small_world):
    world, train, _ = small_world
    assert synthetic_generate(world, train[2], 10, 4) == synthetic_generate(world, train[2], 10, 4)


def test_generate_equals_decode_of_encode(small_world, small_generator):
    _, train, _ = small_world
    for v in train[:10]:
        direct = small_generator.generate(v, 10)
        composed = small_generator.decode_from_feature(small_generator.encode_visual(v), 10, v.id)
        assert [c.tokens for c in direct.candidates] == [c.tokens for c in composed.candidates]


def test_update_is_idempotent_and_monotone(small_world):
    world, train, _ = small_world
    assert synthetic_update(world, []) == world
    once = synthetic_update(world, train[:5])
    assert synthetic_update(once, train[:5]) == once
    assert once.learned >= world.learned
    with pytest.raises(DataError):
        synthetic_update(world, ["nope"])


def test_encode_noise_free_is_one_hot():
    world, train, _ = build_world(WorldConfig(n_train=10, n_eval=2, n_concepts=5, noise=0.0), seed=1)
    f = synthetic_encode(world, train[0].id)
    assert f.sum() == 1.0 and f[world.concept_of[train[0].id]] == 1.0


def test_stochastic_pass_varies_with_pass_but_repeats(small_world, small_generator):
    world, train, _ = small_world
    v = first_of(world, train, world.is_confusable)
    a1 = small_generator.stochastic_pass(v, 10, 1)
    assert a1 == small_generator.stochastic_pass(v, 10, 1)
    assert any(small_generator.stochastic_pass(v, 10, p) != a1 for p in range(2, 6))


def test_overconfident_concept_is_hidden_from_base_decode():
    world, train, _ = build_world(WorldConfig(n_train=120, n_eval=5, n_concepts=20, overconfident_fraction=0.5,
                                              confusable_fraction=0.0, fluent_fraction=0.0), seed=2)
    gen = SyntheticGenerator(world, 0)
    v = first_of(world, train, lambda c: c in world.overconfident)
    base = gen.generate(v, 10)
    assert len(concepts_in(world, base)) == 1
    assert world.concept_of[v.id] not in concepts_in(world, base)
    passes = set().union(*(concepts_in(world, gen.stochastic_pass(v, 10, p)) for p in range(1, 6)))
    assert world.concept_of[v.id] in passes


def test_world_config_rejects_unknown_fields():
    with pytest.raises(DataError):
        WorldConfig.from_json({"n_concept": 3})


def test_paraphrase_benchmark_structure():
    sets, table, confusable = paraphrase_benchmark(seed=1)
    assert len(sets) == 100 and len(confusable) == 50
    for cs in sets:
        assert len({c.caption for c in cs.candidates}) == 10
        assert cs.logprobs.max() - cs.logprobs.min() < 0.05
        meanings = {table[c.caption].vector.argmax() for c in cs.candidates}
        assert len(meanings) == (2 if cs.video_id in confusable else 1)


# -- replay ----------------------------------------------------------------------

def write_dump(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def beam(n, offset=0):
    return [{"caption": f"caption number {i}", "logprob": -0.1 * (i + offset)} for i in range(n)]


def test_replay_truncates_without_padding(tmp_path):
    write_dump(tmp_path / "d.jsonl", [{"video_id": "a", "candidates": beam(10)},
                                      {"video_id": "b", "candidates": beam(4)}])
    dump = load_candidate_dump(tmp_path / "d.jsonl")
    assert len(replay_generate(dump, "a", 10)) == 10
    assert len(replay_generate(dump, "b", 10)) == 4
    top = replay_generate(dump, "a", 1)
    assert len(top) == 1 and top.top().logprob == 0.0
    with pytest.raises(DataError):
        replay_generate(dump, "zzz", 3)


def test_replay_resorts_candidates(tmp_path):
    write_dump(tmp_path / "d.jsonl", [{"video_id": "a", "candidates": list(reversed(beam(5)))}])
    cs = replay_generate(load_candidate_dump(tmp_path / "d.jsonl"), "a", 5)
    assert list(cs.logprobs) == sorted(cs.logprobs, reverse=True)


def test_replay_capabilities_follow_rows(tmp_path):
    write_dump(tmp_path / "d.jsonl", [{"video_id": "a", "candidates": beam(3)}])
    gen = ReplayGenerator(load_candidate_dump(tmp_path / "d.jsonl"))
    assert gen.capabilities == frozenset()
    v = VideoExample("a")
    with pytest.raises(CapabilityError):
        gen.stochastic_pass(v, 3, 1)
    with pytest.raises(CapabilityError):
        gen.encode_visual(v)

    write_dump(tmp_path / "e.jsonl", [
        {"video_id": "a", "candidates": beam(3), "visual_feature": [0.0, 1.0]},
        {"video_id": "a", "origin": "mp:1", "candidates": beam(3, 1)},
        {"video_id": "a", "origin": "fp:1", "candidates": beam(3, 2)},
    ])
    gen = ReplayGenerator(load_candidate_dump(tmp_path / "e.jsonl"))
    assert gen.capabilities == {VISUAL, STOCHASTIC, FP_REPLAY}
    assert DECODE not in gen.capabilities
    assert gen.stochastic_pass(v, 3, 1).origin == "mp:1"
    assert np.array_equal(gen.encode_visual(v), [0.0, 1.0])


@pytest.mark.parametrize("row", [
    {"video_id": "a", "origin": "dropout", "candidates": beam(2)},
    {"video_id": "a", "candidates": []},
    {"video_id": "a", "candidates": [{"caption": "x"}]},
])
def test_replay_rejects_bad_rows(tmp_path, row):
    write_dump(tmp_path / "d.jsonl", [row])
    with pytest.raises(DataError):
        load_candidate_dump(tmp_path / "d.jsonl")


def test_replay_rejects_duplicate_rows(tmp_path):
    write_dump(tmp_path / "d.jsonl", [{"video_id": "a", "candidates": beam(2)}] * 2)
    with pytest.raises(DataError):
        load_candidate_dump(tmp_path / "d.jsonl")


def test_decode_rejects_zero_beam(small_world):
    world, train, _ = small_world
    with pytest.raises(DataError):
        synthetic_decode(world, synthetic_encode(world, train[0].id), 0, seed=0)
