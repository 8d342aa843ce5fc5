import dataclasses
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from capactive.core import (
    Candidate,
    CandidateSet,
    ConfigError,
    DataError,
    PoolState,
    RunConfig,
    VideoExample,
    derive_seed,
    iteration_budgets,
    load_config,
    load_pool,
    seed_split,
    tokenize,
    validate_config,
    write_pool,
)


def pool(n):
    return [VideoExample(f"id{i:03d}", (float(i),)) for i in range(n)]


def test_tokenize_lowercases_and_keeps_punctuation():
    assert tokenize("A Man,  is\tRunning.") == ("a", "man,", "is", "running.")


def test_default_config_is_valid():
    cfg = RunConfig()
    assert validate_config(cfg) is cfg
    assert cfg.beam_width == 10 and cfg.effective_clusters == 10


def test_multimodal_kinds_default_to_30_clusters():
    assert RunConfig(acquisition="msase_mp").effective_clusters == 30
    assert RunConfig(acquisition="msase_fp").effective_clusters == 30
    assert RunConfig(acquisition="msase_mp", caption_clusters=7).effective_clusters == 7


def test_nearest_k_above_visual_clusters_is_rejected():
    with pytest.raises(ConfigError) as err:
        validate_config(RunConfig(nearest_K=5, visual_clusters=3))
    assert err.value.name == "nearest_K"


def test_budget_of_25_percent_accepted():
    validate_config(RunConfig(seed_fraction=0.05, step_fraction=0.05, iterations=4))
    with pytest.raises(ConfigError) as err:
        validate_config(RunConfig(seed_fraction=0.5, step_fraction=0.2, iterations=3))
    assert err.value.name == "budget"


@pytest.mark.parametrize("field,value", [
    ("beam_width", 0), ("caption_clusters", 0), ("sase_mode", "median"), ("acquisition", "bald"),
    ("epsilon", -0.1), ("epsilon", float("nan")), ("seed_fraction", 0.0), ("step_fraction", 1.5),
    ("dropout_passes", 0), ("seed", 2 ** 64), ("iterations", -1),
])
def test_invalid_fields_are_named(field, value):
    with pytest.raises(ConfigError) as err:
        validate_config(dataclasses.replace(RunConfig(), **{field: value}))
    assert err.value.name == field


def test_first_violation_is_reported():
    cfg = RunConfig(beam_width=0, sase_mode="median")
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert err.value.name == "beam_width"


def test_unknown_config_field(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 1, "beams": 3}))
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_file_with_world_section(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 4, "acquisition": "se", "world": {"n_train": 50}}))
    cfg, world = load_config(p)
    assert cfg == RunConfig(seed=4, acquisition="se")
    assert world == {"n_train": 50}


def test_seed_split_sizes():
    state = seed_split(pool(200), 0.05, seed=7)
    assert len(state.labeled) == 10 and len(state.unlabeled) == 190
    assert seed_split(pool(200), 0.05, seed=7) == state


def test_seed_split_full_fraction():
    state = seed_split(pool(13), 1.0, seed=0)
    assert len(state.labeled) == 13 and state.unlabeled == ()


def test_seed_split_ignores_pool_order():
    p = pool(50)
    assert seed_split(p, 0.2, 1) == seed_split(list(reversed(p)), 0.2, 1)


def test_seed_split_empty_pool():
    with pytest.raises(DataError):
        seed_split([], 0.1, 0)


@given(st.integers(1, 300), st.floats(0.01, 1.0), st.integers(0, 2 ** 32))
def test_seed_split_partition(n, fraction, seed):
    p = pool(n)
    state = seed_split(p, fraction, seed)
    assert set(state.labeled) | set(state.unlabeled) == {v.id for v in p}
    assert not set(state.labeled) & set(state.unlabeled)


def test_pool_state_move():
    state = PoolState(("a",), ("b", "c", "d"))
    moved = state.move(["c"])
    assert moved == PoolState(("a", "c"), ("b", "d"), 1)
    with pytest.raises(DataError):
        moved.move(["a"])


def test_pool_state_rejects_overlap():
    with pytest.raises(DataError):
        PoolState(("a",), ("a",))


@pytest.mark.parametrize("n,iters,step,expected", [
    (200, 4, 0.05, [10, 10, 10, 10]),
    (203, 4, 0.05, [10, 10, 10, 11]),
    (200, 0, 0.05, []),
])
def test_iteration_budgets(n, iters, step, expected):
    cfg = RunConfig(iterations=iters, step_fraction=step)
    assert iteration_budgets(n, cfg) == expected


def test_candidate_set_orders_by_logprob_then_tokens():
    cs = CandidateSet.build("v", [Candidate(("b",), -1.0), Candidate(("a",), -1.0), Candidate(("c",), 0.0)])
    assert [c.tokens for c in cs.candidates] == [("c",), ("a",), ("b",)]
    with pytest.raises(DataError):
        CandidateSet("v", tuple(reversed(cs.candidates)))


def test_candidate_validation():
    with pytest.raises(DataError):
        Candidate((), -1.0)
    with pytest.raises(DataError):
        Candidate(("a",), float("inf"))
    assert Candidate(("a",), 3.5).logprob == 3.5   # positive scores are allowed


def test_pool_round_trip(tmp_path):
    p = [VideoExample("x", (0.5, 1.0), (("a", "cat"),)), VideoExample("y", (0.0, 2.0))]
    write_pool(tmp_path / "pool.jsonl", p)
    assert load_pool(tmp_path / "pool.jsonl") == p


def test_pool_rejects_duplicates_and_ragged_features(tmp_path):
    f = tmp_path / "pool.jsonl"
    f.write_text('{"id": "a", "visual_feature": [1]}\n{"id": "a", "visual_feature": [2]}\n')
    with pytest.raises(DataError):
        load_pool(f)
    f.write_text('{"id": "a", "visual_feature": [1]}\n{"id": "b", "visual_feature": [2, 3]}\n')
    with pytest.raises(DataError):
        load_pool(f)


def test_derive_seed_is_stable_and_distinguishes_parts():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed("1", "a")
    assert derive_seed("ab", "c") != derive_seed("a", "bc")
