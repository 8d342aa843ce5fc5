import hypothesis
import numpy as np
import pytest

from capactive.core import Candidate, CandidateSet
from capactive.generator import SyntheticGenerator, WorldConfig, build_world

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.load_profile("ci")


def make_set(logprobs, video_id="v", captions=None):
    captions = captions or [f"caption {i}" for i in range(len(logprobs))]
    return CandidateSet.build(video_id, [Candidate(tuple(c.split()), float(lp)) for c, lp in zip(captions, logprobs)])


@pytest.fixture
def small_world():
    cfg = WorldConfig(n_train=40, n_eval=20, n_concepts=12, confusable_fraction=0.5, overconfident_fraction=0.0,
                      fluent_fraction=0.0)
    return build_world(cfg, seed=3)


@pytest.fixture
def small_generator(small_world):
    world, _, _ = small_world
    return SyntheticGenerator(world, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
