import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from capactive.core import DataError, tokenize
from capactive.metrics import bleu4, cider_d, cider_d_scores, corpus_rouge_l, evaluate_corpus, lcs_length, rouge_l

FIXTURE = json.loads((Path(__file__).parent / "data" / "metrics_fixture.json").read_text())
HYPS = [tokenize(p["hypothesis"]) for p in FIXTURE["pairs"]]
REFS = [[tokenize(r) for r in p["references"]] for p in FIXTURE["pairs"]]

sentences = st.lists(st.sampled_from("a the man dog runs is on park red big".split()), min_size=1, max_size=9)


def test_bleu_matches_reference_scorers():
    assert bleu4(HYPS, REFS) == pytest.approx(FIXTURE["bleu4"], abs=1e-4)
    assert bleu4(HYPS, REFS) == pytest.approx(FIXTURE["bleu4_nltk"], abs=1e-4)


def test_rouge_matches_reference_scorer():
    assert corpus_rouge_l(HYPS, REFS) == pytest.approx(FIXTURE["rougeL"], abs=1e-9)


def test_cider_matches_reference_scorer():
    assert cider_d(HYPS, REFS) == pytest.approx(FIXTURE["ciderD"], abs=1e-3)
    assert cider_d_scores(HYPS, REFS) == pytest.approx(FIXTURE["ciderD_per_pair"], abs=1e-3)


def test_identity_inputs():
    refs = [[h] for h in HYPS]
    assert bleu4(HYPS, refs) == pytest.approx(1.0)
    assert corpus_rouge_l(HYPS, refs) == pytest.approx(1.0)


def test_cider_identity_is_corpus_max():
    refs = [[h] for h in HYPS]
    best = cider_d(HYPS, refs)
    assert best == pytest.approx(10.0)
    for i in range(len(HYPS)):
        other = HYPS[:i] + [HYPS[(i + 1) % len(HYPS)]] + HYPS[i + 1:]
        assert cider_d(other, refs) < best


def test_singleton_corpus_scores_zero_idf():
    # with one document every n-gram has idf log(1/1) = 0
    assert cider_d([("a", "cat")], [[("a", "cat")]]) == 0.0


def test_disjoint():
    assert bleu4([("x", "y", "z", "w")], [[("a", "b", "c", "d")]]) == 0.0
    assert rouge_l(("x", "y"), [("a", "b")]) == 0.0
    assert cider_d([("x", "y"), ("a", "b")], [[("a", "b")], [("x", "y")]]) == 0.0


def test_rouge_hand_example():
    assert lcs_length("a b c d".split(), "a c b d".split()) == 3
    assert rouge_l(tuple("abcd"), [tuple("acbd")]) == pytest.approx(0.75)


def test_bleu_smoothing_flag():
    hyp, ref = [("a", "b", "x", "y")], [[("a", "b", "c", "d")]]
    assert bleu4(hyp, ref) == 0.0
    assert bleu4(hyp, ref, smoothing=True) > 0.0


def test_length_mismatch():
    with pytest.raises(DataError):
        bleu4(HYPS, REFS[:-1])
    with pytest.raises(DataError):
        cider_d([], [], corpus=[])


@given(st.lists(st.tuples(sentences, st.lists(sentences, min_size=1, max_size=3)), min_size=1, max_size=6),
       st.randoms(use_true_random=False))
def test_ranges_and_permutation_invariance(pairs, random):
    hyps = [tuple(h) for h, _ in pairs]
    refs = [[tuple(r) for r in rs] for _, rs in pairs]
    rep = evaluate_corpus(hyps, refs)
    assert 0 <= rep.bleu4 <= 1 + 1e-12 and 0 <= rep.rougeL <= 1 + 1e-12 and rep.ciderD >= 0
    order = list(range(len(pairs)))
    random.shuffle(order)
    shuffled = evaluate_corpus([hyps[i] for i in order], [refs[i] for i in order])
    assert shuffled.bleu4 == pytest.approx(rep.bleu4, abs=1e-12)
    assert shuffled.rougeL == pytest.approx(rep.rougeL, abs=1e-12)
    assert shuffled.ciderD == pytest.approx(rep.ciderD, abs=1e-9)


@given(st.lists(st.tuples(sentences, st.lists(sentences, min_size=1, max_size=3)), min_size=1, max_size=5),
       st.data())
def test_adding_a_self_referenced_pair_never_lowers_bleu(pairs, data):
    hyps = [tuple(h) for h, _ in pairs]
    refs = [[tuple(r) for r in rs] for _, rs in pairs]
    h = tuple(data.draw(sentences))
    assert bleu4(hyps + [h], refs + [[h]]) >= bleu4(hyps, refs) - 1e-12


def test_report_has_null_meteor():
    assert evaluate_corpus(HYPS, REFS).to_json()["meteor"] is None
