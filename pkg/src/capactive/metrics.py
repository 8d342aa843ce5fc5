"""Corpus caption metrics: BLEU-4, ROUGE-L and CIDEr-D.

Conventions follow the scorers used by the common captioning benchmarks:
closest-reference brevity penalty for BLEU, beta = 1.2 with the best
precision and best recall over references for ROUGE-L, and CIDEr-D with
corpus document frequencies, sigma = 6 and a x10 scale.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

from .core import DataError

Tokens = Sequence[str]


@dataclass(frozen=True)
class MetricReport:
    bleu4: float
    rougeL: float
    ciderD: float
    count: int
    meteor: float | None = None   # not computed; needs external linguistic resources

    def to_json(self) -> dict:
        return asdict(self)


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check(hypotheses, references):
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses vs {len(references)} reference lists")
    if any(not refs for refs in references):
        raise DataError("every hypothesis needs at least one reference")


def bleu4(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]], smoothing: bool = False) -> float:
    """Corpus BLEU-4. Without smoothing, any zero n-gram precision gives 0."""
    _check(hypotheses, references)
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, 5):
            h = _ngrams(hyp, n)
            best: Counter = Counter()
            for r in refs:
                best |= _ngrams(r, n)
            matches[n - 1] += sum(min(c, best[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(4):
        m, t = matches[n], totals[n]
        if smoothing and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t) / 4
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: Tokens, references: Sequence[Tokens], beta: float = 1.2) -> float:
    if not hypothesis or not references:
        raise DataError("ROUGE-L needs a non-empty hypothesis and references")
    lcs = [lcs_length(r, hypothesis) for r in references]
    prec = max(l / len(hypothesis) for l in lcs)
    rec = max(l / len(r) for l, r in zip(lcs, references))
    if prec == 0 or rec == 0:
        return 0.0
    return (1 + beta ** 2) * prec * rec / (rec + beta ** 2 * prec)


def corpus_rouge_l(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> float:
    _check(hypotheses, references)
    if not hypotheses:
        return 0.0
    return sum(rouge_l(h, r) for h, r in zip(hypotheses, references)) / len(hypotheses)


class _CiderD:
    def __init__(self, corpus: Sequence[Sequence[Tokens]], n: int = 4, sigma: float = 6.0):
        if not corpus:
            raise DataError("CIDEr-D needs a non-empty reference corpus")
        self.n, self.sigma = n, sigma
        self.df: Counter = Counter()
        for refs in corpus:
            self.df.update({g for r in refs for k in range(1, n + 1) for g in _ngrams(r, k)})
        self.log_docs = math.log(float(len(corpus)))

    def vec(self, tokens: Tokens):
        vec = [dict() for _ in range(self.n)]
        norm = [0.0] * self.n
        for k in range(1, self.n + 1):
            for g, tf in _ngrams(tokens, k).items():
                w = tf * (self.log_docs - math.log(max(1.0, self.df[g])))
                vec[k - 1][g] = w
                norm[k - 1] += w * w
        # the reference scorer measures length in bigrams
        length = max(len(tokens) - 1, 0)
        return vec, [math.sqrt(x) for x in norm], length

    def sim(self, hyp, ref) -> list[float]:
        (vh, nh, lh), (vr, nr, lr) = hyp, ref
        penalty = math.exp(-((lh - lr) ** 2) / (2 * self.sigma ** 2))
        out = []
        for k in range(self.n):
            val = sum(min(w, vr[k].get(g, 0.0)) * vr[k].get(g, 0.0) for g, w in vh[k].items())
            if nh[k] != 0 and nr[k] != 0:
                val /= nh[k] * nr[k]
            out.append(val * penalty)
        return out

    def score(self, hyp: Tokens, refs: Sequence[Tokens]) -> float:
        vh = self.vec(hyp)
        per_n = [0.0] * self.n
        for r in refs:
            for k, v in enumerate(self.sim(vh, self.vec(r))):
                per_n[k] += v
        return sum(per_n) / self.n / len(refs) * 10.0


def cider_d_scores(hypotheses, references, corpus=None) -> list[float]:
    _check(hypotheses, references)
    scorer = _CiderD(references if corpus is None else corpus)
    return [scorer.score(h, r) for h, r in zip(hypotheses, references)]


def cider_d(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]],
            corpus: Sequence[Sequence[Tokens]] | None = None) -> float:
    """Mean CIDEr-D; document frequencies come from `corpus` (default: the references)."""
    scores = cider_d_scores(hypotheses, references, corpus)
    return sum(scores) / len(scores) if scores else 0.0


def evaluate_corpus(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> MetricReport:
    return MetricReport(
        bleu4=bleu4(hypotheses, references),
        rougeL=corpus_rouge_l(hypotheses, references),
        ciderD=cider_d(hypotheses, references),
        count=len(hypotheses),
    )
