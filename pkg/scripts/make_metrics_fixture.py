"""Regenerate tests/data/metrics_fixture.json from independent reference scorers.

Needs the pycocoevalcap scorers (BLEU, ROUGE-L, CIDEr-D) and nltk on the
path; neither is a dependency of the package itself.

    PYTHONPATH=/path/to/pycocoevalcap-parent python scripts/make_metrics_fixture.py
"""

import json
from pathlib import Path

from nltk.translate.bleu_score import corpus_bleu
from pycocoevalcap.bleu.bleu import Bleu
from pycocoevalcap.cider.cider import Cider
from pycocoevalcap.rouge.rouge import Rouge

PAIRS = [
    ("a man is running in a park",
     ["a man is jogging in the park", "a guy runs through a park", "a person is running outside"]),
    ("a woman is cooking in the kitchen",
     ["a woman is cooking food in a kitchen", "a lady prepares a meal", "someone is cooking in the kitchen"]),
    ("a dog is playing with a ball",
     ["a puppy plays with a red ball", "a dog is chasing a ball", "the dog plays fetch on the grass"]),
    ("two people are talking",
     ["two men are talking to each other", "a couple of people have a conversation"]),
    ("a cat sleeps on the sofa",
     ["a cat is sleeping on a couch", "a kitten naps on the sofa", "the cat is lying on the sofa asleep"]),
]


def main():
    res = {i: [h] for i, (h, _) in enumerate(PAIRS)}
    gts = {i: refs for i, (_, refs) in enumerate(PAIRS)}
    bleu, _ = Bleu(4).compute_score(gts, res)
    rouge, _ = Rouge().compute_score(gts, res)
    cider, per = Cider().compute_score(gts, res)
    nltk_bleu = corpus_bleu([[r.split() for r in refs] for _, refs in PAIRS], [h.split() for h, _ in PAIRS])
    out = {
        "pairs": [{"hypothesis": h, "references": refs} for h, refs in PAIRS],
        "bleu4": bleu[3],
        "bleu4_nltk": nltk_bleu,
        "rougeL": rouge,
        "ciderD": cider,
        "ciderD_per_pair": [float(x) for x in per],
        "source": "pycocoevalcap 1.2 (Bleu, Rouge, Cider) and nltk 3.10 corpus_bleu",
    }
    path = Path(__file__).resolve().parents[1] / "tests" / "data" / "metrics_fixture.json"
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(json.dumps({k: v for k, v in out.items() if k != "pairs"}, indent=2))


if __name__ == "__main__":
    main()
