"""How often SE and SASE pick confusable videos over paraphrase-only ones."""

import argparse

from capactive.acquisition import rank_and_select, sase_entropy, sequential_entropy
from capactive.core import derive_seed
from capactive.embedder import FileEmbedder
from capactive.generator import paraphrase_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=int, default=50)
    ap.add_argument("--clusters", type=int, default=10)
    args = ap.parse_args()

    sets, table, confusable = paraphrase_benchmark(args.seed)
    emb = FileEmbedder(table)
    se = [sequential_entropy(cs) for cs in sets]
    print(f"SE        confusable share {sum(i in confusable for i in rank_and_select(se, args.budget)) / args.budget:.2f}")
    for mode in ("max", "mean"):
        sase = [
            sase_entropy(cs, emb.matrix([c.tokens for c in cs.candidates]), args.clusters, mode,
                         derive_seed(args.seed, cs.video_id))
            for cs in sets
        ]
        share = sum(i in confusable for i in rank_and_select(sase, args.budget)) / args.budget
        print(f"SASE-{mode:4s} confusable share {share:.2f}")


if __name__ == "__main__":
    main()
