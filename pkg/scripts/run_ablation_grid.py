#!/usr/bin/env python3
"""Run the selection-strategy ablation grid offline and print the table.

Grid: {random, similar} x {pairs, notes_only} x {unfiltered, filtered} x
{0..3} shots, scored by ROUGE-1 F1 against references under the mock backend.

Note: the nearest-note mock conditions only on the query dialogue, so every
cell scores the same offline; the grid exercises structure and plumbing. Real
variation requires a remote backend.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from notegen.ablation import format_ablation_table, run_ablation, save_ablation_table
from notegen.generation import BackendDescriptor, PipelineConfig
from notegen.synthetic import make_synthetic_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", type=int, default=30)
    parser.add_argument("--validation", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--parallelism", type=int, default=2)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    corpus = make_synthetic_corpus(
        n_train=args.train, n_validation=args.validation, seed=args.seed
    )
    base = PipelineConfig(
        backend=BackendDescriptor(kind="mock_nearest_note"), seed=args.seed
    )
    table = run_ablation(corpus, base, split="validation", parallelism=args.parallelism)
    print(format_ablation_table(table))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        save_ablation_table(table, args.out / "ablation.json")
        print(f"wrote {args.out / 'ablation.json'}")


if __name__ == "__main__":
    main()
