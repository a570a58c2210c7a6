"""Run the full pruning pipeline at desk scale and print the report table.

Usage: python scripts/run_desk_experiment.py [--seed N] [--out DIR]

Uses the tiny4 template on the synthetic blob dataset so the whole thing
finishes in well under a minute on a laptop CPU.
"""
import argparse
import sys

from prunekit import pipeline
from prunekit.report import render_table
from prunekit.swarm import SwarmConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs")
    parser.add_argument("--epsilon", type=float, default=0.05)
    parser.add_argument("--minpts", type=int, default=3)
    args = parser.parse_args()

    config = pipeline.ExperimentConfig(
        template="tiny4",
        dataset=pipeline.DatasetConfig(name="synthetic", num_classes=4,
                                       train_size=512, test_size=256,
                                       image_size=16, channels=3, noise=0.15),
        sample_count=128,
        epsilon=args.epsilon,
        min_pts=args.minpts,
        baseline_epochs=10,
        swarm=SwarmConfig(particles=6, iterations=5, proxy_epochs=1),
        out_dir=args.out,
        seed=args.seed,
    )
    report = pipeline.run(config)
    print(render_table(report))
    print(f"original structure: {report.original_structure}")
    print(f"coarse structure:   {report.coarse_structure}")
    print(f"final structure:    {report.final_structure}")
    print(f"retrain epochs:     {report.retrain_epochs}")
    print(f"artifacts under:    {config.run_dir()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
