"""Sweep the clustering threshold and report the coarse structure at each step.

Usage: python scripts/sweep_epsilon.py [--minpts N] [--seed N]

Trains one desk-scale baseline, then reruns only the clustering stage across
a grid of epsilon values. Total kept channels shrink (never grow) as epsilon
rises, which is the knob-to-compression relationship the pipeline relies on.
"""
import argparse
import sys

import numpy as np

from prunekit import archspec, cluster, data
from prunekit.nncore import Network, TrainConfig, train
from prunekit.util import derive_seed


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--minpts", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=10)
    args = parser.parse_args()

    spec = data.SyntheticSpec(num_classes=4, train_size=512, test_size=256,
                              image_size=16, seed=derive_seed(args.seed, "data"))
    train_set, test_set = data.make_blobs(spec)
    template = archspec.tiny4(num_classes=spec.num_classes)

    net = Network(template, seed=derive_seed(args.seed, "init"))
    cfg = TrainConfig(epochs=args.epochs, batch_size=128,
                      seed=derive_seed(args.seed, "train"))
    history = train(net, train_set.images, train_set.labels,
                    test_set.images, test_set.labels, cfg)
    print(f"baseline accuracy after {args.epochs} epochs: "
          f"{history[-1].test_accuracy:.4f}")
    samples = data.sample_images(train_set, 128, derive_seed(args.seed, "sample"))

    original = tuple(template.original_structure())
    print(f"{'epsilon':>8}  {'structure':<24} total (original {sum(original)})")
    for epsilon in np.linspace(0.01, 0.5, 15):
        params = cluster.NeighborhoodParams(float(epsilon), args.minpts)
        structure, _ = cluster.coarse_prune(template, net, samples, params)
        widths = tuple(structure)
        print(f"{epsilon:8.3f}  {str(widths):<24} {sum(widths)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
