"""Embed three Gaussian clusters with t-SNE and write a scatter plot."""

import argparse

import numpy as np

from lbpcnn.tsne import EmbeddingConfig, emit_scatter_svg, tsne_embed


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="tsne_demo.svg")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    centres = np.zeros((3, 16))
    centres[:, :2] = [[0, 0], [12, 0], [6, 10.4]]
    X = np.concatenate([c + rng.normal(size=(20, 16)) for c in centres])
    labels = [f"cluster {k}" for k in range(3) for _ in range(20)]
    Y, trace = tsne_embed(X, EmbeddingConfig(seed=args.seed))
    emit_scatter_svg(Y, labels, args.out, title="three clusters")
    print(f"KL {trace[0]:.3f} -> {trace[-1]:.3f}; wrote {args.out}")


if __name__ == "__main__":
    main()
