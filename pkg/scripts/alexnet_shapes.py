"""Print the activation shape of every layer of a preset for one forward pass."""

import argparse
import time

import numpy as np

from lbpcnn.nn import build_model, preset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--preset", default="alexnet", choices=("alexnet", "tiny"))
    args = p.parse_args()

    start = time.perf_counter()
    model = build_model(preset(args.preset))
    out = np.random.default_rng(0).random((1, *model.input_shape)).astype(np.float32)
    for layer in model.layers:
        out = layer.forward(out, False, None)
        n_params = sum(v.size for v in layer.params.values())
        print(f"{layer.label:>8} {layer.spec.kind:>8} {str(out.shape[1:]):>16} {n_params:>12,d}")
    print(f"probabilities {out[0]} (sum {out[0].sum():.7f}); {time.perf_counter() - start:.2f} s")


if __name__ == "__main__":
    main()
