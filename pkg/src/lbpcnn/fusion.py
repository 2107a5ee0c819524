"""Decision-level fusion of the three per-channel decisions of one test image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import RAW_STREAMS
from .nn.model import Decision


@dataclass(frozen=True)
class FusedDecision:
    label: int
    rule: str
    inputs: tuple


def _check(decisions):
    tags = sorted(d.stream_tag for d in decisions)
    if len(decisions) != 3 or tags != sorted(RAW_STREAMS):
        raise ValueError(f"fusion needs one decision per stream R, G, B; got tags {tags}")


def fuse_majority(d_r: Decision, d_g: Decision, d_b: Decision) -> FusedDecision:
    """The class predicted by at least two of the three decisions."""
    inputs = (d_r, d_g, d_b)
    _check(inputs)
    votes = np.bincount([d.label for d in inputs], minlength=2)
    # three voters over two classes: a strict majority always exists
    return FusedDecision(int(np.argmax(votes)), "majority", inputs)


def fuse_mean_prob(d_r: Decision, d_g: Decision, d_b: Decision) -> FusedDecision:
    """Argmax of the averaged probability vectors, ties to the lower class index."""
    inputs = (d_r, d_g, d_b)
    _check(inputs)
    mean = np.mean([np.asarray(d.probabilities, dtype=np.float64) for d in inputs], axis=0)
    return FusedDecision(int(np.argmax(mean)), "meanprob", inputs)


RULES = {"majority": fuse_majority, "meanprob": fuse_mean_prob}


def fuse(decisions, rule: str = "majority") -> FusedDecision:
    """Fuse decisions given in any order; ``rule`` is 'majority' or 'meanprob'."""
    try:
        fn = RULES[rule]
    except KeyError:
        raise ValueError(f"unknown fusion rule {rule!r}; choose from {', '.join(RULES)}") from None
    by_tag = {d.stream_tag: d for d in decisions}
    _check(list(decisions))
    return fn(*(by_tag[t] for t in RAW_STREAMS))
