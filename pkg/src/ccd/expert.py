"""Expert label handling: threshold filtering, anchor prompt construction,
and conversion of label probabilities into per-token additive logit biases.

The bias for a label with probability ``s`` is its log-odds ``log(s/(1-s))``,
clipped to ``[-log(gamma), +log(gamma)]``. The clipped bias is added
uniformly across that label's vocabulary tokens (via the token map); a
constant added over the whole vocabulary would be softmax-invariant and
therefore inert.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before the
# log-odds transform so that backends emitting exact 0/1 stay finite.
PROB_EPS = 1e-6

ANCHOR_TEMPLATE = "Attention to the following clinical instructions: {labels}"

TokenMap = Dict[str, List[int]]


class UnmappedLabelError(KeyError):
    """A label in the active set has no token-map entry."""


@dataclass(frozen=True)
class ClinicalLabel:
    name: str
    prob: float

    def __post_init__(self):
        if not self.name:
            raise ValueError("label name must be nonempty")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"label prob must be in [0, 1], got {self.prob}")


@dataclass(frozen=True)
class ClinicalLabelSet:
    labels: tuple[ClinicalLabel, ...]

    def __post_init__(self):
        names = [l.name for l in self.labels]
        if len(set(names)) != len(names):
            raise ValueError("label names must be unique")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float]]) -> "ClinicalLabelSet":
        return cls(tuple(ClinicalLabel(n, p) for n, p in pairs))

    def names(self) -> list[str]:
        return [l.name for l in self.labels]

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


def filter_labels(label_set: ClinicalLabelSet, tau: float) -> ClinicalLabelSet:
    """Labels with prob strictly above tau, by descending prob then name."""
    kept = [l for l in label_set if l.prob > tau]
    kept.sort(key=lambda l: (-l.prob, l.name))
    return ClinicalLabelSet(tuple(kept))


def build_anchor_prompt(selected: ClinicalLabelSet, template: str = ANCHOR_TEMPLATE) -> str:
    """Render the anchor instruction; an empty selection yields no anchor."""
    if len(selected) == 0:
        return ""
    return template.format(labels=", ".join(selected.names()))


def label_bias(s: float) -> float:
    """Log-odds of an expert probability, clamped away from 0 and 1."""
    s = min(max(s, PROB_EPS), 1.0 - PROB_EPS)
    return math.log(s / (1.0 - s))


def clip_bias(b: float, gamma: float | None) -> float:
    """Clamp a bias into [-log(gamma), +log(gamma)]; None disables clipping."""
    if gamma is None:
        return b
    if not gamma > 1.0:
        raise ValueError(f"gamma must be > 1 (or None to disable), got {gamma}")
    max_bias = math.log(gamma)
    return min(max(b, -max_bias), max_bias)


def build_bias_map(
    label_set: ClinicalLabelSet,
    token_map: Mapping[str, Sequence[int]],
    gamma: float | None,
    vocab_size: int,
) -> np.ndarray:
    """Accumulate per-label clipped biases onto their vocabulary tokens.

    Clipping is per label before accumulation, so ids shared by several
    labels may carry a sum beyond log(gamma).
    """
    bias = np.zeros(vocab_size, dtype=np.float64)
    for label in label_set:
        if label.name not in token_map:
            raise UnmappedLabelError(f"unmapped label: {label.name!r}")
        b = clip_bias(label_bias(label.prob), gamma)
        for tid in token_map[label.name]:
            if not 0 <= tid < vocab_size:
                raise ValueError(f"token id {tid} out of range for vocab {vocab_size}")
            bias[tid] += b
    return bias


# --- file formats -----------------------------------------------------------
#
# Token map: one record per line, "<label name><TAB><comma-separated ids>".
# Label set: line-delimited JSON objects with fields "name" and "prob".


def save_token_map(token_map: Mapping[str, Sequence[int]], path: str | Path) -> None:
    lines = [f"{name}\t{','.join(str(t) for t in ids)}" for name, ids in token_map.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_token_map(path: str | Path, vocab_size: int | None = None) -> TokenMap:
    token_map: TokenMap = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            name, ids = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected '<name>\\t<ids>'") from None
        token_ids = [int(t) for t in ids.split(",") if t]
        if vocab_size is not None:
            for tid in token_ids:
                if not 0 <= tid < vocab_size:
                    raise ValueError(f"{path}:{lineno}: token id {tid} out of range")
        token_map[name] = token_ids
    return token_map


def save_label_set(label_set: ClinicalLabelSet, path: str | Path) -> None:
    lines = [json.dumps({"name": l.name, "prob": l.prob}) for l in label_set]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_label_set(path: str | Path) -> ClinicalLabelSet:
    labels = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        labels.append(ClinicalLabel(rec["name"], float(rec["prob"])))
    return ClinicalLabelSet(tuple(labels))
