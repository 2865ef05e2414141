"""Desk-scale evaluation: symptom mention precision/recall/F1 and ROUGE-L.

Mention extraction is rule based: a symptom counts as mentioned when its
surface form appears without the negation token immediately before it.
This is exact for the closed toy grammar, standing in for a learned
report labeler.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .vocab import NEGATION_TOKEN

_TOKEN_RE = re.compile(r"[<>A-Za-z0-9]+|[:.,]")


def tokenize_text(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class EpisodeResult:
    case_id: int
    text: str
    truth: tuple[bool, ...]
    predicted: tuple[bool, ...]
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    rouge_l: float
    token_count: int

    def __post_init__(self):
        if len(self.truth) != len(self.predicted):
            raise ValueError("truth/predicted length mismatch")
        if self.tp + self.fn != sum(self.truth):
            raise ValueError("tp + fn must equal the number of present symptoms")
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be nonnegative")


@dataclass(frozen=True)
class AggregateReport:
    precision: float
    recall: float
    f1: float
    mean_rouge_l: float
    fp_rate: float
    fn_rate: float
    episode_count: int
    mean_tokens: float
    config: Mapping[str, object] | None = None


def extract_mentions(text: str, ontology: Sequence[str]) -> tuple[bool, ...]:
    """Mention vector over the ontology; 'no <symptom>' does not count."""
    words = tokenize_text(text)
    mentioned = set()
    for i, word in enumerate(words):
        if word in ontology and (i == 0 or words[i - 1] != NEGATION_TOKEN):
            mentioned.add(word)
    return tuple(name in mentioned for name in ontology)


def symptom_prf(
    predicted: Sequence[bool], truth: Sequence[bool]
) -> tuple[float, float, float, int, int]:
    """(precision, recall, f1, fp, fn) over one episode's symptom vector.

    An episode with empty prediction and empty truth scores 1.0 (it is
    perfectly correct) while contributing zero counts to micro averages.
    """
    if len(predicted) != len(truth):
        raise ValueError("length mismatch")
    tp = sum(1 for p, t in zip(predicted, truth) if p and t)
    fp = sum(1 for p, t in zip(predicted, truth) if p and not t)
    fn = sum(1 for p, t in zip(predicted, truth) if not p and t)
    if tp == fp == fn == 0:
        return 1.0, 1.0, 1.0, 0, 0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1, fp, fn


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic dynamic-programming longest common subsequence."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """LCS F-measure: 2PR/(P+R) with P = LCS/|cand|, R = LCS/|ref|."""
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


def aggregate(results: Sequence[EpisodeResult],
              config: Mapping[str, object] | None = None) -> AggregateReport:
    """Micro-averaged counts over episodes; permutation invariant.

    fn_rate is the miss rate over truly present symptoms, fp_rate the
    fall-out over truly absent ones.
    """
    if not results:
        raise ValueError("cannot aggregate zero episodes")
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    total_present = sum(sum(r.truth) for r in results)
    total_absent = sum(len(r.truth) - sum(r.truth) for r in results)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return AggregateReport(
        precision=precision,
        recall=recall,
        f1=f1,
        mean_rouge_l=sum(r.rouge_l for r in results) / len(results),
        fp_rate=fp / total_absent if total_absent else 0.0,
        fn_rate=fn / total_present if total_present else 0.0,
        episode_count=len(results),
        mean_tokens=sum(r.token_count for r in results) / len(results),
        config=config,
    )
