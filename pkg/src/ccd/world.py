"""Seeded generator of synthetic cases: latent symptom ground truth,
severity scores, and a tokenized prompt with optional distractor section.

A case's severity encodes how strongly the finding presents: above 0.5
exactly when the symptom is present. The distractor is a counterfactual
"History" sentence naming an absent symptom, the synthetic analog of a
misleading clinical section in the prompt.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .vocab import Vocabulary, build_toy_vocabulary, symptom_names

DEFAULT_PROMPT = "Generate a findings report :"
NO_FINDINGS_SENTENCE = "no acute findings."


@dataclass(frozen=True)
class WorldParams:
    """Knobs of the synthetic world; the defaults are the standard
    miscalibrated world used by the regression harness."""

    n_symptoms: int = 14
    prevalence: float | Sequence[float] = 0.3
    distractor_rate: float = 0.25
    fn_bias: float = 0.6
    fp_bias: float = 0.4

    def __post_init__(self):
        if self.n_symptoms < 1:
            raise ValueError("n_symptoms must be >= 1")
        for name in ("distractor_rate", "fn_bias", "fp_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for p in self.prevalence_vector():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"prevalence must be in [0, 1], got {p}")

    def prevalence_vector(self) -> np.ndarray:
        if np.isscalar(self.prevalence):
            return np.full(self.n_symptoms, float(self.prevalence))
        vec = np.asarray(self.prevalence, dtype=np.float64)
        if vec.shape != (self.n_symptoms,):
            raise ValueError("prevalence length must match n_symptoms")
        return vec


@dataclass(frozen=True)
class LatentCase:
    truth: tuple[bool, ...]
    severity: tuple[float, ...]
    prompt: tuple[int, ...]
    distractor: int | None = None  # symptom index named by the distractor

    def __post_init__(self):
        if len(self.truth) != len(self.severity):
            raise ValueError("truth/severity length mismatch")
        for present, sev in zip(self.truth, self.severity):
            if present != (sev > 0.5):
                raise ValueError("severity must be > 0.5 exactly for present symptoms")


def sample_case(params: WorldParams, rng: np.random.Generator,
                vocab: Vocabulary | None = None) -> LatentCase:
    """Draw one case; presence ~ Bernoulli(prevalence), severity uniform in
    (0.5, 1] when present and (0, 0.5] when absent."""
    if vocab is None:
        vocab, _ = build_toy_vocabulary(params.n_symptoms)
    n = params.n_symptoms
    prev = params.prevalence_vector()
    truth = rng.random(n) < prev
    u = rng.random(n)  # in [0, 1); map to half-open severity bands
    severity = np.where(truth, 1.0 - 0.5 * u, 0.5 * (1.0 - u))

    names = symptom_names(n)
    prompt_text = DEFAULT_PROMPT
    distractor = None
    if rng.random() < params.distractor_rate:
        absent = [i for i in range(n) if not truth[i]]
        if absent:
            distractor = absent[int(rng.integers(len(absent)))]
            prompt_text = f"{DEFAULT_PROMPT} History : {names[distractor]} ."
    return LatentCase(
        truth=tuple(bool(t) for t in truth),
        severity=tuple(float(s) for s in severity),
        prompt=tuple(vocab.encode(prompt_text)),
        distractor=distractor,
    )


def reference_report(case: LatentCase) -> str:
    """Canonical report naming exactly the present symptoms in ontology order."""
    names = symptom_names(len(case.truth))
    present = [names[i] for i, t in enumerate(case.truth) if t]
    if not present:
        return f"Findings: {NO_FINDINGS_SENTENCE}"
    return "Findings: " + " ".join(f"{name}." for name in present)


def save_cases(cases: Sequence[LatentCase], path) -> None:
    """Line-delimited JSON export for cross-implementation fixtures."""
    import json
    from pathlib import Path

    lines = [json.dumps({
        "truth": [int(t) for t in c.truth],
        "severity": list(c.severity),
        "prompt": list(c.prompt),
        "distractor": c.distractor,
    }) for c in cases]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cases(path) -> list[LatentCase]:
    import json
    from pathlib import Path

    cases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        cases.append(LatentCase(
            truth=tuple(bool(t) for t in rec["truth"]),
            severity=tuple(float(s) for s in rec["severity"]),
            prompt=tuple(int(t) for t in rec["prompt"]),
            distractor=rec["distractor"],
        ))
    return cases
