"""Pluggable logit and expert-label sources.

``ToyReportModel`` is a desk-scale stand-in for a report-writing language
model. It emits reports over the toy grammar

    Findings : <Symptom> . <Symptom> . ... <eos>
    Findings : no acute findings . <eos>

choosing at each sentence slot among unmentioned symptoms, the
no-findings phrase, and eos, with weights driven by per-symptom beliefs.
Two miscalibration knobs inject the failure modes the decoder targets:

* ``fn_bias`` — in contexts WITHOUT an anchor instruction, the model
  under-perceives a fraction of the truly present symptoms (their slot
  weight collapses), producing false negatives in plain decoding.
* ``fp_bias`` — in contexts WITH an anchor instruction, the model
  over-trusts clinical context and inflates a fraction of the absent
  symptoms, producing false positives in the anchored branch.

A counterfactual "History" sentence in the prompt (distractor) inflates
its named absent symptom in both regimes. The expert is the corrective
signal: miscalibration lives in the model, never in the expert.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
import json
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .expert import ClinicalLabel, ClinicalLabelSet, PROB_EPS
from .vocab import Vocabulary, build_toy_vocabulary, symptom_names
from .world import LatentCase, WorldParams

# Slot-weight levels of the toy grammar. They are spaced so that, at the
# default decode settings, confident decisions sit outside the reach of a
# gamma-clipped expert bias while miscalibrated ones sit inside it.
W_FLOOR = 1e-4          # minimum slot weight ("epsilon" mass)
W_EOS_FIRST = 1e-4      # eos before anything was reported
W_EOS = 0.05            # eos once at least one sentence exists
W_NO_FINDINGS = 0.12    # "no acute findings" phrase, first slot only
BELIEF_INFLATED = 0.45  # absent symptom inflated by anchored-context overtrust
BELIEF_DISTRACTOR = 0.1 # absent symptom named by a prompt distractor


class ModelBackend(ABC):
    """Deterministic per-step logit source over a fixed vocabulary."""

    stateless: bool = True

    @property
    @abstractmethod
    def vocab(self) -> Vocabulary: ...

    @abstractmethod
    def next_logits(self, context: Sequence[int]) -> np.ndarray: ...

    def clone(self) -> "ModelBackend":
        """Fresh instance for a new generation; identity for stateless backends."""
        return self


class ExpertBackend(ABC):
    """Produces a label set for a case; rng is supplied by the caller."""

    @abstractmethod
    def predict(self, case: LatentCase, rng: np.random.Generator) -> ClinicalLabelSet: ...


# --- toy report model -------------------------------------------------------


class ToyReportModel:
    """Conditional next-token model over the toy grammar (see module docs)."""

    def __init__(self, params: WorldParams, vocab: Vocabulary | None = None):
        self.params = params
        if vocab is None:
            vocab, _ = build_toy_vocabulary(params.n_symptoms)
        self.vocab = vocab
        names = symptom_names(params.n_symptoms)
        self._symptom_ids = [vocab.ids[n] for n in names]
        self._id_to_symptom = {tid: i for i, tid in enumerate(self._symptom_ids)}
        v = vocab.ids
        self._findings_id = v["Findings"]
        self._colon_id = v[":"]
        self._period_id = v["."]
        self._no_id = v["no"]
        self._acute_id = v["acute"]
        self._lower_findings_id = v["findings"]
        self._anchor_marker_id = v["Attention"]

    def _belief(self, case: LatentCase, i: int, anchored: bool) -> float:
        if case.distractor == i:
            return BELIEF_DISTRACTOR
        sev = case.severity[i]
        if case.truth[i]:
            if not anchored and sev < 0.5 + 0.5 * self.params.fn_bias:
                return max(W_FLOOR, 0.1 * (1.0 - self.params.fn_bias))
            return 0.78 + 0.4 * (sev - 0.5)
        if anchored and sev > 0.5 * (1.0 - 0.4 * self.params.fp_bias):
            return BELIEF_INFLATED
        return 0.002 + 0.02 * sev

    def conditional_row(self, case: LatentCase, context: Sequence[int]) -> np.ndarray:
        """Probability row over the vocabulary for the next token."""
        if len(case.truth) != self.params.n_symptoms:
            raise ValueError("case does not match this model's symptom count")
        row = np.zeros(self.vocab.size, dtype=np.float64)
        context = list(context)
        anchored = self._anchor_marker_id in context

        if self._findings_id not in context:
            row[self._findings_id] = 1.0
            return row
        body = context[len(context) - context[::-1].index(self._findings_id):]

        if not body:
            row[self._colon_id] = 1.0
            return row
        last = body[-1]
        if last in (self._colon_id, self._period_id):
            mentioned = {self._id_to_symptom[t] for t in body if t in self._id_to_symptom}
            first_slot = body.count(self._period_id) == 0
            for i, tid in enumerate(self._symptom_ids):
                if i not in mentioned:
                    row[tid] = max(W_FLOOR, self._belief(case, i, anchored))
            if first_slot:
                row[self._no_id] = W_NO_FINDINGS
                row[self.vocab.eos_id] = W_EOS_FIRST
            else:
                row[self.vocab.eos_id] = W_EOS
            return row / row.sum()
        if last in self._id_to_symptom:
            row[self._period_id] = 1.0
        elif last == self._no_id:
            row[self._acute_id] = 1.0
        elif last == self._acute_id:
            row[self._lower_findings_id] = 1.0
        elif last == self._lower_findings_id:
            row[self._period_id] = 1.0
        else:  # eos or off-grammar context: absorb
            row[self.vocab.eos_id] = 1.0
        return row

    def next_logits_for(self, case: LatentCase, context: Sequence[int]) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.conditional_row(case, context))

    def bind(self, case: LatentCase) -> "BoundToyModel":
        return BoundToyModel(self, case)


class BoundToyModel(ModelBackend):
    """A ToyReportModel fixed to one case, exposing the backend interface."""

    def __init__(self, model: ToyReportModel, case: LatentCase):
        self._model = model
        self._case = case

    @property
    def vocab(self) -> Vocabulary:
        return self._model.vocab

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        return self._model.next_logits_for(self._case, context)


# --- expert simulators ------------------------------------------------------


def noisy_expert_predict(
    case: LatentCase,
    noise_sigma: float,
    rng: np.random.Generator,
    flip_rate: float = 0.5,
) -> ClinicalLabelSet:
    """Saturated truth-aligned probabilities degraded by borderline-scaled noise.

    With probability ``flip_rate`` a label's noise pushes toward the wrong
    side of the threshold; pushes toward the right side clamp back to the
    saturated value. Noise magnitude shrinks as the finding's severity gets
    more clear-cut, so the expert is least reliable exactly where the case
    is borderline. ``noise_sigma=0`` reproduces the perfectly informative
    expert.
    """
    names = symptom_names(len(case.truth))
    magnitude = np.abs(rng.normal(0.0, noise_sigma, len(names))) if noise_sigma > 0 else (
        np.zeros(len(names))
    )
    wrongward = rng.random(len(names)) < flip_rate
    labels = []
    for i, name in enumerate(names):
        borderline = 1.0 - abs(2.0 * case.severity[i] - 1.0)
        delta = magnitude[i] * borderline
        ideal = 1.0 if case.truth[i] else 0.0
        direction = -1.0 if case.truth[i] else 1.0  # wrong side
        if not wrongward[i]:
            direction = -direction
        prob = min(max(ideal + direction * delta, PROB_EPS), 1.0 - PROB_EPS)
        labels.append(ClinicalLabel(name, prob))
    return ClinicalLabelSet(tuple(labels))


def random_expert_predict(
    n_symptoms: int, rng: np.random.Generator
) -> ClinicalLabelSet:
    """Case-independent uniform probabilities (adversarially useless expert)."""
    names = symptom_names(n_symptoms)
    probs = rng.random(n_symptoms)
    return ClinicalLabelSet.from_pairs(zip(names, (float(p) for p in probs)))


class NoisyExpert(ExpertBackend):
    def __init__(self, noise_sigma: float = 0.0, flip_rate: float = 0.5):
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= flip_rate <= 1.0:
            raise ValueError("flip_rate must be in [0, 1]")
        self.noise_sigma = noise_sigma
        self.flip_rate = flip_rate

    def predict(self, case, rng):
        return noisy_expert_predict(case, self.noise_sigma, rng, self.flip_rate)


class RandomExpert(ExpertBackend):
    def predict(self, case, rng):
        return random_expert_predict(len(case.truth), rng)


class FixedExpert(ExpertBackend):
    """Always returns the given label set; useful for replay and tests."""

    def __init__(self, label_set: ClinicalLabelSet):
        self.label_set = label_set

    def predict(self, case, rng):
        return self.label_set


# --- logits trace -----------------------------------------------------------

BRANCHES = ("original", "anchored")


class TraceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    step: int
    branch: str
    logits: tuple[float, ...]


@dataclass(frozen=True)
class LogitsTrace:
    """Recorded dual-branch per-step logits plus the session header.

    The integration contract for capturing logits from any external model:
    decode them offline without the model present.
    """

    tokens: tuple[str, ...]
    eos_id: int
    token_map: Dict[str, List[int]]
    records: tuple[TraceRecord, ...]

    def __post_init__(self):
        n_steps = len(self.records) // 2
        expected = [(s, b) for s in range(n_steps) for b in BRANCHES]
        got = [(r.step, r.branch) for r in self.records]
        if got != expected:
            raise TraceError("records must be contiguous in step with both branches present")
        for r in self.records:
            if len(r.logits) != len(self.tokens):
                raise TraceError(
                    f"record at step {r.step} has {len(r.logits)} logits, "
                    f"vocab size is {len(self.tokens)}"
                )

    @property
    def n_steps(self) -> int:
        return len(self.records) // 2

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(tokens=self.tokens, eos_id=self.eos_id)


def replay_next_logits(trace: LogitsTrace, step: int, branch: str) -> np.ndarray:
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
    if not 0 <= step < trace.n_steps:
        raise TraceError(f"trace exhausted: no record for step {step}")
    return np.asarray(trace.records[2 * step + BRANCHES.index(branch)].logits,
                      dtype=np.float64)


def write_trace(trace: LogitsTrace, path: str | Path) -> None:
    """One JSON header line, then one JSON record per line. Floats keep
    their shortest round-trip decimal form, so parsing is bit-exact."""
    lines = [json.dumps({
        "vocab": list(trace.tokens),
        "eos_id": trace.eos_id,
        "token_map": {k: list(v) for k, v in trace.token_map.items()},
    })]
    for r in trace.records:
        lines.append(json.dumps(
            {"step": r.step, "branch": r.branch, "logits": list(r.logits)}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path: str | Path) -> LogitsTrace:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TraceError(f"empty trace file: {path}")
    header = json.loads(lines[0])
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        records.append(TraceRecord(
            step=int(rec["step"]),
            branch=rec["branch"],
            logits=tuple(float(x) for x in rec["logits"]),
        ))
    return LogitsTrace(
        tokens=tuple(header["vocab"]),
        eos_id=int(header["eos_id"]),
        token_map={k: [int(t) for t in v] for k, v in header["token_map"].items()},
        records=tuple(records),
    )


class ReplayModel(ModelBackend):
    """Serves recorded logits in decode order (original, then anchored,
    once per step). Stateful: clone per generation."""

    stateless = False

    def __init__(self, trace: LogitsTrace):
        self._trace = trace
        self._vocab = trace.vocabulary()
        self._calls = 0

    @property
    def vocab(self) -> Vocabulary:
        return self._vocab

    def clone(self) -> "ReplayModel":
        return ReplayModel(self._trace)

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        step, idx = divmod(self._calls, 2)
        self._calls += 1
        return replay_next_logits(self._trace, step, BRANCHES[idx])
