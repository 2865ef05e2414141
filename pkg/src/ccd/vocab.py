"""Word-level toy vocabulary shared by the synthetic world and the toy model.

Each symptom is exactly one token, which keeps the label-to-token map
trivial and brute-force enumeration tractable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

# 14 single-word chest-finding names, alphabetical; this order is the
# ontology order used by reference reports and tie-breaking.
SYMPTOM_NAMES = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Fracture",
    "Hernia",
    "Infiltration",
    "Lesion",
    "Opacity",
    "Pneumonia",
    "Pneumothorax",
)

EOS_TOKEN = "<eos>"
NEGATION_TOKEN = "no"

_STRUCTURAL_TOKENS = (
    EOS_TOKEN,
    "Findings",
    ":",
    ".",
    ",",
    "no",
    "acute",
    "findings",
    "Attention",
    "to",
    "the",
    "following",
    "clinical",
    "instructions",
    "Generate",
    "a",
    "report",
    "History",
    # reserved fillers; never produced by the toy grammar, so the engine
    # always sees some permanently banned (-inf) vocabulary entries
    "prior",
    "stable",
    "of",
    "with",
)

_PUNCT = {":", ".", ","}
_WORD_RE = re.compile(r"[<>A-Za-z0-9]+|[:.,]")


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    eos_id: int
    ids: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate token strings")
        if not 0 <= self.eos_id < len(self.tokens):
            raise ValueError("eos_id out of range")
        object.__setattr__(self, "ids", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> List[int]:
        out = []
        for word in _WORD_RE.findall(text):
            if word not in self.ids:
                raise KeyError(f"token not in vocabulary: {word!r}")
            out.append(self.ids[word])
        return out

    def decode(self, token_ids: Sequence[int]) -> List[str]:
        return [self.tokens[t] for t in token_ids]

    def detokenize(self, token_ids: Sequence[int]) -> str:
        """Join tokens with spaces, attaching punctuation to the left and
        dropping the eos marker."""
        parts: List[str] = []
        for t in token_ids:
            word = self.tokens[t]
            if t == self.eos_id:
                continue
            if word in _PUNCT and parts:
                parts[-1] += word
            else:
                parts.append(word)
        return " ".join(parts)


def symptom_names(n_symptoms: int) -> tuple[str, ...]:
    """First ``n_symptoms`` ontology names; synthesized past the built-ins."""
    if n_symptoms < 1:
        raise ValueError("need at least one symptom")
    names = list(SYMPTOM_NAMES[:n_symptoms])
    for i in range(len(names), n_symptoms):
        names.append(f"Finding{i + 1}")
    return tuple(names)


def build_toy_vocabulary(n_symptoms: int = 14) -> tuple[Vocabulary, Dict[str, List[int]]]:
    """Toy vocabulary plus the symptom-name -> token-ids map."""
    names = symptom_names(n_symptoms)
    tokens = _STRUCTURAL_TOKENS + names
    vocab = Vocabulary(tokens=tokens, eos_id=0)
    token_map = {name: [vocab.ids[name]] for name in names}
    return vocab, token_map
