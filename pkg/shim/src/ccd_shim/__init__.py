"""Per-step logit adjustment for external generation loops.

The host framework owns the generation loop, the KV caches, and the
sampling; this shim owns one step of the dual-branch fusion. Feed it the
raw next-token logits of the original and anchor-conditioned contexts
plus the expert's label probabilities, and it returns the fused logits
the caller should sample from.

The dual-context bookkeeping stays with the caller: run the model once
on `prompt + generated` and once on `prompt + anchor + generated`, and
append the committed token to both contexts. See
``examples/two_branch_loop.py`` for the reference recipe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ccd.engine import adjust_step
from ccd.expert import ClinicalLabelSet, filter_labels
from ccd.expert import build_bias_map as _build_bias_map
from ccd.processors import ProcessorConfig

__version__ = "0.1.0"

__all__ = ["StepAdjustRequest", "adjusted_logits"]


@dataclass(frozen=True)
class StepAdjustRequest:
    """One decoding step's inputs.

    ``original_logits`` and ``anchored_logits`` are the model's raw
    next-token scores for the two contexts (any contiguous numeric
    array; ``-inf`` marks banned tokens). ``label_probs`` maps label
    names to expert probabilities, ``token_map`` maps each label name to
    its vocabulary token ids. ``processors`` optionally carries the
    standard controller settings (temperature, top_k, top_p,
    repetition_penalty, min_length, eos_token_id); the default is the
    identity stack, in which case ``history``/``generated_len`` have no
    effect.
    """

    original_logits: Sequence[float]
    anchored_logits: Sequence[float]
    label_probs: Mapping[str, float]
    token_map: Mapping[str, Sequence[int]]
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float | None = 10.0
    tau: float = 0.5
    bias_scope: str = "all"
    history: Sequence[int] = ()
    generated_len: int = 0
    processors: ProcessorConfig | Mapping[str, object] | None = None

    def processor_config(self) -> ProcessorConfig:
        if self.processors is None:
            return ProcessorConfig()
        if isinstance(self.processors, ProcessorConfig):
            return self.processors
        return ProcessorConfig(**self.processors)


def adjusted_logits(req: StepAdjustRequest) -> np.ndarray:
    """Fused next-token logits for one step; the caller samples from them.

    Raises ValueError on shape mismatch and KeyError on labels missing
    from the token map, with the engine's error text.
    """
    z_o = np.ascontiguousarray(req.original_logits, dtype=np.float64)
    z_c = np.ascontiguousarray(req.anchored_logits, dtype=np.float64)
    if z_o.shape != z_c.shape or z_o.ndim != 1:
        raise ValueError(
            f"length mismatch: {z_o.shape} vs {z_c.shape} (need equal 1-D arrays)")
    labels = ClinicalLabelSet.from_pairs(
        (name, float(p)) for name, p in req.label_probs.items())
    if req.bias_scope == "selected":
        labels = filter_labels(labels, req.tau)
    elif req.bias_scope != "all":
        raise ValueError(f"bias_scope must be 'all' or 'selected', got {req.bias_scope!r}")
    bias = _build_bias_map(labels, req.token_map, req.gamma, len(z_o))
    stages = adjust_step(z_o, z_c, bias, list(req.history), req.generated_len,
                         req.alpha, req.beta, req.processor_config())
    return stages.ccd
