"""Standard decoding controller stack applied to first-stage logits.

Fixed composition order: repetition penalty -> min-length -> temperature
-> top-k -> top-p. The order is frozen for reproducibility and matches
the de-facto convention of mainstream generation loops.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .logits import NEG_INF, DegenerateLogitsError, as_logits, softmax

# Slack on the nucleus cumulative-probability crossing so that analytically
# exact boundaries (cumsum == p) are not lost to float rounding.
_TOP_P_SLACK = 1e-12


@dataclass(frozen=True)
class ProcessorConfig:
    """Controller settings; the defaults form an identity stack."""

    temperature: float = 1.0
    top_k: int = 0
    top_p: float = 1.0
    repetition_penalty: float = 1.0
    min_length: int = 0
    eos_token_id: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.top_k < 0:
            raise ValueError(f"top_k must be >= 0, got {self.top_k}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.repetition_penalty < 1.0:
            raise ValueError(
                f"repetition_penalty must be >= 1, got {self.repetition_penalty}"
            )
        if self.min_length < 0:
            raise ValueError(f"min_length must be >= 0, got {self.min_length}")
        if self.eos_token_id < 0:
            raise ValueError(f"eos_token_id must be >= 0, got {self.eos_token_id}")

    @property
    def is_identity(self) -> bool:
        return (
            self.temperature == 1.0
            and self.top_k == 0
            and self.top_p == 1.0
            and self.repetition_penalty == 1.0
            and self.min_length == 0
        )


def apply_repetition_penalty(z, history: Sequence[int], rho: float) -> np.ndarray:
    """CTRL-style penalty: seen positive logits divided, others multiplied."""
    if rho < 1.0:
        raise ValueError(f"repetition penalty must be >= 1, got {rho}")
    z = np.asarray(z, dtype=np.float64).copy()
    if rho == 1.0 or len(history) == 0:
        return z
    seen = np.unique(np.asarray(history, dtype=np.int64))
    vals = z[seen]
    z[seen] = np.where(vals > 0, vals / rho, vals * rho)
    return z


def enforce_min_length(z, generated_len: int, cfg: ProcessorConfig) -> np.ndarray:
    """Ban eos until the generated sequence reaches ``cfg.min_length``."""
    z = np.asarray(z, dtype=np.float64).copy()
    if generated_len < cfg.min_length:
        z[cfg.eos_token_id] = NEG_INF
    return z


def apply_top_k(z, k: int) -> np.ndarray:
    """Keep the k highest finite entries (ties keep the lower index)."""
    z = np.asarray(z, dtype=np.float64)
    finite = np.isfinite(z)
    if k == 0 or k >= int(finite.sum()):
        return z.copy()
    # Stable sort on -z: among equal values the lower index comes first,
    # and banned entries (-z == +inf) sort last.
    order = np.argsort(-z, kind="stable")
    out = np.full_like(z, NEG_INF)
    keep = order[:k]
    out[keep] = z[keep]
    return out


def apply_top_p(z, p: float) -> np.ndarray:
    """Nucleus truncation: keep the smallest probability-descending prefix
    whose cumulative mass reaches p; always keep at least one token."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {p}")
    z = np.asarray(z, dtype=np.float64)
    if p == 1.0:
        return z.copy()
    probs = softmax(z)
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    crossed = cum >= p - _TOP_P_SLACK
    cut = int(np.argmax(crossed)) if crossed.any() else len(order) - 1
    out = np.full_like(z, NEG_INF)
    keep = order[: cut + 1]
    out[keep] = z[keep]
    return out


def run_stack(
    z,
    history: Sequence[int],
    generated_len: int,
    cfg: ProcessorConfig,
) -> np.ndarray:
    """Run the full controller stack in its fixed order."""
    z = as_logits(z)
    z = apply_repetition_penalty(z, history, cfg.repetition_penalty)
    z = enforce_min_length(z, generated_len, cfg)
    if cfg.temperature != 1.0:
        z = z / cfg.temperature
    z = apply_top_k(z, cfg.top_k)
    z = apply_top_p(z, cfg.top_p)
    if not np.isfinite(z).any():
        raise DegenerateLogitsError("degenerate logits: processor stack banned all tokens")
    return z
