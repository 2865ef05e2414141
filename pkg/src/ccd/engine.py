"""Dual-branch decoding engine.

Each step queries the model on two contexts kept in lockstep: the original
prompt and the prompt extended with an expert-derived anchor instruction.
The two logit vectors are fused in two stages:

1. log-softmax both branches and blend with weight ``alpha``;
2. add the expert's clipped log-odds biases to the unprocessed stage-1
   logits, run the standard controller stack on the stage-1 logits, and
   blend the two results with weight ``beta``.

The next token is the argmax (greedy) or a draw from the softmax of the
fused logits (sample), and the same committed token is appended to both
contexts.

Sampling is reproducible by construction: the generator is numpy's PCG64
seeded from ``DecodeConfig.seed`` (expert stream ``[seed, 0]``, sampling
stream ``[seed, 1]``), and a token is selected from one uniform draw by
inverse CDF over ascending token ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import ExpertBackend, ModelBackend
from .expert import build_anchor_prompt, build_bias_map, filter_labels
from .logits import as_logits, argmax, interpolate, log_softmax, softmax
from .processors import ProcessorConfig, run_stack
from .world import LatentCase

ABLATIONS = ("full", "scd_only", "ecd_only", "off")
MODES = ("greedy", "sample")
BIAS_SCOPES = ("all", "selected")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float | None = 10.0  # None disables the plausibility clamp
    tau: float = 0.5
    bias_scope: str = "all"
    mode: str = "greedy"
    seed: int = 0
    max_tokens: int = 48
    processors: ProcessorConfig = field(default_factory=ProcessorConfig)
    ablation: str = "full"

    def __post_init__(self):
        for name in ("alpha", "beta", "tau"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.gamma is not None and not self.gamma > 1.0:
            raise ValueError(f"gamma must be > 1 or None, got {self.gamma}")
        if self.bias_scope not in BIAS_SCOPES:
            raise ValueError(f"bias_scope must be one of {BIAS_SCOPES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")


@dataclass(frozen=True)
class StepLogits:
    """All fusion stages for one decoding step."""

    scd: np.ndarray
    scd_processed: np.ndarray
    ecd: np.ndarray
    ccd: np.ndarray


@dataclass(frozen=True)
class StepRecord:
    step: int
    z_o: tuple[float, ...]
    z_c: tuple[float, ...]
    scd: tuple[float, ...]
    scd_processed: tuple[float, ...]
    ecd: tuple[float, ...]
    ccd: tuple[float, ...]
    chosen: int


@dataclass(frozen=True)
class Generation:
    tokens: tuple[int, ...]
    text: str
    steps: tuple[StepRecord, ...] | None = None


def scd_step(z_o, z_c, alpha: float) -> np.ndarray:
    """Stage 1: blend the log-probabilities of both branches."""
    return interpolate(log_softmax(z_o), log_softmax(z_c), alpha)


def ecd_step(z_scd, bias) -> np.ndarray:
    """Stage 2a: expert bias added to the unprocessed stage-1 logits."""
    z_scd = np.asarray(z_scd, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if z_scd.shape != bias.shape:
        raise ValueError(f"length mismatch: {z_scd.shape} vs {bias.shape}")
    return z_scd + bias


def ccd_step(z_scd_processed, z_ecd, beta: float) -> np.ndarray:
    """Stage 2b: blend processed stage-1 with expert-informed logits.

    Processor bans survive for beta < 1; beta == 1 bypasses the processed
    branch entirely (the 0*(-inf) == 0 convention of ``interpolate``).
    """
    return interpolate(z_scd_processed, z_ecd, beta)


def next_token(z, mode: str, rng: np.random.Generator | None = None) -> int:
    z = as_logits(z)  # rejects the all-banned vector
    if mode == "greedy":
        return argmax(z)
    if mode != "sample":
        raise ValueError(f"unknown decode mode: {mode!r}")
    if rng is None:
        raise ValueError("sampling requires an rng")
    p = softmax(z)
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    if idx >= len(p):  # float shortfall at the tail of the CDF
        idx = int(np.nonzero(p)[0][-1])
    return idx


def adjust_step(
    z_o,
    z_c,
    bias,
    history: Sequence[int],
    generated_len: int,
    alpha: float,
    beta: float,
    processors: ProcessorConfig,
) -> StepLogits:
    """One-step fusion of raw branch logits into final decode logits."""
    scd = scd_step(z_o, z_c, alpha)
    scd_processed = run_stack(scd, history, generated_len, processors)
    ecd = ecd_step(scd, bias)
    ccd = ccd_step(scd_processed, ecd, beta)
    return StepLogits(scd=scd, scd_processed=scd_processed, ecd=ecd, ccd=ccd)


def _effective(cfg: DecodeConfig) -> tuple[float, float, bool]:
    """(alpha, beta, bias enabled) after applying the ablation switch."""
    if cfg.ablation == "full":
        return cfg.alpha, cfg.beta, True
    if cfg.ablation == "scd_only":
        return cfg.alpha, cfg.beta, False
    if cfg.ablation == "ecd_only":
        return 0.0, cfg.beta, True
    return 0.0, 0.0, False  # off


def generate(
    model: ModelBackend,
    expert: ExpertBackend,
    case: LatentCase | None,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    token_map=None,
    collect_steps: bool = False,
) -> Generation:
    """Run the full dual-branch decode loop for one generation.

    The expert runs once per generation: its filtered labels build the
    anchor appended to the anchored context, and its probabilities build
    the additive bias map. ``token_map`` defaults to the model's own
    label-to-token map.
    """
    if not model.stateless:
        model = model.clone()
    vocab = model.vocab
    if token_map is None:
        token_map = getattr(model, "token_map", None)

    expert_rng = np.random.default_rng([cfg.seed, 0])
    sample_rng = np.random.default_rng([cfg.seed, 1])

    labels = expert.predict(case, expert_rng)
    selected = filter_labels(labels, cfg.tau)
    anchor_text = build_anchor_prompt(selected)
    anchor_ids = vocab.encode(anchor_text) if anchor_text else []

    alpha, beta, biased = _effective(cfg)
    if biased:
        if token_map is None:
            raise GenerationError("no token map available for expert bias")
        bias_source = labels if cfg.bias_scope == "all" else selected
        bias = build_bias_map(bias_source, token_map, cfg.gamma, vocab.size)
    else:
        bias = np.zeros(vocab.size, dtype=np.float64)

    ctx_o = list(prompt)
    ctx_c = list(prompt) + anchor_ids
    generated: list[int] = []
    steps: list[StepRecord] = []

    for step in range(cfg.max_tokens):
        try:
            z_o = as_logits(model.next_logits(ctx_o))
            z_c = as_logits(model.next_logits(ctx_c))
        except Exception as e:
            raise GenerationError(f"model backend failed at step {step}: {e}") from e
        if z_o.shape != (vocab.size,) or z_c.shape != (vocab.size,):
            raise GenerationError(f"backend logits shape mismatch at step {step}")
        stages = adjust_step(z_o, z_c, bias, generated, len(generated),
                             alpha, beta, cfg.processors)
        tok = next_token(stages.ccd, cfg.mode, sample_rng)
        if collect_steps:
            steps.append(StepRecord(
                step=step,
                z_o=tuple(z_o), z_c=tuple(z_c),
                scd=tuple(stages.scd),
                scd_processed=tuple(stages.scd_processed),
                ecd=tuple(stages.ecd),
                ccd=tuple(stages.ccd),
                chosen=tok,
            ))
        generated.append(tok)
        ctx_o.append(tok)
        ctx_c.append(tok)
        if tok == vocab.eos_id:
            break

    return Generation(
        tokens=tuple(generated),
        text=vocab.detokenize(generated),
        steps=tuple(steps) if collect_steps else None,
    )


def plain_decode(model: ModelBackend, prompt: Sequence[int], cfg: DecodeConfig) -> Generation:
    """Single-branch reference decoding: the processor stack applied to the
    log-softmax of the model's logits, no anchor and no expert bias."""
    if not model.stateless:
        model = model.clone()
    vocab = model.vocab
    sample_rng = np.random.default_rng([cfg.seed, 1])
    ctx = list(prompt)
    generated: list[int] = []
    for _ in range(cfg.max_tokens):
        z = run_stack(log_softmax(model.next_logits(ctx)),
                      generated, len(generated), cfg.processors)
        tok = next_token(z, cfg.mode, sample_rng)
        generated.append(tok)
        ctx.append(tok)
        if tok == vocab.eos_id:
            break
    return Generation(tokens=tuple(generated), text=vocab.detokenize(generated))


STAGES = ("o", "c", "scd", "scd_processed", "ecd", "ccd")


def write_step_trace(gen: Generation, path: str | Path) -> None:
    """Line-delimited per-stage records for debugging and oracle tests."""
    if gen.steps is None:
        raise ValueError("generation was run without collect_steps")
    lines = []
    for rec in gen.steps:
        by_stage = {"o": rec.z_o, "c": rec.z_c, "scd": rec.scd,
                    "scd_processed": rec.scd_processed, "ecd": rec.ecd, "ccd": rec.ccd}
        for stage in STAGES:
            lines.append(json.dumps({
                "step": rec.step, "stage": stage,
                "logits": list(by_stage[stage]), "chosen": rec.chosen,
            }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
