"""Reproducible experiment driver.

A run is fully determined by (config, seed): episode i derives all of its
randomness from ``seed + i`` (case stream, expert stream, sampling stream
are separate child streams), episodes are reduced in index order, and all
floats are written in shortest round-trip form, so reruns are
byte-identical.

Config files are flat ``key = value`` text; unknown keys are rejected and
CLI flags override file values.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import (
    FixedExpert,
    LogitsTrace,
    NoisyExpert,
    RandomExpert,
    ToyReportModel,
    TraceRecord,
    read_trace,
)
from .engine import DecodeConfig, Generation, generate
from .expert import load_label_set
from .metrics import (
    AggregateReport,
    EpisodeResult,
    aggregate,
    extract_mentions,
    rouge_l,
    symptom_prf,
    tokenize_text,
)
from .processors import ProcessorConfig
from .vocab import build_toy_vocabulary, symptom_names
from .world import WorldParams, reference_report, sample_case

CSV_COLUMNS = (
    "seed", "episodes", "alpha", "beta", "gamma", "tau", "ablation", "expert",
    "precision", "recall", "f1", "fp_rate", "fn_rate", "rouge_l", "mean_tokens",
)

ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
BETA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
GAMMA_GRID = (2.0, 5.0, 10.0, None)  # None: clipping disabled

_INT_KEYS = {"episodes", "seed", "n_symptoms", "max_tokens", "top_k",
             "min_length", "eos_token_id"}
_FLOAT_KEYS = {
    "prevalence", "distractor_rate", "fn_bias", "fp_bias", "alpha", "beta",
    "tau", "noise_sigma", "flip_rate", "temperature", "top_p",
    "repetition_penalty",
}
_STR_KEYS = {"out", "backend", "trace", "expert", "bias_scope", "mode", "ablation"}
_GAMMA_KEYS = {"gamma"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _GAMMA_KEYS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    episodes: int = 200
    seed: int = 0
    out: str | None = None
    backend: str = "toy"
    trace: str | None = None
    expert: str = "noisy"
    noise_sigma: float = 0.0
    flip_rate: float = 0.5
    n_symptoms: int = 14
    prevalence: float = 0.3
    distractor_rate: float = 0.25
    fn_bias: float = 0.6
    fp_bias: float = 0.4
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float | None = 10.0
    tau: float = 0.5
    bias_scope: str = "all"
    mode: str = "greedy"
    max_tokens: int = 48
    ablation: str = "full"
    temperature: float = 1.0
    top_k: int = 0
    top_p: float = 1.0
    repetition_penalty: float = 1.0
    min_length: int = 0
    eos_token_id: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.backend not in ("toy", "replay"):
            raise ConfigError(f"backend must be toy or replay, got {self.backend!r}")
        self.world_params()
        self.decode_config()  # range checks

    def world_params(self) -> WorldParams:
        return WorldParams(
            n_symptoms=self.n_symptoms,
            prevalence=self.prevalence,
            distractor_rate=self.distractor_rate,
            fn_bias=self.fn_bias,
            fp_bias=self.fp_bias,
        )

    def decode_config(self, seed: int | None = None) -> DecodeConfig:
        return DecodeConfig(
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            tau=self.tau,
            bias_scope=self.bias_scope,
            mode=self.mode,
            seed=self.seed if seed is None else seed,
            max_tokens=self.max_tokens,
            processors=ProcessorConfig(
                temperature=self.temperature,
                top_k=self.top_k,
                top_p=self.top_p,
                repetition_penalty=self.repetition_penalty,
                min_length=self.min_length,
                eos_token_id=self.eos_token_id,
            ),
            ablation=self.ablation,
        )

    def make_expert(self):
        if self.expert == "noisy":
            return NoisyExpert(self.noise_sigma, self.flip_rate)
        if self.expert == "random":
            return RandomExpert()
        return FixedExpert(load_label_set(self.expert))  # label-set file path

    def echo(self) -> dict[str, object]:
        return dataclasses.asdict(self)


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Flat key = value lines; '#' starts a comment; unknown keys rejected."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = coerce_config_value(key, value, where=f"{path}:{lineno}")
    return values


def coerce_config_value(key: str, value: str, where: str = "option") -> object:
    if key not in KNOWN_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _GAMMA_KEYS:
            return None if value.lower() in ("off", "none", "null") else float(value)
    except ValueError:
        raise ConfigError(f"{where}: bad value for {key}: {value!r}") from None
    return value


def load_experiment_config(
    config_path: str | Path | None = None, **overrides
) -> ExperimentConfig:
    values = parse_config_file(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


# --- single runs -------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    report: AggregateReport
    episodes: tuple[EpisodeResult, ...]
    first_generation: Generation


def _fmt(x) -> str:
    if x is None:
        return "off"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_row(cfg: ExperimentConfig, report: AggregateReport) -> list[str]:
    values = {
        "seed": cfg.seed,
        "episodes": cfg.episodes,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "gamma": cfg.gamma,
        "tau": cfg.tau,
        "ablation": cfg.ablation,
        "expert": cfg.expert,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "fp_rate": report.fp_rate,
        "fn_rate": report.fn_rate,
        "rouge_l": report.mean_rouge_l,
        "mean_tokens": report.mean_tokens,
    }
    return [_fmt(values[c]) for c in CSV_COLUMNS]


def run_experiment(cfg: ExperimentConfig, collect_steps: bool = False) -> RunResult:
    """Run all episodes and micro-aggregate the symptom metrics."""
    params = cfg.world_params()
    vocab, token_map = build_toy_vocabulary(cfg.n_symptoms)
    ontology = symptom_names(cfg.n_symptoms)
    expert = cfg.make_expert()

    if cfg.backend == "replay":
        if not cfg.trace:
            raise ConfigError("backend=replay requires a trace file")
        return _run_replay(cfg, read_trace(cfg.trace), expert)

    toy = ToyReportModel(params, vocab)
    results = []
    first_gen: Generation | None = None
    for i in range(cfg.episodes):
        episode_seed = cfg.seed + i
        case = sample_case(params, np.random.default_rng([episode_seed, 2]), vocab)
        gen = generate(
            toy.bind(case), expert, case, case.prompt,
            cfg.decode_config(seed=episode_seed),
            token_map=token_map,
            collect_steps=collect_steps or (i == 0),
        )
        if first_gen is None:
            first_gen = gen
        predicted = extract_mentions(gen.text, ontology)
        precision, recall, f1, fp, fn = symptom_prf(predicted, case.truth)
        reference = reference_report(case)
        results.append(EpisodeResult(
            case_id=i,
            text=gen.text,
            truth=case.truth,
            predicted=predicted,
            tp=sum(1 for p, t in zip(predicted, case.truth) if p and t),
            fp=fp,
            fn=fn,
            precision=precision,
            recall=recall,
            f1=f1,
            rouge_l=rouge_l(tokenize_text(gen.text), tokenize_text(reference)),
            token_count=len(gen.tokens),
        ))
    report = aggregate(results, config=cfg.echo())
    return RunResult(report=report, episodes=tuple(results), first_generation=first_gen)


def _run_replay(cfg: ExperimentConfig, trace: LogitsTrace, expert) -> RunResult:
    """Decode a recorded trace; no ground truth, so metrics stay empty."""
    from .backends import ReplayModel
    from .expert import ClinicalLabelSet

    if not isinstance(expert, FixedExpert):
        # a trace has no case for a simulated expert to look at; without a
        # label file the replay decodes with an empty expert signal
        expert = FixedExpert(ClinicalLabelSet(()))
    model = ReplayModel(trace)
    decode = cfg.decode_config()
    if decode.max_tokens > trace.n_steps:
        decode = dataclasses.replace(decode, max_tokens=trace.n_steps)
    gen = generate(model, expert, None, (), decode,
                   token_map=trace.token_map, collect_steps=True)
    dummy = EpisodeResult(
        case_id=0, text=gen.text, truth=(), predicted=(),
        tp=0, fp=0, fn=0, precision=1.0, recall=1.0, f1=1.0,
        rouge_l=0.0, token_count=len(gen.tokens),
    )
    return RunResult(report=aggregate([dummy], config=cfg.echo()),
                     episodes=(dummy,), first_generation=gen)


def record_first_episode_trace(cfg: ExperimentConfig):
    """Capture episode 0's dual-branch model logits as a replayable trace.

    Returns (trace, labels): the labels reproduce the expert signal of the
    recorded episode, which a replay needs for an identical decode.
    """
    run = run_experiment(replace(cfg, episodes=1), collect_steps=True)
    gen = run.first_generation
    vocab, token_map = build_toy_vocabulary(cfg.n_symptoms)
    records = []
    for rec in gen.steps:
        records.append(TraceRecord(step=rec.step, branch="original", logits=rec.z_o))
        records.append(TraceRecord(step=rec.step, branch="anchored", logits=rec.z_c))
    trace = LogitsTrace(tokens=vocab.tokens, eos_id=vocab.eos_id,
                        token_map=token_map, records=tuple(records))
    params = cfg.world_params()
    case = sample_case(params, np.random.default_rng([cfg.seed, 2]), vocab)
    labels = cfg.make_expert().predict(case, np.random.default_rng([cfg.seed, 0]))
    return trace, labels


# --- sweeps and robustness ----------------------------------------------------


def run_sweep(base: ExperimentConfig, axis: str, values: Sequence[float | None] | None = None
              ) -> tuple[list[list[str]], list[AggregateReport]]:
    """One run per grid value along a single axis, rows sorted by value."""
    if axis not in ("alpha", "beta", "gamma"):
        raise ConfigError(f"sweep axis must be alpha, beta, or gamma, got {axis!r}")
    if values is None:
        values = {"alpha": ALPHA_GRID, "beta": BETA_GRID, "gamma": GAMMA_GRID}[axis]
    if axis in ("alpha", "beta"):
        for v in values:
            if v is None or not 0.0 <= v <= 1.0:
                raise ConfigError(f"{axis} grid values must be in [0, 1]")
    else:
        for v in values:
            if v is not None and not v > 1.0:
                raise ConfigError("gamma grid values must be > 1 or off")
    ordered = sorted(values, key=lambda v: float("inf") if v is None else v)
    rows, reports = [], []
    for value in ordered:
        cfg = replace(base, **{axis: value})
        result = run_experiment(cfg)
        rows.append(csv_row(cfg, result.report))
        reports.append(result.report)
    return rows, reports


def run_random_prior(base: ExperimentConfig) -> tuple[list[list[str]], list[AggregateReport]]:
    """Paired runs with the configured expert vs the random expert; the world
    seeds are shared, so the case streams are identical across the pair."""
    rows, reports = [], []
    for expert in (base.expert, "random"):
        cfg = replace(base, expert=expert)
        result = run_experiment(cfg)
        rows.append(csv_row(cfg, result.report))
        reports.append(result.report)
    return rows, reports


# --- output files -------------------------------------------------------------


def format_csv(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


def write_run_outputs(out_dir: str | Path, cfg: ExperimentConfig, run: RunResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(
        format_csv([csv_row(cfg, run.report)]), encoding="utf-8")
    lines = []
    for r in run.episodes:
        lines.append(json.dumps({
            "case_id": r.case_id, "text": r.text,
            "truth": list(r.truth), "predicted": list(r.predicted),
            "tp": r.tp, "fp": r.fp, "fn": r.fn,
            "precision": r.precision, "recall": r.recall, "f1": r.f1,
            "rouge_l": r.rouge_l, "token_count": r.token_count,
        }))
    (out / "episodes.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    rep = run.report
    (out / "aggregate.json").write_text(json.dumps({
        "precision": rep.precision, "recall": rep.recall, "f1": rep.f1,
        "mean_rouge_l": rep.mean_rouge_l, "fp_rate": rep.fp_rate,
        "fn_rate": rep.fn_rate, "episode_count": rep.episode_count,
        "mean_tokens": rep.mean_tokens, "config": dict(rep.config or {}),
    }, indent=2) + "\n", encoding="utf-8")
    echo = "\n".join(f"{k} = {_fmt(v)}" for k, v in cfg.echo().items() if v is not None)
    (out / "config.txt").write_text(echo + "\n", encoding="utf-8")
