"""Experiment command line.

Subcommands: ``run`` (single experiment), ``sweep`` (one-axis grid),
``random-prior`` (paired expert robustness test), ``replay`` (decode a
recorded dual-branch trace), ``plot`` (render figures from a results CSV).
All randomness comes from explicit seeds; no environment variables.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backends import write_trace
from .expert import save_label_set
from .experiment import (
    ConfigError,
    coerce_config_value,
    csv_row,
    format_csv,
    load_experiment_config,
    record_first_episode_trace,
    run_experiment,
    run_random_prior,
    run_sweep,
    write_run_outputs,
)
from .figures import render_csv


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", help="float > 1, or 'off' to disable clipping")
    p.add_argument("--tau", type=float)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--expert", help="noisy | random | path to a label-set file")
    p.add_argument("--ablation", choices=["full", "scd-only", "ecd-only", "off"])
    p.add_argument("--out", help="output directory")
    # decoding controller settings
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--top-p", type=float, dest="top_p")
    p.add_argument("--repetition-penalty", type=float, dest="repetition_penalty")
    p.add_argument("--min-length", type=int, dest="min_length")
    p.add_argument("--eos-token-id", type=int, dest="eos_token_id")


def _overrides(args) -> dict:
    ov = {
        "alpha": args.alpha,
        "beta": args.beta,
        "tau": args.tau,
        "episodes": args.episodes,
        "seed": args.seed,
        "expert": args.expert,
        "out": args.out,
        "temperature": args.temperature,
        "top_k": args.top_k,
        "top_p": args.top_p,
        "repetition_penalty": args.repetition_penalty,
        "min_length": args.min_length,
        "eos_token_id": args.eos_token_id,
    }
    if args.gamma is not None:
        ov["gamma"] = coerce_config_value("gamma", args.gamma, where="--gamma")
    if args.ablation is not None:
        ov["ablation"] = args.ablation.replace("-", "_")
    return ov


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccd")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_run_flags(p_run)
    p_run.add_argument("--trace", help="record episode 0 as a replayable trace file")

    p_sweep = sub.add_parser("sweep", help="vary one hyperparameter, fix the rest")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=["alpha", "beta", "gamma"])
    p_sweep.add_argument("--values", help="comma-separated grid (gamma accepts 'off')")

    p_rand = sub.add_parser("random-prior", help="configured expert vs random expert")
    _add_run_flags(p_rand)

    p_replay = sub.add_parser("replay", help="decode a recorded dual-branch trace")
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--labels", help="label-set file for the expert signal")
    _add_run_flags(p_replay)

    p_plot = sub.add_parser("plot", help="render figures from a results CSV")
    p_plot.add_argument("--csv", required=True)
    p_plot.add_argument("--out", help="directory for the figure (default: next to the CSV)")
    return parser


def cmd_run(args) -> int:
    cfg = load_experiment_config(args.config, **_overrides(args))
    run = run_experiment(cfg)
    text = format_csv([csv_row(cfg, run.report)])
    sys.stdout.write(text)
    if cfg.out:
        write_run_outputs(cfg.out, cfg, run)
        render_csv(Path(cfg.out) / "results.csv")
    if args.trace:
        trace, labels = record_first_episode_trace(cfg)
        write_trace(trace, args.trace)
        save_label_set(labels, f"{args.trace}.labels")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_experiment_config(args.config, **_overrides(args))
    values = None
    if args.values:
        values = [coerce_config_value(args.axis, v.strip(), where="--values")
                  for v in args.values.split(",")]
    rows, _ = run_sweep(cfg, args.axis, values)
    text = format_csv(rows)
    sys.stdout.write(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"sweep_{args.axis}.csv"
        path.write_text(text, encoding="utf-8")
        render_csv(path)
    return 0


def cmd_random_prior(args) -> int:
    cfg = load_experiment_config(args.config, **_overrides(args))
    rows, _ = run_random_prior(cfg)
    text = format_csv(rows)
    sys.stdout.write(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "random_prior.csv"
        path.write_text(text, encoding="utf-8")
        render_csv(path)
    return 0


def cmd_replay(args) -> int:
    overrides = _overrides(args)
    overrides.update({"backend": "replay", "trace": args.trace})
    if args.labels:
        overrides["expert"] = args.labels
    cfg = load_experiment_config(args.config, **overrides)
    run = run_experiment(cfg)
    gen = run.first_generation
    sys.stdout.write(f"tokens: {list(gen.tokens)}\n")
    sys.stdout.write(f"text: {gen.text}\n")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "generation.txt").write_text(
            f"{list(gen.tokens)}\n{gen.text}\n", encoding="utf-8")
    return 0


def cmd_plot(args) -> int:
    out_path = render_csv(args.csv, args.out)
    sys.stdout.write(f"{out_path}\n")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "random-prior": cmd_random_prior,
    "replay": cmd_replay,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except Exception as e:  # backend and engine failures: nonzero exit
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
