"""Command line entry points: synthetic-log generation, ablation runs,
mean±std reporting, and serving the gateway."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .coordinator import CoordinationStrategy
from .domain import StrategyKind, TaskKind, label_space
from .evaluation import (
    METRIC_NAMES,
    AblationResult,
    SynthModelProfile,
    PredictionLog,
    aggregate_results,
    format_report,
    run_ablation,
    synth_log,
)
from .llm import RuleBackend


def symmetric_profiles(
    n_models: int, accuracy: float, n_classes: int, sharpness: float
) -> tuple[SynthModelProfile, ...]:
    """Identical profiles hitting the true class with the given probability."""
    off = (1.0 - accuracy) / (n_classes - 1)
    rows = tuple(
        tuple(accuracy if i == j else off for i in range(n_classes)) for j in range(n_classes)
    )
    return tuple(
        SynthModelProfile(model_id=f"m{i + 1}", confusion_rows=rows, sharpness=sharpness)
        for i in range(n_models)
    )


def _cmd_synth(args: argparse.Namespace) -> int:
    task = TaskKind(args.task)
    n_classes = len(label_space(task))
    priors = (
        tuple(float(p) for p in args.priors.split(","))
        if args.priors
        else tuple(1.0 / n_classes for _ in range(n_classes))
    )
    profiles = symmetric_profiles(args.models, args.accuracy, n_classes, args.sharpness)
    log = synth_log(profiles, priors, args.subjects, seed=args.seed, task=task)
    log.save(args.out)
    print(f"wrote {len(log.records)} records for {args.models} models to {args.out}")
    return 0


def _parse_strategies(spec: str) -> list[CoordinationStrategy]:
    return [CoordinationStrategy(kind=StrategyKind(s.strip())) for s in spec.split(",")]


def _cmd_ablate(args: argparse.Namespace) -> int:
    log = PredictionLog.load(args.log)
    strategies = _parse_strategies(args.strategies)
    llm = RuleBackend(args.llm_rule) if args.llm_rule else None
    result = run_ablation(log, strategies, llm)

    headers = ["method", *(n.upper() for n in METRIC_NAMES)]
    body = [
        [name, *(f"{getattr(m, metric):.3f}" for metric in METRIC_NAMES)]
        for name, m in result.rows.items()
    ]
    widths = [max(len(r[i]) for r in [headers, *body]) for i in range(len(headers))]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for line in body:
        print("  ".join(c.ljust(w) for c, w in zip(line, widths)))

    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=2))
        print(f"wrote metrics to {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    results = [AblationResult.from_dict(json.loads(Path(p).read_text())) for p in args.results]
    cells = aggregate_results(results)
    print(format_report(cells))
    if args.json:
        document = {
            "n_runs": len(results),
            "rows": {
                row: {m: {"mean": mean, "std": std} for m, (mean, std) in metrics.items()}
                for row, metrics in cells.items()
            },
        }
        Path(args.json).write_text(json.dumps(document, indent=2))
        print(f"wrote report to {args.json}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .gateway import app_from_config

    app = app_from_config(args.config, data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuroagent")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic prediction log")
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=[t.value for t in TaskKind], default="diagnosis")
    p.add_argument("--models", type=int, default=5)
    p.add_argument("--accuracy", type=float, default=0.6)
    p.add_argument("--sharpness", type=float, default=0.7)
    p.add_argument("--subjects", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--priors", default=None, help="comma-separated class priors")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("ablate", help="run coordination strategies over a log")
    p.add_argument("--log", required=True)
    p.add_argument("--strategies", default="average,vote")
    p.add_argument("--llm-rule", default=None, help="rule backend tag for llm_coordinated")
    p.add_argument("--out", default=None, help="write machine-readable metrics JSON")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("report", help="aggregate ablation runs into a mean±std table")
    p.add_argument("results", nargs="+", help="ablate --out files, one per run")
    p.add_argument("--json", default=None, help="write the machine-readable report")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("serve", help="run the gateway service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default=None)
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
