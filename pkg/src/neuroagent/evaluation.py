"""Evaluation harness: classification metrics, synthetic multi-model prediction
logs, and the ablation protocol (strategy rows vs per-model baselines, repeated
over seeds and reported as mean±std).
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coordinator import CoordinationError, CoordinationStrategy, coordinate
from .domain import (
    ClassDistribution,
    DomainError,
    ModelOutcome,
    TaskKind,
    label_space,
)
from .llm import LlmBackend

METRIC_NAMES = ("acc", "spe", "sen", "f1")


class EvalError(Exception):
    code = "EvalError"


class LengthMismatchError(EvalError):
    code = "LengthMismatch"


class EmptyInputError(EvalError):
    code = "EmptyInput"


@dataclass(frozen=True)
class Metrics:
    """Accuracy plus macro-averaged specificity, sensitivity and F1."""

    acc: float
    spe: float
    sen: float
    f1: float

    def __post_init__(self) -> None:
        for name in METRIC_NAMES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"metric {name}={value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def compute_metrics(preds: Sequence[int], labels: Sequence[int], n_classes: int) -> Metrics:
    """ACC plus macro SEN (recall), SPE (TN rate) and F1 over the label indices.

    Per-class terms with a zero denominator contribute 0, keeping every metric
    total on degenerate inputs.
    """
    if len(preds) != len(labels):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise EmptyInputError("need at least one prediction")
    for value in (*preds, *labels):
        if not 0 <= value < n_classes:
            raise EvalError(f"label index {value} outside 0..{n_classes - 1}")

    total = len(labels)
    correct = sum(1 for p, t in zip(preds, labels) if p == t)

    sens, spes, f1s = [], [], []
    for c in range(n_classes):
        tp = sum(1 for p, t in zip(preds, labels) if t == c and p == c)
        fn = sum(1 for p, t in zip(preds, labels) if t == c and p != c)
        fp = sum(1 for p, t in zip(preds, labels) if t != c and p == c)
        tn = total - tp - fn - fp
        sens.append(tp / (tp + fn) if tp + fn else 0.0)
        spes.append(tn / (tn + fp) if tn + fp else 0.0)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = sens[-1]
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)

    k = n_classes
    return Metrics(
        acc=correct / total,
        spe=sum(spes) / k,
        sen=sum(sens) / k,
        f1=sum(f1s) / k,
    )


@dataclass(frozen=True)
class SynthModelProfile:
    """Controls one synthetic model: its confusion behaviour and how peaked its
    emitted distributions are (sharpness = probability mass on the intended label)."""

    model_id: str
    confusion_rows: tuple[tuple[float, ...], ...]
    sharpness: float = 0.7

    def __post_init__(self) -> None:
        if self.sharpness <= 0:
            raise DomainError("sharpness must be positive")
        n = len(self.confusion_rows)
        for row in self.confusion_rows:
            if len(row) != n:
                raise DomainError("confusion_rows must be square")
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-9:
                raise DomainError(f"confusion row {row} is not a distribution")


@dataclass(frozen=True)
class LogRecord:
    subject_id: str
    true_label_index: int
    per_model: tuple[ModelOutcome, ...]

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "true_label_index": self.true_label_index,
            "per_model": [o.to_dict() for o in self.per_model],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogRecord":
        return cls(
            subject_id=data["subject_id"],
            true_label_index=int(data["true_label_index"]),
            per_model=tuple(ModelOutcome.from_dict(o) for o in data["per_model"]),
        )


@dataclass(frozen=True)
class PredictionLog:
    """Offline stand-in for tool outputs: per-subject truth and model outcomes."""

    task: TaskKind
    records: tuple[LogRecord, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise DomainError("prediction log requires at least one record")
        roster = tuple(o.model_id for o in self.records[0].per_model)
        n = len(label_space(self.task))
        for record in self.records:
            if tuple(o.model_id for o in record.per_model) != roster:
                raise DomainError(f"record {record.subject_id} breaks the shared model roster")
            if not 0 <= record.true_label_index < n:
                raise DomainError(f"record {record.subject_id} has true label outside the space")

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(o.model_id for o in self.records[0].per_model)

    def to_dict(self) -> dict:
        return {"task": self.task.value, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, data: dict) -> "PredictionLog":
        return cls(
            task=TaskKind(data["task"]),
            records=tuple(LogRecord.from_dict(r) for r in data["records"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "PredictionLog":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _peaked_distribution(task: TaskKind, intended: int, sharpness: float) -> ClassDistribution:
    n = len(label_space(task))
    peak = min(max(sharpness, 1.0 / n), 1.0)
    rest = (1.0 - peak) / (n - 1)
    return ClassDistribution(task, tuple(peak if i == intended else rest for i in range(n)))


def synth_log(
    profiles: Sequence[SynthModelProfile],
    class_priors: Sequence[float],
    n_subjects: int,
    seed: int,
    task: TaskKind | None = None,
) -> PredictionLog:
    """Generate a reproducible log: truths from the priors, each model's intended
    label from its confusion row, emitted as a sharpness-peaked distribution."""
    if not profiles:
        raise EvalError("need at least one model profile")
    if n_subjects < 1:
        raise EvalError("n_subjects must be >= 1")
    priors = tuple(float(p) for p in class_priors)
    if any(p < 0 for p in priors) or abs(sum(priors) - 1.0) > 1e-9:
        raise EvalError(f"class priors {priors} are not a distribution")
    if task is None:
        task = TaskKind.DIAGNOSIS if len(priors) == 3 else TaskKind.PROGNOSIS
    n = len(label_space(task))
    if len(priors) != n:
        raise EvalError(f"{task.value} needs {n} priors, got {len(priors)}")
    for profile in profiles:
        if len(profile.confusion_rows) != n:
            raise EvalError(f"profile {profile.model_id} has wrong confusion size")

    rng = np.random.default_rng(seed)
    trues = rng.choice(n, size=n_subjects, p=priors)
    intended = np.empty((len(profiles), n_subjects), dtype=int)
    for m, profile in enumerate(profiles):
        for c in range(n):
            mask = trues == c
            count = int(mask.sum())
            if count:
                intended[m, mask] = rng.choice(n, size=count, p=profile.confusion_rows[c])

    records = []
    for s in range(n_subjects):
        per_model = tuple(
            ModelOutcome(
                model_id=profile.model_id,
                distribution=_peaked_distribution(task, int(intended[m, s]), profile.sharpness),
            )
            for m, profile in enumerate(profiles)
        )
        records.append(
            LogRecord(subject_id=f"s{s:05d}", true_label_index=int(trues[s]), per_model=per_model)
        )
    return PredictionLog(task=task, records=tuple(records))


@dataclass(frozen=True)
class AblationResult:
    """Metrics per row: each model as a baseline, then each strategy."""

    task: TaskKind
    n_subjects: int
    rows: dict[str, Metrics]

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "n_subjects": self.n_subjects,
            "rows": {name: m.to_dict() for name, m in self.rows.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AblationResult":
        return cls(
            task=TaskKind(data["task"]),
            n_subjects=int(data["n_subjects"]),
            rows={name: Metrics(**m) for name, m in data["rows"].items()},
        )


def baseline_row_name(model_id: str) -> str:
    return f"model:{model_id}"


def run_ablation(
    log: PredictionLog,
    strategies: Sequence[CoordinationStrategy],
    llm: LlmBackend | None = None,
) -> AblationResult:
    """Coordinate every record under each strategy and score against the truth.

    Per-model baseline rows mirror the comparison-table structure; a baseline is
    scored over the records where that model succeeded.
    """
    n = len(label_space(log.task))
    truths = [r.true_label_index for r in log.records]

    rows: dict[str, Metrics] = {}
    for m, model_id in enumerate(log.model_ids):
        preds, labels = [], []
        for record in log.records:
            outcome = record.per_model[m]
            if outcome.ok:
                preds.append(outcome.distribution.argmax())
                labels.append(record.true_label_index)
        if preds:
            rows[baseline_row_name(model_id)] = compute_metrics(preds, labels, n)

    for strategy in strategies:
        preds = []
        for record in log.records:
            try:
                decision = coordinate(strategy, record.per_model, llm)
            except CoordinationError as exc:
                raise EvalError(
                    f"coordination failed for subject {record.subject_id}: {exc}"
                ) from exc
            preds.append(decision.label_index)
        rows[strategy.kind.value] = compute_metrics(preds, truths, n)

    return AblationResult(task=log.task, n_subjects=len(log.records), rows=rows)


@dataclass(frozen=True)
class AblationConfig:
    profiles: tuple[SynthModelProfile, ...]
    class_priors: tuple[float, ...]
    n_subjects: int
    strategies: tuple[CoordinationStrategy, ...]
    task: TaskKind | None = None


@dataclass(frozen=True)
class RepeatedResult:
    """Per-cell mean and sample standard deviation over n_runs ablations."""

    task: TaskKind
    n_runs: int
    base_seed: int
    cells: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)

    def cell_text(self, row: str, metric: str) -> str:
        mean, std = self.cells[row][metric]
        return f"{mean:.3f}±{std:.3f}"

    def format_text(self) -> str:
        return format_report(self.cells)

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "rows": {
                row: {
                    metric: {"mean": mean, "std": std}
                    for metric, (mean, std) in metrics.items()
                }
                for row, metrics in self.cells.items()
            },
        }


def aggregate_results(results: Sequence[AblationResult]) -> dict[str, dict[str, tuple[float, float]]]:
    """Reduce per-run ablation rows to (mean, sample std) per cell."""
    if len(results) < 2:
        raise EvalError("aggregation needs at least 2 runs")
    row_names = list(results[0].rows)
    for result in results[1:]:
        if list(result.rows) != row_names:
            raise EvalError("runs disagree on row names; cannot aggregate")
    cells: dict[str, dict[str, tuple[float, float]]] = {}
    for row in row_names:
        cells[row] = {}
        for metric in METRIC_NAMES:
            values = [getattr(result.rows[row], metric) for result in results]
            cells[row][metric] = (statistics.fmean(values), statistics.stdev(values))
    return cells


def run_repeated(
    config: AblationConfig,
    n_runs: int = 3,
    base_seed: int = 0,
    llm: LlmBackend | None = None,
) -> RepeatedResult:
    """Run the ablation on n_runs freshly seeded logs and report mean±std cells."""
    if n_runs < 2:
        raise EvalError("n_runs must be >= 2")
    results = []
    for i in range(n_runs):
        log = synth_log(
            config.profiles, config.class_priors, config.n_subjects,
            seed=base_seed + i, task=config.task,
        )
        results.append(run_ablation(log, config.strategies, llm))
    return RepeatedResult(
        task=results[0].task,
        n_runs=n_runs,
        base_seed=base_seed,
        cells=aggregate_results(results),
    )


def format_report(cells: dict[str, dict[str, tuple[float, float]]]) -> str:
    """Aligned text table of m±s cells, one row per method."""
    headers = ["method", *(name.upper() for name in METRIC_NAMES)]
    body = [
        [row, *(f"{mean:.3f}±{std:.3f}" for mean, std in (metrics[m] for m in METRIC_NAMES))]
        for row, metrics in cells.items()
    ]
    widths = [max(len(line[i]) for line in [headers, *body]) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for line in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)))
    return "\n".join(lines)
