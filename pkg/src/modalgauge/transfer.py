"""Turn accuracy records into learning targets, fit linear predictors of
fine-tuning gains, and apply them to new tasks."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

from .embed_io import TaskEmbeddings
from .errors import (
    DataError,
    DegenerateDataError,
    DuplicateRecordError,
    InsufficientDataError,
    MissingRecordError,
    PerfectZeroShotError,
    RangeError,
)
from .measures import MeasureOptions, MeasureReport, measure_suite
from .stats import CorrelationResult, RegressionFit, ols_fit, predict_with_band, spearman

TARGETS = ("gain_over_zse", "avg_ood_delta", "accuracy")

# IIMM values past these are heuristically informative on their own:
# near 1 predicts large gains, near 0 little room to learn.
IIMM_HIGH = 0.9
IIMM_LOW = 0.1


@dataclass(frozen=True)
class OutcomeRecord:
    train_task: str
    eval_task: str
    zero_shot_acc: float
    finetuned_acc: float
    model_id: str = ""

    def __post_init__(self):
        for name, v in (("zero_shot_acc", self.zero_shot_acc), ("finetuned_acc", self.finetuned_acc)):
            if not 0.0 <= v <= 1.0:
                raise RangeError(f"{name}={v} outside [0, 1]")

    @property
    def in_domain(self) -> bool:
        return self.train_task == self.eval_task


@dataclass(frozen=True)
class GainRecord:
    task: str
    gain_over_zse: float
    avg_ood_delta: float | None  # None when no OOD records exist
    n_ood: int
    finetuned_acc: float = float("nan")  # in-domain, for accuracy-target analyses
    model_id: str = ""


@dataclass(frozen=True)
class TransferPrediction:
    task: str
    measure_value: float
    predicted_gain: float
    band: tuple[float, float]
    extrapolation_flag: bool
    note: str = ""


def gain_over_zero_shot_error(zs: float, ft: float) -> float:
    """Accuracy change with fine-tuning scaled by the zero-shot error."""
    if not 0.0 <= zs <= 1.0 or not 0.0 <= ft <= 1.0:
        raise RangeError(f"accuracies must lie in [0, 1]: zs={zs}, ft={ft}")
    if zs == 1.0:
        raise PerfectZeroShotError("zero-shot accuracy is 1: no error left to close")
    return (ft - zs) / (1.0 - zs)


def build_gain_table(records: list[OutcomeRecord]) -> list[GainRecord]:
    """One GainRecord per train task: in-domain gain plus mean signed OOD change."""
    seen: set[tuple[str, str, str]] = set()
    by_train: dict[str, list[OutcomeRecord]] = {}
    for rec in records:
        key = (rec.model_id, rec.train_task, rec.eval_task)
        if key in seen:
            raise DuplicateRecordError(f"duplicate record for {key}")
        seen.add(key)
        by_train.setdefault(rec.train_task, []).append(rec)

    out: list[GainRecord] = []
    for train_task in sorted(by_train):
        recs = by_train[train_task]
        in_domain = [r for r in recs if r.in_domain]
        if len(in_domain) != 1:
            raise MissingRecordError(
                f"train task {train_task!r} needs exactly one in-domain record, "
                f"found {len(in_domain)}"
            )
        idr = in_domain[0]
        ood = [r for r in recs if not r.in_domain]
        deltas = [r.finetuned_acc - r.zero_shot_acc for r in ood]
        out.append(
            GainRecord(
                task=train_task,
                gain_over_zse=gain_over_zero_shot_error(idr.zero_shot_acc, idr.finetuned_acc),
                avg_ood_delta=sum(deltas) / len(deltas) if deltas else None,
                n_ood=len(ood),
                finetuned_acc=idr.finetuned_acc,
                model_id=idr.model_id,
            )
        )
    return out


def _target_value(g: GainRecord, target: str) -> float | None:
    if target == "gain_over_zse":
        return g.gain_over_zse
    if target == "avg_ood_delta":
        return g.avg_ood_delta
    if target == "accuracy":
        return g.finetuned_acc
    raise DataError(f"unknown target {target!r}; expected one of {TARGETS}")


def _join(
    measures: list[MeasureReport],
    gains: list[GainRecord],
    measure_name: str,
    target: str,
) -> tuple[list[str], list[float], list[float]]:
    gain_by_task = {g.task: g for g in gains}
    tasks, xs, ys = [], [], []
    unmatched = []
    for rep in measures:
        if rep.task_id not in gain_by_task:
            unmatched.append(rep.task_id)
            continue
        if measure_name not in rep.values:
            continue
        y = _target_value(gain_by_task[rep.task_id], target)
        if y is None:
            continue
        tasks.append(rep.task_id)
        xs.append(rep.values[measure_name])
        ys.append(y)
    if unmatched:
        warnings.warn(f"tasks with measures but no outcomes: {unmatched}")
    missing = sorted(set(gain_by_task) - {r.task_id for r in measures})
    if missing:
        warnings.warn(f"tasks with outcomes but no measures: {missing}")
    return tasks, xs, ys


def fit_transfer_model(
    measures: list[MeasureReport],
    gains: list[GainRecord],
    measure_name: str,
    target: str = "gain_over_zse",
    confidence_level: float = 0.96,
) -> RegressionFit:
    """OLS fit of the chosen target on one measure, joined on task id."""
    _, xs, ys = _join(measures, gains, measure_name, target)
    if len(xs) < 3:
        raise InsufficientDataError(
            f"only {len(xs)} tasks matched between measures and outcomes; need >= 3"
        )
    return ols_fit(xs, ys, confidence_level=confidence_level, measure_name=measure_name)


def predict_transfer(fit: RegressionFit, t: TaskEmbeddings,
                     options: MeasureOptions | None = None) -> TransferPrediction:
    """Compute the fit's measure on a task and predict its target with a band."""
    report = measure_suite(t, [fit.measure_name], options)
    if fit.measure_name not in report.values:
        err = report.metadata.get("errors", {}).get(fit.measure_name, "measure failed")
        raise DataError(f"cannot compute {fit.measure_name!r} on task {t.task_id!r}: {err}")
    x0 = report.values[fit.measure_name]
    y_hat, lower, upper, extrapolation = predict_with_band(fit, x0)
    note = ""
    if fit.measure_name == "iimm":
        if x0 >= IIMM_HIGH:
            note = (
                f"iimm={x0:.3f} is near 1: densely clustered embeddings, expect "
                "large fine-tuning gains (and forgetting risk) regardless of the fit"
            )
        elif x0 <= IIMM_LOW:
            note = (
                f"iimm={x0:.3f} is near 0: embeddings already spread and aligned, "
                "expect little gain from fine-tuning regardless of the fit"
            )
    return TransferPrediction(
        task=t.task_id,
        measure_value=x0,
        predicted_gain=y_hat,
        band=(lower, upper),
        extrapolation_flag=extrapolation,
        note=note,
    )


def correlate_all(
    measures: list[MeasureReport],
    gains: list[GainRecord],
    target: str = "gain_over_zse",
) -> dict[str, "CorrelationResult | str"]:
    """Spearman correlation of every measure column with the target.

    Degenerate measures yield an error string for that row; other rows are
    unaffected.
    """
    names: list[str] = []
    for rep in measures:
        for name in rep.values:
            if name not in names:
                names.append(name)
    if not names:
        raise DataError("no measure values present")
    out: dict[str, CorrelationResult | str] = {}
    n_matched = None
    for name in names:
        _, xs, ys = _join(measures, gains, name, target)
        n_matched = len(xs)
        if len(xs) < 3:
            raise InsufficientDataError(
                f"only {len(xs)} tasks matched for measure {name!r}; need >= 3"
            )
        try:
            out[name] = spearman(xs, ys)
        except DegenerateDataError as exc:
            out[name] = f"DegenerateDataError: {exc}"
    assert n_matched is not None
    return out


# --- CSV wire formats ---

def read_outcomes_csv(path: str | Path) -> list[OutcomeRecord]:
    """Long-format outcomes: model_id,train_task,eval_task,zero_shot_acc,finetuned_acc."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"model_id", "train_task", "eval_task", "zero_shot_acc", "finetuned_acc"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(
                f"{path}: outcomes CSV must have columns {sorted(required)}"
            )
        for i, row in enumerate(reader, start=2):
            try:
                records.append(
                    OutcomeRecord(
                        train_task=row["train_task"],
                        eval_task=row["eval_task"],
                        zero_shot_acc=float(row["zero_shot_acc"]),
                        finetuned_acc=float(row["finetuned_acc"]),
                        model_id=row["model_id"],
                    )
                )
            except (ValueError, RangeError) as exc:
                raise DataError(f"{path}: row {i}: {exc}") from exc
    return records


def read_measures_csv(path: str | Path) -> list[MeasureReport]:
    """Wide-format measures: model_id,task,<one column per measure>."""
    reports = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"model_id", "task"} <= set(reader.fieldnames):
            raise DataError(f"{path}: measures CSV must have model_id and task columns")
        value_cols = [c for c in reader.fieldnames if c not in ("model_id", "task")]
        for i, row in enumerate(reader, start=2):
            values = {}
            for col in value_cols:
                cell = (row[col] or "").strip()
                if not cell:
                    continue
                try:
                    values[col] = float(cell)
                except ValueError as exc:
                    raise DataError(f"{path}: row {i}, column {col!r}: {exc}") from exc
            reports.append(
                MeasureReport(task_id=row["task"], model_id=row["model_id"], values=values)
            )
    return reports


def write_measures_csv(path: str | Path, reports: list[MeasureReport]) -> None:
    names: list[str] = []
    for rep in reports:
        for name in rep.values:
            if name not in names:
                names.append(name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "task"] + names)
        for rep in reports:
            writer.writerow(
                [rep.model_id, rep.task_id]
                + [repr(rep.values[n]) if n in rep.values else "" for n in names]
            )
