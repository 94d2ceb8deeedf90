"""Evaluation harness: metrics, stratified k-fold CV, and the three
time-based protocols (sliding window, cumulative window, daily accuracy),
plus solution-time and effort reports.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import classify, textpipe
from .classify import ClassifierKind, EnsembleMode, TrainConfig
from .corpus import IssueReport, add_months, ground_truth, month_of, month_slice, months_between
from .errors import (
    EmptyEvaluation,
    EmptyStudy,
    InsufficientData,
    InvalidInput,
    OneSidedData,
    ShapeError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: dict[str, ClassMetrics]
    training_time: float = 0.0


def compute_metrics(
    y_true: Sequence[str],
    y_pred: Sequence[str],
    class_set: Optional[Iterable[str]] = None,
    training_time: float = 0.0,
) -> MetricsReport:
    """Accuracy plus support-weighted precision/recall/F1 over true-class support."""
    if len(y_true) != len(y_pred):
        raise ShapeError(f"|y_true| = {len(y_true)} != |y_pred| = {len(y_pred)}")
    if len(y_true) == 0:
        raise EmptyEvaluation("no prediction pairs to score")
    y_true = list(y_true)
    y_pred = list(y_pred)
    classes = sorted(set(class_set) if class_set is not None else set(y_true) | set(y_pred))
    n = len(y_true)
    accuracy = sum(t == p for t, p in zip(y_true, y_pred)) / n

    per_class: dict[str, ClassMetrics] = {}
    for c in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = ClassMetrics(precision, recall, f1, support)

    total = sum(m.support for m in per_class.values())
    w = lambda attr: sum(getattr(m, attr) * m.support for m in per_class.values()) / total
    return MetricsReport(
        accuracy=accuracy,
        weighted_precision=w("precision"),
        weighted_recall=w("recall"),
        weighted_f1=w("f1"),
        per_class=per_class,
        training_time=training_time,
    )


@dataclass(frozen=True)
class CVResult:
    mean: float
    std: float
    fold_accuracies: tuple[float, ...]
    excluded_classes: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.mean:.2f} (+/- {self.std:.2f})"


def _fit_predict(kind_or_ensemble, X_tr, y_tr, X_te, config, vocab=None):
    if isinstance(kind_or_ensemble, tuple):
        mode, k, kinds = kind_or_ensemble
        model = classify.fit_stacked(mode, k, kinds, X_tr, y_tr, config=config, vocab=vocab)
        return classify.predict_ensemble(model, list(X_te))
    model = classify.fit(ClassifierKind(kind_or_ensemble), X_tr, y_tr, config=config, vocab=vocab)
    return classify.predict(model, list(X_te))


def kfold_cv(
    kind_or_ensemble,
    X: Sequence[textpipe.SparseVector],
    y: Sequence[str],
    k_folds: int = 10,
    config: TrainConfig = TrainConfig(),
) -> CVResult:
    """Stratified k-fold CV accuracy; classes with < k_folds members are excluded."""
    if len(X) != len(y):
        raise ShapeError(f"|X| = {len(X)} != |y| = {len(y)}")
    if len(X) < k_folds:
        raise InsufficientData(f"need >= {k_folds} samples, got {len(X)}")
    y_arr = np.asarray(list(y))
    labels, counts = np.unique(y_arr, return_counts=True)
    excluded = tuple(sorted(labels[counts < k_folds]))
    if excluded:
        logger.warning("excluding classes with < %d members from CV: %s", k_folds, excluded)
    keep = ~np.isin(y_arr, excluded)
    X_kept = [x for x, k_ in zip(X, keep) if k_]
    y_kept = y_arr[keep]
    if len(X_kept) < k_folds or len(set(y_kept)) < 2:
        raise InsufficientData("too few samples remain after class exclusion")

    skf = StratifiedKFold(n_splits=k_folds, shuffle=True, random_state=config.seed)
    accs = []
    for train_idx, test_idx in skf.split(np.zeros(len(X_kept)), y_kept):
        preds = _fit_predict(
            kind_or_ensemble,
            [X_kept[i] for i in train_idx],
            y_kept[train_idx],
            [X_kept[i] for i in test_idx],
            config,
        )
        accs.append(float(np.mean(np.asarray(preds) == y_kept[test_idx])))
    accs_arr = np.asarray(accs)
    return CVResult(
        mean=float(accs_arr.mean()),
        std=float(accs_arr.std()),
        fold_accuracies=tuple(accs),
        excluded_classes=excluded,
    )


@dataclass(frozen=True)
class WindowResult:
    test_month: str
    delta: int
    protocol: str  # "sliding" | "cumulative"
    accuracy: float
    n_train: int = 0
    n_test: int = 0


def _closed_in_months(reports, start_month, end_month):
    return [r for r in month_slice(reports, start_month, end_month).reports if r.status == "closed"]


def _train_test_cell(train_reports, test_reports, kind, config):
    """Train on one slice, test on another; vocabulary rebuilt from the training set."""
    docs = [textpipe.preprocess(r) for r in train_reports]
    vocab = textpipe.build_vocabulary(docs)
    X_tr = [textpipe.vectorize(d, vocab) for d in docs]
    y_tr = [ground_truth(r) for r in train_reports]
    if len(set(y_tr)) < 2:
        return None
    model = classify.fit(ClassifierKind(kind), X_tr, y_tr, config=config, vocab=vocab)
    X_te = [textpipe.vectorize(textpipe.preprocess(r), vocab) for r in test_reports]
    y_te = [ground_truth(r) for r in test_reports]
    preds = classify.predict(model, X_te)
    return float(np.mean(np.asarray(preds) == np.asarray(y_te)))


def _window_study(reports, protocol, kind, max_delta, config):
    reports = [r for r in reports if r.status == "closed"]
    months = sorted({month_of(r.opened_at) for r in reports})
    if len(months) < 2:
        raise EmptyStudy("corpus must span at least two calendar months")
    all_months = months_between(months[0], months[-1])
    results: list[WindowResult] = []
    for i, test_month in enumerate(all_months):
        test_reports = _closed_in_months(reports, test_month, test_month)
        if not test_reports:
            continue
        for delta in range(1, min(i, max_delta) + 1):
            if protocol == "sliding":
                start = end = add_months(test_month, -delta)
            else:
                start, end = add_months(test_month, -delta), add_months(test_month, -1)
            train_reports = _closed_in_months(reports, start, end)
            if not train_reports:
                continue
            acc = _train_test_cell(train_reports, test_reports, kind, config)
            if acc is None:
                continue
            results.append(
                WindowResult(test_month, delta, protocol, acc,
                             n_train=len(train_reports), n_test=len(test_reports))
            )
    if not results:
        raise EmptyStudy("no feasible (test month, delta) cell")
    return results


def sliding_window_study(
    reports: Sequence[IssueReport],
    kind: ClassifierKind | str = ClassifierKind.LINEAR_SVC,
    max_delta: int = 12,
    config: TrainConfig = TrainConfig(),
) -> list[WindowResult]:
    """Train on the single month at distance delta, test on each later month."""
    return _window_study(reports, "sliding", kind, max_delta, config)


def cumulative_window_study(
    reports: Sequence[IssueReport],
    kind: ClassifierKind | str = ClassifierKind.LINEAR_SVC,
    max_delta: int = 12,
    config: TrainConfig = TrainConfig(),
) -> list[WindowResult]:
    """Train on the union of months at distances 1..delta, test on each later month."""
    return _window_study(reports, "cumulative", kind, max_delta, config)


def mean_accuracy_per_delta(results: Sequence[WindowResult]) -> dict[int, float]:
    """Plot-ready aggregate: mean accuracy over test months for each delta."""
    by_delta: dict[int, list[float]] = {}
    for r in results:
        by_delta.setdefault(r.delta, []).append(r.accuracy)
    return {d: float(np.mean(v)) for d, v in sorted(by_delta.items())}


def write_window_csv(path, results: Sequence[WindowResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["test_month", "protocol", "delta", "accuracy"])
        for r in results:
            writer.writerow([r.test_month, r.protocol, r.delta, f"{r.accuracy:.6f}"])


@dataclass(frozen=True)
class AccuracyPoint:
    day: date
    accuracy: float
    n_reports: int


@dataclass(frozen=True)
class AccuracySeries:
    points: tuple[AccuracyPoint, ...]

    def __post_init__(self):
        days = [p.day for p in self.points]
        if days != sorted(set(days)):
            raise ValueError("accuracy series days must be strictly increasing")


def daily_accuracy(entries: Iterable) -> AccuracySeries:
    """Daily assignment accuracy keyed on the UTC day a report was opened.

    Each entry needs opened_at (datetime), predicted_team and final_team.
    """
    buckets: dict[date, list[bool]] = {}
    for e in entries:
        opened_at = e.opened_at if isinstance(e.opened_at, datetime) else e.opened_at
        day = opened_at.astimezone(timezone.utc).date()
        buckets.setdefault(day, []).append(e.predicted_team == e.final_team)
    points = tuple(
        AccuracyPoint(day=d, accuracy=sum(v) / len(v), n_reports=len(v))
        for d, v in sorted(buckets.items())
    )
    return AccuracySeries(points=points)


def solution_time_report(
    reports: Sequence[IssueReport],
    deployment_date: datetime,
    window_months: int = 2,
) -> tuple[float, float]:
    """Mean solution time in days for reports opened shortly before vs after a date."""
    lo = deployment_date - timedelta(days=window_months * 30)
    hi = deployment_date + timedelta(days=window_months * 30)
    before, after = [], []
    for r in reports:
        if r.status != "closed":
            continue
        days = (r.closed_at - r.opened_at).total_seconds() / 86400.0
        if lo <= r.opened_at < deployment_date:
            before.append(days)
        elif deployment_date <= r.opened_at < hi:
            after.append(days)
    if not before or not after:
        raise OneSidedData("need closed reports on both sides of the deployment date")
    return float(np.mean(before)), float(np.mean(after))


def effort_report(n_reports_per_month: float, seconds_per_assignment: float = 30.0) -> float:
    """Person-months of triage effort saved per year (160-hour person-month)."""
    if n_reports_per_month < 0 or seconds_per_assignment <= 0:
        raise InvalidInput("report count must be >= 0 and seconds per assignment > 0")
    return n_reports_per_month * seconds_per_assignment * 12.0 / (3600.0 * 160.0)
