"""Local, model-agnostic explanations for single assignments.

An explanation is K signed term weights fitted by a proximity-weighted ridge
regression on binary term-presence features: each perturbed sample keeps a
random subset of the report's distinct terms, is scored by the model, and is
weighted by exp(-d^2 / sigma^2) with d the cosine distance between binary
presence vectors. Reports with <= 12 distinct terms enumerate every subset
exactly, which makes small desk tests deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from . import textpipe
from .classify import EnsembleModel, TrainedModel, predict_proba_matrix, predict_proba_ensemble
from .corpus import IssueReport
from .errors import NothingToExplain, Unsupported

EXACT_ENUMERATION_LIMIT = 12


@dataclass(frozen=True)
class ExplainerConfig:
    K: int = 6
    n_samples: int = 1000
    kernel_width: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.n_samples < 1 or self.kernel_width <= 0:
            raise ValueError("K, n_samples and kernel_width must all be positive")


@dataclass(frozen=True)
class Explanation:
    report_id: str
    predicted_team: str
    terms: tuple[tuple[str, float], ...]
    sample_count: int
    local_fit_score: float

    def to_json_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "team": self.predicted_team,
            "terms": [{"term": t, "weight": w} for t, w in self.terms],
            "fit": self.local_fit_score,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    def render_text(self, width: int = 30) -> str:
        """Plain-text signed bar chart, one term per line."""
        lines = [f"{self.report_id} -> {self.predicted_team}  (fit {self.local_fit_score:.3f})"]
        peak = max((abs(w) for _, w in self.terms), default=1.0) or 1.0
        for term, w in self.terms:
            bar = "#" * max(1, round(abs(w) / peak * width))
            side = bar.rjust(width) + "|" + " " * width if w < 0 else " " * width + "|" + bar.ljust(width)
            lines.append(f"{term:>20} {side} {w:+.3f}")
        return "\n".join(lines)


def _distinct_terms(tokens: Sequence[str]) -> list[str]:
    seen: dict[str, None] = {}
    for t in tokens:
        seen.setdefault(t)
    return list(seen)


def sample_perturbations(
    tokens: Sequence[str], n_samples: int, seed: int, kernel_width: float = 25.0
) -> tuple[np.ndarray, np.ndarray]:
    """Binary masks over the distinct terms plus their proximity weights.

    Row 0 is always the full term set. For m <= 12 distinct terms, all 2^m
    subsets are enumerated instead of sampled.
    """
    terms = _distinct_terms(tokens)
    m = len(terms)
    if m == 0:
        raise NothingToExplain("report has no tokens after preprocessing")
    if m <= EXACT_ENUMERATION_LIMIT:
        masks = np.zeros((2 ** m, m), dtype=np.int8)
        masks[0] = 1
        row = 1
        for size in range(m - 1, -1, -1):
            if size == m:
                continue
            for keep in combinations(range(m), size):
                masks[row, list(keep)] = 1
                row += 1
    else:
        rng = np.random.default_rng(seed)
        masks = (rng.random((n_samples, m)) < 0.5).astype(np.int8)
        masks[0] = 1
    sizes = masks.sum(axis=1)
    # cosine distance between a size-s subset and the full size-m set is 1 - sqrt(s/m)
    distances = 1.0 - np.sqrt(sizes / m)
    proximity = np.exp(-(distances ** 2) / kernel_width ** 2)
    return masks, proximity


def _proba_fn(model) -> tuple[Callable, tuple[str, ...]]:
    if isinstance(model, EnsembleModel):
        return (lambda X: predict_proba_ensemble(model, X)), model.classes
    if isinstance(model, TrainedModel):
        return (lambda X: predict_proba_matrix(model, X)), model.classes
    if hasattr(model, "predict_proba_matrix") and hasattr(model, "classes"):
        return model.predict_proba_matrix, tuple(model.classes)
    raise Unsupported(f"cannot explain {type(model).__name__}")


def _weighted_ridge(masks, proximity, targets, lam: float = 1.0) -> np.ndarray:
    """Closed-form ridge on binary features with an unpenalized intercept column."""
    Z = np.column_stack([np.ones(len(masks)), masks.astype(float)])
    W = proximity
    A = Z.T @ (Z * W[:, None])
    reg = lam * np.eye(Z.shape[1])
    reg[0, 0] = 0.0
    beta = np.linalg.solve(A + reg, Z.T @ (targets * W))
    return beta


def _explain_class(report_id, tokens, model, config, class_index) -> Explanation:
    proba_fn, classes = _proba_fn(model)
    terms = _distinct_terms(tokens)
    vocab = model.vocab
    masks, proximity = sample_perturbations(
        tokens, config.n_samples, config.seed, config.kernel_width
    )
    vectors = [
        textpipe.vectorize([t for t, keep in zip(terms, mask) if keep], vocab)
        for mask in masks
    ]
    targets = proba_fn(vectors)[:, class_index]
    # when all subsets are enumerated, weight each as its expected multiplicity
    # under n_samples uniform draws, so ridge shrinkage matches the sampled path
    proximity = proximity * (config.n_samples / len(masks))
    beta = _weighted_ridge(masks, proximity, targets)
    coefs = beta[1:]
    order = np.argsort(-np.abs(coefs), kind="stable")
    kept = order[: min(config.K, len(terms))]

    # weighted R^2 of the K-term refit measures local fidelity
    keep_mask = np.zeros(len(terms), dtype=bool)
    keep_mask[kept] = True
    beta_k = _weighted_ridge(masks[:, keep_mask], proximity, targets)
    fitted = beta_k[0] + masks[:, keep_mask].astype(float) @ beta_k[1:]
    w = proximity
    resid = float(np.sum(w * (targets - fitted) ** 2))
    total = float(np.sum(w * (targets - np.average(targets, weights=w)) ** 2))
    fit = 1.0 if total == 0 else 1.0 - resid / total
    fit = float(min(1.0, max(0.0, fit)))

    return Explanation(
        report_id=report_id,
        predicted_team=classes[class_index],
        terms=tuple((terms[i], float(coefs[i])) for i in kept),
        sample_count=len(masks),
        local_fit_score=fit,
    )


def _prep(report: IssueReport | str, model):
    if isinstance(report, IssueReport):
        report_id, tokens = report.id, textpipe.preprocess(report)
    else:
        report_id, tokens = "adhoc", textpipe.tokenize(report)
    if not tokens:
        raise NothingToExplain("report has no tokens after preprocessing")
    proba_fn, classes = _proba_fn(model)
    full = textpipe.vectorize(tokens, model.vocab)
    proba = proba_fn([full])[0]
    return report_id, tokens, proba


def explain(report: IssueReport | str, model, config: ExplainerConfig = ExplainerConfig()) -> Explanation:
    """Explain the model's top assignment for one report."""
    report_id, tokens, proba = _prep(report, model)
    return _explain_class(report_id, tokens, model, config, int(np.argmax(proba)))


def explain_top2(
    report: IssueReport | str, model, config: ExplainerConfig = ExplainerConfig()
) -> tuple[Explanation, Explanation]:
    """Explanations for the best class and the runner-up; ties go to lower index."""
    report_id, tokens, proba = _prep(report, model)
    if len(proba) < 2:
        raise Unsupported("model emits fewer than 2 classes")
    order = np.argsort(-proba, kind="stable")
    return (
        _explain_class(report_id, tokens, model, config, int(order[0])),
        _explain_class(report_id, tokens, model, config, int(order[1])),
    )
