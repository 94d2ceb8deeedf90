"""Synthetic corpus generators for evaluation studies and desk tests.

All generators are deterministic in their seed and produce closed reports
with well-defined ground truth, so studies over them are reproducible.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from .corpus import IssueReport, add_months

_FILLERS = [
    "screen", "button", "error", "message", "user", "system", "page", "click",
    "value", "field", "report", "window", "process", "request", "data", "record",
]


def _word(rng: np.random.Generator) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return "".join(rng.choice(list(letters), size=8))


def _timestamp(month: str, day_frac: float) -> datetime:
    y, m = (int(p) for p in month.split("-"))
    base = datetime(y, m, 1, tzinfo=timezone.utc)
    return base + timedelta(days=27 * day_frac, hours=3)


def _make_report(rid, tokens, month, day_frac, team, solution_days=2.0):
    opened = _timestamp(month, day_frac)
    return IssueReport(
        id=rid,
        summary=" ".join(tokens[:4]),
        description=" ".join(tokens[4:]),
        opened_at=opened,
        closed_at=opened + timedelta(days=solution_days),
        initial_team=team,
        closing_team=team,
        status="closed",
    )


def keyword_corpus(
    n_docs: int = 600,
    n_classes: int = 6,
    start_month: str = "2017-01",
    seed: int = 0,
) -> list[IssueReport]:
    """Reports whose class is signalled by exclusive per-class keywords.

    Each document carries 3 keywords drawn from its class's exclusive
    8-keyword pool plus 5 shared filler words, making the classes cleanly
    separable but non-trivial. Reports are spread over a single month.
    """
    rng = np.random.default_rng(seed)
    pools = [[f"kw{chr(97 + c)}{_word(rng)}" for _ in range(8)] for c in range(n_classes)]
    reports = []
    for i in range(n_docs):
        c = i % n_classes
        kws = list(rng.choice(pools[c], size=3, replace=False))
        fillers = list(rng.choice(_FILLERS, size=5, replace=True))
        tokens = kws + fillers
        rng.shuffle(tokens)
        reports.append(
            _make_report(f"KW-{i:04d}", tokens, start_month, rng.random(), f"TEAM_{c}")
        )
    return reports


def noisy_labels(labels, noise_rate: float, n_classes: int, seed: int = 0) -> list[str]:
    """Flip a fraction of labels to a uniformly random different class."""
    rng = np.random.default_rng(seed)
    out = list(labels)
    n_flip = round(noise_rate * len(out))
    for i in rng.choice(len(out), size=n_flip, replace=False):
        current = int(out[i].rsplit("_", 1)[1])
        alt = int(rng.integers(n_classes - 1))
        out[i] = f"TEAM_{alt if alt < current else alt + 1}"
    return out


def drifting_corpus(
    n_months: int = 13,
    docs_per_month: int = 20,
    n_classes: int = 5,
    vocab_per_class: int = 24,
    rotation: float = 0.20,
    start_month: str = "2017-01",
    seed: int = 0,
) -> list[IssueReport]:
    """A corpus whose class vocabularies rotate each month.

    Every month, a `rotation` fraction of each class's active keyword set is
    replaced with fresh words, so training data ages: a model trained on a
    month at distance delta sees roughly (1 - rotation)^delta of the test
    month's class vocabulary.
    """
    rng = np.random.default_rng(seed)
    active = [[f"c{chr(97 + c)}{_word(rng)}" for _ in range(vocab_per_class)] for c in range(n_classes)]
    reports = []
    rid = 0
    month = start_month
    for _ in range(n_months):
        for _ in range(docs_per_month):
            c = int(rng.integers(n_classes))
            kws = list(rng.choice(active[c], size=3, replace=False))
            fillers = list(rng.choice(_FILLERS, size=4, replace=True))
            tokens = kws + fillers
            rng.shuffle(tokens)
            reports.append(
                _make_report(f"DR-{rid:05d}", tokens, month, rng.random(), f"TEAM_{c}")
            )
            rid += 1
        n_rotate = round(rotation * vocab_per_class)
        for c in range(n_classes):
            idx = rng.choice(vocab_per_class, size=n_rotate, replace=False)
            for j in idx:
                active[c][j] = f"c{chr(97 + c)}{_word(rng)}"
        month = add_months(month, 1)
    return reports


def spread_corpus(
    n_docs: int,
    n_classes: int = 4,
    start_month: str = "2017-01",
    n_months: int = 12,
    seed: int = 0,
    mean_solution_days: float = 2.0,
) -> list[IssueReport]:
    """Stationary keyword corpus spread uniformly over a month range."""
    rng = np.random.default_rng(seed)
    pools = [[f"kw{chr(97 + c)}{_word(rng)}" for _ in range(8)] for c in range(n_classes)]
    reports = []
    for i in range(n_docs):
        c = i % n_classes
        kws = list(rng.choice(pools[c], size=3, replace=False))
        fillers = list(rng.choice(_FILLERS, size=4, replace=True))
        tokens = kws + fillers
        rng.shuffle(tokens)
        month = add_months(start_month, int(rng.integers(n_months)))
        reports.append(
            _make_report(
                f"SP-{i:05d}", tokens, month, rng.random(), f"TEAM_{c}",
                solution_days=float(rng.exponential(mean_solution_days)),
            )
        )
    return reports
