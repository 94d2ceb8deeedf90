"""Change-point detection for daily-accuracy series and the deterioration
simulation study.

pelt_segment is an exact penalized segmentation (PELT pruning, identical
optimum to the unpruned dynamic program). The online detector feeds one
daily accuracy at a time, maintains the segmentation incrementally, and
raises a deterioration alert the first time the optimal segmentation ends
in a segment whose mean is below the previous segment's mean.

The robust (median / absolute-deviation) segment cost is used by default
for the online detector: daily accuracy is a ratio with heavy single-day
noise, and the robust cost is what makes single-digit detection times
attainable without flooding false positives. A squared-error cost is also
provided for classic mean-shift segmentation of offline series.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InsufficientData, InvalidInput

logger = logging.getLogger(__name__)

try:  # optional compiled fast path for the simulation study
    import numba

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False

DEFAULT_PENALTY = 0.102
DEFAULT_MIN_HISTORY = 100
DEFAULT_CONFIRM_SIGMA = 6.0


def _seg_cost_l1(x: np.ndarray, s: int, t: int) -> float:
    seg = x[s:t]
    return float(np.abs(seg - np.median(seg)).sum())


class _L2Cost:
    """O(1) squared-deviation segment cost via prefix sums."""

    def __init__(self, x: np.ndarray):
        self.c1 = np.concatenate([[0.0], np.cumsum(x)])
        self.c2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def __call__(self, x, s: int, t: int) -> float:
        n = t - s
        sm = self.c1[t] - self.c1[s]
        return float(self.c2[t] - self.c2[s] - sm * sm / n)


@dataclass(frozen=True)
class ChangePointResult:
    change_points: tuple[int, ...]
    segment_means: tuple[float, ...]
    total_cost: float


def _backtrack(last: Sequence[int], n: int) -> list[int]:
    cps = []
    t = n
    while t > 0:
        s = last[t]
        if s > 0:
            cps.append(s)
        t = s
    return cps[::-1]


def pelt_segment(
    series: Sequence[float],
    penalty: float = DEFAULT_PENALTY,
    min_segment: int = 2,
    cost: str = "l2",
) -> ChangePointResult:
    """Exact penalized segmentation of a series into mean-homogeneous segments.

    Minimizes sum(segment cost) + penalty * (#change points). PELT pruning
    is admissible because both costs are subadditive under concatenation,
    so the result equals the unpruned dynamic program.
    """
    x = np.asarray(list(series), dtype=float)
    n = len(x)
    if penalty < 0:
        raise InvalidInput(f"penalty must be >= 0, got {penalty}")
    if min_segment < 1:
        raise InvalidInput(f"min_segment must be >= 1, got {min_segment}")
    if n < 2 * min_segment:
        raise InsufficientData(f"series of length {n} < 2 * min_segment = {2 * min_segment}")
    if cost == "l1":
        seg_cost = _seg_cost_l1
    elif cost == "l2":
        seg_cost = _L2Cost(x)
    else:
        raise InvalidInput(f"unknown cost {cost!r}")

    F = np.full(n + 1, np.inf)
    F[0] = 0.0
    last = np.zeros(n + 1, dtype=int)
    cands = [0]
    # a candidate failing the prune test at time t is only dominated for end
    # points >= t + min_segment, so its removal is delayed by min_segment - 1
    fail_at: dict[int, int] = {}
    for t in range(min_segment, n + 1):
        cands = [s for s in cands if fail_at.get(s, t) + min_segment > t]
        best, barg = np.inf, 0
        costs = {}
        for s in cands:
            if t - s < min_segment or not np.isfinite(F[s]):
                continue
            c = seg_cost(x, s, t)
            costs[s] = c
            val = F[s] + c + penalty
            if val < best:
                best, barg = val, s
        F[t] = best
        last[t] = barg
        for s in cands:
            if s not in fail_at and (s not in costs or F[s] + costs[s] > best):
                fail_at[s] = t
        cands.append(t - min_segment + 1)

    cps = _backtrack(last, n)
    bounds = [0] + cps + [n]
    means = tuple(float(x[a:b].mean()) for a, b in zip(bounds, bounds[1:]))
    seg_costs = sum(
        (_seg_cost_l1(x, a, b) if cost == "l1" else seg_cost(x, a, b))
        for a, b in zip(bounds, bounds[1:])
    )
    return ChangePointResult(
        change_points=tuple(int(c) for c in cps),
        segment_means=means,
        total_cost=float(seg_costs + penalty * len(cps)),
    )


@dataclass(frozen=True)
class Alert:
    day: int
    boundary: int
    pre_mean: float
    post_mean: float

    def to_json(self) -> str:
        return json.dumps(
            {"day": self.day, "boundary": self.boundary,
             "pre_mean": self.pre_mean, "post_mean": self.post_mean}
        )


class OnlineDetector:
    """Day-by-day deterioration detector over a daily-accuracy stream.

    Maintains the exact penalized segmentation incrementally (one dynamic-
    program step per appended day, with PELT pruning). From day
    min_history + 1 onward, an alert is raised the first time the optimal
    segmentation ends in a trailing segment whose mean is below the
    preceding segment's mean. A trailing segment consisting of a single
    day must additionally sit confirm_sigma standard deviations below the
    preceding segment to fire, which filters one-day outliers that a
    single-point segment could otherwise always absorb.
    """

    def __init__(
        self,
        penalty: float = DEFAULT_PENALTY,
        min_segment: int = 1,
        min_history: int = DEFAULT_MIN_HISTORY,
        confirm_sigma: float = DEFAULT_CONFIRM_SIGMA,
    ):
        if min_history < 2 * min_segment:
            raise InvalidInput("min_history must be >= 2 * min_segment")
        self.penalty = penalty
        self.min_segment = min_segment
        self.min_history = min_history
        self.confirm_sigma = confirm_sigma
        self.reset()

    def reset(self) -> None:
        self.x: list[float] = []
        self._F: list[float] = [0.0]
        self._last: list[int] = [0]
        self._cands: list[int] = [0]
        self._fail_at: dict[int, int] = {}
        self.alert: Optional[Alert] = None

    @property
    def n_days(self) -> int:
        return len(self.x)

    def append(self, value: float) -> Optional[Alert]:
        """Feed one daily accuracy; returns the alert the day it first fires."""
        self.x.append(float(value))
        t = len(self.x)
        if t < self.min_segment:
            self._F.append(np.inf)
            self._last.append(0)
            return None
        xa = np.asarray(self.x)
        self._cands = [
            s for s in self._cands if self._fail_at.get(s, t) + self.min_segment > t
        ]
        best, barg = np.inf, 0
        costs = {}
        for s in self._cands:
            if t - s < self.min_segment or not np.isfinite(self._F[s]):
                continue
            c = _seg_cost_l1(xa, s, t)
            costs[s] = c
            val = self._F[s] + c + self.penalty
            if val < best:
                best, barg = val, s
        self._F.append(best)
        self._last.append(barg)
        for s in self._cands:
            if s not in self._fail_at and (s not in costs or self._F[s] + costs[s] > best):
                self._fail_at[s] = t
        self._cands.append(t - self.min_segment + 1)

        if self.alert is not None or t <= self.min_history:
            return None
        cps = _backtrack(self._last, t)
        if not cps:
            return None
        b = cps[-1]
        prev_start = cps[-2] if len(cps) > 1 else 0
        tail = float(xa[b:t].mean())
        prev = float(xa[prev_start:b].mean())
        if tail >= prev:
            return None
        if t - b == 1:
            sigma = float(xa[prev_start:b].std())
            if prev - tail < self.confirm_sigma * sigma:
                return None
        self.alert = Alert(day=t, boundary=b, pre_mean=prev, post_mean=tail)
        return self.alert


def online_detect(
    stream: Iterable[float],
    penalty: float = DEFAULT_PENALTY,
    min_history: int = DEFAULT_MIN_HISTORY,
    **kwargs,
) -> Optional[Alert]:
    """Run the online detector over a finite stream; first alert or None."""
    det = OnlineDetector(penalty=penalty, min_history=min_history, **kwargs)
    for v in stream:
        alert = det.append(v)
        if alert is not None:
            return alert
    return None


# --- simulation study -------------------------------------------------------


@dataclass(frozen=True)
class DriftSimConfig:
    n_days_before: int = 100
    n_days_after: int = 100
    base_mean: float = 0.85
    base_std: float = 0.025
    drop_points: float = 0.10
    mode: str = "sudden"  # "sudden" | "gradual"
    repetitions: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("sudden", "gradual"):
            raise ValueError(f"bad mode {self.mode!r}")
        if min(self.n_days_before, self.n_days_after, self.repetitions) <= 0:
            raise ValueError("day counts and repetitions must be positive")
        if self.base_std <= 0 or not (0.0 <= self.drop_points < self.base_mean):
            raise ValueError("need base_std > 0 and 0 <= drop_points < base_mean")


@dataclass(frozen=True)
class DetectionOutcome:
    detected: bool
    detection_time: Optional[int] = None
    mean_accuracy_at_detection: Optional[float] = None

    def __post_init__(self):
        if self.detected != (self.detection_time is not None):
            raise ValueError("detection_time present iff detected")


def scheduled_mean(config: DriftSimConfig, day: int) -> float:
    """Injected mean accuracy on a 1-based day of the simulated series."""
    if day <= config.n_days_before or config.drop_points == 0.0:
        return config.base_mean
    if config.mode == "sudden":
        return config.base_mean - config.drop_points
    i = day - config.n_days_before
    return config.base_mean - config.drop_points * i / config.n_days_after


def simulate_series(config: DriftSimConfig, rep_index: int) -> np.ndarray:
    """One simulated daily-accuracy series, deterministic per (seed, rep_index)."""
    rng = np.random.default_rng((config.seed, rep_index))
    n = config.n_days_before + config.n_days_after
    means = np.array([scheduled_mean(config, d) for d in range(1, n + 1)])
    return np.clip(rng.normal(means, config.base_std), 0.0, 1.0)


def _detect_pure(series, penalty, min_segment, min_history, confirm_sigma) -> int:
    det = OnlineDetector(penalty=penalty, min_segment=min_segment,
                         min_history=min_history, confirm_sigma=confirm_sigma)
    for v in series:
        alert = det.append(v)
        if alert is not None:
            return alert.day
    return 0


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _detect_fast(x, penalty, min_segment, min_history, confirm_sigma):  # pragma: no cover
        n = x.shape[0]
        F = np.empty(n + 1)
        F[0] = 0.0
        last = np.zeros(n + 1, dtype=np.int64)
        cands = np.zeros(n + 2, dtype=np.int64)
        n_cands = 1
        costs = np.empty(n + 2)
        for t in range(1, n + 1):
            if t < min_segment:
                F[t] = np.inf
                continue
            best = np.inf
            barg = 0
            for ci in range(n_cands):
                s = cands[ci]
                if t - s < min_segment or not np.isfinite(F[s]):
                    costs[ci] = np.nan
                    continue
                seg = np.sort(x[s:t].copy())
                m = seg.shape[0]
                med = seg[m // 2] if m % 2 == 1 else 0.5 * (seg[m // 2 - 1] + seg[m // 2])
                c = 0.0
                for j in range(m):
                    c += abs(seg[j] - med)
                costs[ci] = c
                val = F[s] + c + penalty
                if val < best:
                    best = val
                    barg = s
            F[t] = best
            last[t] = barg
            k = 0
            for ci in range(n_cands):
                if not np.isnan(costs[ci]) and F[cands[ci]] + costs[ci] <= best:
                    cands[k] = cands[ci]
                    k += 1
            cands[k] = t - min_segment + 1
            n_cands = k + 1

            if t <= min_history:
                continue
            # backtrack the trailing two boundaries only
            b = last[t]
            if b == 0:
                continue
            prev_start = last[b]
            tail = 0.0
            for j in range(b, t):
                tail += x[j]
            tail /= t - b
            prev = 0.0
            for j in range(prev_start, b):
                prev += x[j]
            prev /= b - prev_start
            if tail >= prev:
                continue
            if t - b == 1:
                var = 0.0
                for j in range(prev_start, b):
                    var += (x[j] - prev) ** 2
                sigma = np.sqrt(var / (b - prev_start))
                if prev - tail < confirm_sigma * sigma:
                    continue
            return t
        return 0


def _detect(series, penalty, min_segment, min_history, confirm_sigma, use_fast) -> int:
    if use_fast and _HAVE_NUMBA:
        return int(_detect_fast(np.asarray(series, dtype=float), penalty,
                                min_segment, min_history, confirm_sigma))
    return _detect_pure(series, penalty, min_segment, min_history, confirm_sigma)


@dataclass(frozen=True)
class CellStats:
    mode: str
    drop_points: float
    repetitions: int
    detection_rate: float
    min_time: Optional[int]
    avg_time: Optional[float]
    max_time: Optional[int]
    std_time: Optional[float]
    min_mean_accuracy_at_detection: Optional[float]


def run_cell(
    config: DriftSimConfig,
    penalty: float = DEFAULT_PENALTY,
    min_segment: int = 1,
    confirm_sigma: float = DEFAULT_CONFIRM_SIGMA,
    use_fast: bool = True,
) -> CellStats:
    """Detection-time statistics for one (mode, drop) cell."""
    times = []
    accs = []
    for rep in range(config.repetitions):
        series = simulate_series(config, rep)
        day = _detect(series, penalty, min_segment, config.n_days_before, confirm_sigma, use_fast)
        if day > 0:
            dt = day - config.n_days_before
            times.append(dt)
            accs.append(scheduled_mean(config, day))
    rate = len(times) / config.repetitions
    if not times:
        return CellStats(config.mode, config.drop_points, config.repetitions,
                         0.0, None, None, None, None, None)
    arr = np.asarray(times, dtype=float)
    return CellStats(
        mode=config.mode,
        drop_points=config.drop_points,
        repetitions=config.repetitions,
        detection_rate=rate,
        min_time=int(arr.min()),
        avg_time=float(arr.mean()),
        max_time=int(arr.max()),
        std_time=float(arr.std()),
        min_mean_accuracy_at_detection=float(min(accs)),
    )


def run_simulation_study(
    drops: Sequence[float] = (0.05, 0.10, 0.15, 0.20),
    modes: Sequence[str] = ("sudden", "gradual"),
    repetitions: int = 1000,
    seed: int = 0,
    penalty: float = DEFAULT_PENALTY,
    confirm_sigma: float = DEFAULT_CONFIRM_SIGMA,
    use_fast: bool = True,
) -> list[CellStats]:
    """Full sudden/gradual study: every (mode, drop) cell at the given rep count."""
    cells = []
    for mode in modes:
        for drop in drops:
            cfg = DriftSimConfig(drop_points=drop, mode=mode,
                                 repetitions=repetitions, seed=seed)
            cell = run_cell(cfg, penalty=penalty, confirm_sigma=confirm_sigma, use_fast=use_fast)
            logger.info("cell %s %dpt: rate=%.3f avg=%s", mode, round(drop * 100),
                        cell.detection_rate, cell.avg_time)
            cells.append(cell)
    return cells


def write_study_csv(path, cells: Sequence[CellStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "deterioration", "detection_rate", "min", "avg", "max",
                         "stddev", "min_mean_accuracy_at_detection"])
        for c in cells:
            writer.writerow([
                c.mode, f"{round(c.drop_points * 100)}-point", f"{c.detection_rate:.4f}",
                c.min_time, None if c.avg_time is None else f"{c.avg_time:.2f}",
                c.max_time, None if c.std_time is None else f"{c.std_time:.2f}",
                "" if c.mode == "sudden" or c.min_mean_accuracy_at_detection is None
                else f"{c.min_mean_accuracy_at_detection:.4f}",
            ])
