"""Operational layer: model artifacts, the training job, the assignment
service with feedback capture, and the HTTP API.

Assignments and feedback are persisted to an append-only JSONL event log;
replaying the same log reconstructs identical service state, which is what
makes the daily-accuracy series auditable. The in-memory model reference is
swapped atomically, so every request is served by exactly one artifact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import pickle
import tempfile
import threading
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import classify, driftmon, evalharness, explain as explainmod, textpipe
from .classify import ClassifierKind, EnsembleMode, TrainConfig
from .corpus import (
    add_months,
    filter_closed,
    format_ts,
    ground_truth,
    load_corpus,
    month_slice,
    parse_ts,
)
from .errors import (
    ArtifactFormatError,
    AssignmentImpossible,
    Conflict,
    NoTrainingData,
    NotFound,
    ServiceUnavailable,
)

logger = logging.getLogger(__name__)

ARTIFACT_MAGIC = b"ITRIAGE\x00"
ARTIFACT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelArtifact:
    """Self-contained, persistable trained model."""

    format_version: int
    descriptor: dict
    model: object  # TrainedModel | EnsembleModel
    classes: tuple[str, ...]
    training_span: Optional[tuple[str, str]]
    created_at: datetime
    corpus_fingerprint: str

    @property
    def fingerprint(self) -> str:
        blob = pickle.dumps(
            (self.descriptor, self.training_span, self.corpus_fingerprint, self.created_at)
        )
        return hashlib.sha256(blob).hexdigest()[:16]


def save_artifact(path, artifact: ModelArtifact) -> None:
    """Write the artifact atomically: temp file in the same directory, then rename."""
    path = Path(path)
    payload = pickle.dumps(artifact, protocol=pickle.HIGHEST_PROTOCOL)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(ARTIFACT_MAGIC)
            fh.write(ARTIFACT_FORMAT_VERSION.to_bytes(2, "big"))
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_artifact(path) -> ModelArtifact:
    with open(path, "rb") as fh:
        magic = fh.read(len(ARTIFACT_MAGIC))
        if magic != ARTIFACT_MAGIC:
            raise ArtifactFormatError(f"{path}: not a model artifact (bad magic)")
        version = int.from_bytes(fh.read(2), "big")
        if version != ARTIFACT_FORMAT_VERSION:
            raise ArtifactFormatError(f"{path}: unsupported format version {version}")
        try:
            artifact = pickle.load(fh)
        except Exception as exc:
            raise ArtifactFormatError(f"{path}: corrupt payload: {exc}") from exc
    if not isinstance(artifact, ModelArtifact):
        raise ArtifactFormatError(f"{path}: payload is not a model artifact")
    return artifact


def corpus_fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def train_job(
    corpus_path,
    as_of: str,
    kind: ClassifierKind | str = ClassifierKind.LINEAR_SVC,
    config: TrainConfig = TrainConfig(),
    out_path=None,
    ensemble: Optional[dict] = None,
) -> ModelArtifact:
    """Train on closed reports from the trailing 12 months before `as_of`.

    `ensemble` may be {"mode": "SELECTED"|"BEST", "k": int, "kinds": [...]}
    to train a stacked ensemble instead of a single classifier.
    """
    reports = filter_closed(load_corpus(corpus_path).reports)
    start, end = add_months(as_of, -12), add_months(as_of, -1)
    train_slice = month_slice(reports, start, end).reports
    if not train_slice:
        raise NoTrainingData(f"no closed reports opened in {start}..{end}")

    docs = [textpipe.preprocess(r) for r in train_slice]
    vocab = textpipe.build_vocabulary(docs)
    X = [textpipe.vectorize(d, vocab) for d in docs]
    y = [ground_truth(r) for r in train_slice]

    if ensemble is not None:
        model = classify.fit_stacked(
            EnsembleMode(ensemble["mode"]), int(ensemble["k"]), ensemble["kinds"],
            X, y, config=config, vocab=vocab,
        )
        descriptor = {"ensemble": {"mode": model.mode.value, "k": model.k,
                                   "kinds": [k.value for k in model.kinds]}}
        classes = model.classes
    else:
        model = classify.fit(ClassifierKind(kind), X, y, config=config,
                             vocab=vocab, training_span=(start, end))
        descriptor = {"kind": model.kind.value}
        classes = model.classes

    artifact = ModelArtifact(
        format_version=ARTIFACT_FORMAT_VERSION,
        descriptor=descriptor,
        model=model,
        classes=classes,
        training_span=(start, end),
        created_at=datetime.now(timezone.utc),
        corpus_fingerprint=corpus_fingerprint(corpus_path),
    )
    if out_path is not None:
        save_artifact(out_path, artifact)
    return artifact


@dataclass
class AssignmentRecord:
    report_id: str
    predicted_team: str
    predicted_at: datetime
    model_fingerprint: str
    opened_at: datetime
    final_team: Optional[str] = None
    closed_at: Optional[datetime] = None

    @property
    def correct(self) -> Optional[bool]:
        return None if self.final_team is None else self.predicted_team == self.final_team


class TriageService:
    """Assignment service with an append-only JSONL event log.

    Thread-safe: the model is swapped by atomic reference assignment and
    event-log appends are serialized through one lock.
    """

    def __init__(self, artifact: Optional[ModelArtifact] = None, log_path=None,
                 detector_penalty: float = driftmon.DEFAULT_PENALTY,
                 detector_min_history: int = driftmon.DEFAULT_MIN_HISTORY):
        self._artifact = artifact
        self._records: dict[str, AssignmentRecord] = {}
        self._log_path = Path(log_path) if log_path else None
        self._lock = threading.Lock()
        self.detector_penalty = detector_penalty
        self.detector_min_history = detector_min_history
        if self._log_path and self._log_path.exists():
            self._replay()

    # -- lifecycle -----------------------------------------------------------

    @property
    def artifact(self) -> Optional[ModelArtifact]:
        return self._artifact

    def swap_model(self, artifact: ModelArtifact) -> None:
        """Atomically publish a new model; in-flight requests keep the old one."""
        self._artifact = artifact

    # -- event log -----------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        if self._log_path is None:
            return
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")

    def _replay(self) -> None:
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["type"] == "assign":
                    rec = AssignmentRecord(
                        report_id=event["report_id"],
                        predicted_team=event["predicted_team"],
                        predicted_at=parse_ts(event["predicted_at"]),
                        model_fingerprint=event["model_fingerprint"],
                        opened_at=parse_ts(event["opened_at"]),
                    )
                    self._records[rec.report_id] = rec
                elif event["type"] == "feedback":
                    rec = self._records[event["report_id"]]
                    rec.final_team = event["final_team"]
                    rec.closed_at = parse_ts(event["closed_at"])
        logger.info("replayed %d assignment records from %s", len(self._records), self._log_path)

    # -- operations ----------------------------------------------------------

    def assign(
        self,
        report_id: str,
        summary: str = "",
        description: str = "",
        opened_at: Optional[datetime] = None,
        want_explanation: bool = False,
    ) -> tuple[str, Optional[explainmod.Explanation], str]:
        artifact = self._artifact
        if artifact is None:
            raise ServiceUnavailable("no model loaded")
        with self._lock:
            if report_id in self._records:
                raise Conflict(f"report {report_id!r} already assigned")
            # reserve the id inside the lock; filled in below
            self._records[report_id] = None  # type: ignore[assignment]
        try:
            tokens = textpipe.tokenize(f"{summary} {description}")
            model = artifact.model
            vec = textpipe.vectorize(tokens, model.vocab) if tokens else None
            if vec is None or vec.nnz == 0:
                raise AssignmentImpossible(
                    f"report {report_id!r} has no usable terms; refusing to guess"
                )
            if isinstance(model, classify.EnsembleModel):
                team = classify.predict_ensemble(model, vec)
            else:
                team = classify.predict(model, vec)
        except BaseException:
            with self._lock:
                self._records.pop(report_id, None)
            raise

        now = datetime.now(timezone.utc)
        record = AssignmentRecord(
            report_id=report_id,
            predicted_team=team,
            predicted_at=now,
            model_fingerprint=artifact.fingerprint,
            opened_at=opened_at or now,
        )
        with self._lock:
            self._records[report_id] = record
            self._append_event({
                "type": "assign",
                "report_id": report_id,
                "predicted_team": team,
                "predicted_at": format_ts(now),
                "model_fingerprint": artifact.fingerprint,
                "opened_at": format_ts(record.opened_at),
            })

        explanation = None
        if want_explanation:
            try:
                explanation = explainmod.explain(f"{summary} {description}", model)
            except Exception:
                logger.exception("explanation failed for %s", report_id)
        return team, explanation, artifact.fingerprint

    def feedback(self, report_id: str, final_team: str, closed_at: datetime) -> AssignmentRecord:
        with self._lock:
            record = self._records.get(report_id)
            if record is None:
                raise NotFound(f"no assignment record for {report_id!r}")
            if record.final_team is not None:
                raise Conflict(f"report {report_id!r} already closed")
            record.final_team = final_team
            record.closed_at = closed_at
            self._append_event({
                "type": "feedback",
                "report_id": report_id,
                "final_team": final_team,
                "closed_at": format_ts(closed_at),
            })
        return record

    def closed_records(self) -> list[AssignmentRecord]:
        return [r for r in self._records.values()
                if r is not None and r.final_team is not None]

    def accuracy_series(
        self, start: Optional[date] = None, end: Optional[date] = None
    ) -> evalharness.AccuracySeries:
        series = evalharness.daily_accuracy(self.closed_records())
        points = tuple(
            p for p in series.points
            if (start is None or p.day >= start) and (end is None or p.day <= end)
        )
        return evalharness.AccuracySeries(points=points)

    def drift_status(self) -> Optional[driftmon.Alert]:
        """Replay the full daily-accuracy stream through the online detector."""
        series = evalharness.daily_accuracy(self.closed_records())
        return driftmon.online_detect(
            (p.accuracy for p in series.points),
            penalty=self.detector_penalty,
            min_history=self.detector_min_history,
        )


try:  # request bodies for the HTTP API; fastapi is an optional runtime path
    from pydantic import BaseModel

    class AssignBody(BaseModel):
        report_id: str
        summary: str = ""
        description: str = ""
        opened_at: Optional[str] = None
        explain: bool = False

    class FeedbackBody(BaseModel):
        report_id: str
        final_team: str
        closed_at: str

    class RetrainBody(BaseModel):
        as_of: str

except ImportError:  # pragma: no cover
    AssignBody = FeedbackBody = RetrainBody = None


def create_app(service: TriageService, corpus_path=None, artifact_path=None,
               train_kind: ClassifierKind | str = ClassifierKind.LINEAR_SVC):
    """FastAPI application exposing the assignment service over HTTP."""
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="issuetriage")

    def _http(exc: Exception) -> HTTPException:
        code = {
            ServiceUnavailable: 503,
            AssignmentImpossible: 422,
            Conflict: 409,
            NotFound: 404,
            NoTrainingData: 422,
        }.get(type(exc), 400)
        return HTTPException(status_code=code, detail=str(exc))

    @app.post("/assign")
    def assign(body: AssignBody):
        try:
            team, expl, fingerprint = service.assign(
                body.report_id, body.summary, body.description,
                opened_at=parse_ts(body.opened_at) if body.opened_at else None,
                want_explanation=body.explain,
            )
        except Exception as exc:
            raise _http(exc) from exc
        out = {"report_id": body.report_id, "predicted_team": team,
               "model_fingerprint": fingerprint}
        if expl is not None:
            out["explanation"] = expl.to_json_dict()
        return out

    @app.post("/feedback")
    def feedback(body: FeedbackBody):
        try:
            record = service.feedback(body.report_id, body.final_team, parse_ts(body.closed_at))
        except Exception as exc:
            raise _http(exc) from exc
        return {"report_id": record.report_id, "predicted_team": record.predicted_team,
                "final_team": record.final_team, "correct": record.correct}

    @app.get("/accuracy")
    def accuracy(start: Optional[str] = None, end: Optional[str] = None):
        series = service.accuracy_series(
            start=date.fromisoformat(start) if start else None,
            end=date.fromisoformat(end) if end else None,
        )
        alert = service.drift_status()
        return {
            "points": [
                {"day": p.day.isoformat(), "accuracy": p.accuracy, "n_reports": p.n_reports}
                for p in series.points
            ],
            "alert": None if alert is None else json.loads(alert.to_json()),
        }

    @app.get("/model")
    def model_info():
        artifact = service.artifact
        if artifact is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        return {
            "descriptor": artifact.descriptor,
            "classes": list(artifact.classes),
            "training_span": artifact.training_span,
            "created_at": format_ts(artifact.created_at),
            "corpus_fingerprint": artifact.corpus_fingerprint,
            "fingerprint": artifact.fingerprint,
        }

    @app.post("/admin/retrain")
    def retrain(body: RetrainBody):
        if corpus_path is None:
            raise HTTPException(status_code=400, detail="service has no corpus configured")
        try:
            artifact = train_job(corpus_path, body.as_of, kind=train_kind,
                                 out_path=artifact_path)
        except Exception as exc:
            raise _http(exc) from exc
        service.swap_model(artifact)
        return {"fingerprint": artifact.fingerprint,
                "training_span": artifact.training_span}

    return app
