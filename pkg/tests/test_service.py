import concurrent.futures
import json
import threading

import numpy as np
import pytest

from issuetriage import datagen, service
from issuetriage.corpus import parse_ts, save_corpus
from issuetriage.errors import (
    ArtifactFormatError,
    AssignmentImpossible,
    Conflict,
    NoTrainingData,
    NotFound,
    ServiceUnavailable,
)
from issuetriage.service import (
    ModelArtifact,
    TriageService,
    create_app,
    load_artifact,
    save_artifact,
    train_job,
)


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("corpus") / "corpus.jsonl"
    reports = datagen.spread_corpus(600, n_classes=4, start_month="2017-01",
                                    n_months=12, seed=5)
    save_corpus(p, reports)
    return p, reports


@pytest.fixture(scope="module")
def artifact(corpus_file):
    p, _ = corpus_file
    return train_job(p, "2018-01", kind="linear_svc_calibrated")


class TestArtifact:
    def test_training_span_is_trailing_year(self, artifact):
        assert artifact.training_span == ("2017-01", "2017-12")

    def test_roundtrip_identical_predictions(self, tmp_path, corpus_file, artifact):
        from issuetriage import classify, textpipe

        _, reports = corpus_file
        path = tmp_path / "model.bin"
        save_artifact(path, artifact)
        loaded = load_artifact(path)
        probe = [textpipe.vectorize(textpipe.preprocess(r), artifact.model.vocab)
                 for r in reports]
        assert classify.predict(loaded.model, probe) == classify.predict(artifact.model, probe)
        assert loaded.fingerprint == artifact.fingerprint

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"GARBAGE___")
        with pytest.raises(ArtifactFormatError):
            load_artifact(p)

    def test_bad_version_rejected(self, tmp_path):
        p = tmp_path / "future.bin"
        p.write_bytes(service.ARTIFACT_MAGIC + (99).to_bytes(2, "big") + b"x")
        with pytest.raises(ArtifactFormatError):
            load_artifact(p)

    def test_no_partial_file_on_failure(self, tmp_path, artifact, monkeypatch):
        path = tmp_path / "model.bin"

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(service.os, "replace", boom)
        with pytest.raises(OSError):
            save_artifact(path, artifact)
        assert not path.exists()
        assert list(tmp_path.iterdir()) == []

    def test_open_only_corpus_rejected(self, tmp_path):
        p = tmp_path / "open.jsonl"
        p.write_text(json.dumps({
            "id": "R1", "summary": "s", "description": "d",
            "opened_at": "2017-05-01T00:00:00Z", "status": "open",
        }) + "\n")
        with pytest.raises(NoTrainingData):
            train_job(p, "2018-01")


class TestAssignFeedback:
    def test_assign_known_keywords(self, corpus_file, artifact):
        _, reports = corpus_file
        svc = TriageService(artifact=artifact)
        r = reports[0]
        team, expl, fp = svc.assign("A-1", r.summary, r.description)
        assert team == r.closing_team
        assert fp == artifact.fingerprint
        assert expl is None

    def test_explanation_attached_on_request(self, corpus_file, artifact):
        _, reports = corpus_file
        svc = TriageService(artifact=artifact)
        _, expl, _ = svc.assign("A-2", reports[1].summary, reports[1].description,
                                want_explanation=True)
        assert expl is not None and len(expl.terms) >= 1

    def test_no_model_loaded(self):
        with pytest.raises(ServiceUnavailable):
            TriageService().assign("A-1", "text")

    def test_duplicate_id_conflict(self, corpus_file, artifact):
        _, reports = corpus_file
        svc = TriageService(artifact=artifact)
        svc.assign("DUP", reports[0].summary, reports[0].description)
        with pytest.raises(Conflict):
            svc.assign("DUP", reports[1].summary, reports[1].description)

    def test_empty_and_oov_text_rejected(self, artifact):
        svc = TriageService(artifact=artifact)
        with pytest.raises(AssignmentImpossible):
            svc.assign("E-1", "", "")
        with pytest.raises(AssignmentImpossible):
            svc.assign("E-2", "zzzz qqqq totally unseen wxyz", "")

    def test_feedback_marks_correctness(self, corpus_file, artifact):
        _, reports = corpus_file
        svc = TriageService(artifact=artifact)
        r = reports[2]
        team, *_ = svc.assign("F-1", r.summary, r.description)
        rec = svc.feedback("F-1", team, parse_ts("2018-01-05T00:00:00Z"))
        assert rec.correct is True
        rec2 = svc.assign("F-2", reports[3].summary, reports[3].description)
        out = svc.feedback("F-2", "SOME_OTHER_TEAM", parse_ts("2018-01-06T00:00:00Z"))
        assert out.correct is False

    def test_feedback_errors(self, corpus_file, artifact):
        _, reports = corpus_file
        svc = TriageService(artifact=artifact)
        with pytest.raises(NotFound):
            svc.feedback("NOPE", "T1", parse_ts("2018-01-05T00:00:00Z"))
        svc.assign("F-3", reports[0].summary, reports[0].description)
        svc.feedback("F-3", "T1", parse_ts("2018-01-05T00:00:00Z"))
        with pytest.raises(Conflict):
            svc.feedback("F-3", "T1", parse_ts("2018-01-06T00:00:00Z"))

    def test_event_log_replay_identical_series(self, tmp_path, corpus_file, artifact):
        _, reports = corpus_file
        log = tmp_path / "events.jsonl"
        svc = TriageService(artifact=artifact, log_path=log)
        for i, r in enumerate(reports[:30]):
            svc.assign(f"R-{i}", r.summary, r.description, opened_at=r.opened_at)
            svc.feedback(f"R-{i}", r.closing_team, r.closed_at)
        replayed = TriageService(artifact=artifact, log_path=log)
        assert replayed.accuracy_series() == svc.accuracy_series()

    def test_accuracy_series_range_filter(self, corpus_file, artifact):
        _, reports = corpus_file
        svc = TriageService(artifact=artifact)
        for i, r in enumerate(reports[:20]):
            svc.assign(f"R-{i}", r.summary, r.description, opened_at=r.opened_at)
            svc.feedback(f"R-{i}", r.closing_team, r.closed_at)
        full = svc.accuracy_series()
        days = [p.day for p in full.points]
        clipped = svc.accuracy_series(start=days[1], end=days[-2])
        assert clipped.points == full.points[1:-1]


class TestHotSwap:
    def test_concurrent_assigns_see_single_version(self, corpus_file):
        p, reports = corpus_file
        art_a = train_job(p, "2018-01", kind="linear_svc")
        art_b = train_job(p, "2018-01", kind="multinomial_nb")
        assert art_a.fingerprint != art_b.fingerprint
        svc = TriageService(artifact=art_a)
        stop = threading.Event()

        def swapper():
            flip = False
            while not stop.is_set():
                svc.swap_model(art_b if flip else art_a)
                flip = not flip

        thread = threading.Thread(target=swapper)
        thread.start()
        try:
            by_fp = {art_a.fingerprint: art_a.model, art_b.fingerprint: art_b.model}
            from issuetriage import classify, textpipe

            with concurrent.futures.ThreadPoolExecutor(max_workers=16) as pool:
                def one(i):
                    r = reports[i % 50]
                    team, _, fp = svc.assign(f"HS-{i}", r.summary, r.description)
                    return r, team, fp

                for r, team, fp in pool.map(one, range(100)):
                    model = by_fp[fp]
                    vec = textpipe.vectorize(textpipe.preprocess(r), model.vocab)
                    expected = classify.predict(model, vec)
                    assert team == expected, "response mixed two model versions"
        finally:
            stop.set()
            thread.join()


class TestHttpApi:
    @pytest.fixture()
    def client(self, tmp_path, corpus_file, artifact):
        from fastapi.testclient import TestClient

        p, _ = corpus_file
        svc = TriageService(artifact=artifact, log_path=tmp_path / "events.jsonl")
        app = create_app(svc, corpus_path=p, artifact_path=tmp_path / "model.bin")
        return TestClient(app)

    def test_assign_feedback_accuracy_flow(self, client, corpus_file):
        _, reports = corpus_file
        r = reports[0]
        resp = client.post("/assign", json={
            "report_id": "H-1", "summary": r.summary, "description": r.description,
            "opened_at": "2018-01-03T10:00:00Z",
        })
        assert resp.status_code == 200
        team = resp.json()["predicted_team"]
        assert team == r.closing_team

        resp = client.post("/feedback", json={
            "report_id": "H-1", "final_team": team,
            "closed_at": "2018-01-04T10:00:00Z",
        })
        assert resp.status_code == 200
        assert resp.json()["correct"] is True

        resp = client.get("/accuracy")
        assert resp.status_code == 200
        body = resp.json()
        assert body["points"][0]["accuracy"] == 1.0
        assert body["alert"] is None

    def test_error_codes(self, client, corpus_file):
        _, reports = corpus_file
        r = reports[0]
        assert client.post("/assign", json={"report_id": "E-1"}).status_code == 422
        client.post("/assign", json={"report_id": "E-2", "summary": r.summary})
        assert client.post(
            "/assign", json={"report_id": "E-2", "summary": r.summary}
        ).status_code == 409
        assert client.post("/feedback", json={
            "report_id": "GHOST", "final_team": "T", "closed_at": "2018-01-01T00:00:00Z",
        }).status_code == 404

    def test_model_info_and_explanation(self, client, corpus_file, artifact):
        _, reports = corpus_file
        resp = client.get("/model")
        assert resp.status_code == 200
        assert resp.json()["fingerprint"] == artifact.fingerprint
        resp = client.post("/assign", json={
            "report_id": "X-1", "summary": reports[4].summary,
            "description": reports[4].description, "explain": True,
        })
        assert "explanation" in resp.json()

    def test_admin_retrain_swaps_model(self, client):
        before = client.get("/model").json()["fingerprint"]
        resp = client.post("/admin/retrain", json={"as_of": "2018-01"})
        assert resp.status_code == 200
        after = client.get("/model").json()["fingerprint"]
        assert after == resp.json()["fingerprint"]
        assert after != before
