import json

import numpy as np
import pytest

from issuetriage import explain as expl
from issuetriage.corpus import IssueReport, parse_ts
from issuetriage.errors import NothingToExplain, Unsupported
from issuetriage.explain import (
    ExplainerConfig,
    explain,
    explain_top2,
    sample_perturbations,
)
from issuetriage.textpipe import build_vocabulary


class IndicatorModel:
    """p(ATM_OPS) = 1 if the text contains 'atm', else 0. Transparent oracle."""

    classes = ("ATM_OPS", "OTHER")

    def __init__(self, vocab):
        self.vocab = vocab

    def predict_proba_matrix(self, X):
        j = self.vocab.term_to_index["atm"]
        out = np.zeros((len(X), 2))
        for i, v in enumerate(X):
            hit = j in v.indices
            out[i] = (1.0, 0.0) if hit else (0.0, 1.0)
        return out


@pytest.fixture(scope="module")
def indicator_setup():
    fillers = ["screen", "button", "broken", "twice", "yesterday"]
    docs = [["atm"] + fillers, fillers + ["payment"], ["atm", "payment"]]
    vocab = build_vocabulary(docs)
    model = IndicatorModel(vocab)
    report = IssueReport(
        id="IND-1",
        summary="atm screen button",
        description="broken twice yesterday",
        opened_at=parse_ts("2018-01-01T00:00:00Z"),
    )
    return model, report


class TestSamplePerturbations:
    def test_sample_zero_is_full_set(self):
        masks, prox = sample_perturbations(list("abcdefghijklmn"), 50, seed=1)
        assert masks[0].all()
        assert prox[0] == pytest.approx(1.0)

    def test_small_reports_enumerate_all_subsets(self):
        masks, _ = sample_perturbations(["a", "b", "c"], 1000, seed=0)
        assert len(masks) == 8
        assert len({tuple(m) for m in masks}) == 8

    def test_empty_set_proximity(self):
        masks, prox = sample_perturbations(["a", "b"], 10, seed=0)
        empty = np.where(masks.sum(axis=1) == 0)[0][0]
        assert prox[empty] == pytest.approx(np.exp(-1.0 / 25.0 ** 2))

    def test_deterministic(self):
        a = sample_perturbations(list("abcdefghijklmn"), 200, seed=9)
        b = sample_perturbations(list("abcdefghijklmn"), 200, seed=9)
        np.testing.assert_array_equal(a[0], b[0])

    def test_empty_tokens_rejected(self):
        with pytest.raises(NothingToExplain):
            sample_perturbations([], 10, seed=0)


class TestExplain:
    def test_indicator_term_dominates(self, indicator_setup):
        model, report = indicator_setup
        e = explain(report, model)
        assert e.predicted_team == "ATM_OPS"
        assert e.terms[0][0] == "atm"
        assert e.terms[0][1] > 0
        assert abs(e.terms[0][1]) > 3 * max(
            (abs(w) for t, w in e.terms[1:]), default=0.0
        )

    def test_indicator_top_term_stable_across_seeds(self, indicator_setup):
        model, report = indicator_setup
        for seed in range(10):
            e = explain(report, model, ExplainerConfig(seed=seed))
            assert e.terms[0][0] == "atm"

    def test_single_token_weight_is_probability_gap(self):
        docs = [["atm"], ["payment"]]
        vocab = build_vocabulary(docs)
        model = IndicatorModel(vocab)
        e = explain("atm atm", model, ExplainerConfig(K=3))
        assert len(e.terms) == 1
        # single binary feature: weight ~ p(present) - p(absent) = 1 - 0
        assert e.terms[0][1] == pytest.approx(1.0, abs=0.35)
        assert e.terms[0][1] > 0.5

    def test_terms_subset_of_report_tokens(self, small_model):
        reports, vocab, X, y, model = small_model
        for r in reports[:10]:
            e = explain(r, model)
            tokens = set((r.summary + " " + r.description).lower().split())
            assert all(t in tokens for t, _ in e.terms)

    def test_sorted_by_abs_weight_and_k_bound(self, small_model):
        reports, *_, model = small_model
        e = explain(reports[0], model, ExplainerConfig(K=4))
        mags = [abs(w) for _, w in e.terms]
        assert mags == sorted(mags, reverse=True)
        assert len(e.terms) <= 4

    def test_k_larger_than_vocab_keeps_all_terms(self, indicator_setup):
        model, report = indicator_setup
        e = explain(report, model, ExplainerConfig(K=50))
        assert len(e.terms) == 6  # report has 6 distinct tokens

    def test_fit_score_in_unit_interval(self, small_model):
        reports, *_, model = small_model
        for r in reports[:5]:
            e = explain(r, model)
            assert 0.0 <= e.local_fit_score <= 1.0

    def test_same_seed_identical(self, small_model):
        reports, *_, model = small_model
        a = explain(reports[0], model, ExplainerConfig(seed=5))
        b = explain(reports[0], model, ExplainerConfig(seed=5))
        assert a == b

    def test_empty_report_rejected(self, small_model):
        *_, model = small_model
        with pytest.raises(NothingToExplain):
            explain("12345 !!!", model)

    def test_unsupported_model(self):
        with pytest.raises(Unsupported):
            explain("some text", object())

    def test_json_rendering(self, indicator_setup):
        model, report = indicator_setup
        e = explain(report, model)
        d = json.loads(e.to_json())
        assert d["report_id"] == "IND-1"
        assert d["team"] == "ATM_OPS"
        assert all(set(t) == {"term", "weight"} for t in d["terms"])

    def test_text_rendering(self, indicator_setup):
        model, report = indicator_setup
        text = explain(report, model).render_text()
        assert "atm" in text and "ATM_OPS" in text


class TestExplainTop2:
    def test_runner_up_shows_negative_indicator(self, indicator_setup):
        model, report = indicator_setup
        first, second = explain_top2(report, model)
        assert first.predicted_team == "ATM_OPS"
        assert second.predicted_team == "OTHER"
        atm_weight = dict(second.terms).get("atm")
        assert atm_weight is not None and atm_weight < 0

    def test_two_class_targets_complementary(self, indicator_setup):
        model, report = indicator_setup
        first, second = explain_top2(report, model)
        assert {first.predicted_team, second.predicted_team} == set(model.classes)

    def test_single_class_model_rejected(self):
        docs = [["atm"], ["atm", "x"]]
        vocab = build_vocabulary(docs)

        class OneClass:
            classes = ("ONLY",)

            def __init__(self):
                self.vocab = vocab

            def predict_proba_matrix(self, X):
                return np.ones((len(X), 1))

        with pytest.raises(Unsupported):
            explain_top2("atm x", OneClass())
