import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issuetriage import textpipe
from issuetriage.errors import EmptyTrainingSet
from issuetriage.textpipe import (
    DEFAULT_STOPWORDS,
    SparseVector,
    build_vocabulary,
    tokenize,
    vectorize,
    vectors_to_csr,
)


def dense_tfidf_oracle(docs, query):
    """Brute-force dense tf-idf of `query` against a corpus of token lists."""
    vocab_terms = []
    for d in docs:
        for t in d:
            if t not in vocab_terms:
                vocab_terms.append(t)
    N = len(docs)
    df = {t: sum(t in set(d) for d in docs) for t in vocab_terms}
    vec = np.zeros(len(vocab_terms))
    for i, t in enumerate(vocab_terms):
        tf = sum(1 for q in query if q == t)
        vec[i] = tf * math.log(N / df[t])
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class TestTokenize:
    def test_casefold_and_split(self):
        assert tokenize("ATM Withdrawal-failed! 42x", frozenset()) == [
            "atm", "withdrawal", "failed", "x"
        ]

    def test_stopwords_dropped(self):
        assert tokenize("the payment is broken") == ["payment", "broken"]

    def test_unicode_letters_kept(self):
        assert tokenize("ödeme hatası", frozenset()) == ["ödeme", "hatası"]

    def test_empty(self):
        assert tokenize("123 !!! ...") == []


class TestVocabulary:
    def test_first_appearance_order(self):
        vocab = build_vocabulary([["b", "a"], ["a", "c"]])
        assert vocab.term_to_index == {"b": 0, "a": 1, "c": 2}

    def test_df_counts_documents_not_occurrences(self):
        vocab = build_vocabulary([["a", "a", "a"], ["a", "b"]])
        assert vocab.df == {"a": 2, "b": 1}

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyTrainingSet):
            build_vocabulary([[], []])

    def test_index_to_term_roundtrip(self):
        vocab = build_vocabulary([["x", "y", "z"]])
        assert vocab.index_to_term == ["x", "y", "z"]


class TestVectorize:
    def test_matches_dense_oracle(self):
        docs = [["atm", "card", "atm"], ["card", "login"], ["login", "form", "atm"]]
        vocab = build_vocabulary(docs)
        for query in docs + [["atm", "login", "login"]]:
            got = vectorize(query, vocab).to_dense(len(vocab))
            want = dense_tfidf_oracle(docs, query)
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_ubiquitous_term_weight_zero(self):
        docs = [["common", "a"], ["common", "b"], ["common", "c"]]
        vocab = build_vocabulary(docs)
        vec = vectorize(["common", "a"], vocab)
        assert vocab.term_to_index["common"] not in vec.indices

    def test_oov_dropped(self):
        vocab = build_vocabulary([["a", "b"], ["a"]])
        vec = vectorize(["never", "seen"], vocab)
        assert vec.nnz == 0 and vec.norm() == 0.0

    def test_unit_norm(self):
        docs = [["a", "b"], ["b", "c"], ["c", "d"]]
        vocab = build_vocabulary(docs)
        assert vectorize(["a", "b", "c"], vocab).norm() == pytest.approx(1.0, abs=1e-12)

    @given(
        st.lists(
            st.lists(st.sampled_from("abcdefg"), min_size=0, max_size=6),
            min_size=1,
            max_size=8,
        ).filter(lambda docs: any(docs)),
        st.lists(st.sampled_from("abcdefghij"), max_size=8),
    )
    @settings(max_examples=200, deadline=None)
    def test_oracle_property(self, docs, query):
        vocab = build_vocabulary(docs)
        got = vectorize(query, vocab).to_dense(len(vocab))
        want = dense_tfidf_oracle(docs, [q for q in query if q in vocab.term_to_index])
        np.testing.assert_allclose(got, want, atol=1e-12)

    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=10))
    @settings(max_examples=100, deadline=None)
    def test_norm_is_zero_or_one(self, query):
        docs = [["a", "b"], ["b", "c"], ["d"]]
        vocab = build_vocabulary(docs)
        norm = vectorize(query, vocab).norm()
        assert norm == 0.0 or abs(norm - 1.0) < 1e-12


class TestSparseVector:
    def test_rejects_unsorted_indices(self):
        with pytest.raises(ValueError):
            SparseVector(np.array([3, 1]), np.array([0.5, 0.5]))

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            SparseVector(np.array([0]), np.array([-0.1]))

    def test_csr_stacking(self):
        docs = [["a", "b"], ["b", "c"], ["a", "c"]]
        vocab = build_vocabulary(docs)
        vectors = [vectorize(d, vocab) for d in docs]
        mat = vectors_to_csr(vectors, len(vocab))
        assert mat.shape == (3, 3)
        for i, v in enumerate(vectors):
            np.testing.assert_allclose(
                np.asarray(mat[i].todense()).ravel(), v.to_dense(3), atol=1e-15
            )


def test_default_stopwords_are_lowercase():
    assert all(w == w.lower() for w in DEFAULT_STOPWORDS)


def test_load_stopwords(tmp_path):
    p = tmp_path / "stops.txt"
    p.write_text("The\npayment\n\n  broken \n")
    assert textpipe.load_stopwords(p) == frozenset({"the", "payment", "broken"})
