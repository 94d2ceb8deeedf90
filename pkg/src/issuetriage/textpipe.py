"""Text preprocessing and tf-idf vectorization over a learned vocabulary.

Terms are lowercased runs of Unicode letters; everything else splits tokens.
idf uses the natural log of N/df with no smoothing (df >= 1 by construction,
out-of-vocabulary terms at prediction time are simply dropped). Nonzero
vectors are L2-normalized.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import IssueReport
from .errors import EmptyTrainingSet

DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be by for from has have in is it its of on or that the
    this to was were will with not no""".split()
)


def load_stopwords(path) -> frozenset[str]:
    """Load a stop-word file, one term per line; blank lines ignored."""
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


def tokenize(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Casefold, split on non-letters, drop stop words. No stemming."""
    tokens: list[str] = []
    word: list[str] = []
    for ch in text.casefold():
        if ch.isalpha():
            word.append(ch)
        elif word:
            tokens.append("".join(word))
            word = []
    if word:
        tokens.append("".join(word))
    return [t for t in tokens if t not in stopwords]


def preprocess(report: IssueReport, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Tokenize the concatenated summary + description of a report."""
    return tokenize(report.text, stopwords)


@dataclass(frozen=True)
class Vocabulary:
    """Term index plus the document-frequency statistics behind idf."""

    term_to_index: dict[str, int]
    df: dict[str, int]
    n_docs: int
    idf: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.idf is None:
            arr = np.zeros(len(self.term_to_index))
            for term, i in self.term_to_index.items():
                arr[i] = math.log(self.n_docs / self.df[term])
            object.__setattr__(self, "idf", arr)

    def __len__(self) -> int:
        return len(self.term_to_index)

    @property
    def index_to_term(self) -> list[str]:
        out = [""] * len(self.term_to_index)
        for t, i in self.term_to_index.items():
            out[i] = t
        return out


@dataclass(frozen=True)
class SparseVector:
    """Sorted (index, weight) entries; no explicit zeros."""

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if idx.shape != w.shape or idx.ndim != 1:
            raise ValueError("indices and weights must be 1-d and aligned")
        if len(idx) > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("indices must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.indices] = self.weights
        return out


def build_vocabulary(docs: Sequence[Sequence[str]]) -> Vocabulary:
    """Index every distinct training term (first-appearance order) and count df."""
    nonempty = [d for d in docs if d]
    if not nonempty:
        raise EmptyTrainingSet("no training document has any token")
    term_to_index: dict[str, int] = {}
    df: Counter[str] = Counter()
    for doc in docs:
        for term in doc:
            if term not in term_to_index:
                term_to_index[term] = len(term_to_index)
        df.update(set(doc))
    return Vocabulary(term_to_index=term_to_index, df=dict(df), n_docs=len(docs))


def vectorize(tokens: Iterable[str], vocab: Vocabulary) -> SparseVector:
    """tf * ln(N/df), L2-normalized unless the norm is zero."""
    counts: Counter[int] = Counter()
    for t in tokens:
        i = vocab.term_to_index.get(t)
        if i is not None:
            counts[i] += 1
    if not counts:
        return SparseVector(np.empty(0, dtype=np.int64), np.empty(0))
    indices = np.array(sorted(counts), dtype=np.int64)
    weights = np.array([counts[i] for i in indices], dtype=np.float64) * vocab.idf[indices]
    # ubiquitous terms have idf 0; drop the explicit zeros they leave behind
    keep = weights > 0
    indices, weights = indices[keep], weights[keep]
    norm = np.linalg.norm(weights)
    if norm > 0:
        weights = weights / norm
    return SparseVector(indices, weights)


def vectors_to_csr(vectors: Sequence[SparseVector], dim: int) -> sparse.csr_matrix:
    """Stack sparse vectors into a scipy CSR matrix for model training."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + v.nnz
    data = np.concatenate([v.weights for v in vectors]) if vectors else np.empty(0)
    indices = (
        np.concatenate([v.indices for v in vectors]) if vectors else np.empty(0, dtype=np.int64)
    )
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))
