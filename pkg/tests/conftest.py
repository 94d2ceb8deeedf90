import warnings

import numpy as np
import pytest

from issuetriage import classify, datagen, textpipe
from issuetriage.corpus import ground_truth

warnings.filterwarnings("ignore", message="Liblinear failed to converge")


@pytest.fixture(scope="session")
def keyword_split():
    """600-doc keyword corpus: noisy training labels, clean held-out test labels."""
    reports = datagen.keyword_corpus(600, 6, seed=0)
    y_clean = [ground_truth(r) for r in reports]
    idx = np.arange(len(reports))
    rng = np.random.default_rng(1)
    rng.shuffle(idx)
    train_idx, test_idx = idx[:450], idx[450:]
    docs = [textpipe.preprocess(r) for r in reports]
    vocab = textpipe.build_vocabulary([docs[i] for i in train_idx])
    X = [textpipe.vectorize(d, vocab) for d in docs]
    return {
        "vocab": vocab,
        "X_train": [X[i] for i in train_idx],
        "y_train": datagen.noisy_labels([y_clean[i] for i in train_idx], 0.10, 6, seed=2),
        "X_test": [X[i] for i in test_idx],
        "y_test": [y_clean[i] for i in test_idx],
    }


@pytest.fixture(scope="session")
def small_model():
    """Calibrated linear model over a small 3-class corpus, for explanation tests."""
    reports = datagen.keyword_corpus(90, 3, seed=7)
    docs = [textpipe.preprocess(r) for r in reports]
    vocab = textpipe.build_vocabulary(docs)
    X = [textpipe.vectorize(d, vocab) for d in docs]
    y = [ground_truth(r) for r in reports]
    model = classify.fit("linear_svc_calibrated", X, y, vocab=vocab)
    return reports, vocab, X, y, model
