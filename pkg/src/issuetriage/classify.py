"""Level-0 classifiers and level-1 stacked ensembles over tf-idf vectors.

The eight level-0 kinds are thin, contract-preserving wrappers around
scikit-learn estimators, except for the majority baseline and the Platt
calibration of the linear SVC, which are implemented here. Stacking trains
the level-1 logistic regression on out-of-fold level-0 class probabilities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, sparse
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold
from sklearn.naive_bayes import MultinomialNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.svm import LinearSVC
from sklearn.tree import DecisionTreeClassifier

from .errors import DegenerateLabels, InsufficientData, ShapeError, Unsupported
from .textpipe import SparseVector, Vocabulary, vectors_to_csr


class ClassifierKind(str, enum.Enum):
    BASELINE_MAJORITY = "baseline_majority"
    MULTINOMIAL_NB = "multinomial_nb"
    DECISION_TREE = "decision_tree"
    KNN = "knn"
    LOGISTIC_REGRESSION = "logistic_regression"
    RANDOM_FOREST = "random_forest"
    LINEAR_SVC = "linear_svc"
    LINEAR_SVC_CALIBRATED = "linear_svc_calibrated"


PROBABILITY_CAPABLE = frozenset(
    {
        ClassifierKind.MULTINOMIAL_NB,
        ClassifierKind.DECISION_TREE,
        ClassifierKind.KNN,
        ClassifierKind.LOGISTIC_REGRESSION,
        ClassifierKind.RANDOM_FOREST,
        ClassifierKind.LINEAR_SVC_CALIBRATED,
    }
)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    knn_k: int = 5
    svc_c: float = 1.0
    svc_tol: float = 1e-4
    svc_max_iter: int = 1000
    logreg_l2: float = 1.0
    logreg_tol: float = 1e-6
    tree_max_depth: int = 50
    tree_min_leaf: int = 2
    forest_trees: int = 100
    calibration_folds: int = 3
    stacking_folds: int = 5


@dataclass(frozen=True)
class PlattSigmoid:
    """Per-class sigmoid p = 1 / (1 + exp(a * score + b))."""

    a: float
    b: float

    def __call__(self, score: np.ndarray) -> np.ndarray:
        z = self.a * np.asarray(score, dtype=float) + self.b
        return 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))


def fit_platt_sigmoid(scores: np.ndarray, labels: np.ndarray) -> PlattSigmoid:
    """Platt (1999) sigmoid fit with the standard smoothed targets."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    t = np.where(y, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(theta):
        a, b = theta
        z = np.clip(a * scores + b, -500, 500)
        # cross-entropy of p = sigma(-z) against targets t, in a stable form
        return float(np.sum(np.logaddexp(0.0, z) - (1.0 - t) * z))

    res = optimize.minimize(nll, x0=np.array([-1.0, 0.0]), method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 5000})
    a, b = res.x
    return PlattSigmoid(a=float(a), b=float(b))


@dataclass(frozen=True)
class TrainedModel:
    """Immutable fitted level-0 classifier."""

    kind: ClassifierKind
    classes: tuple[str, ...]
    vocab: Optional[Vocabulary]
    estimator: object
    config: TrainConfig
    trained_at: datetime
    training_span: Optional[tuple[str, str]] = None
    calibrators: Optional[tuple[PlattSigmoid, ...]] = None

    @property
    def n_features(self) -> int:
        return len(self.vocab) if self.vocab is not None else int(self.estimator.n_features_in_)

    def linear_weights(self) -> np.ndarray:
        """(n_classes, V) weight matrix for linear kinds."""
        if self.kind not in (ClassifierKind.LINEAR_SVC, ClassifierKind.LINEAR_SVC_CALIBRATED,
                             ClassifierKind.LOGISTIC_REGRESSION):
            raise Unsupported(f"{self.kind.value} has no linear weight matrix")
        coef = np.asarray(self.estimator.coef_)
        if coef.shape[0] == 1 and len(self.classes) == 2:
            coef = np.vstack([-coef[0], coef[0]])
        return coef


def _as_matrix(X: Sequence[SparseVector] | sparse.spmatrix, dim: int) -> sparse.csr_matrix:
    if sparse.issparse(X):
        return X.tocsr()
    return vectors_to_csr(list(X), dim)


def _check_xy(X, y):
    if len(X) != len(y):
        raise ShapeError(f"|X| = {len(X)} but |y| = {len(y)}")
    if len(X) == 0:
        raise ShapeError("empty training set")


class _MajorityBaseline:
    """Predicts the most frequent training class, ties to the lowest class index."""

    def __init__(self, classes: Sequence[str], counts: np.ndarray):
        self.classes_ = np.asarray(classes)
        self.counts_ = counts
        self.majority_index_ = int(np.argmax(counts))

    def decision_scores(self, n_rows: int) -> np.ndarray:
        scores = np.tile(self.counts_.astype(float), (n_rows, 1))
        return scores


def fit(
    kind: ClassifierKind,
    X: Sequence[SparseVector],
    y: Sequence[str],
    config: TrainConfig = TrainConfig(),
    vocab: Optional[Vocabulary] = None,
    training_span: Optional[tuple[str, str]] = None,
) -> TrainedModel:
    """Fit one level-0 classifier; deterministic given config.seed."""
    kind = ClassifierKind(kind)
    _check_xy(X, y)
    classes = tuple(sorted(set(y)))
    if len(classes) < 2 and kind is not ClassifierKind.BASELINE_MAJORITY:
        raise DegenerateLabels(f"{kind.value} needs >= 2 classes, got {len(classes)}")
    dim = len(vocab) if vocab is not None else (
        X.shape[1] if sparse.issparse(X) else int(max((v.indices.max(initial=-1) for v in X), default=-1)) + 1
    )
    Xm = _as_matrix(X, dim)
    y_arr = np.asarray(list(y))

    calibrators = None
    if kind is ClassifierKind.BASELINE_MAJORITY:
        counts = np.array([(y_arr == c).sum() for c in classes])
        est = _MajorityBaseline(classes, counts)
        est.n_features_in_ = Xm.shape[1]
    elif kind is ClassifierKind.MULTINOMIAL_NB:
        est = MultinomialNB(alpha=1.0).fit(Xm, y_arr)
    elif kind is ClassifierKind.DECISION_TREE:
        est = DecisionTreeClassifier(
            criterion="gini",
            max_depth=config.tree_max_depth,
            min_samples_leaf=config.tree_min_leaf,
            random_state=config.seed,
        ).fit(Xm, y_arr)
    elif kind is ClassifierKind.KNN:
        est = KNeighborsClassifier(
            n_neighbors=min(config.knn_k, Xm.shape[0]), metric="cosine", weights="distance"
        ).fit(Xm, y_arr)
    elif kind is ClassifierKind.LOGISTIC_REGRESSION:
        est = LogisticRegression(
            C=1.0 / config.logreg_l2,
            tol=config.logreg_tol,
            max_iter=5000,
            fit_intercept=False,
        ).fit(Xm, y_arr)
    elif kind is ClassifierKind.RANDOM_FOREST:
        est = RandomForestClassifier(
            n_estimators=config.forest_trees,
            max_features="sqrt",
            bootstrap=True,
            random_state=config.seed,
        ).fit(Xm, y_arr)
    elif kind in (ClassifierKind.LINEAR_SVC, ClassifierKind.LINEAR_SVC_CALIBRATED):
        svc = LinearSVC(
            C=config.svc_c,
            tol=config.svc_tol,
            max_iter=config.svc_max_iter,
            loss="hinge",
            dual=True,
            fit_intercept=False,
            random_state=config.seed,
        )
        if kind is ClassifierKind.LINEAR_SVC_CALIBRATED:
            calibrators = _fit_oof_calibrators(svc, Xm, y_arr, classes, config)
        est = svc.fit(Xm, y_arr)
    else:  # pragma: no cover
        raise Unsupported(kind.value)

    return TrainedModel(
        kind=kind,
        classes=classes,
        vocab=vocab,
        estimator=est,
        config=config,
        trained_at=datetime.now(timezone.utc),
        training_span=training_span,
        calibrators=calibrators,
    )


def _decision_matrix(svc: LinearSVC, Xm, classes: tuple[str, ...]) -> np.ndarray:
    """One decision-score column per class, regardless of binary/multiclass."""
    scores = svc.decision_function(Xm)
    if scores.ndim == 1:
        scores = np.column_stack([-scores, scores])
    order = [list(svc.classes_).index(c) for c in classes]
    return scores[:, order]


def _fit_oof_calibrators(svc_proto, Xm, y_arr, classes, config) -> tuple[PlattSigmoid, ...]:
    """Per-class Platt sigmoids fitted on out-of-fold decision scores."""
    from sklearn.base import clone

    n_folds = config.calibration_folds
    _, counts = np.unique(y_arr, return_counts=True)
    if counts.min() < n_folds:
        raise InsufficientData(
            f"calibration needs >= {n_folds} samples per class, min is {counts.min()}"
        )
    oof = np.zeros((Xm.shape[0], len(classes)))
    skf = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=config.seed)
    for train_idx, test_idx in skf.split(Xm, y_arr):
        fold_svc = clone(svc_proto).fit(Xm[train_idx], y_arr[train_idx])
        fold_classes = list(fold_svc.classes_)
        scores = fold_svc.decision_function(Xm[test_idx])
        if scores.ndim == 1:
            scores = np.column_stack([-scores, scores])
        for j, c in enumerate(classes):
            if c in fold_classes:
                oof[test_idx, j] = scores[:, fold_classes.index(c)]
    return tuple(
        fit_platt_sigmoid(oof[:, j], y_arr == c) for j, c in enumerate(classes)
    )


def predict_proba(model: TrainedModel, x: SparseVector | Sequence[SparseVector]) -> dict[str, float] | np.ndarray:
    """Class probabilities; dict for a single vector, matrix for a batch."""
    single = isinstance(x, SparseVector)
    proba = predict_proba_matrix(model, [x] if single else list(x))
    if single:
        return {c: float(p) for c, p in zip(model.classes, proba[0])}
    return proba


def predict_proba_matrix(model: TrainedModel, X: Sequence[SparseVector]) -> np.ndarray:
    if model.kind not in PROBABILITY_CAPABLE:
        raise Unsupported(f"{model.kind.value} does not expose class probabilities")
    Xm = _as_matrix(X, model.n_features)
    if model.kind is ClassifierKind.LINEAR_SVC_CALIBRATED:
        scores = _decision_matrix(model.estimator, Xm, model.classes)
        raw = np.column_stack(
            [model.calibrators[j](scores[:, j]) for j in range(len(model.classes))]
        )
        sums = raw.sum(axis=1, keepdims=True)
        uniform = np.full_like(raw, 1.0 / raw.shape[1])
        return np.where(sums > 0, raw / np.where(sums == 0, 1.0, sums), uniform)
    est = model.estimator
    proba = est.predict_proba(Xm)
    order = [list(est.classes_).index(c) for c in model.classes]
    return proba[:, order]


def decision_scores(model: TrainedModel, X: Sequence[SparseVector]) -> np.ndarray:
    """Per-class decision scores; the argmax row-wise is the prediction."""
    Xm = _as_matrix(X, model.n_features)
    if model.kind is ClassifierKind.BASELINE_MAJORITY:
        return model.estimator.decision_scores(Xm.shape[0])
    if model.kind in (ClassifierKind.LINEAR_SVC, ClassifierKind.LINEAR_SVC_CALIBRATED):
        return _decision_matrix(model.estimator, Xm, model.classes)
    return predict_proba_matrix(model, X)


def predict(model: TrainedModel, x: SparseVector | Sequence[SparseVector]) -> str | list[str]:
    """Argmax prediction; ties break to the lowest class index."""
    single = isinstance(x, SparseVector)
    scores = decision_scores(model, [x] if single else list(x))
    picks = [model.classes[i] for i in np.argmax(scores, axis=1)]
    return picks[0] if single else picks


class EnsembleMode(str, enum.Enum):
    BEST = "BEST"
    SELECTED = "SELECTED"


@dataclass(frozen=True)
class EnsembleModel:
    """Stacked generalization: level-1 logistic regression over level-0 probabilities."""

    mode: EnsembleMode
    k: int
    level0: tuple[TrainedModel, ...]
    level1: LogisticRegression
    classes: tuple[str, ...]
    vocab: Optional[Vocabulary] = None
    pool_cv_accuracy: dict[str, float] = field(default_factory=dict)

    @property
    def kinds(self) -> tuple[ClassifierKind, ...]:
        return tuple(m.kind for m in self.level0)


def _level1_features(models: Sequence[TrainedModel], X, classes) -> np.ndarray:
    cols = []
    for m in models:
        proba = predict_proba_matrix(m, X)
        aligned = np.zeros((proba.shape[0], len(classes)))
        for j, c in enumerate(classes):
            if c in m.classes:
                aligned[:, j] = proba[:, m.classes.index(c)]
        cols.append(aligned)
    return np.hstack(cols)


def fit_stacked(
    mode: EnsembleMode | str,
    k: int,
    level0_kinds: Sequence[ClassifierKind | str],
    X: Sequence[SparseVector],
    y: Sequence[str],
    config: TrainConfig = TrainConfig(),
    vocab: Optional[Vocabulary] = None,
) -> EnsembleModel:
    """Fit a BEST-k or SELECTED-k stacked ensemble with out-of-fold level-1 features."""
    mode = EnsembleMode(mode)
    kinds = [ClassifierKind(kd) for kd in level0_kinds]
    if k not in (3, 5):
        raise ValueError(f"k must be 3 or 5, got {k}")
    incapable = [kd for kd in kinds if kd not in PROBABILITY_CAPABLE]
    if incapable:
        raise Unsupported(f"not probability-capable: {[kd.value for kd in incapable]}")
    if len(set(kinds)) != len(kinds):
        raise ValueError("level-0 kinds must be distinct")
    if mode is EnsembleMode.SELECTED and len(kinds) != k:
        raise ValueError(f"SELECTED-{k} needs exactly {k} kinds, got {len(kinds)}")
    if mode is EnsembleMode.BEST and len(kinds) < k:
        raise ValueError(f"BEST-{k} needs a pool of >= {k} kinds")
    _check_xy(X, y)
    y_arr = np.asarray(list(y))
    classes = tuple(sorted(set(y_arr)))
    n_folds = config.stacking_folds
    _, counts = np.unique(y_arr, return_counts=True)
    if counts.min() < 2 * n_folds:
        raise InsufficientData(
            f"stacking needs >= {2 * n_folds} samples per class, min is {counts.min()}"
        )

    dim = len(vocab) if vocab is not None else None
    X = list(X)
    Xm_dim = dim if dim is not None else int(max((v.indices.max(initial=-1) for v in X), default=-1)) + 1

    # out-of-fold probabilities per candidate kind
    skf = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=config.seed)
    folds = list(skf.split(np.zeros(len(X)), y_arr))
    oof = {kd: np.zeros((len(X), len(classes))) for kd in kinds}
    for train_idx, test_idx in folds:
        X_tr = [X[i] for i in train_idx]
        y_tr = y_arr[train_idx]
        X_te = [X[i] for i in test_idx]
        for kd in kinds:
            fold_model = fit(kd, X_tr, y_tr, config=config, vocab=vocab)
            proba = predict_proba_matrix(fold_model, X_te)
            for j, c in enumerate(classes):
                if c in fold_model.classes:
                    oof[kd][test_idx, j] = proba[:, fold_model.classes.index(c)]

    cv_acc = {
        kd.value: float(
            np.mean(np.asarray(classes)[np.argmax(oof[kd], axis=1)] == y_arr)
        )
        for kd in kinds
    }
    if mode is EnsembleMode.BEST:
        # top-k by internal CV accuracy, ties broken by pool order
        ranked = sorted(range(len(kinds)), key=lambda i: (-cv_acc[kinds[i].value], i))
        chosen = [kinds[i] for i in ranked[:k]]
    else:
        chosen = kinds

    level1_X = np.hstack([oof[kd] for kd in chosen])
    level1 = LogisticRegression(C=1.0, max_iter=5000).fit(level1_X, y_arr)

    level0 = tuple(fit(kd, X, y_arr, config=config, vocab=vocab) for kd in chosen)
    return EnsembleModel(
        mode=mode, k=k, level0=level0, level1=level1,
        classes=classes, vocab=vocab, pool_cv_accuracy=cv_acc,
    )


def predict_ensemble(ensemble: EnsembleModel, x: SparseVector | Sequence[SparseVector]) -> str | list[str]:
    single = isinstance(x, SparseVector)
    proba = predict_proba_ensemble(ensemble, [x] if single else list(x))
    picks = [ensemble.classes[i] for i in np.argmax(proba, axis=1)]
    return picks[0] if single else picks


def predict_proba_ensemble(ensemble: EnsembleModel, X: Sequence[SparseVector]) -> np.ndarray:
    feats = _level1_features(ensemble.level0, list(X), ensemble.classes)
    proba = ensemble.level1.predict_proba(feats)
    order = [list(ensemble.level1.classes_).index(c) for c in ensemble.classes]
    return proba[:, order]
