"""Evaluation protocols: 80/20 split, leave-one-participant-out, confusion
metrics, window-size and feature-count sweeps, and the PCA participant study."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import FacegateError, InsufficientData, LengthMismatch, SingleParticipant, make_rng
from .features import FeatureTable, featurize_slices
from .forest import Forest, ForestConfig, train_forest

log = logging.getLogger(__name__)

ELBOW_TOLERANCE = 0.005


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with FaceTouch (label 1) as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    # a rate with an empty denominator is reported as 0: no such errors were possible
    @property
    def fpr(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0

    @property
    def fnr(self) -> float:
        pos = self.fn + self.tp
        return self.fn / pos if pos else 0.0

    def as_array(self) -> np.ndarray:
        """2x2 matrix, rows = truth (NoFace, Face), cols = prediction."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])

    def to_kv(self, prefix: str = "") -> dict:
        return {f"{prefix}tp": self.tp, f"{prefix}fp": self.fp, f"{prefix}tn": self.tn,
                f"{prefix}fn": self.fn, f"{prefix}accuracy": self.accuracy,
                f"{prefix}fpr": self.fpr, f"{prefix}fnr": self.fnr}


def confusion(predictions, truths) -> ConfusionMatrix:
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    t = np.asarray(truths, dtype=np.int64).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions for {len(t)} truths")
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t != 1))),
        tn=int(np.sum((p != 1) & (t != 1))),
        fn=int(np.sum((p != 1) & (t == 1))),
    )


@dataclass
class EvalReport:
    mode: str
    matrix: ConfusionMatrix
    accuracy: float
    config: ForestConfig
    features: list[str]
    per_participant: list[tuple[str, ConfusionMatrix]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def fpr(self) -> float:
        return self.matrix.fpr

    @property
    def fnr(self) -> float:
        return self.matrix.fnr

    @property
    def fold_accuracies(self) -> list[float]:
        return [m.accuracy for _, m in self.per_participant]

    def to_kv(self) -> dict:
        d = {"mode": self.mode, "accuracy": self.accuracy, "fpr": self.fpr, "fnr": self.fnr,
             "test_rows": self.matrix.total, "n_features": len(self.features)}
        d.update(self.matrix.to_kv("matrix_"))
        d.update(self.extra)
        for name, m in self.per_participant:
            d.update(m.to_kv(f"participant_{name}_"))
        d.update({f"config_{k}": v for k, v in self.config.to_kv().items()})
        return d

    def text(self) -> str:
        m = self.matrix
        lines = [
            f"evaluation: {self.mode}",
            f"features:   {len(self.features)}",
            f"accuracy:   {self.accuracy:.4f}",
            f"FPR:        {self.fpr:.4f}",
            f"FNR:        {self.fnr:.4f}",
            "",
            "                 pred NoFace  pred Face",
            f"true NoFace      {m.tn:>11d}  {m.fp:>9d}",
            f"true Face        {m.fn:>11d}  {m.tp:>9d}",
        ]
        if self.per_participant:
            lines += ["", "participant  rows  accuracy   fpr     fnr"]
            for name, pm in self.per_participant:
                lines.append(f"{name:<11s} {pm.total:>5d}  {pm.accuracy:8.4f} {pm.fpr:7.4f} {pm.fnr:7.4f}")
        return "\n".join(lines) + "\n"


# -------------------------------------------------------------------- split

def split_indices(y, test_fraction: float = 0.2, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified random split; the test set holds ``ceil(test_fraction * n)`` rows.

    Per-class test counts are ``floor(fraction * n_c)`` topped up by largest
    remainder (ties to the lower class) until the total is reached.
    """
    y = np.asarray(y)
    n = len(y)
    if n < 5:
        raise InsufficientData(f"need at least 5 rows to split, got {n}")
    if not 0 < test_fraction < 1:
        raise InsufficientData(f"test fraction {test_fraction} leaves no rows to evaluate or train on")
    n_test = math.ceil(test_fraction * n - 1e-9)
    classes, counts = np.unique(y, return_counts=True)
    exact = test_fraction * counts
    take = np.floor(exact + 1e-9).astype(int)
    order = sorted(range(len(classes)), key=lambda i: (-(exact[i] - take[i]), i))
    for i in order[: max(0, n_test - int(take.sum()))]:
        take[i] += 1
    rng = make_rng(seed)
    test = []
    for c, k in zip(classes, take):
        members = np.flatnonzero(y == c)
        test.append(members[rng.permutation(len(members))[:k]])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(n), test)
    if len(test) == 0 or len(train) == 0:
        raise InsufficientData("split produced an empty side")
    return train, test


def split_train_test(data: FeatureTable, test_fraction: float = 0.2, seed=0) -> tuple[FeatureTable, FeatureTable]:
    train, test = split_indices(data.y, test_fraction, seed)
    return data.rows(train), data.rows(test)


# ----------------------------------------------------------- feature subsets

def top_k_features(forest: Forest, k: int) -> np.ndarray:
    """Indices of the ``k`` most important features, in original column order."""
    k = int(k)
    if not 1 <= k <= len(forest.importances):
        raise FacegateError(f"top-k must lie in 1..{len(forest.importances)}, got {k}")
    return np.sort(forest.ranking()[:k])


def _fit_predict(train: FeatureTable, test: FeatureTable, config: ForestConfig, threads=None):
    forest = train_forest(train.X, train.y, config, train.feature_names, threads=threads)
    return forest, forest.predict(test.X)


def evaluate_split(data: FeatureTable, config: ForestConfig, top_k: int | None = None,
                   test_fraction: float = 0.2, seed=0, threads=None) -> EvalReport:
    """80/20 protocol. With ``top_k`` the ranking comes from a forest fit on the training side."""
    train, test = split_train_test(data, test_fraction, seed)
    extra = {"train_rows": len(train), "train_face": int(train.y.sum()),
             "test_face": int(test.y.sum()), "test_noface": int(len(test) - test.y.sum())}
    if top_k is not None and top_k < data.X.shape[1]:
        ranker = train_forest(train.X, train.y, config, train.feature_names, threads=threads)
        cols = top_k_features(ranker, top_k)
        train, test = train.columns(cols), test.columns(cols)
    _, pred = _fit_predict(train, test, config, threads)
    m = confusion(pred, test.y)
    return EvalReport("split", m, m.accuracy, config, list(train.feature_names), extra=extra)


def leave_one_out(data: FeatureTable, config: ForestConfig, features=None, threads=None) -> EvalReport:
    """One fold per participant; overall accuracy is the unweighted fold mean."""
    parts = data.participants
    if len(parts) < 2:
        raise SingleParticipant(f"leave-one-out needs at least 2 participants, got {len(parts)}")
    if features is not None:
        data = data.columns(features)
    per = []
    total = ConfusionMatrix()
    for p in parts:
        mask = data.participant == p
        _, pred = _fit_predict(data.rows(np.flatnonzero(~mask)), data.rows(np.flatnonzero(mask)), config, threads)
        m = confusion(pred, data.y[mask])
        per.append((p, m))
        total = total + m
    mean_acc = float(np.mean([m.accuracy for _, m in per]))
    best = max(per, key=lambda pm: pm[1].accuracy)
    extra = {"best_participant": best[0], "best_accuracy": best[1].accuracy,
             "pooled_accuracy": total.accuracy}
    return EvalReport("loo", total, mean_acc, config, list(data.feature_names), per, extra)


def evaluate_loo(data: FeatureTable, config: ForestConfig, top_k: int | None = None, threads=None) -> EvalReport:
    """Leave-one-out; a top-k subset is ranked once on all rows."""
    cols = None
    if top_k is not None and top_k < data.X.shape[1]:
        ranker = train_forest(data.X, data.y, config, data.feature_names, threads=threads)
        cols = top_k_features(ranker, top_k)
    return leave_one_out(data, config, cols, threads)


# ------------------------------------------------------------------- sweeps

def elbow_pick(ks, accuracies, tolerance: float = ELBOW_TOLERANCE) -> int:
    """Smallest k whose accuracy is within ``tolerance`` of the best."""
    ks = np.asarray(ks)
    acc = np.asarray(accuracies, dtype=float)
    ok = acc >= acc.max() - tolerance - 1e-12
    return int(ks[np.flatnonzero(ok)[0]])


@dataclass
class FeatureSweep:
    ks: list[int]
    accuracies: list[float]
    elbow_k: int
    ranking: np.ndarray
    full_accuracy: float

    @property
    def elbow_accuracy(self) -> float:
        return self.accuracies[self.ks.index(self.elbow_k)]

    def table(self) -> list[tuple[int, float]]:
        return list(zip(self.ks, self.accuracies))


def sweep_feature_count(train: FeatureTable, test: FeatureTable, config: ForestConfig, step: int = 10,
                        ranking_forest: Forest | None = None, threads=None, progress=None) -> FeatureSweep:
    """Retrain on importance-ranked prefixes of size step, 2*step, ..., p.

    Prefix columns keep their original order, so ``k = p`` reproduces the
    full-feature model exactly.
    """
    p = train.X.shape[1]
    if ranking_forest is None:
        ranking_forest = train_forest(train.X, train.y, config, train.feature_names, threads=threads)
    full_acc = float(np.mean(ranking_forest.predict(test.X) == test.y))
    ranking = ranking_forest.ranking()
    ks = list(range(step, p + 1, step))
    if not ks or ks[-1] != p:
        ks.append(p)
    accs = []
    for k in ks:
        if k == p:
            accs.append(full_acc)
        else:
            cols = np.sort(ranking[:k])
            _, pred = _fit_predict(train.columns(cols), test.columns(cols), config, threads)
            accs.append(float(np.mean(pred == test.y)))
        if progress:
            progress(k, accs[-1])
    return FeatureSweep(ks, accs, elbow_pick(ks, accs), ranking, full_acc)


def sweep_window_size(sessions, sizes=(0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8), config: ForestConfig | None = None,
                      seed=0, test_fraction: float = 0.2, margin: float = 2.5, include_stance: bool = False,
                      poly: bool = True, threads=None) -> list[tuple[float, float, int]]:
    """Re-segment, re-featurise, retrain and score per window size.

    Returns ``(size, accuracy, n_windows)`` rows. The split seed and forest
    seed are fixed across sizes.
    """
    from .ingest import transition_slices

    config = config or ForestConfig()
    slices = transition_slices(sessions, margin=margin, include_stance=include_stance)
    rates = {s.sample_rate for s in sessions}
    if len(rates) != 1:
        raise FacegateError(f"sessions disagree on sample rate: {sorted(rates)}")
    rate = rates.pop()
    rows = []
    for size in sizes:
        table = featurize_slices(slices, size, rate)
        if poly:
            table = table.poly()
        report = evaluate_split(table, config, None, test_fraction, seed, threads)
        rows.append((float(size), report.accuracy, len(table)))
    return rows


# ---------------------------------------------------------------------- PCA

def _standardize(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    keep = sd > 0
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropping %d constant feature column(s) before PCA", dropped)
    Xk = X[:, keep]
    return (Xk - Xk.mean(axis=0)) / sd[keep]


def pca_variance_shares(X: np.ndarray) -> np.ndarray:
    """Eigenvalue shares of the standardised covariance matrix, descending."""
    Z = _standardize(X)
    if Z.shape[1] == 0 or len(Z) < 2:
        raise InsufficientData("PCA needs at least 2 rows and one non-constant column")
    cov = np.cov(Z, rowvar=False).reshape(Z.shape[1], Z.shape[1])
    eig = np.clip(np.linalg.eigvalsh(cov)[::-1], 0.0, None)
    return eig / eig.sum()


def pca_first_component_variance(data: FeatureTable, features=None) -> list[tuple[int, float]]:
    """First-component variance share (%) for participant prefixes 1..P, in id order."""
    if features is not None:
        data = data.columns(features)
    parts = data.participants
    if not parts:
        raise InsufficientData("no participants")
    rows = []
    for n in range(1, len(parts) + 1):
        mask = np.isin(data.participant, parts[:n])
        rows.append((n, 100.0 * float(pca_variance_shares(data.X[mask])[0])))
    return rows
