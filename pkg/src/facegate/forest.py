"""CART decision trees and a random forest, grown from scratch on numpy.

Splits minimise weighted Gini impurity over midpoints between consecutive
distinct values; samples with ``x <= threshold`` go left. Ties go to the
lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

import hashlib
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    ConfigError, CorruptModel, DimensionMismatch, FacegateError, InsufficientData,
    UnsupportedVersion, check_seed, derive_seed, make_rng, spawn_rngs,
)
from .kvfile import format_value, to_bool, to_optional_int

MODEL_MAGIC = "facegate-model"
MODEL_VERSION = 1
CLASS_NAMES = ("NoFaceTouch", "FaceTouch")
_TIE_RTOL = 1e-12


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("FACEGATE_THREADS", "1")))
    except ValueError:
        return 1


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 150
    max_depth: int | None = 10
    min_samples_leaf: int = 5
    min_samples_split: int = 20
    bootstrap: bool = False
    max_features: int | float | str = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if int(self.n_trees) < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}", "n_trees")
        if self.max_depth is not None and int(self.max_depth) < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}", "max_depth")
        if int(self.min_samples_leaf) < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}", "min_samples_leaf")
        if int(self.min_samples_split) < 2 * int(self.min_samples_leaf):
            raise ConfigError(
                f"min_samples_split ({self.min_samples_split}) must be at least "
                f"2 * min_samples_leaf ({self.min_samples_leaf})",
                "min_samples_split", "min_samples_leaf",
            )
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("sqrt", "log2", "all"):
                raise ConfigError(f"max_features must be sqrt, log2, all, a count or a fraction, got {mf!r}",
                                  "max_features")
        elif isinstance(mf, float) and not 0 < mf <= 1:
            raise ConfigError(f"fractional max_features must lie in (0, 1], got {mf}", "max_features")
        elif isinstance(mf, int) and mf < 1:
            raise ConfigError(f"max_features must be >= 1, got {mf}", "max_features")
        check_seed(self.seed)

    def features_per_split(self, p: int) -> int:
        mf = self.max_features
        if mf == "all":
            k = p
        elif mf == "sqrt":
            k = int(math.sqrt(p))
        elif mf == "log2":
            k = int(math.log2(p)) if p > 1 else 1
        elif isinstance(mf, float):
            k = int(mf * p)
        else:
            k = int(mf)
        return max(1, min(p, k))

    def to_kv(self) -> dict:
        return asdict(self)

    @classmethod
    def from_kv(cls, values: dict) -> "ForestConfig":
        kw = {}
        for key, raw in values.items():
            try:
                if key in ("n_trees", "min_samples_leaf", "min_samples_split"):
                    kw[key] = int(raw)
                elif key == "max_depth":
                    kw[key] = to_optional_int(raw)
                elif key == "bootstrap":
                    kw[key] = to_bool(raw)
                elif key == "seed":
                    kw[key] = int(raw)
                elif key == "max_features":
                    kw[key] = parse_max_features(raw)
                else:
                    raise ConfigError(f"unknown forest parameter {key!r}", key)
            except (TypeError, ValueError, FacegateError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key}: {raw!r}", key) from None
        return cls(**kw)


def parse_max_features(raw):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return raw
    s = str(raw).strip().lower()
    if s in ("sqrt", "log2", "all"):
        return s
    if s in ("none",):
        return "all"
    if any(ch in s for ch in ".e"):
        return float(s)
    return int(s)


# ------------------------------------------------------------------- trees

@dataclass
class Tree:
    """Flat preorder node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (nodes, n_classes)
    depth: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_samples(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def max_depth(self) -> int:
        return int(self.depth[self.is_leaf].max())

    def leaf_class(self) -> np.ndarray:
        """Majority class per node (ties to the lower class index)."""
        return np.argmax(self.counts, axis=1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_class()[self.apply(X)]

    def impurity_decrease(self) -> np.ndarray:
        """Unnormalised Gini decrease per feature, weighted by node size."""
        n = self.n_samples.astype(float)
        total = n[0]
        gini = 1.0 - np.sum((self.counts / np.maximum(n, 1)[:, None]) ** 2, axis=1)
        out = np.zeros(self.n_features)
        for i in np.flatnonzero(self.feature >= 0):
            l, r = self.left[i], self.right[i]
            dec = (n[i] * gini[i] - n[l] * gini[l] - n[r] * gini[r]) / total
            out[self.feature[i]] += max(dec, 0.0)
        return out


def _best_split(XT, y, idx, feats, n_classes, min_leaf):
    """Best (feature, threshold, score) over ``feats`` for rows ``idx``, or None.

    ``XT`` is the feature-major (transposed) design matrix. ``score`` is
    sum_k cl_k^2/nl + sum_k cr_k^2/nr; maximising it minimises the weighted
    child Gini impurity. Sort order among equal values is irrelevant: splits
    only fall between distinct values, where cumulative counts agree.
    """
    n = len(idx)
    lo, hi = min_leaf - 1, n - min_leaf - 1  # split after sorted position r: left size r + 1
    if lo > hi:
        return None
    V = XT[feats[:, None], idx[None, :]]
    order = np.argsort(V, axis=1)
    Vs = np.take_along_axis(V, order, axis=1)
    valid = Vs[:, lo + 1:hi + 2] > Vs[:, lo:hi + 1]
    if not valid.any():
        return None
    ys = y[idx][order]
    nl = np.arange(lo + 1, hi + 2, dtype=float)
    nr = n - nl
    if n_classes == 2:
        cum = np.cumsum(ys, axis=1)
        cl1 = cum[:, lo:hi + 1].astype(float)
        cr1 = cum[:, -1:] - cl1
        cl0 = nl - cl1
        cr0 = nr - cr1
        score = (cl0 * cl0 + cl1 * cl1) / nl + (cr0 * cr0 + cr1 * cr1) / nr
    else:
        score = np.zeros(valid.shape)
        for k in range(n_classes):
            cum = np.cumsum(ys == k, axis=1, dtype=np.int64)
            cl = cum[:, lo:hi + 1].astype(float)
            cr = cum[:, -1:] - cl
            score += cl * cl / nl + cr * cr / nr
    score = np.where(valid, score, -np.inf)
    best = score.max()
    ties = score >= best - _TIE_RTOL * abs(best)
    row = int(np.argmax(ties.any(axis=1)))  # feats are sorted: lowest feature index
    col = int(np.argmax(ties[row]))         # lowest threshold within that feature
    a, b = Vs[row, lo + col], Vs[row, lo + col + 1]
    thr = a / 2.0 + b / 2.0
    if not a <= thr < b:
        thr = a
    return int(feats[row]), float(thr), float(score[row, col])


def train_tree(X, y, config: ForestConfig, rng, n_classes: int = 2, rows=None, XT=None) -> Tree:
    """Grow one CART tree greedily.

    At each node ``features_per_split`` candidate features are drawn without
    replacement. If none of them admits a valid split, further candidates
    are drawn from the remaining features before the node becomes a leaf.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n_rows, p = X.shape
    if n_rows < config.min_samples_split:
        raise InsufficientData(
            f"{n_rows} training rows, need at least min_samples_split={config.min_samples_split}"
        )
    rng = make_rng(rng)
    m = config.features_per_split(p)
    max_depth = config.max_depth if config.max_depth is not None else 1 << 30
    min_leaf, min_split = config.min_samples_leaf, config.min_samples_split
    all_feats = np.arange(p)
    if XT is None:
        XT = np.ascontiguousarray(X.T)

    feature, threshold, left, right, counts, depth = [], [], [], [], [], []
    root_rows = np.arange(n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
    stack = [(root_rows, 0, -1, False)]
    while stack:
        idx, d, parent, is_right = stack.pop()
        node = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        c = np.bincount(y[idx], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(c)
        depth.append(d)
        n = len(idx)
        if d >= max_depth or n < min_split or n < 2 * min_leaf or np.count_nonzero(c) <= 1:
            continue
        split = None
        if m >= p:
            split = _best_split(XT, y, idx, all_feats, n_classes, min_leaf)
        else:
            perm = rng.permutation(p)
            for start in range(0, p, m):
                feats = np.sort(perm[start:start + m])
                split = _best_split(XT, y, idx, feats, n_classes, min_leaf)
                if split is not None:
                    break
        if split is None:
            continue
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        # push right first so the left subtree is numbered first (preorder)
        stack.append((idx[~go_left], d + 1, node, True))
        stack.append((idx[go_left], d + 1, node, False))

    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        counts=np.array(counts, dtype=np.int64).reshape(-1, n_classes),
        depth=np.array(depth, dtype=np.int64),
        n_features=p,
    )


# ------------------------------------------------------------------ forest

@dataclass
class Forest:
    trees: list[Tree]
    importances: np.ndarray
    config: ForestConfig
    feature_names: list[str]
    n_classes: int = 2
    # positions of the model's inputs within the full expanded vector, if a subset
    feature_index: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features if self.trees else len(self.feature_names)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def votes(self, X) -> np.ndarray:
        X = self._check(X)
        out = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(out, (rows, tree.predict(X)), 1)
        return out

    def predict(self, X) -> np.ndarray:
        """Plurality vote per row; ties go to the lower class index."""
        return np.argmax(self.votes(X), axis=1)

    def predict_one(self, x) -> tuple[int, tuple[int, ...]]:
        v = self.votes(np.asarray(x, dtype=float).reshape(1, -1))[0]
        return int(np.argmax(v)), tuple(int(c) for c in v)

    def select(self, x_full: np.ndarray) -> np.ndarray:
        """Pick this model's inputs out of a full expanded feature vector/matrix."""
        x_full = np.asarray(x_full, dtype=float)
        if self.feature_index is None:
            return x_full
        return x_full[..., self.feature_index]

    def ranking(self) -> np.ndarray:
        """Feature indices by importance, descending; ties to the lower index."""
        return np.lexsort((np.arange(len(self.importances)), -self.importances))


def _aggregate_importances(trees: Sequence[Tree], p: int) -> np.ndarray:
    acc = np.zeros(p)
    split_counts = np.zeros(p)
    for tree in trees:
        dec = tree.impurity_decrease()
        s = dec.sum()
        if s > 0:
            acc += dec / s
        split_counts += np.bincount(tree.feature[tree.feature >= 0], minlength=p)
    total = acc.sum()
    if total > 0:
        return acc / total
    # splits that never lowered impurity: fall back to split frequency
    if split_counts.sum() > 0:
        return split_counts / split_counts.sum()
    return acc


def train_forest(X, y, config: ForestConfig | None = None, feature_names=None, threads: int | None = None,
                 n_classes: int | None = None) -> Forest:
    """Train ``config.n_trees`` trees, each on its own seeded substream."""
    config = config or ForestConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch(f"X {X.shape} and y {y.shape} disagree")
    if len(y) < config.min_samples_split:
        raise InsufficientData(f"{len(y)} rows, need at least {config.min_samples_split}")
    if y.min(initial=0) < 0:
        raise FacegateError("labels must be non-negative class indices")
    k = n_classes or max(2, int(y.max()) + 1)
    rngs = spawn_rngs(config.seed, config.n_trees)
    XT = np.ascontiguousarray(X.T)

    def grow(i):
        rng = rngs[i]
        rows = rng.integers(0, len(y), len(y)) if config.bootstrap else None
        return train_tree(X, y, config, rng, n_classes=k, rows=rows, XT=XT)

    threads = threads or default_threads()
    if threads > 1 and config.n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, range(config.n_trees)))
    else:
        trees = [grow(i) for i in range(config.n_trees)]
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise DimensionMismatch(f"{len(names)} feature names for {X.shape[1]} columns")
    return Forest(trees, _aggregate_importances(trees, X.shape[1]), config, names, k)


def predict(forest: Forest, x) -> tuple[int, tuple[int, ...]]:
    return forest.predict_one(x)


def accuracy(forest: Forest, X, y) -> float:
    y = np.asarray(y)
    return float(np.mean(forest.predict(X) == y)) if len(y) else float("nan")


# ------------------------------------------------------------ cross-validation

def stratified_folds(y, k: int, seed) -> list[np.ndarray]:
    """Test-row indices for ``k`` stratified folds (each class dealt round-robin)."""
    y = np.asarray(y)
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}", "folds")
    classes, counts = np.unique(y, return_counts=True)
    if len(y) < k or counts.min() < 1:
        raise InsufficientData(f"{len(y)} rows cannot fill {k} folds")
    rng = make_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(len(members))]
        for j, row in enumerate(members):
            folds[(offset + j) % k].append(int(row))
        offset += len(members)
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def cross_val_accuracy(X, y, config: ForestConfig, k: int = 5, seed=0, threads=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    scores = []
    for test in stratified_folds(y, k, seed):
        train = np.setdiff1d(np.arange(len(y)), test)
        if len(train) < config.min_samples_split or len(test) == 0:
            raise InsufficientData("fold too small for the configured min_samples_split")
        forest = train_forest(X[train], y[train], config, threads=threads,
                              n_classes=max(2, int(y.max()) + 1))
        scores.append(accuracy(forest, X[test], y[test]))
    return np.array(scores)


DEFAULT_GRID = {
    "n_trees": [50, 100, 150, 200],
    "max_depth": [5, 10, 15, None],
    "min_samples_leaf": [1, 5, 10],
    "min_samples_split": [2, 10, 20, 40],
    "bootstrap": [True, False],
}


@dataclass(frozen=True)
class SearchSpace:
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    n_draws: int = 25
    folds: int = 5
    seed: int = 0
    base: ForestConfig = field(default_factory=ForestConfig)

    def __post_init__(self):
        if self.n_draws < 1:
            raise ConfigError("n_draws must be >= 1", "draws")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2", "folds")
        for key, values in self.grid.items():
            if key not in ForestConfig.__dataclass_fields__ or key == "seed":
                raise ConfigError(f"cannot search over {key!r}", key)
            if not values:
                raise ConfigError(f"empty candidate list for {key}", key)
        check_seed(self.seed)

    def candidates(self) -> list[ForestConfig]:
        """Every valid configuration in the grid, in product order."""
        keys = list(self.grid)
        out = []
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            try:
                out.append(replace(self.base, **dict(zip(keys, combo))))
            except ConfigError:
                continue
        if not out:
            raise ConfigError("search space contains no valid configuration", *keys)
        return out

    def draw(self) -> list[ForestConfig]:
        """``n_draws`` configurations sampled uniformly without replacement."""
        cands = self.candidates()
        rng = make_rng(derive_seed(self.seed, 1))
        if self.n_draws >= len(cands):
            order = rng.permutation(len(cands))
        else:
            order = rng.choice(len(cands), size=self.n_draws, replace=False)
        return [cands[i] for i in order]


@dataclass(frozen=True)
class SearchRow:
    config: ForestConfig
    mean: float
    std: float
    scores: tuple[float, ...]


def randomized_search(X, y, space: SearchSpace, threads=None) -> tuple[ForestConfig, list[SearchRow]]:
    """Score drawn configurations by stratified k-fold CV; best mean wins, ties to the earlier draw.

    All draws share one fold assignment and forest seed so rows differ only
    in hyperparameters.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    fold_seed = derive_seed(space.seed, 2)
    forest_seed = derive_seed(space.seed, 3)
    table = []
    for cfg in space.draw():
        cfg = replace(cfg, seed=forest_seed)
        scores = cross_val_accuracy(X, y, cfg, space.folds, fold_seed, threads)
        table.append(SearchRow(cfg, float(scores.mean()), float(scores.std()), tuple(float(s) for s in scores)))
    best = max(range(len(table)), key=lambda i: (table[i].mean, -i))
    return table[best].config, table


# ----------------------------------------------------------- serialization

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_model(forest: Forest) -> str:
    if not forest.trees:
        raise FacegateError("a forest with no trees cannot be saved")
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}"]
    for key, value in forest.config.to_kv().items():
        lines.append(f"config {key} {format_value(value)}")
    lines.append(f"n_classes {forest.n_classes}")
    lines.append("classes " + " ".join(CLASS_NAMES[:forest.n_classes]
                                       if forest.n_classes <= len(CLASS_NAMES)
                                       else [str(i) for i in range(forest.n_classes)]))
    lines.append(f"n_features {forest.n_features}")
    for i, name in enumerate(forest.feature_names):
        lines.append(f"feature {i} {name}")
    if forest.feature_index is not None:
        lines.append("feature_index " + " ".join(str(int(i)) for i in forest.feature_index))
    lines.append("importances " + " ".join(_fmt(v) for v in forest.importances))
    lines.append(f"n_trees {len(forest.trees)}")
    for t_id, tree in enumerate(forest.trees):
        lines.append(f"tree {t_id} {tree.n_nodes}")
        for i in range(tree.n_nodes):
            counts = " ".join(str(int(c)) for c in tree.counts[i])
            lines.append(
                f"node {i} {int(tree.feature[i])} {_fmt(tree.threshold[i])} "
                f"{int(tree.left[i])} {int(tree.right[i])} {int(tree.depth[i])} {counts}"
            )
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return body + f"checksum sha256 {digest}\n"


def save_model(forest: Forest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_model(forest), encoding="utf-8")
    return path


def loads_model(text: str) -> Forest:
    first = text.split("\n", 1)[0].split()
    if len(first) != 2 or first[0] != MODEL_MAGIC:
        raise CorruptModel("not a facegate model file")
    if first[1] != str(MODEL_VERSION):
        raise UnsupportedVersion(f"model format version {first[1]!r}; this build reads {MODEL_VERSION}")
    marker = text.rfind("checksum sha256 ")
    if marker < 0:
        raise CorruptModel("checksum line missing (truncated file?)")
    body, tail = text[:marker], text[marker:].split()
    if len(tail) != 3 or hashlib.sha256(body.encode("utf-8")).hexdigest() != tail[2]:
        raise CorruptModel("checksum mismatch")
    try:
        return _parse_model(body.splitlines())
    except (ValueError, IndexError, KeyError) as exc:
        raise CorruptModel(f"unparseable model: {exc}") from None


def _parse_model(lines: list[str]) -> Forest:
    cfg: dict[str, str] = {}
    names: list[str] = []
    feature_index = None
    importances = None
    n_classes = 2
    trees: list[Tree] = []
    n_features = 0
    i = 1
    while i < len(lines):
        head, _, rest = lines[i].partition(" ")
        if head == "config":
            k, _, v = rest.partition(" ")
            cfg[k] = v
        elif head == "n_classes":
            n_classes = int(rest)
        elif head == "n_features":
            n_features = int(rest)
        elif head == "feature":
            _, _, name = rest.partition(" ")
            names.append(name)
        elif head == "feature_index":
            feature_index = np.array([int(v) for v in rest.split()], dtype=np.int64)
        elif head == "importances":
            importances = np.array([float(v) for v in rest.split()])
        elif head == "tree":
            _, n_nodes = rest.split()
            n_nodes = int(n_nodes)
            rows = [lines[i + 1 + j].split() for j in range(n_nodes)]
            if any(r[0] != "node" for r in rows):
                raise ValueError("node record expected")
            trees.append(Tree(
                feature=np.array([int(r[2]) for r in rows], dtype=np.int64),
                threshold=np.array([float(r[3]) for r in rows]),
                left=np.array([int(r[4]) for r in rows], dtype=np.int64),
                right=np.array([int(r[5]) for r in rows], dtype=np.int64),
                depth=np.array([int(r[6]) for r in rows], dtype=np.int64),
                counts=np.array([[int(c) for c in r[7:7 + n_classes]] for r in rows],
                                dtype=np.int64).reshape(n_nodes, n_classes),
                n_features=n_features,
            ))
            i += n_nodes
        i += 1
    if not trees:
        raise ValueError("no trees")
    config = ForestConfig.from_kv(cfg)
    return Forest(trees, importances, config, names, n_classes, feature_index)


def load_model(path) -> Forest:
    path = Path(path)
    return loads_model(path.read_text(encoding="utf-8"))
