"""Windowing, the 54 per-window statistics, and degree-2 polynomial expansion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    CHANNELS, DEFAULT_SAMPLE_RATE, ActivityLabel, Category, FacegateError, LabeledSlice,
    NonFiniteFeature, WindowTooShort, iter_labels,
)

STATS = ("min", "max", "mean", "q25", "q75", "std", "skew", "kurt", "autocorr")
N_BASE = len(STATS) * len(CHANNELS)  # 54


def base_feature_names() -> list[str]:
    return [f"{ch}_{st}" for ch in CHANNELS for st in STATS]


def poly_size(n: int) -> int:
    return (n + 1) * (n + 2) // 2


def poly_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Factor indices of the pair terms, ``i <= j`` in lexicographic order."""
    return np.triu_indices(n)


def poly_feature_names(names: Sequence[str]) -> list[str]:
    ii, jj = poly_pairs(len(names))
    pairs = [f"{names[i]}^2" if i == j else f"{names[i]}*{names[j]}" for i, j in zip(ii, jj)]
    return ["1", *names, *pairs]


def window_length(window_seconds: float, sample_rate: float = DEFAULT_SAMPLE_RATE) -> int:
    if not window_seconds > 0:
        raise FacegateError(f"window length must be positive, got {window_seconds}")
    # tolerance keeps e.g. 0.3 * 102.4 from flooring one sample short
    n = int(math.floor(window_seconds * sample_rate + 1e-9))
    if n < 2:
        raise WindowTooShort(f"{window_seconds}s at {sample_rate} Hz gives {n} sample(s); need at least 2")
    return n


# ------------------------------------------------------------------ windows

@dataclass(frozen=True)
class WindowInstance:
    imu: np.ndarray  # (n, 6)
    label: Category
    participant: str = ""
    activity: ActivityLabel | None = None
    t_end: float = float("nan")
    session_id: str = ""

    def __len__(self):
        return len(self.imu)


def segment(slice_, window_seconds: float = 0.4, sample_rate: float = DEFAULT_SAMPLE_RATE) -> list[WindowInstance]:
    """Cut a slice into consecutive non-overlapping windows; the remainder is dropped."""
    n = window_length(window_seconds, sample_rate)
    if isinstance(slice_, LabeledSlice):
        imu, t = slice_.imu, slice_.t
        label, participant, activity, sid = (
            slice_.label.category, slice_.participant, slice_.label, slice_.session_id)
    else:
        imu = np.asarray(slice_, dtype=float)
        t = np.arange(len(imu)) / sample_rate
        label, participant, activity, sid = Category.NO_FACE_TOUCH, "", None, ""
    if n < 1:
        return []
    out = []
    for k in range(len(imu) // n):
        a, b = k * n, (k + 1) * n
        out.append(WindowInstance(imu[a:b], label, participant, activity, float(t[b - 1]), sid))
    return out


# ----------------------------------------------------------------- features

@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...] = field(default_factory=lambda: tuple(base_feature_names()))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.values[self.names.index(key)]
        return self.values[key]


@dataclass(frozen=True)
class PolyFeatureVector:
    values: np.ndarray
    n_base: int = N_BASE

    def __len__(self):
        return len(self.values)

    def __getitem__(self, key):
        return self.values[key]

    def pair(self, i: int, j: int) -> float:
        return float(self.values[pair_index(self.n_base, i, j)])

    @property
    def names(self) -> list[str]:
        return poly_feature_names(base_feature_names() if self.n_base == N_BASE
                                  else [f"f{i}" for i in range(self.n_base)])


def pair_index(n: int, i: int, j: int) -> int:
    """Position of the ``(i, j)`` product in an expansion of ``n`` features."""
    if i > j:
        i, j = j, i
    # pairs before row i: n + (n-1) + ... + (n-i+1)
    return 1 + n + i * n - i * (i - 1) // 2 + (j - i)


def window_stats(windows: np.ndarray) -> np.ndarray:
    """Nine statistics per channel for a stack of windows.

    ``windows`` has shape ``(W, N, C)``; the result is ``(W, C * 9)`` in
    channel-major order. Moments are population moments; skewness,
    kurtosis and autocorrelation are 0 on a constant channel (skewness and
    kurtosis also when the variance underflows), and the lag-1
    autocorrelation is 0 whenever either lagged series is constant.
    """
    x = np.asarray(windows, dtype=float)
    if x.ndim != 3:
        raise FacegateError(f"expected (windows, samples, channels), got shape {x.shape}")
    w, n, c = x.shape
    if n < 2:
        raise WindowTooShort(f"window needs at least 2 samples, got {n}")
    mn = x.min(axis=1)
    mx = x.max(axis=1)
    const = mx == mn
    mean = x.mean(axis=1)
    mean = np.where(const, mn, mean)
    q25, q75 = np.quantile(x, [0.25, 0.75], axis=1)

    dev = x - mean[:, None, :]
    dev2 = dev * dev
    m2 = dev2.mean(axis=1)
    m3 = (dev2 * dev).mean(axis=1)
    m4 = (dev2 * dev2).mean(axis=1)
    m2 = np.where(const, 0.0, m2)
    std = np.sqrt(m2)
    # variance so small its square underflows is treated like a constant channel
    flat = const | (m2 * m2 == 0)
    safe = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe ** 1.5)
    kurt = np.where(flat, 0.0, m4 / (safe * safe))

    a, b = x[:, :-1, :], x[:, 1:, :]
    a_const = a.max(axis=1) == a.min(axis=1)
    b_const = b.max(axis=1) == b.min(axis=1)
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    num = (da * db).sum(axis=1)
    den = np.sqrt((da * da).sum(axis=1) * (db * db).sum(axis=1))
    degenerate = a_const | b_const | (den == 0)
    ac = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, den))

    stats = np.stack([mn, mx, mean, q25, q75, std, skew, kurt, ac], axis=2)  # (W, C, 9)
    return stats.reshape(w, c * len(STATS))


def base_features(w) -> FeatureVector:
    imu = w.imu if isinstance(w, WindowInstance) else np.asarray(w, dtype=float)
    if imu.ndim != 2 or imu.shape[1] != len(CHANNELS):
        raise FacegateError(f"window must be (n, 6), got {imu.shape}")
    if len(imu) < 2:
        raise WindowTooShort(f"window needs at least 2 samples, got {len(imu)}")
    return FeatureVector(window_stats(imu[None])[0])


def poly_matrix(x: np.ndarray) -> np.ndarray:
    """Row-wise degree-2 expansion: bias, linear terms, then pair products."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return poly_matrix(x[None])[0]
    if not np.all(np.isfinite(x)):
        raise NonFiniteFeature("polynomial expansion needs finite inputs")
    ii, jj = poly_pairs(x.shape[1])
    return np.concatenate([np.ones((len(x), 1)), x, x[:, ii] * x[:, jj]], axis=1)


def poly_expand(f) -> PolyFeatureVector:
    values = f.values if isinstance(f, FeatureVector) else np.asarray(f, dtype=float)
    return PolyFeatureVector(poly_matrix(values), n_base=len(values))


# ------------------------------------------------------------ feature tables

@dataclass
class FeatureTable:
    """Rows of features with labels (1 = FaceTouch) and provenance columns."""

    X: np.ndarray
    y: np.ndarray
    participant: np.ndarray
    activity: np.ndarray
    feature_names: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), -1)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.participant = np.asarray(self.participant, dtype=object)
        self.activity = np.asarray(self.activity, dtype=object)
        if not (len(self.X) == len(self.participant) == len(self.activity)):
            raise FacegateError("feature table columns differ in length")
        if self.X.shape[1] != len(self.feature_names):
            raise FacegateError(
                f"{self.X.shape[1]} feature columns but {len(self.feature_names)} names"
            )

    def __len__(self):
        return len(self.y)

    @property
    def participants(self) -> list[str]:
        return sorted(set(self.participant.tolist()), key=_natural_key)

    def rows(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(self.X[idx], self.y[idx], self.participant[idx], self.activity[idx],
                            list(self.feature_names))

    def columns(self, idx) -> "FeatureTable":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureTable(self.X[:, idx], self.y, self.participant, self.activity,
                            [self.feature_names[i] for i in idx])

    def poly(self) -> "FeatureTable":
        if len(self.feature_names) and self.feature_names[0] == "1":
            return self
        return FeatureTable(poly_matrix(self.X), self.y, self.participant, self.activity,
                            poly_feature_names(self.feature_names))


def _natural_key(s: str):
    import re
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", str(s))]


def featurize_windows(windows: Sequence[WindowInstance]) -> FeatureTable:
    names = base_feature_names()
    if not windows:
        return FeatureTable(np.zeros((0, len(names))), np.zeros(0, np.int64), [], [], names)
    n = len(windows[0])
    if any(len(w) != n for w in windows):
        raise FacegateError("windows differ in length")
    X = window_stats(np.stack([w.imu for w in windows]))
    y = np.array([w.label.code for w in windows], dtype=np.int64)
    part = [w.participant for w in windows]
    act = [w.activity.activity.value if w.activity else "" for w in windows]
    return FeatureTable(X, y, part, act, names)


def featurize_slices(slices, window_seconds: float = 0.4, sample_rate: float = DEFAULT_SAMPLE_RATE) -> FeatureTable:
    windows = [w for s in slices for w in segment(s, window_seconds, sample_rate)]
    return featurize_windows(windows)


def write_feature_csv(table: FeatureTable, path, poly: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = table.poly() if poly else table
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant", "activity", "label", *t.feature_names])
        for i in range(len(t)):
            w.writerow([t.participant[i], t.activity[i], Category.from_code(t.y[i]).value,
                        *(repr(float(v)) for v in t.X[i])])
    return path


def read_feature_csv(path) -> FeatureTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["participant", "activity", "label"]:
            raise FacegateError(f"{path}: expected header participant,activity,label,...")
        names = header[3:]
        part, act, lab, rows = [], [], [], []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise FacegateError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            part.append(row[0])
            act.append(row[1])
            lab.append(row[2])
            rows.append([float(v) for v in row[3:]])
    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return FeatureTable(X, iter_labels(lab), part, act, names)
