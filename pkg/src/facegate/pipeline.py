"""Streaming replay: gate -> windowing -> features -> forest, with duty-cycle accounting."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_SAMPLE_RATE, Category, ConfigError, DimensionMismatch, FacegateError, as_arrays, make_rng
from .features import N_BASE, poly_matrix, poly_size, window_length, window_stats
from .forest import Forest
from .gate import Decision, GateConfig, GateState
from .kvfile import format_value


@dataclass(frozen=True)
class AlertEvent:
    t: float
    verdict: Category
    votes: tuple[int, ...]
    pass_fraction: float

    def csv_row(self) -> str:
        return f"{format_value(self.t)},{self.verdict.value},{' '.join(map(str, self.votes))},{format_value(self.pass_fraction)}"


@dataclass
class RunReport:
    total_samples: int = 0
    passed_samples: int = 0
    windows_classified: int = 0
    alerts: int = 0
    window_samples: int = 0
    latencies: list[float] = field(default_factory=list, repr=False)

    @property
    def pass_fraction(self) -> float:
        return self.passed_samples / self.total_samples if self.total_samples else 0.0

    @property
    def invocations_per_sample(self) -> float:
        return self.windows_classified / self.total_samples if self.total_samples else 0.0

    def to_kv(self) -> dict:
        """Deterministic fields only; wall-clock timings live in :meth:`timing_kv`."""
        return {
            "total_samples": self.total_samples,
            "passed_samples": self.passed_samples,
            "pass_fraction": self.pass_fraction,
            "window_samples": self.window_samples,
            "windows_classified": self.windows_classified,
            "classifier_invocations_per_sample": self.invocations_per_sample,
            "alerts": self.alerts,
        }

    def timing_kv(self) -> dict:
        lat = np.array(self.latencies) * 1e3
        if not len(lat):
            return {"latency_windows": 0}
        return {
            "latency_windows": len(lat),
            "latency_ms_mean": float(lat.mean()),
            "latency_ms_p50": float(np.percentile(lat, 50)),
            "latency_ms_p95": float(np.percentile(lat, 95)),
            "latency_ms_max": float(lat.max()),
        }

    def text(self) -> str:
        return (
            f"samples              {self.total_samples}\n"
            f"gate pass fraction   {self.pass_fraction:.4f}\n"
            f"window length        {self.window_samples} samples\n"
            f"windows classified   {self.windows_classified}\n"
            f"classifier duty      {self.invocations_per_sample:.6f} invocations/sample\n"
            f"alerts               {self.alerts}\n"
        )


def _model_featurizer(model: Forest):
    """Map a (1, n, 6) window stack to the model's input row."""
    if model.feature_index is not None:
        if len(model.feature_index) != model.n_features:
            raise DimensionMismatch("model feature index does not match its input width")
        full = int(model.feature_index.max()) + 1
        if full > poly_size(N_BASE):
            raise DimensionMismatch(f"feature index reaches {full}, beyond {poly_size(N_BASE)} expanded features")
        return lambda w: poly_matrix(window_stats(w))[:, model.feature_index]
    if model.n_features == poly_size(N_BASE):
        return lambda w: poly_matrix(window_stats(w))
    if model.n_features == N_BASE:
        return window_stats
    raise DimensionMismatch(
        f"model takes {model.n_features} features; expected {poly_size(N_BASE)}, {N_BASE}, or an index map"
    )


def run_stream(trace, gate_config: GateConfig, model: Forest, window_seconds: float = 0.4,
               sample_rate: float | None = None, clock=time.perf_counter) -> tuple[list[AlertEvent], RunReport]:
    """Replay ``trace`` sample by sample.

    A window is classified once ``window_seconds`` of consecutive Pass
    samples have accumulated; the buffer then empties (no overlap). A
    Blocked sample discards any partial window.
    """
    rate = sample_rate or gate_config.sample_rate
    t, imu = as_arrays(trace)
    featurize = _model_featurizer(model)
    n_win = window_length(window_seconds, rate)
    state = GateState(gate_config)
    resultant = np.sqrt(np.einsum("ij,ij->i", imu[:, :3], imu[:, :3])) if len(imu) else np.zeros(0)
    report = RunReport(window_samples=n_win)
    events: list[AlertEvent] = []
    run_start = 0
    run_len = 0
    for i in range(len(t)):
        report.total_samples += 1
        if state.push(float(resultant[i])) is Decision.PASS:
            report.passed_samples += 1
            if run_len == 0:
                run_start = i
            run_len += 1
            if run_len == n_win:
                t0 = clock()
                x = featurize(imu[run_start:i + 1][None])
                votes = tuple(int(v) for v in model.votes(x)[0])
                report.latencies.append(clock() - t0)
                report.windows_classified += 1
                verdict = Category.from_code(int(np.argmax(votes)))
                if verdict is Category.FACE_TOUCH:
                    report.alerts += 1
                    events.append(AlertEvent(float(t[i]), verdict, votes, report.pass_fraction))
                run_len = 0
        else:
            run_len = 0
    return events, report


# ------------------------------------------------------------ synthetic traces

KINDS = ("rest", "swing", "burst")


@dataclass(frozen=True)
class TraceSegment:
    """``rest``: constant ``amplitude`` on az. ``swing``: sinusoid of
    ``amplitude`` on ax (cosine on gy). ``burst``: Hann-windowed sinusoid
    of ``amplitude`` on ax (cosine on gx)."""

    duration: float
    kind: str
    amplitude: float
    frequency: float = 2.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"segment duration must be positive, got {self.duration}", "duration")
        if self.kind not in KINDS:
            raise ConfigError(f"segment kind must be one of {KINDS}, got {self.kind!r}", "kind")


def parse_trace_spec(text: str) -> list[TraceSegment]:
    """One segment per line: ``duration kind amplitude [frequency]``; ``#`` comments."""
    segs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) not in (3, 4):
            raise FacegateError(f"trace spec line {lineno}: expected 'duration kind amplitude [frequency]'")
        segs.append(TraceSegment(float(parts[0]), parts[1], float(parts[2]),
                                 *([float(parts[3])] if len(parts) == 4 else [])))
    return segs


def synth_trace(spec, seed=0, sample_rate: float = DEFAULT_SAMPLE_RATE, noise: float = 0.02,
                gravity: float = 0.0) -> np.ndarray:
    """Concatenate parameterised segments into an ``(n, 7)`` array ``[t, ax..gz]``.

    Each segment gets Gaussian noise with standard deviation
    ``noise * amplitude``; ``gravity`` is a constant added to az throughout.
    """
    rng = make_rng(seed)
    parts = []
    for seg in spec:
        if not isinstance(seg, TraceSegment):
            seg = TraceSegment(*seg)
        n = max(1, int(round(seg.duration * sample_rate)))
        tt = np.arange(n) / sample_rate
        block = np.zeros((n, 6))
        a = seg.amplitude
        phase = 2 * np.pi * seg.frequency * tt
        if seg.kind == "rest":
            block[:, 2] = a
        elif seg.kind == "swing":
            block[:, 0] = a * np.sin(phase)
            block[:, 4] = a * np.cos(phase)
        else:
            w = np.hanning(n) if n > 1 else np.ones(1)
            block[:, 0] = a * w * np.sin(phase)
            block[:, 3] = a * w * np.cos(phase)
        block += rng.normal(0.0, 1.0, size=block.shape) * (noise * abs(a))
        parts.append(block)
    imu = np.concatenate(parts) if parts else np.zeros((0, 6))
    imu[:, 2] += gravity
    t = np.arange(len(imu)) / sample_rate
    return np.column_stack([t, imu])


def embed_window(trace: np.ndarray, window_imu: np.ndarray, at: int) -> np.ndarray:
    """Copy of ``trace`` with ``window_imu`` written over samples ``at:at+len``."""
    out = np.array(trace, dtype=float, copy=True)
    out[at:at + len(window_imu), 1:] = window_imu
    return out
