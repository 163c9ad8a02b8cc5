"""STA/LTA activity gate over the resultant-acceleration stream.

The short-term mean ``S`` covers the latest ``ceil(t_sta * rate)`` samples,
the long-term mean ``L`` the latest ``ceil(t_lta * rate)``. A sample passes
when the long buffer has filled and ``S / L > threshold``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ConfigError, DEFAULT_SAMPLE_RATE, SensorSample, as_arrays, resultant_acceleration, resultant_array


class Decision(Enum):
    BLOCKED = "Blocked"
    PASS = "Pass"


class GateMode(Enum):
    DORMANT = "Dormant"
    ACTIVE = "Active"


def window_samples(seconds: float, sample_rate: float) -> int:
    return max(1, math.ceil(seconds * sample_rate - 1e-9))


@dataclass(frozen=True)
class GateConfig:
    t_sta: float = 0.5
    t_lta: float = 30.0
    threshold: float = 1.5
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}", "sample_rate")
        if not 0 < self.t_sta < self.t_lta:
            raise ConfigError(
                f"need 0 < t_sta < t_lta, got t_sta={self.t_sta}, t_lta={self.t_lta}", "t_sta", "t_lta"
            )
        if not self.threshold > 1:
            raise ConfigError(f"threshold must exceed 1, got {self.threshold}", "threshold")
        if self.n_sta >= self.n_lta:
            raise ConfigError("short window must hold fewer samples than the long window", "t_sta", "t_lta")

    @property
    def n_sta(self) -> int:
        return window_samples(self.t_sta, self.sample_rate)

    @property
    def n_lta(self) -> int:
        return window_samples(self.t_lta, self.sample_rate)

    def to_kv(self) -> dict:
        return {"t_sta": self.t_sta, "t_lta": self.t_lta, "threshold": self.threshold,
                "sample_rate": self.sample_rate}


class GateState:
    """Ring buffer plus running sums; O(1) per sample.

    Single owner: do not step one state from several threads.
    """

    def __init__(self, config: GateConfig):
        self.config = config
        self.n_sta = config.n_sta
        self.n_lta = config.n_lta
        self.buffer = np.zeros(self.n_lta)
        self.pos = 0
        self.count = 0
        self.sum_short = 0.0
        self.sum_long = 0.0
        self.mode = GateMode.DORMANT
        self.ratio = float("nan")
        self._since_refresh = 0

    @property
    def full(self) -> bool:
        return self.count >= self.n_lta

    @property
    def short_mean(self) -> float:
        return self.sum_short / self.n_sta

    @property
    def long_mean(self) -> float:
        return self.sum_long / self.n_lta

    def _refresh(self):
        # drift control: rebuild both sums from the buffer contents
        n = min(self.count, self.n_lta)
        order = (self.pos - 1 - np.arange(n)) % self.n_lta  # newest first
        vals = self.buffer[order]
        self.sum_long = math.fsum(vals)
        self.sum_short = math.fsum(vals[: self.n_sta])
        self._since_refresh = 0

    def push(self, value: float) -> Decision:
        buf, pos = self.buffer, self.pos
        if self.count >= self.n_sta:
            self.sum_short -= buf[(pos - self.n_sta) % self.n_lta]
        if self.count >= self.n_lta:
            self.sum_long -= buf[pos]
        buf[pos] = value
        self.sum_short += value
        self.sum_long += value
        self.pos = (pos + 1) % self.n_lta
        self.count += 1
        self._since_refresh += 1
        if self._since_refresh >= self.n_lta:
            self._refresh()

        if self.count < self.n_lta:
            self.ratio = float("nan")
            self.mode = GateMode.DORMANT
            return Decision.BLOCKED
        long_mean = self.long_mean
        if long_mean <= 0:
            self.ratio = float("nan")
            self.mode = GateMode.DORMANT
            return Decision.BLOCKED
        self.ratio = self.short_mean / long_mean
        if self.ratio > self.config.threshold:
            self.mode = GateMode.ACTIVE
            return Decision.PASS
        self.mode = GateMode.DORMANT
        return Decision.BLOCKED


def gate_step(state: GateState, sample: SensorSample) -> tuple[GateState, Decision]:
    """Advance ``state`` by one sample (in place) and return it with the decision."""
    return state, state.push(resultant_acceleration(sample))


@dataclass(frozen=True)
class DutyCycleReport:
    total_samples: int
    passed_samples: int
    active_runs: int
    longest_run: int
    warmup_samples: int
    config: GateConfig

    @property
    def pass_fraction(self) -> float:
        return self.passed_samples / self.total_samples if self.total_samples else 0.0

    def to_kv(self) -> dict:
        d = {
            "total_samples": self.total_samples,
            "passed_samples": self.passed_samples,
            "pass_fraction": self.pass_fraction,
            "active_runs": self.active_runs,
            "longest_run": self.longest_run,
            "warmup_samples": self.warmup_samples,
        }
        d.update({f"gate_{k}": v for k, v in self.config.to_kv().items()})
        return d

    def text(self) -> str:
        c = self.config
        return (
            f"STA/LTA gate  t_sta={c.t_sta}s ({c.n_sta} samples)  t_lta={c.t_lta}s ({c.n_lta} samples)"
            f"  threshold={c.threshold}\n"
            f"samples          {self.total_samples}\n"
            f"passed           {self.passed_samples}\n"
            f"pass fraction    {self.pass_fraction:.4f}\n"
            f"active runs      {self.active_runs} (longest {self.longest_run} samples)\n"
            f"warm-up samples  {self.warmup_samples}\n"
        )


def pass_runs(passed: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as ``(start, stop)`` half-open index pairs."""
    p = np.asarray(passed, dtype=bool).astype(np.int8)
    edges = np.diff(np.concatenate([[0], p, [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def gate_values(values, config: GateConfig) -> np.ndarray:
    """Boolean pass mask for a resultant-acceleration sequence."""
    state = GateState(config)
    push = state.push
    return np.fromiter((push(float(v)) is Decision.PASS for v in values), dtype=bool, count=len(values))


def gate_stream(samples, config: GateConfig) -> tuple[np.ndarray, DutyCycleReport]:
    """Gate a whole stream. Returns the per-sample pass mask and duty-cycle report."""
    _, imu = as_arrays(samples)
    passed = gate_values(resultant_array(imu) if len(imu) else np.zeros(0), config)
    runs = pass_runs(passed)
    report = DutyCycleReport(
        total_samples=len(passed),
        passed_samples=int(passed.sum()),
        active_runs=len(runs),
        longest_run=max((b - a for a, b in runs), default=0),
        warmup_samples=min(len(passed), config.n_lta - 1),
        config=config,
    )
    return passed, report
