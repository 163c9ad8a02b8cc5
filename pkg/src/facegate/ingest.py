"""Sensor CSV and annotation parsing, edge trimming and transition extraction.

Annotation files use a fixed seven-column schema::

    session_id,participant,activity,stance,phase,start,end

with one row per phase interval. Sessions without intervals (stance
recordings) carry a single row whose ``phase/start/end`` cells are empty.
Interval times are seconds on the same clock as the sensor timestamps
(after ``time_scale``), unless the mapping sets ``annotation_clock=relative``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    CHANNELS, DEFAULT_SAMPLE_RATE, ActivityLabel, FacegateError, LabeledSlice, MalformedRow,
    MissingColumn, Phase, PhaseInterval, Session, SessionTooShort, TimestampOrderViolation,
    ConfigError, validate_session,
)
from .kvfile import format_value, read_kv, to_bool

log = logging.getLogger(__name__)

COLUMNS = ("t",) + CHANNELS
ANNOTATION_HEADER = ("session_id", "participant", "activity", "stance", "phase", "start", "end")
SESSION_MAGIC = "# facegate-session v1"


@dataclass(frozen=True)
class ColumnMapping:
    """Where each channel lives in a sensor CSV.

    Columns are header names, or zero-based integer indices when
    ``header`` is false (indices also work with a header).
    """

    t: str | int = "t"
    ax: str | int = "ax"
    ay: str | int = "ay"
    az: str | int = "az"
    gx: str | int = "gx"
    gy: str | int = "gy"
    gz: str | int = "gz"
    delimiter: str = ","
    header: bool = True
    time_scale: float = 1.0
    sample_rate: float = DEFAULT_SAMPLE_RATE
    annotation_clock: str = "absolute"

    def __post_init__(self):
        cols = [self.column(c) for c in COLUMNS]
        if len(set(cols)) != len(cols):
            raise ConfigError("channel columns must be distinct", *COLUMNS)
        if not self.header and not all(isinstance(c, int) for c in cols):
            raise ConfigError("headerless files need integer column indices", "header")
        if len(self.delimiter) != 1:
            raise ConfigError("delimiter must be a single character", "delimiter")
        if not self.time_scale > 0:
            raise ConfigError("time_scale must be positive", "time_scale")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be positive", "sample_rate")
        if self.annotation_clock not in ("absolute", "relative"):
            raise ConfigError("annotation_clock is 'absolute' or 'relative'", "annotation_clock")

    def column(self, name: str):
        value = getattr(self, name)
        if isinstance(value, str) and value.strip().lstrip("-").isdigit():
            return int(value)
        return value

    @classmethod
    def from_kv(cls, values: dict) -> "ColumnMapping":
        kw = {}
        for key, raw in values.items():
            if key in COLUMNS:
                kw[key] = raw
            elif key == "delimiter":
                kw[key] = {"tab": "\t", "\\t": "\t", "comma": ",", "semicolon": ";", "space": " "}.get(raw, raw)
            elif key == "header":
                kw[key] = to_bool(raw)
            elif key in ("time_scale", "sample_rate"):
                kw[key] = float(raw)
            elif key == "annotation_clock":
                kw[key] = raw
            else:
                raise ConfigError(f"unknown mapping key {key!r}", key)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ColumnMapping":
        return cls.from_kv(read_kv(path))

    def to_kv(self) -> dict:
        d = {c: getattr(self, c) for c in COLUMNS}
        d.update(delimiter=self.delimiter, header=self.header, time_scale=self.time_scale,
                 sample_rate=self.sample_rate, annotation_clock=self.annotation_clock)
        return d


@dataclass(frozen=True)
class AnnotationRecord:
    session_id: str
    participant: str
    label: ActivityLabel
    phases: tuple[PhaseInterval, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.label.activity.has_phases and not self.phases:
            raise FacegateError(
                f"session {self.session_id}: {self.label.activity.value} needs at least one phase interval"
            )


def load_annotations(path) -> dict[str, AnnotationRecord]:
    """Read an annotation CSV into records keyed by session id (file order)."""
    path = Path(path)
    grouped: dict[str, dict] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FacegateError(f"{path}: empty annotation file")
        header = [h.strip().lower() for h in header]
        missing = [c for c in ANNOTATION_HEADER if c not in header]
        if missing:
            raise MissingColumn(f"{path}: annotation columns missing: {', '.join(missing)}")
        pos = {c: header.index(c) for c in ANNOTATION_HEADER}
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(lineno, f"expected {len(header)} cells, got {len(row)}")
            cell = {c: row[i].strip() for c, i in pos.items()}
            sid = cell["session_id"]
            entry = grouped.setdefault(sid, {"participant": cell["participant"],
                                             "activity": cell["activity"],
                                             "stance": cell["stance"], "phases": []})
            if (cell["participant"], cell["activity"], cell["stance"]) != (
                    entry["participant"], entry["activity"], entry["stance"]):
                raise MalformedRow(lineno, f"session {sid} changes participant/activity/stance")
            if cell["phase"]:
                try:
                    start, end = float(cell["start"]), float(cell["end"])
                except ValueError:
                    raise MalformedRow(lineno, "non-numeric interval bound") from None
                try:
                    entry["phases"].append(PhaseInterval(start, end, cell["phase"]))
                except FacegateError as exc:
                    raise MalformedRow(lineno, str(exc)) from None
    out = {}
    for sid, e in grouped.items():
        label = ActivityLabel(e["activity"], e["stance"])
        out[sid] = AnnotationRecord(sid, e["participant"], label, tuple(e["phases"]))
    return out


def write_annotations(path, records) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANNOTATION_HEADER)
        for r in records:
            base = [r.session_id, r.participant, r.label.activity.value, r.label.stance.value]
            if not r.phases:
                w.writerow(base + ["", "", ""])
            for p in r.phases:
                w.writerow(base + [p.phase.value, format_value(p.start), format_value(p.end)])


def _read_sensor_rows(path: Path, mapping: ColumnMapping) -> tuple[np.ndarray, np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=mapping.delimiter)
        width = None
        first_line = 1
        if mapping.header:
            header = next(reader, None)
            if header is None:
                raise MissingColumn(f"{path}: empty file, no header")
            header = [h.strip() for h in header]
            width = len(header)
            idx = []
            for name in COLUMNS:
                col = mapping.column(name)
                if isinstance(col, int):
                    if not 0 <= col < width:
                        raise MissingColumn(f"{path}: column index {col} for {name} out of range")
                    idx.append(col)
                elif col in header:
                    idx.append(header.index(col))
                else:
                    raise MissingColumn(f"{path}: column {col!r} for {name} not in header")
            first_line = 2
        else:
            idx = [mapping.column(name) for name in COLUMNS]
        rows = []
        for lineno, row in enumerate(reader, first_line):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if max(idx) >= width:
                    raise MissingColumn(f"{path}: column index {max(idx)} beyond row width {width}")
            if len(row) != width:
                raise MalformedRow(lineno, f"expected {width} cells, got {len(row)}")
            values = []
            for name, i in zip(COLUMNS, idx):
                cell = row[i].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise MalformedRow(lineno, f"{name} cell {cell!r} is not numeric") from None
                if not math.isfinite(v):
                    raise MalformedRow(lineno, f"{name} cell {cell!r} is not finite")
                values.append(v)
            if rows and values[0] < rows[-1][1][0]:
                raise TimestampOrderViolation(lineno, rows[-1][1][0], values[0])
            rows.append((lineno, values))
    if not rows:
        raise MalformedRow(first_line, "no data rows")
    data = np.array([v for _, v in rows], dtype=float)
    return data[:, 0] * mapping.time_scale, data[:, 1:]


def load_session(sensor_file, annotation: AnnotationRecord, mapping: ColumnMapping | None = None) -> Session:
    """Parse one sensor log and attach its annotation.

    Timestamps become session-relative seconds; annotation intervals are
    shifted onto the same base. Error row numbers are 1-based file lines.
    """
    mapping = mapping or ColumnMapping()
    path = Path(sensor_file)
    t_abs, imu = _read_sensor_rows(path, mapping)
    t0 = t_abs[0]
    offset = t0 if mapping.annotation_clock == "absolute" else 0.0
    phases = tuple(PhaseInterval(p.start - offset, p.end - offset, p.phase) for p in annotation.phases)
    session = Session(
        participant=annotation.participant, label=annotation.label, t=t_abs - t0, imu=imu,
        phases=phases, sample_rate=mapping.sample_rate, session_id=annotation.session_id,
    )
    check = validate_session(session)
    for w in check.warnings:
        log.warning("%s: %s", path.name, w)
    if not check.ok:
        raise FacegateError(f"{path}: " + "; ".join(check.errors))
    return session


def write_sensor_csv(session: Session, path, mapping: ColumnMapping | None = None) -> None:
    """Write samples back in ``mapping``'s layout (9 significant digits)."""
    mapping = mapping or ColumnMapping()
    cols = [mapping.column(c) for c in COLUMNS]
    if all(isinstance(c, int) for c in cols):
        width = max(cols) + 1
        names = [f"c{i}" for i in range(width)]
        for name, c in zip(COLUMNS, cols):
            names[c] = name
        pos = cols
    else:
        names = [str(c) for c in cols]
        width, pos = len(names), list(range(len(names)))
    data = np.column_stack([session.t / mapping.time_scale, session.imu])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=mapping.delimiter, lineterminator="\n")
        if mapping.header:
            w.writerow(names)
        for row in data:
            out = ["0"] * width
            for p, v in zip(pos, row):
                out[p] = f"{v:.9g}"
            w.writerow(out)


def trim_session(s: Session, margin: float = 2.5) -> Session:
    """Drop ``margin`` seconds from both ends of the recording.

    The session remembers the total margin already removed, so trimming
    again with the same margin is a no-op; a larger margin trims only the
    difference.
    """
    if margin < 0:
        raise ConfigError("margin must be >= 0", "margin")
    extra = margin - s.trim_margin
    if extra <= 0:
        return s
    if len(s.t) == 0 or s.duration <= 2 * extra:
        raise SessionTooShort(
            f"session {s.session_id or '?'} lasts {s.duration:.3f}s, needs more than {2 * extra:.3f}s"
        )
    lo, hi = s.t[0] + extra, s.t[-1] - extra
    keep = (s.t >= lo) & (s.t <= hi)
    phases = []
    for p in s.phases:
        start, end = max(p.start, lo), min(p.end, hi)
        if start < end:
            phases.append(PhaseInterval(start, end, p.phase))
    return s.replace(t=s.t[keep], imu=s.imu[keep], phases=tuple(phases), trim_margin=margin)


def extract_transitions(s: Session) -> list[LabeledSlice]:
    """One slice per Transition interval; boundaries are inclusive."""
    out = []
    for p in s.phases:
        if p.phase is not Phase.TRANSITION:
            continue
        mask = p.contains(s.t)
        out.append(LabeledSlice(s.t[mask], s.imu[mask], s.label, s.participant, s.session_id,
                                {"start": p.start, "end": p.end}))
    return out


def whole_session_slice(s: Session) -> LabeledSlice:
    return LabeledSlice(s.t, s.imu, s.label, s.participant, s.session_id)


def transition_slices(sessions, margin: float = 2.5, include_stance: bool = False) -> list[LabeledSlice]:
    """Trim each session and collect its transition slices.

    Stance recordings have no transitions; with ``include_stance`` their
    whole trimmed recording is used as one NoFaceTouch slice instead.
    """
    out = []
    for s in sessions:
        s = trim_session(s, margin)
        if include_stance and not s.label.activity.has_phases:
            out.append(whole_session_slice(s))
        else:
            out.extend(extract_transitions(s))
    return out


# ---------------------------------------------------- normalized session files

def write_session(s: Session, path) -> Path:
    """Self-describing text file: ``#`` metadata header, then a CSV body."""
    path = Path(path)
    lines = [
        SESSION_MAGIC,
        f"# session_id={s.session_id}",
        f"# participant={s.participant}",
        f"# activity={s.label.activity.value}",
        f"# stance={s.label.stance.value}",
        f"# category={s.label.category.value}",
        f"# sample_rate={format_value(float(s.sample_rate))}",
        f"# trim_margin={format_value(float(s.trim_margin))}",
    ]
    for p in s.phases:
        lines.append(f"# phase={p.phase.value},{format_value(float(p.start))},{format_value(float(p.end))}")
    lines.append(",".join(COLUMNS))
    for ti, row in zip(s.t, s.imu):
        lines.append(",".join(repr(float(v)) for v in (ti, *row)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_session(path) -> Session:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != SESSION_MAGIC:
            raise FacegateError(f"{path}: not a facegate session file")
        meta: dict[str, str] = {}
        phases = []
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "phase":
                name, start, end = value.split(",")
                phases.append(PhaseInterval(float(start), float(end), name))
            else:
                meta[key] = value
            line = fh.readline()
        if line.strip().split(",") != list(COLUMNS):
            raise MissingColumn(f"{path}: expected header {','.join(COLUMNS)}")
        body = [ln for ln in fh.read().splitlines() if ln.strip()]
    data = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float).reshape(-1, 7)
    return Session(
        participant=meta.get("participant", ""),
        label=ActivityLabel(meta["activity"], meta["stance"]),
        t=data[:, 0], imu=data[:, 1:], phases=tuple(phases),
        sample_rate=float(meta.get("sample_rate", DEFAULT_SAMPLE_RATE)),
        session_id=meta.get("session_id", path.stem),
        trim_margin=float(meta.get("trim_margin", 0.0)),
    )


def load_session_dir(directory) -> list[Session]:
    files = sorted(Path(directory).glob("*.session.csv"))
    return [read_session(f) for f in files]


def find_sensor_file(directory, session_id: str) -> Path | None:
    directory = Path(directory)
    for candidate in sorted(directory.iterdir()):
        if candidate.is_file() and candidate.stem == session_id:
            return candidate
    return None
