"""Shared domain types, label taxonomy, errors and seeded randomness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

DEFAULT_SAMPLE_RATE = 102.4
CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")
JITTER_TOLERANCE = 0.10


# --------------------------------------------------------------------- errors

class FacegateError(ValueError):
    """Base class for every error raised by the package."""


class MalformedRow(FacegateError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row


class TimestampOrderViolation(FacegateError):
    def __init__(self, row: int, prev: float, cur: float):
        super().__init__(f"row {row}: timestamp {cur!r} precedes previous {prev!r}")
        self.row = row


class MissingColumn(FacegateError):
    pass


class SessionTooShort(FacegateError):
    pass


class WindowTooShort(FacegateError):
    pass


class NonFiniteFeature(FacegateError):
    pass


class InsufficientData(FacegateError):
    pass


class DimensionMismatch(FacegateError):
    pass


ModelDimensionMismatch = DimensionMismatch


class UnsupportedVersion(FacegateError):
    pass


class CorruptModel(FacegateError):
    pass


class SingleParticipant(FacegateError):
    pass


class LengthMismatch(FacegateError):
    pass


class ConfigError(FacegateError):
    """Invalid parameter value; ``names`` lists the offending parameters."""

    def __init__(self, message: str, *names: str):
        super().__init__(message)
        self.names = names


# ------------------------------------------------------------------- taxonomy

class Category(Enum):
    NO_FACE_TOUCH = "NoFaceTouch"
    FACE_TOUCH = "FaceTouch"

    @property
    def code(self) -> int:
        """Integer class label; FaceTouch is the positive class (1)."""
        return 1 if self is Category.FACE_TOUCH else 0

    @classmethod
    def from_code(cls, code: int) -> "Category":
        return cls.FACE_TOUCH if int(code) == 1 else cls.NO_FACE_TOUCH


class Activity(Enum):
    TOUCH_LEFT_EYE = "TouchLeftEye"
    TOUCH_RIGHT_EYE = "TouchRightEye"
    TOUCH_NOSE = "TouchNose"
    TOUCH_MOUTH = "TouchMouth"
    SCRATCH_HEAD = "ScratchHead"
    PICK_OVERHEAD_SHELF = "PickOverheadShelf"
    PICK_GROUND = "PickGround"
    STANCE = "Stance"

    @property
    def category(self) -> Category:
        return Category.FACE_TOUCH if self in FACE_ACTIVITIES else Category.NO_FACE_TOUCH

    @property
    def has_phases(self) -> bool:
        return self is not Activity.STANCE


FACE_ACTIVITIES = frozenset(
    {Activity.TOUCH_LEFT_EYE, Activity.TOUCH_RIGHT_EYE, Activity.TOUCH_NOSE, Activity.TOUCH_MOUTH}
)


class Stance(Enum):
    SITTING = "Sitting"
    STANDING = "Standing"
    WALKING = "Walking"


class Phase(Enum):
    TRANSITION = "Transition"
    CONTACT = "Contact"


def _parse_enum(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    key = str(value).strip()
    for member in enum_cls:
        if key.lower() in (member.value.lower(), member.name.lower()):
            return member
    raise FacegateError(f"unknown {enum_cls.__name__} {value!r}")


@dataclass(frozen=True)
class ActivityLabel:
    activity: Activity
    stance: Stance
    category: Category = None  # derived when omitted

    def __post_init__(self):
        object.__setattr__(self, "activity", _parse_enum(Activity, self.activity))
        object.__setattr__(self, "stance", _parse_enum(Stance, self.stance))
        expected = self.activity.category
        if self.category is None:
            object.__setattr__(self, "category", expected)
        else:
            cat = _parse_enum(Category, self.category)
            if cat is not expected:
                raise FacegateError(
                    f"{self.activity.value} belongs to {expected.value}, not {cat.value}"
                )
            object.__setattr__(self, "category", cat)


@dataclass(frozen=True)
class PhaseInterval:
    start: float
    end: float
    phase: Phase

    def __post_init__(self):
        object.__setattr__(self, "phase", _parse_enum(Phase, self.phase))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "end", float(self.end))
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise FacegateError("phase interval bounds must be finite")
        if not self.start < self.end:
            raise FacegateError(f"phase interval start {self.start} must precede end {self.end}")

    def contains(self, t):
        return (t >= self.start) & (t <= self.end)


# ---------------------------------------------------------------- samples

@dataclass(frozen=True)
class SensorSample:
    t: float
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]

    def __post_init__(self):
        accel = tuple(float(v) for v in self.accel)
        gyro = tuple(float(v) for v in self.gyro)
        if len(accel) != 3 or len(gyro) != 3:
            raise FacegateError("accel and gyro need three axes each")
        if not all(math.isfinite(v) for v in accel + gyro):
            raise FacegateError("sensor channels must be finite")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise FacegateError(f"sample time must be finite and >= 0, got {self.t!r}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "gyro", gyro)

    @property
    def channels(self) -> tuple[float, ...]:
        return self.accel + self.gyro


def resultant_acceleration(s: SensorSample) -> float:
    ax, ay, az = s.accel
    return math.sqrt(ax * ax + ay * ay + az * az)


def resultant_array(imu: np.ndarray) -> np.ndarray:
    """Row-wise accelerometer norm for an ``(n, >=3)`` channel array."""
    acc = np.asarray(imu, dtype=float)[:, :3]
    return np.sqrt(np.einsum("ij,ij->i", acc, acc))


def as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Normalise a sample source to ``(t, imu)`` arrays.

    Accepts a :class:`Session`, a sequence of :class:`SensorSample`, an
    ``(n, 7)`` array with time in column 0, or an ``(n, 6)`` channel array
    (time is then synthesised at the default rate).
    """
    if isinstance(samples, Session):
        return samples.t, samples.imu
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] not in (6, 7):
            raise DimensionMismatch(f"expected (n, 6) or (n, 7) array, got {arr.shape}")
        if arr.shape[1] == 7:
            return arr[:, 0].copy(), arr[:, 1:].copy()
        return np.arange(len(arr)) / DEFAULT_SAMPLE_RATE, arr
    samples = list(samples)
    if not samples:
        return np.zeros(0), np.zeros((0, 6))
    t = np.array([s.t for s in samples], dtype=float)
    imu = np.array([s.channels for s in samples], dtype=float)
    return t, imu


# ---------------------------------------------------------------- sessions

@dataclass(frozen=True)
class Session:
    """An annotated recording. Samples are held column-wise for speed."""

    participant: str
    label: ActivityLabel
    t: np.ndarray
    imu: np.ndarray
    phases: tuple[PhaseInterval, ...] = ()
    sample_rate: float = DEFAULT_SAMPLE_RATE
    session_id: str = ""
    # total edge margin (s) already trimmed from the raw recording
    trim_margin: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        imu = np.asarray(self.imu, dtype=float).reshape(len(t), 6)
        t.setflags(write=False)
        imu.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "imu", imu)
        object.__setattr__(self, "phases", tuple(sorted(self.phases, key=lambda p: p.start)))
        object.__setattr__(self, "participant", str(self.participant))

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    @property
    def samples(self) -> Iterator[SensorSample]:
        for ti, row in zip(self.t, self.imu):
            yield SensorSample(float(ti), tuple(row[:3]), tuple(row[3:]))

    def replace(self, **changes) -> "Session":
        fields_ = dict(
            participant=self.participant, label=self.label, t=self.t, imu=self.imu,
            phases=self.phases, sample_rate=self.sample_rate, session_id=self.session_id,
            trim_margin=self.trim_margin,
        )
        fields_.update(changes)
        return Session(**fields_)


@dataclass(frozen=True)
class SessionCheck:
    errors: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_session(s: Session) -> SessionCheck:
    """Check the session invariants. Pure: same session, same verdict."""
    errors: list[str] = []
    warnings: list[str] = []
    t, imu = s.t, s.imu
    if not np.all(np.isfinite(imu)):
        errors.append("non-finite channel value")
    if len(t) and (not np.all(np.isfinite(t)) or t[0] < 0):
        errors.append("timestamps must be finite and >= 0")
    dt = np.diff(t)
    if np.any(dt < 0):
        errors.append(f"timestamps decrease at sample {int(np.argmax(dt < 0)) + 1}")
    if s.sample_rate <= 0:
        errors.append("sample_rate must be positive")
    elif len(dt):
        period = 1.0 / s.sample_rate
        bad = np.abs(dt - period) > JITTER_TOLERANCE * period
        if np.any(bad):
            warnings.append(
                f"{int(bad.sum())} sample gaps deviate >{JITTER_TOLERANCE:.0%} from the nominal period"
            )
    if len(t):
        for p in s.phases:
            if p.start < t[0] or p.end > t[-1]:
                errors.append(f"{p.phase.value} interval [{p.start}, {p.end}] outside recording")
    for a, b in zip(s.phases, s.phases[1:]):
        if b.start < a.end:
            errors.append(f"intervals [{a.start}, {a.end}] and [{b.start}, {b.end}] overlap")
    return SessionCheck(tuple(errors), tuple(warnings))


# --------------------------------------------------------------- randomness

def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}", "seed")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}", "seed")
    return seed


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(check_seed(seed)))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent substreams derived from ``seed``.

    Substream ``i`` depends only on ``(seed, i)``, so work can be handed to
    parallel tasks in any order.
    """
    children = np.random.SeedSequence(check_seed(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def derive_seed(seed, *keys: int) -> int:
    """Deterministic 64-bit child seed for a labelled sub-task."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class LabeledSlice:
    """A contiguous run of samples with its activity label."""

    t: np.ndarray
    imu: np.ndarray
    label: ActivityLabel
    participant: str = ""
    session_id: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.t)


def iter_labels(labels: Sequence) -> np.ndarray:
    """Map mixed label values (Category, names, ints) to 0/1 codes."""
    out = np.empty(len(labels), dtype=np.int64)
    for i, v in enumerate(labels):
        if isinstance(v, Category):
            out[i] = v.code
        elif isinstance(v, (int, np.integer)):
            out[i] = int(v)
        else:
            out[i] = _parse_enum(Category, v).code
    return out
