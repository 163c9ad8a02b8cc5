"""Seeded synthetic datasets with known structure, for tests and demos."""
from __future__ import annotations

import numpy as np

from .core import DEFAULT_SAMPLE_RATE, Activity, ActivityLabel, PhaseInterval, Phase, Session, Stance, make_rng
from .features import FeatureTable, base_feature_names

FACE_ACTS = [Activity.TOUCH_LEFT_EYE, Activity.TOUCH_RIGHT_EYE, Activity.TOUCH_NOSE, Activity.TOUCH_MOUTH]
NOFACE_ACTS = [Activity.SCRATCH_HEAD, Activity.PICK_OVERHEAD_SHELF, Activity.PICK_GROUND]


def synth_feature_table(n_rows: int = 2000, n_participants: int = 10, n_informative: int = 5,
                        n_noise: int = 49, shift: float = 1.5, participant_spread: float = 0.3,
                        seed=0) -> FeatureTable:
    """Base-feature table whose first ``n_informative`` columns carry the label.

    Informative columns are ``+-shift`` (by class) plus a per-participant
    offset and unit noise; the remaining columns are pure noise.
    """
    rng = make_rng(seed)
    p = n_informative + n_noise
    y = np.arange(n_rows) % 2
    y = y[rng.permutation(n_rows)]
    participant = np.array([f"P{(i % n_participants) + 1:02d}" for i in range(n_rows)], dtype=object)
    offsets = rng.normal(0, participant_spread, size=(n_participants, p))
    pidx = np.arange(n_rows) % n_participants
    X = rng.normal(size=(n_rows, p)) + offsets[pidx]
    X[:, :n_informative] += np.where(y[:, None] == 1, shift, -shift)
    names = base_feature_names()[:p] if p <= 54 else [f"f{i}" for i in range(p)]
    acts = np.array([(FACE_ACTS if yi else NOFACE_ACTS)[i % (4 if yi else 3)].value
                     for i, yi in enumerate(y)], dtype=object)
    return FeatureTable(X, y, participant, acts, names)


def _lobe(n: int) -> np.ndarray:
    return np.sin(np.pi * (np.arange(n) + 0.5) / n)


def synth_sessions(n_participants: int = 4, transitions: int = 24, half_len: int = 20, seed=0,
                   sample_rate: float = DEFAULT_SAMPLE_RATE, noise: float = 0.05) -> list[Session]:
    """Sessions whose transitions are two ``half_len``-sample motifs back to back.

    Motif A is a lobe on ``ax``, motif B a lobe on ``gy``. Face-touch
    transitions are A then B; no-face transitions are A,A or B,B. Any single
    half looks the same in both classes, so windows of one half length
    (0.2 s at the defaults) carry no label information while windows covering
    the whole transition (0.4 s) separate the classes. Each transition is
    followed by a short Contact interval.
    """
    rng = make_rng(seed)
    period = 1.0 / sample_rate
    L = 2 * half_len
    gap = int(0.6 * sample_rate)
    contact = int(0.3 * sample_rate)
    lead = int(3.0 * sample_rate)
    sessions = []
    for pi in range(n_participants):
        participant = f"P{pi + 1:02d}"
        for face in (True, False):
            acts = FACE_ACTS if face else NOFACE_ACTS
            label = ActivityLabel(acts[pi % len(acts)], Stance.SITTING)
            n = 2 * lead + transitions * (L + contact + gap)
            imu = rng.normal(0, noise, size=(n, 6))
            imu[:, 2] += 1.0
            t = np.arange(n) * period
            phases = []
            pos = lead
            amp_jitter = rng.uniform(0.8, 1.2, size=(transitions, 2))
            for k in range(transitions):
                if face:
                    motifs = ("A", "B")
                else:
                    motifs = ("A", "A") if k % 2 == 0 else ("B", "B")
                for h, motif in enumerate(motifs):
                    seg = slice(pos + h * half_len, pos + (h + 1) * half_len)
                    ch = 0 if motif == "A" else 4
                    imu[seg, ch] += 2.0 * amp_jitter[k, h] * _lobe(half_len)
                # inclusive bounds: exactly L samples fall inside
                phases.append(PhaseInterval(t[pos] - 0.25 * period, t[pos + L - 1] + 0.25 * period, Phase.TRANSITION))
                c0 = pos + L + 2
                phases.append(PhaseInterval(t[c0], t[c0 + contact - 4], Phase.CONTACT))
                imu[c0:c0 + contact - 3, 1] += 0.5
                pos += L + contact + gap
            sessions.append(Session(participant, label, t, imu, tuple(phases), sample_rate,
                                    f"{participant}_{label.activity.value}"))
    return sessions
