import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from facegate.core import (
    Activity, ActivityLabel, Category, ConfigError, FacegateError, Phase, PhaseInterval, SensorSample,
    Session, Stance, as_arrays, check_seed, derive_seed, iter_labels, make_rng, resultant_acceleration,
    resultant_array, spawn_rngs, validate_session,
)


def test_category_codes():
    assert Category.FACE_TOUCH.code == 1
    assert Category.NO_FACE_TOUCH.code == 0
    assert Category.from_code(1) is Category.FACE_TOUCH
    assert Category("NoFaceTouch") is Category.NO_FACE_TOUCH


@pytest.mark.parametrize("activity,category", [
    (Activity.TOUCH_LEFT_EYE, Category.FACE_TOUCH),
    (Activity.TOUCH_MOUTH, Category.FACE_TOUCH),
    (Activity.SCRATCH_HEAD, Category.NO_FACE_TOUCH),
    (Activity.PICK_GROUND, Category.NO_FACE_TOUCH),
    (Activity.STANCE, Category.NO_FACE_TOUCH),
])
def test_activity_category(activity, category):
    assert activity.category is category
    assert ActivityLabel(activity, Stance.WALKING).category is category


def test_label_accepts_names_and_rejects_inconsistent_category():
    lab = ActivityLabel("touchnose", "standing")
    assert lab.activity is Activity.TOUCH_NOSE and lab.stance is Stance.STANDING
    with pytest.raises(FacegateError):
        ActivityLabel(Activity.TOUCH_NOSE, Stance.SITTING, Category.NO_FACE_TOUCH)
    with pytest.raises(FacegateError):
        ActivityLabel("Juggling", "Sitting")


def test_only_non_stance_activities_have_phases():
    assert Activity.TOUCH_NOSE.has_phases
    assert not Activity.STANCE.has_phases


def test_phase_interval():
    p = PhaseInterval(1.0, 2.0, "Transition")
    assert p.phase is Phase.TRANSITION
    assert p.contains(1.0) and p.contains(2.0) and not p.contains(2.0001)
    with pytest.raises(FacegateError):
        PhaseInterval(2.0, 2.0, Phase.CONTACT)


def test_sensor_sample_resultant():
    s = SensorSample(0.0, (3.0, 4.0, 12.0), (0, 0, 0))
    assert resultant_acceleration(s) == 13.0
    with pytest.raises(FacegateError):
        SensorSample(0.0, (float("nan"), 0, 0), (0, 0, 0))
    with pytest.raises(FacegateError):
        SensorSample(-1.0, (0, 0, 0), (0, 0, 0))


@given(st.lists(st.tuples(*[st.floats(-1e3, 1e3)] * 3), min_size=1, max_size=20))
def test_resultant_array_matches_scalar(rows):
    imu = np.column_stack([np.array(rows), np.zeros((len(rows), 3))])
    r = resultant_array(imu)
    for row, v in zip(rows, r):
        assert math.isclose(v, math.sqrt(sum(c * c for c in row)), rel_tol=1e-12, abs_tol=1e-12)


def _session(**kw):
    n = kw.pop("n", 200)
    t = np.arange(n) / 102.4
    base = dict(participant="P01", label=ActivityLabel("TouchNose", "Sitting"), t=t, imu=np.zeros((n, 6)),
                phases=(PhaseInterval(0.5, 0.9, "Transition"),), sample_rate=102.4, session_id="s")
    base.update(kw)
    return Session(**base)


def test_session_is_read_only_and_samples_round_trip():
    s = _session()
    with pytest.raises(ValueError):
        s.imu[0, 0] = 1.0
    t, imu = as_arrays(s.samples)
    np.testing.assert_array_equal(t, s.t)
    np.testing.assert_array_equal(imu, s.imu)
    assert s.duration == pytest.approx(199 / 102.4)


def test_validate_session_flags_jitter_as_warning():
    t = np.arange(200) / 102.4
    t[100:] += 0.005  # one gap of ~1.5 periods
    check = validate_session(_session(t=t))
    assert check.ok and check.warnings


def test_validate_session_rejects_overlap_and_range():
    bad = _session(phases=(PhaseInterval(0.5, 0.9, "Transition"), PhaseInterval(0.8, 1.0, "Contact")))
    assert not validate_session(bad).ok
    outside = _session(phases=(PhaseInterval(0.5, 9.0, "Transition"),))
    assert not validate_session(outside).ok


def test_seeds():
    assert check_seed(5) == 5
    with pytest.raises(ConfigError):
        check_seed(-1)
    with pytest.raises(ConfigError):
        check_seed(1.5)
    a = make_rng(3).integers(0, 1 << 30, 5)
    b = make_rng(3).integers(0, 1 << 30, 5)
    np.testing.assert_array_equal(a, b)
    r1 = [g.random() for g in spawn_rngs(7, 3)]
    r2 = [g.random() for g in spawn_rngs(7, 3)]
    assert r1 == r2 and len(set(r1)) == 3
    assert derive_seed(1, 2) == derive_seed(1, 2) != derive_seed(1, 3)


def test_iter_labels():
    np.testing.assert_array_equal(iter_labels([Category.FACE_TOUCH, "NoFaceTouch", 1]), [1, 0, 1])


def test_resultant_examples():
    assert resultant_acceleration(SensorSample(0.0, (0, 0, 0), (1, 2, 3))) == 0.0
    assert resultant_acceleration(SensorSample(0.0, (3, 4, 0), (0, 0, 0))) == 5.0


@given(st.tuples(*[st.floats(-1e6, 1e6)] * 3), st.permutations([0, 1, 2]), st.tuples(*[st.sampled_from([-1, 1])] * 3))
def test_resultant_permutation_and_sign_invariant(acc, perm, signs):
    base = resultant_acceleration(SensorSample(0.0, acc, (0, 0, 0)))
    moved = tuple(acc[p] * s for p, s in zip(perm, signs))
    assert math.isclose(resultant_acceleration(SensorSample(0.0, moved, (0, 0, 0))), base, rel_tol=1e-12, abs_tol=0)


def test_validation_is_pure():
    s = _session(phases=(PhaseInterval(0.5, 0.9, "Transition"), PhaseInterval(0.8, 1.0, "Contact")))
    assert validate_session(s) == validate_session(s)
