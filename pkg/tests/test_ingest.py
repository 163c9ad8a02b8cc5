import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facegate.core import (
    ActivityLabel, ConfigError, FacegateError, MalformedRow, MissingColumn, Phase, PhaseInterval, Session,
    SessionTooShort, TimestampOrderViolation,
)
from facegate.ingest import (
    AnnotationRecord, ColumnMapping, extract_transitions, find_sensor_file, load_annotations, load_session,
    read_session, transition_slices, trim_session, write_annotations, write_sensor_csv, write_session,
)
from facegate.synthetic import synth_sessions

RATE = 102.4


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _sensor_text(n=30, t0=1000.0, header="t,ax,ay,az,gx,gy,gz"):
    lines = [header]
    for i in range(n):
        lines.append(f"{t0 + i / RATE},{i},0,1,0,0,{-i}")
    return "\n".join(lines) + "\n"


def _record(phases=((1000.05, 1000.15),)):
    return AnnotationRecord("s1", "P01", ActivityLabel("TouchNose", "Sitting"),
                            tuple(PhaseInterval(a, b, Phase.TRANSITION) for a, b in phases))


def test_load_session_relative_time_and_shifted_phases(tmp_path):
    s = load_session(_write(tmp_path / "s1.csv", _sensor_text()), _record())
    assert s.t[0] == 0.0
    assert s.imu.shape == (30, 6)
    assert s.phases[0].start == pytest.approx(0.05)
    assert s.participant == "P01" and s.session_id == "s1"


def test_malformed_row_reports_file_line(tmp_path):
    text = _sensor_text().splitlines()
    text[5] = "1000.1,abc,0,1,0,0,0"
    with pytest.raises(MalformedRow) as exc:
        load_session(_write(tmp_path / "s1.csv", "\n".join(text)), _record())
    assert exc.value.row == 6


def test_short_row_is_malformed(tmp_path):
    text = _sensor_text().splitlines()
    text[3] = "1000.02,1,2"
    with pytest.raises(MalformedRow) as exc:
        load_session(_write(tmp_path / "s1.csv", "\n".join(text)), _record())
    assert exc.value.row == 4


def test_timestamp_regression(tmp_path):
    text = _sensor_text().splitlines()
    text[10], text[11] = text[11], text[10]
    with pytest.raises(TimestampOrderViolation) as exc:
        load_session(_write(tmp_path / "s1.csv", "\n".join(text)), _record())
    assert exc.value.row == 12


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_session(_write(tmp_path / "s1.csv", _sensor_text(header="t,ax,ay,az,gx,gy,GZ")), _record())


def test_column_mapping_by_index_without_header(tmp_path):
    body = "\n".join(";".join(str(v) for v in (i, i / RATE + 5.0, 0, 0, 1, 0, 0, 2)) for i in range(20))
    mapping = ColumnMapping(t=1, ax=2, ay=3, az=4, gx=5, gy=6, gz=7, delimiter=";", header=False,
                            annotation_clock="relative")
    rec = AnnotationRecord("s1", "P01", ActivityLabel("Stance", "Walking"))
    s = load_session(_write(tmp_path / "s1.csv", body), rec, mapping)
    assert s.imu[0, 2] == 1.0 and s.imu[0, 5] == 2.0


def test_column_mapping_rejects_duplicates_and_round_trips_kv():
    with pytest.raises(ConfigError):
        ColumnMapping(ax="x", ay="x")
    m = ColumnMapping(t="time", time_scale=0.001, annotation_clock="relative")
    assert ColumnMapping.from_kv({k: str(v) for k, v in m.to_kv().items()}) == m


def test_annotations_round_trip(tmp_path):
    recs = [_record(((1000.05, 1000.15), (1000.16, 1000.2))),
            AnnotationRecord("s2", "P02", ActivityLabel("Stance", "Standing"))]
    recs[0] = AnnotationRecord("s1", "P01", recs[0].label,
                               (recs[0].phases[0], PhaseInterval(1000.16, 1000.2, Phase.CONTACT)))
    path = tmp_path / "ann.csv"
    write_annotations(path, recs)
    back = load_annotations(path)
    assert list(back) == ["s1", "s2"]
    assert back["s1"] == recs[0] and back["s2"] == recs[1]


def test_face_touch_annotation_needs_phases():
    with pytest.raises(FacegateError):
        AnnotationRecord("s", "P01", ActivityLabel("TouchNose", "Sitting"))


def test_sensor_csv_round_trip(tmp_path):
    s = synth_sessions(1, transitions=2)[0]
    path = tmp_path / f"{s.session_id}.csv"
    write_sensor_csv(s, path)
    rec = AnnotationRecord(s.session_id, s.participant, s.label, s.phases)
    back = load_session(path, rec, ColumnMapping(annotation_clock="relative"))
    np.testing.assert_allclose(back.imu, s.imu, rtol=1e-8, atol=1e-9)
    assert find_sensor_file(tmp_path, s.session_id) == path


def test_session_file_round_trip_is_exact(tmp_path):
    s = trim_session(synth_sessions(1, transitions=3)[0], 1.0)
    back = read_session(write_session(s, tmp_path / "x.session.csv"))
    np.testing.assert_array_equal(back.t, s.t)
    np.testing.assert_array_equal(back.imu, s.imu)
    assert back.phases == s.phases and back.label == s.label and back.trim_margin == s.trim_margin


def test_trim_is_idempotent_and_shrinks():
    s = synth_sessions(1, transitions=3)[0]
    once = trim_session(s, 2.5)
    assert trim_session(once, 2.5) is once
    assert once.t[0] >= s.t[0] + 2.5 - 1e-12 and once.t[-1] <= s.t[-1] - 2.5 + 1e-12
    assert all(once.t[0] <= p.start < p.end <= once.t[-1] for p in once.phases)


def test_trim_too_short():
    s = synth_sessions(1, transitions=1)[0]
    with pytest.raises(SessionTooShort):
        trim_session(s, s.duration)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_trim_in_steps_stays_within_direct_trim(a, b):
    s = synth_sessions(1, transitions=2, seed=1)[0]
    lo, hi = sorted((a, b))
    direct = trim_session(s, hi)
    stepped = trim_session(trim_session(s, lo), hi)
    assert set(stepped.t.tolist()) <= set(direct.t.tolist())
    assert len(direct.t) - len(stepped.t) <= 2
    # a smaller margin never undoes a larger one
    assert trim_session(direct, lo) is direct


def test_extract_transitions_inclusive_and_labeled():
    s = synth_sessions(1, transitions=4, half_len=20)[0]
    slices = extract_transitions(s)
    assert len(slices) == 4
    assert all(len(sl.t) == 40 for sl in slices)
    assert all(sl.label == s.label for sl in slices)


def test_transition_slices_with_stance(tmp_path):
    sessions = synth_sessions(1, transitions=4)
    n = 1000
    stance = Session("P01", ActivityLabel("Stance", "Walking"), np.arange(n) / RATE, np.zeros((n, 6)), (),
                     RATE, "stance")
    assert len(transition_slices(sessions + [stance])) == 8
    with_stance = transition_slices(sessions + [stance], include_stance=True)
    assert len(with_stance) == 9
    assert with_stance[-1].label.activity.value == "Stance"


def _flat_session(seconds, phases=()):
    n = int(round(seconds * RATE)) + 1
    return Session("P01", ActivityLabel("TouchNose", "Sitting"), np.arange(n) / RATE, np.zeros((n, 6)),
                   tuple(phases), RATE, "flat")


def test_trim_examples():
    s = _flat_session(35.0, [PhaseInterval(1.0, 3.0, "Transition"), PhaseInterval(10.0, 11.0, "Transition")])
    t = trim_session(s, 2.5)
    assert t.duration == pytest.approx(30.0, abs=1.0 / RATE)
    assert t.phases == (PhaseInterval(2.5, 3.0, "Transition"), PhaseInterval(10.0, 11.0, "Transition"))
    assert trim_session(s, 0.0) is s
    with pytest.raises(SessionTooShort):
        trim_session(_flat_session(4.0), 2.5)


def test_transitions_exclude_contact_and_match_brute_force():
    phases = [PhaseInterval(1.0, 1.4, "Transition"), PhaseInterval(1.45, 1.7, "Contact"),
              PhaseInterval(3.0, 3.33, "Transition"), PhaseInterval(3.4, 3.9, "Contact")]
    s = _flat_session(6.0, phases)
    slices = extract_transitions(s)
    assert len(slices) == 2
    for sl, p in zip(slices, phases[::2]):
        assert len(sl.t) == sum(1 for v in s.t if p.start <= v <= p.end)
        assert all(p.start <= v <= p.end for v in sl.t)
        for c in phases[1::2]:
            assert not any(c.start <= v <= c.end for v in sl.t)
    assert extract_transitions(Session("P01", ActivityLabel("Stance", "Sitting"), s.t, s.imu, (), RATE)) == []


def test_mapping_round_trip_via_sensor_file(tmp_path):
    s = load_session(_write(tmp_path / "s1.csv", _sensor_text(50)), _record())
    write_sensor_csv(s, tmp_path / "again.csv")
    rec = AnnotationRecord("s1", "P01", s.label, s.phases)
    back = load_session(tmp_path / "again.csv", rec, ColumnMapping(annotation_clock="relative"))
    np.testing.assert_allclose(back.t, s.t, rtol=1e-8)
    np.testing.assert_allclose(back.imu, s.imu, rtol=1e-8)
