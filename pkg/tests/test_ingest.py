import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resp_scalogram.errors import (
    ConflictingDiagnosis,
    MalformedName,
    MissingAnnotation,
    ParseError,
    UnsupportedAudio,
)
from resp_scalogram.ingest import (
    CycleAnnotation,
    DiagnosisTable,
    RecordingMeta,
    compose_recording_filename,
    load_cycle_annotations,
    load_diagnosis_table,
    parse_recording_filename,
    read_wav,
    scan_corpus,
    write_wav,
)


def test_parse_filename_fields():
    m = parse_recording_filename("101_1b1_Al_sc_Meditron.wav")
    assert (m.patient_id, m.recording_index, m.chest_location, m.acquisition_mode, m.equipment) == (
        101, "1b1", "Al", "sc", "Meditron")
    m = parse_recording_filename("999_2a_Tc_mc_AKGC417L.wav")
    assert m.patient_id == 999 and m.acquisition_mode == "mc" and m.equipment == "AKGC417L"


@pytest.mark.parametrize("name", ["badname.wav", "x_1b1_Al_sc_Meditron.wav",
                                  "101_1b1_Al_sc.wav", "101_1b1_Al_sc_Meditron.mp3",
                                  "0_1b1_Al_sc_Meditron.wav"])
def test_parse_filename_rejects(name):
    with pytest.raises(MalformedName):
        parse_recording_filename(name)


token = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-",
                min_size=1, max_size=8)


@given(st.integers(1, 10**6), token, token, token, token)
def test_filename_round_trip(pid, rec, loc, mode, equip):
    meta = RecordingMeta(pid, rec, loc, mode, equip)
    assert parse_recording_filename(compose_recording_filename(meta)) == meta


def test_cycle_annotations(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("0.364\t3.25\t0\t1\n3.25 6.5 1 0\n\n")
    cycles = load_cycle_annotations(p)
    assert cycles == [CycleAnnotation(0.364, 3.25, False, True), CycleAnnotation(3.25, 6.5, True, False)]
    assert cycles[0].duration == pytest.approx(2.886)


@pytest.mark.parametrize("row", ["5.0 4.0 0 0", "a 4.0 0 0", "1 2 0", "1 2 0 2", "-1 2 0 0"])
def test_cycle_annotations_errors(tmp_path, row):
    p = tmp_path / "a.txt"
    p.write_text(row + "\n")
    with pytest.raises(ParseError):
        load_cycle_annotations(p)


def test_empty_annotation_file(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("")
    assert load_cycle_annotations(p) == []


def test_diagnosis_table(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("patient_id,disease\n101,URTI\n8,COPD\n8,COPD\n")
    table = load_diagnosis_table(p)
    assert table[101] == "URTI" and table[8] == "COPD" and len(table) == 2

    p.write_text("7,COPD\n7,Healthy\n")
    with pytest.raises(ConflictingDiagnosis):
        load_diagnosis_table(p)
    p.write_text("7,Flu\n")
    with pytest.raises(ParseError):
        load_diagnosis_table(p)


def test_diagnosis_excluded_kept():
    table = DiagnosisTable({1: "Asthma", 2: "COPD"})
    assert table.is_excluded(1) and not table.is_excluded(2)


def _touch_recording(root, name, cycles="0 1 0 0\n"):
    write_wav(root / name, np.zeros(100), 4000)
    (root / name).with_suffix(".txt").write_text(cycles)


def test_scan_corpus(tmp_path, caplog):
    _touch_recording(tmp_path, "102_1b1_Al_sc_Meditron.wav")
    _touch_recording(tmp_path, "101_1b1_Al_sc_Meditron.wav")
    entries = scan_corpus(tmp_path, DiagnosisTable({101: "URTI", 102: "COPD"}))
    assert [m.patient_id for m, _ in entries] == [101, 102]
    assert len(entries[0][1]) == 1

    entries = scan_corpus(tmp_path, DiagnosisTable({101: "URTI"}))
    assert [m.patient_id for m, _ in entries] == [101]
    assert "no diagnosis" in caplog.text

    assert scan_corpus(tmp_path, DiagnosisTable({5: "URTI"})) == []


def test_scan_corpus_missing_annotation(tmp_path):
    write_wav(tmp_path / "101_1b1_Al_sc_Meditron.wav", np.zeros(10), 4000)
    with pytest.raises(MissingAnnotation):
        scan_corpus(tmp_path, DiagnosisTable({101: "URTI"}))


def test_wav_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 500)
    write_wav(tmp_path / "a.wav", x, 44100)
    y, fs = read_wav(tmp_path / "a.wav")
    assert fs == 44100
    np.testing.assert_allclose(y, x, atol=2 / 32768)


def test_wav_24bit_stereo_first_channel(tmp_path):
    left = np.array([0, 1 << 22, -(1 << 22), (1 << 23) - 1], dtype=np.int64)
    right = -left
    frames = bytearray()
    for a, b in zip(left, right):
        frames += int(a).to_bytes(3, "little", signed=True) + int(b).to_bytes(3, "little", signed=True)
    with wave.open(str(tmp_path / "s.wav"), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(3)
        wf.setframerate(8000)
        wf.writeframes(bytes(frames))
    y, fs = read_wav(tmp_path / "s.wav")
    assert fs == 8000
    np.testing.assert_array_equal(y, left / float(1 << 23))


def test_wav_rejects_garbage(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"not a wav file at all")
    with pytest.raises(UnsupportedAudio):
        read_wav(p)
