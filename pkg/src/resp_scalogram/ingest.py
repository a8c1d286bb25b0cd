"""Corpus loading: ICBHI-style file names, cycle annotations, diagnosis table, WAV audio."""

from __future__ import annotations

import csv
import logging
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    ConflictingDiagnosis,
    MalformedName,
    MissingAnnotation,
    ParseError,
    UnsupportedAudio,
)

log = logging.getLogger(__name__)

DISEASES = (
    "Pneumonia",
    "Bronchiectasis",
    "COPD",
    "Healthy",
    "URTI",
    "Bronchiolitis",
    "Asthma",
    "LRTI",
)
# Loaded but dropped after segmentation.
EXCLUDED_DISEASES = frozenset({"Asthma", "LRTI"})

_TOKEN = re.compile(r"^[^_\s/\\]+$")


@dataclass(frozen=True)
class RecordingMeta:
    patient_id: int
    recording_index: str
    chest_location: str
    acquisition_mode: str
    equipment: str
    path: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.patient_id <= 0:
            raise MalformedName(f"patient id must be positive, got {self.patient_id}")
        for name in ("recording_index", "chest_location", "acquisition_mode", "equipment"):
            value = getattr(self, name)
            if not value or not _TOKEN.match(value):
                raise MalformedName(f"bad {name} token {value!r}")

    @property
    def stem(self) -> str:
        return compose_recording_filename(self)[: -len(".wav")]

    @property
    def rec_id(self) -> str:
        """Recording identifier without the patient, safe inside underscore-separated names."""
        return "-".join(
            (self.recording_index, self.chest_location, self.acquisition_mode, self.equipment)
        )


@dataclass(frozen=True)
class CycleAnnotation:
    start_s: float
    end_s: float
    crackles: bool = False
    wheezes: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.start_s) and np.isfinite(self.end_s)):
            raise ParseError("cycle bounds must be finite")
        if self.start_s < 0:
            raise ParseError(f"negative cycle start {self.start_s}")
        if self.end_s <= self.start_s:
            raise ParseError(f"cycle end {self.end_s} <= start {self.start_s}")

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


class DiagnosisTable(Mapping[int, str]):
    """Immutable patient_id -> disease mapping."""

    def __init__(self, entries: Mapping[int, str] | None = None):
        self._labels: dict[int, str] = {}
        for pid, disease in (entries or {}).items():
            self._add(int(pid), disease)

    def _add(self, pid: int, disease: str) -> None:
        if disease not in DISEASES:
            raise ParseError(f"unknown disease label {disease!r} for patient {pid}")
        if pid <= 0:
            raise ParseError(f"patient id must be positive, got {pid}")
        prior = self._labels.get(pid)
        if prior is not None and prior != disease:
            raise ConflictingDiagnosis(f"patient {pid}: {prior} vs {disease}")
        self._labels[pid] = disease

    def __getitem__(self, pid: int) -> str:
        return self._labels[pid]

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._labels))

    def __len__(self) -> int:
        return len(self._labels)

    def is_excluded(self, pid: int) -> bool:
        return self._labels[pid] in EXCLUDED_DISEASES

    def __repr__(self) -> str:
        return f"DiagnosisTable({len(self)} patients)"


def compose_recording_filename(meta: RecordingMeta) -> str:
    return (
        f"{meta.patient_id}_{meta.recording_index}_{meta.chest_location}"
        f"_{meta.acquisition_mode}_{meta.equipment}.wav"
    )


def parse_recording_filename(name: str | Path) -> RecordingMeta:
    """Split ``<patient>_<recindex>_<location>_<mode>_<equipment>.wav`` into its fields."""
    path = Path(name)
    if path.suffix.lower() != ".wav":
        raise MalformedName(f"{path.name}: expected a .wav file name")
    fields = path.stem.split("_")
    if len(fields) != 5:
        raise MalformedName(f"{path.name}: expected 5 underscore-separated fields, got {len(fields)}")
    patient, rec, loc, mode, equipment = fields
    if not patient.isdigit():
        raise MalformedName(f"{path.name}: non-numeric patient id {patient!r}")
    return RecordingMeta(
        patient_id=int(patient),
        recording_index=rec,
        chest_location=loc,
        acquisition_mode=mode,
        equipment=equipment,
        path=path,
    )


def _parse_flag(token: str, where: str) -> bool:
    if token not in ("0", "1"):
        raise ParseError(f"{where}: flag must be 0 or 1, got {token!r}")
    return token == "1"


def load_cycle_annotations(path: str | Path) -> list[CycleAnnotation]:
    """Read ``start end crackles wheezes`` rows (tab or space separated)."""
    cycles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            where = f"{path}:{lineno}"
            if len(fields) != 4:
                raise ParseError(f"{where}: expected 4 fields, got {len(fields)}")
            try:
                start, end = float(fields[0]), float(fields[1])
            except ValueError as exc:
                raise ParseError(f"{where}: {exc}") from None
            try:
                cycles.append(
                    CycleAnnotation(
                        start, end, _parse_flag(fields[2], where), _parse_flag(fields[3], where)
                    )
                )
            except ParseError as exc:
                raise ParseError(f"{where}: {exc}") from None
    return cycles


def load_diagnosis_table(path: str | Path) -> DiagnosisTable:
    """Read a ``patient_id,disease`` CSV; an optional header row is skipped."""
    table = DiagnosisTable()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            row = [c.strip() for c in row]
            if not row or not any(row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            pid, disease = row
            if not pid.isdigit():
                if lineno == 1:
                    continue
                raise ParseError(f"{path}:{lineno}: non-numeric patient id {pid!r}")
            table._add(int(pid), disease)
    return table


def scan_corpus(
    root: str | Path, diagnosis: DiagnosisTable
) -> list[tuple[RecordingMeta, list[CycleAnnotation]]]:
    """Pair every WAV under ``root`` with its annotation file, in lexicographic order.

    Recordings whose patient has no diagnosis are logged and skipped.
    """
    root = Path(root)
    entries = []
    for wav in sorted(root.glob("*.wav"), key=lambda p: p.name):
        meta = parse_recording_filename(wav)
        ann = wav.with_suffix(".txt")
        if not ann.is_file():
            raise MissingAnnotation(f"{wav.name}: no annotation file {ann.name}")
        if meta.patient_id not in diagnosis:
            log.warning("skipping %s: patient %d has no diagnosis", wav.name, meta.patient_id)
            continue
        entries.append((meta, load_cycle_annotations(ann)))
    return entries


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Decode PCM WAV to float64 in [-1, 1]; multichannel files yield the first channel."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_ch = wf.getnchannels()
            width = wf.getsampwidth()
            fs = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise UnsupportedAudio(f"{path}: {exc}") from None

    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints & 0x800000, ints - (1 << 24), ints)
        data = ints.astype(np.float64) / float(1 << 23)
    else:
        raise UnsupportedAudio(f"{path}: unsupported sample width {8 * width} bits")
    if data.size % n_ch:
        raise UnsupportedAudio(f"{path}: truncated frame data")
    return data.reshape(-1, n_ch)[:, 0].copy(), fs


def write_wav(path: str | Path, samples: np.ndarray, fs: int) -> None:
    """Write mono 16-bit PCM. Samples are clipped to [-1, 1]."""
    samples = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise ValueError("cannot write non-finite samples")
    ints = np.round(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(fs))
        wf.writeframes(ints.tobytes())
