"""Bandpass filtering, resampling, normalization and fixed-length cycle segmentation."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sps

from . import MIN_CYCLE_SECONDS, SEGMENT_SECONDS, TARGET_FS
from .errors import InvalidBand, SampleRateMismatch
from .ingest import EXCLUDED_DISEASES, CycleAnnotation, DiagnosisTable, RecordingMeta

log = logging.getLogger(__name__)

RETAINED_DISEASES = ("Bronchiectasis", "Bronchiolitis", "COPD", "Healthy", "Pneumonia", "URTI")
SEGMENT_LENGTH = int(round(SEGMENT_SECONDS * TARGET_FS))


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal contains non-finite samples")
        if not self.fs > 0:
            raise ValueError(f"sample rate must be positive, got {self.fs}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class FilterCoefficients:
    """Cascade of second-order sections, rows ``b0 b1 b2 a0 a1 a2``."""

    sos: np.ndarray
    fs: float
    low_hz: float
    high_hz: float
    order: int


@dataclass(frozen=True)
class CycleSegment:
    samples: np.ndarray
    patient_id: int
    disease: str
    recording: str
    cycle_index: int

    def __post_init__(self):
        if self.samples.shape != (SEGMENT_LENGTH,):
            raise ValueError(f"segment must hold {SEGMENT_LENGTH} samples, got {self.samples.shape}")
        if np.max(np.abs(self.samples)) > 1.0:
            raise ValueError("segment samples exceed [-1, 1]")
        if self.disease not in RETAINED_DISEASES:
            raise ValueError(f"disease {self.disease!r} is not a retained class")

    @property
    def key(self) -> str:
        return f"{self.patient_id}_{self.recording}_{self.cycle_index}"


def design_bandpass(low_hz: float = 50.0, high_hz: float = 2500.0, order: int = 6,
                    fs: float = TARGET_FS) -> FilterCoefficients:
    """Digital Butterworth bandpass from a prewarped analog prototype (bilinear transform).

    ``order`` is the lowpass prototype order, so the cascade has ``order`` sections.
    """
    if low_hz <= 0 or high_hz <= low_hz:
        raise InvalidBand(f"need 0 < low < high, got ({low_hz}, {high_hz})")
    if high_hz >= fs / 2:
        raise InvalidBand(f"high edge {high_hz} Hz is not below Nyquist {fs / 2} Hz")
    sos = sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    poles = np.concatenate([np.roots(sec[3:]) for sec in sos])
    if np.any(np.abs(poles) >= 1.0):
        raise InvalidBand("unstable section in filter cascade")
    return FilterCoefficients(sos=sos, fs=float(fs), low_hz=float(low_hz),
                              high_hz=float(high_hz), order=int(order))


def apply_filter(sig: Signal, coeffs: FilterCoefficients) -> Signal:
    """Causal single pass through the section cascade from zero state."""
    if sig.fs != coeffs.fs:
        raise SampleRateMismatch(f"signal at {sig.fs} Hz, filter designed for {coeffs.fs} Hz")
    return Signal(sps.sosfilt(coeffs.sos, sig.samples), sig.fs)


def resample(sig: Signal, target_fs: float = TARGET_FS) -> Signal:
    """Polyphase windowed-sinc rational resampling; length becomes round(n * target / fs)."""
    if sig.fs == target_fs:
        return sig
    ratio = Fraction(target_fs).limit_denominator(10**6) / Fraction(sig.fs).limit_denominator(10**6)
    up, down = ratio.numerator, ratio.denominator
    out = sps.resample_poly(sig.samples, up, down)
    n_out = int(round(len(sig) * target_fs / sig.fs))
    if out.size >= n_out:
        out = out[:n_out]
    else:
        out = np.pad(out, (0, n_out - out.size))
    return Signal(out, float(target_fs))


def normalize(sig: Signal) -> Signal:
    peak = np.max(np.abs(sig.samples))
    if peak == 0:
        return sig
    # IEEE division gives exactly +-1 at the peak and |v| <= 1 elsewhere.
    return Signal(sig.samples / peak, sig.fs)


def extract_segments(
    sig: Signal,
    cycles: list[CycleAnnotation],
    meta: RecordingMeta,
    diagnosis: DiagnosisTable,
) -> tuple[list[CycleSegment], Counter]:
    """Cut annotated cycles into 6 s segments.

    Cycles shorter than 3 s are dropped. Longer cycles keep their first 6 s;
    cycles between 3 and 6 s are extended by repeating their own samples.
    Returns the segments and a counter of dropped cycles by reason.
    """
    if sig.fs != TARGET_FS:
        raise SampleRateMismatch(f"segmentation expects {TARGET_FS} Hz, got {sig.fs}")
    dropped: Counter = Counter()
    disease = diagnosis[meta.patient_id]
    if disease in EXCLUDED_DISEASES:
        dropped["excluded_class"] += len(cycles)
        return [], dropped

    min_len = int(round(MIN_CYCLE_SECONDS * sig.fs))
    segments = []
    for idx, cyc in enumerate(cycles):
        start = min(int(round(cyc.start_s * sig.fs)), len(sig))
        stop = min(int(round(cyc.end_s * sig.fs)), len(sig))
        piece = sig.samples[start:stop]
        if piece.size < min_len:
            dropped["too_short"] += 1
            continue
        if piece.size >= SEGMENT_LENGTH:
            seg = piece[:SEGMENT_LENGTH].copy()
        else:
            seg = np.resize(piece, SEGMENT_LENGTH)
        segments.append(CycleSegment(seg, meta.patient_id, disease, meta.rec_id, idx))
    return segments, dropped


def preprocess_recording(
    samples: np.ndarray,
    fs: float,
    meta: RecordingMeta,
    cycles: list[CycleAnnotation],
    diagnosis: DiagnosisTable,
    low_hz: float = 50.0,
    high_hz: float = 2500.0,
    order: int = 6,
    target_fs: float = TARGET_FS,
) -> tuple[list[CycleSegment], Counter]:
    """filter -> resample -> normalize -> segment for one recording."""
    sig = Signal(samples, fs)
    nyq = fs / 2
    if high_hz >= nyq:
        clamped = 0.95 * nyq
        log.warning("%s: %g Hz recording cannot pass %g Hz; high edge clamped to %g Hz",
                    meta.stem, fs, high_hz, clamped)
        high_hz = clamped
    sig = apply_filter(sig, design_bandpass(low_hz, high_hz, order, fs))
    sig = normalize(resample(sig, target_fs))
    return extract_segments(sig, cycles, meta, diagnosis)


def write_segment(directory: str | Path, seg: CycleSegment) -> Path:
    """Store samples as little-endian float32 with a JSON sidecar."""
    directory = Path(directory)
    path = directory / f"{seg.key}.f32"
    seg.samples.astype("<f4").tofile(path)
    sidecar = {
        "fs": TARGET_FS,
        "patient": seg.patient_id,
        "label": seg.disease,
        "recording": seg.recording,
        "cycle_index": seg.cycle_index,
        "n_samples": int(seg.samples.size),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return path


def read_segment(path: str | Path) -> CycleSegment:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    return CycleSegment(samples, int(meta["patient"]), meta["label"], meta["recording"],
                        int(meta["cycle_index"]))
