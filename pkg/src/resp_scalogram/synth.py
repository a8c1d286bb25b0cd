"""Synthetic stand-in corpus with the same file layout as the real recordings.

Each class owns a carrier frequency. A cycle is a breathing-shaped burst of
that carrier plus a weaker chirp around it and white noise, so the classes are
separable by where their energy sits in the scalogram.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import RecordingMeta, compose_recording_filename, write_wav
from .preprocess import RETAINED_DISEASES

CARRIER_HZ = {
    "Bronchiectasis": 120.0,
    "Bronchiolitis": 240.0,
    "COPD": 450.0,
    "Healthy": 800.0,
    "Pneumonia": 1300.0,
    "URTI": 2000.0,
    "Asthma": 600.0,
    "LRTI": 1000.0,
}
LOCATIONS = ("Tc", "Al", "Ar", "Pl", "Pr", "Ll", "Lr")


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple[str, ...] = RETAINED_DISEASES
    patients_per_class: int = 4
    cycles_per_recording: int = 5
    fs: int = 44100
    min_cycle_s: float = 3.5
    max_cycle_s: float = 5.5
    gap_s: float = 0.4
    noise: float = 0.05
    # Extra 2 s cycle appended to every recording to exercise the too-short drop.
    short_cycle: bool = False
    first_patient: int = 101

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        unknown = [c for c in self.classes if c not in CARRIER_HZ]
        if unknown:
            raise ValueError(f"no synthetic model for classes {unknown}")
        if self.patients_per_class < 1 or self.cycles_per_recording < 1:
            raise ValueError("need at least one patient per class and one cycle per recording")
        if not 0 < self.min_cycle_s <= self.max_cycle_s:
            raise ValueError("cycle durations must satisfy 0 < min <= max")
        if self.fs < 8000:
            raise ValueError("fs must be at least 8000 Hz")


def cycle_waveform(disease: str, n: int, fs: float, rng: np.random.Generator,
                   noise: float = 0.05) -> np.ndarray:
    f0 = CARRIER_HZ[disease] * rng.uniform(0.97, 1.03)
    t = np.arange(n) / fs
    # Rise and fall over the cycle, like airflow through one breath.
    breath = np.sqrt(np.clip(np.sin(np.pi * np.arange(n) / max(n - 1, 1)), 0, None))
    phase = rng.uniform(0, 2 * np.pi)
    tone = np.sin(2 * np.pi * f0 * t + phase)
    sweep = np.sin(2 * np.pi * (0.85 * f0 * t + 0.15 * f0 * t**2 / t[-1]))
    x = breath * (tone + 0.25 * sweep) + noise * rng.standard_normal(n)
    return 0.5 * x / np.max(np.abs(x))


def synthesize(out_dir: str | Path, config: SynthConfig = SynthConfig(), seed: int = 0) -> Counter:
    """Write WAVs, annotation files and ``diagnosis.csv`` into ``out_dir``.

    One recording per patient. Returns the number of annotated cycles per class.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fs = config.fs
    counts: Counter = Counter()
    rows = []
    pid = config.first_patient
    for disease in config.classes:
        for k in range(config.patients_per_class):
            rng = np.random.default_rng([seed, pid])
            meta = RecordingMeta(pid, "1b1", LOCATIONS[k % len(LOCATIONS)], "sc", "Meditron")
            durations = list(rng.uniform(config.min_cycle_s, config.max_cycle_s,
                                         config.cycles_per_recording))
            if config.short_cycle:
                durations.append(2.0)
            pieces, lines = [], []
            cursor = config.gap_s
            pieces.append(config.noise * 0.5 * rng.standard_normal(int(round(config.gap_s * fs))))
            for dur in durations:
                n = int(round(dur * fs))
                start = cursor
                pieces.append(cycle_waveform(disease, n, fs, rng, config.noise))
                gap = int(round(config.gap_s * fs))
                pieces.append(config.noise * 0.5 * rng.standard_normal(gap))
                cursor += (n + gap) / fs
                crackles, wheezes = rng.integers(0, 2, size=2)
                lines.append(f"{start:.3f}\t{start + n / fs:.3f}\t{crackles}\t{wheezes}\n")
            stem = compose_recording_filename(meta)[:-len(".wav")]
            write_wav(out / f"{stem}.wav", np.concatenate(pieces), fs)
            (out / f"{stem}.txt").write_text("".join(lines))
            rows.append(f"{pid},{disease}\n")
            counts[disease] += len(durations)
            pid += 1
    (out / "diagnosis.csv").write_text("patient_id,diagnosis\n" + "".join(rows))
    return counts
