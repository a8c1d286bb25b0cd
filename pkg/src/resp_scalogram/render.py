"""Scalogram images: dB scaling, colormap lookup, bilinear resize and colormap augmentation."""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import TooSmall

IMAGE_SIZE = 224
FLOOR_DB = -80.0
COLORMAPS = ("Parula", "HSV", "Jet", "Hot")
MAJORITY_CLASSES = ("COPD",)
ASSETS_ENV = "RESP_SCALOGRAM_ASSETS"


def asset_dir() -> Path:
    override = os.environ.get(ASSETS_ENV)
    return Path(override) if override else Path(__file__).with_name("assets")


@lru_cache(maxsize=None)
def _load_table(path: str) -> np.ndarray:
    table = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    if table.shape != (256, 3):
        raise ValueError(f"{path}: colormap must have 256 rows of r,g,b, got {table.shape}")
    if table.min() < 0 or table.max() > 255:
        raise ValueError(f"{path}: channel values outside 0..255")
    table = table.astype(np.uint8)
    table.flags.writeable = False
    return table


def load_colormap(name: str, directory: str | Path | None = None) -> np.ndarray:
    """256x3 uint8 RGB table for one of Parula, HSV, Jet, Hot."""
    if name not in COLORMAPS:
        raise ValueError(f"unknown colormap {name!r}; expected one of {COLORMAPS}")
    directory = Path(directory) if directory is not None else asset_dir()
    return _load_table(str(directory / f"{name.lower()}.csv"))


def to_db(p: np.ndarray, floor_db: float = FLOOR_DB) -> np.ndarray:
    """Map power to [0, 1]: 10*log10(p / max p) clamped to [floor_db, 0], then rescaled."""
    p = np.asarray(p, dtype=np.float64)
    peak = p.max() if p.size else 0.0
    if peak <= 0:
        return np.zeros_like(p)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(p / peak)
    db = np.clip(db, floor_db, 0.0)
    return (db - floor_db) / (0.0 - floor_db)


def apply_colormap(norm: np.ndarray, table: np.ndarray) -> np.ndarray:
    idx = np.rint(np.clip(norm, 0.0, 1.0) * 255).astype(np.intp)
    return table[idx]


def resize_bilinear(m: np.ndarray, out_h: int = IMAGE_SIZE, out_w: int = IMAGE_SIZE) -> np.ndarray:
    """Corner-aligned separable bilinear resize of the first two axes."""
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape[:2]
    if h < 2 or w < 2:
        raise TooSmall(f"need at least 2x2 input, got {h}x{w}")
    if (h, w) == (out_h, out_w):
        return m.copy()

    def axis_weights(n_in, n_out):
        pos = np.linspace(0.0, n_in - 1, n_out)
        lo = np.minimum(np.floor(pos).astype(np.intp), n_in - 2)
        return lo, pos - lo

    r0, fr = axis_weights(h, out_h)
    c0, fc = axis_weights(w, out_w)
    extra = (None,) * (m.ndim - 2)
    fr = fr[(slice(None), None, *extra)]
    fc = fc[(None, slice(None), *extra)]
    top = m[np.ix_(r0, c0)] * (1 - fc) + m[np.ix_(r0, c0 + 1)] * fc
    bottom = m[np.ix_(r0 + 1, c0)] * (1 - fc) + m[np.ix_(r0 + 1, c0 + 1)] * fc
    return top * (1 - fr) + bottom * fr


@dataclass(frozen=True)
class SegmentRef:
    patient_id: int
    disease: str
    recording: str
    cycle_index: int

    @property
    def key(self) -> str:
        return f"{self.patient_id}_{self.recording}_{self.cycle_index}"


@dataclass(frozen=True)
class AugmentJob:
    segment: SegmentRef
    variant: int
    colormap: str

    @property
    def filename(self) -> str:
        s = self.segment
        return f"{s.patient_id}_{s.recording}_{s.cycle_index}_{self.variant}_{self.colormap}.png"


@dataclass(frozen=True)
class ScalogramImage:
    pixels: np.ndarray
    job: AugmentJob

    def __post_init__(self):
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE, 3) or self.pixels.dtype != np.uint8:
            raise ValueError(f"image must be {IMAGE_SIZE}x{IMAGE_SIZE}x3 uint8")
        if self.job.colormap not in COLORMAPS:
            raise ValueError(f"unknown colormap {self.job.colormap!r}")


def majority_colormap(seed: int, segment: SegmentRef) -> str:
    """Uniform draw over the four colormaps keyed by (seed, segment) only."""
    rng = np.random.default_rng([seed, zlib.crc32(segment.key.encode())])
    return COLORMAPS[int(rng.integers(len(COLORMAPS)))]


def augment(segments: list[SegmentRef], seed: int,
            majority: tuple[str, ...] = MAJORITY_CLASSES) -> list[AugmentJob]:
    """Plan the rebalancing images.

    Segments of minority classes get one image per colormap; segments of a
    majority class get a single image whose colormap is drawn at random.
    """
    jobs = []
    for seg in segments:
        if seg.disease in majority:
            jobs.append(AugmentJob(seg, 0, majority_colormap(seed, seg)))
        else:
            jobs.extend(AugmentJob(seg, v, cmap) for v, cmap in enumerate(COLORMAPS))
    return jobs


def unit_image(power: np.ndarray, floor_db: float = FLOOR_DB) -> np.ndarray:
    """Scale x time power resized to IMAGE_SIZE square and dB-mapped to [0, 1]."""
    return to_db(resize_bilinear(power, IMAGE_SIZE, IMAGE_SIZE), floor_db)


def render(unit: np.ndarray, job: AugmentJob) -> ScalogramImage:
    """Bare colormapped image (no axes or margins) of a ``unit_image`` matrix."""
    pixels = apply_colormap(unit, load_colormap(job.colormap))
    return ScalogramImage(np.ascontiguousarray(pixels), job)


def save_png(image: ScalogramImage, directory: str | Path) -> Path:
    path = Path(directory) / image.job.filename
    Image.fromarray(image.pixels).save(path, format="PNG", optimize=False)
    return path


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
