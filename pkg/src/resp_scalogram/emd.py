"""Empirical mode decomposition by envelope-mean sifting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import EmptyImfSet, InsufficientExtrema, TooShort

MAX_IMFS = 9
SD_THRESHOLD = 0.2
MAX_SIFTS = 50


@dataclass(frozen=True)
class ImfSet:
    """IMFs (rows, IMF_1 first) and the residue; ``x == imfs.sum(0) + residue``."""

    imfs: np.ndarray
    residue: np.ndarray
    # Per IMF: whether it meets the extrema/zero-crossing condition. False only
    # when the sift cap ended sifting first.
    converged: tuple[bool, ...] | None = None

    @property
    def n_imfs(self) -> int:
        return self.imfs.shape[0]

    @property
    def source_len(self) -> int:
        return self.residue.size

    def imf(self, index: int) -> np.ndarray:
        """1-based access matching the IMF_1..IMF_N numbering."""
        if not 1 <= index <= self.n_imfs:
            raise IndexError(f"IMF index {index} outside 1..{self.n_imfs}")
        return self.imfs[index - 1]

    def reconstruct(self) -> np.ndarray:
        return self.imfs.sum(axis=0) + self.residue


def find_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of strict local maxima and minima.

    A flat plateau counts once, at its midpoint. The first and last samples
    are never reported.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        raise TooShort(f"need at least 3 samples, got {x.size}")
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty.copy()
    s = d[nz] > 0
    turn = s[:-1] != s[1:]
    # Between consecutive non-zero slopes d[j], d[k] the plateau is x[j+1..k].
    mid = (nz[:-1] + 1 + nz[1:]) // 2
    return mid[turn & s[:-1]], mid[turn & ~s[:-1]]


def count_zero_crossings(x: np.ndarray) -> int:
    signs = np.sign(x)
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def is_imf(x: np.ndarray) -> bool:
    """Extrema and zero-crossing counts differ by at most one."""
    mx, mn = find_extrema(x)
    return abs(mx.size + mn.size - count_zero_crossings(x)) <= 1


def envelope(x: np.ndarray, extrema: np.ndarray) -> np.ndarray:
    """Natural cubic spline through ``x[extrema]`` evaluated at every sample.

    The two extrema nearest each end are mirrored across that end before
    fitting. With exactly two extrema the envelope is the line through them.
    """
    x = np.asarray(x, dtype=np.float64)
    idx = np.asarray(extrema, dtype=np.intp)
    if idx.size < 2:
        raise InsufficientExtrema(f"need at least 2 extrema, got {idx.size}")
    t = np.arange(x.size, dtype=np.float64)
    vals = x[idx]
    if idx.size == 2:
        slope = (vals[1] - vals[0]) / (idx[1] - idx[0])
        return vals[0] + slope * (t - idx[0])
    last = x.size - 1
    knots = np.concatenate([-idx[1::-1], idx, 2 * last - idx[:-3:-1]]).astype(np.float64)
    kvals = np.concatenate([vals[1::-1], vals, vals[:-3:-1]])
    return CubicSpline(knots, kvals, bc_type="natural")(t)


def _sift(h: np.ndarray, sd_threshold: float, max_sifts: int) -> tuple[np.ndarray, bool]:
    mx, mn = find_extrema(h)
    for _ in range(max_sifts):
        if mx.size < 2 or mn.size < 2:
            break
        mean = 0.5 * (envelope(h, mx) + envelope(h, mn))
        energy = np.dot(h, h)
        h = h - mean
        sd = np.dot(mean, mean) / energy if energy > 0 else 0.0
        mx, mn = find_extrema(h)
        if sd < sd_threshold and abs(mx.size + mn.size - count_zero_crossings(h)) <= 1:
            return h, True
    return h, is_imf(h)


def decompose(x: np.ndarray, max_imfs: int = MAX_IMFS, sd_threshold: float = SD_THRESHOLD,
              max_sifts: int = MAX_SIFTS) -> ImfSet:
    """Split ``x`` into at most ``max_imfs`` IMFs plus a residue.

    Each IMF is sifted until the Cauchy-type SD criterion falls below
    ``sd_threshold`` with the IMF extrema/zero-crossing condition met, or
    ``max_sifts`` iterations elapse. Extraction stops early once the remainder
    has fewer than two maxima or two minima, or when a remainder with too few
    extrema for spline envelopes does not sift into a valid IMF. Fewer than
    ``max_imfs`` IMFs are returned as-is.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 16:
        raise TooShort(f"need at least 16 samples, got {x.size}")
    residue = x.copy()
    imfs, converged = [], []
    while len(imfs) < max_imfs:
        mx, mn = find_extrema(residue)
        if mx.size < 2 or mn.size < 2:
            break
        h, ok = _sift(residue, sd_threshold, max_sifts)
        if (mx.size < 3 or mn.size < 3) and not ok:
            # Linear envelopes could not shape a mode; what is left is trend.
            break
        imfs.append(h)
        converged.append(ok)
        residue = residue - h
    stacked = np.array(imfs) if imfs else np.empty((0, x.size))
    return ImfSet(stacked, residue, tuple(converged))


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / denom) if denom > 0 else 0.0


def select_max_correlated_imf(x: np.ndarray, imf_set: ImfSet) -> tuple[int, float]:
    """1-based index of the IMF with the largest |zero-lag Pearson| against ``x``.

    Ties (equal to machine tolerance) go to the smallest index; the returned
    coefficient keeps its sign.
    """
    if imf_set.n_imfs == 0:
        raise EmptyImfSet("no IMFs to select from")
    x = np.asarray(x, dtype=np.float64)
    coeffs = np.array([pearson(x, imf) for imf in imf_set.imfs])
    mags = np.abs(coeffs)
    winner = int(np.flatnonzero(np.isclose(mags, mags.max(), rtol=1e-12, atol=1e-15))[0])
    return winner + 1, float(coeffs[winner])
