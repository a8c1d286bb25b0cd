"""Analytic CWT with a generalized Morse wavelet, computed in the frequency domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import LengthMismatch, TooShort

GAMMA = 3.0
TIME_BANDWIDTH = 60.0
VOICES_PER_OCTAVE = 10
# Smallest scale: the wavelet has fallen to this fraction of its peak at Nyquist.
NYQUIST_DECAY = 0.1


def morse_peak(gamma: float, beta: float) -> float:
    """Peak radian frequency (beta/gamma)**(1/gamma) of the mother wavelet."""
    return (beta / gamma) ** (1.0 / gamma)


def morse_wavelet(omega: np.ndarray, gamma: float, beta: float) -> np.ndarray:
    """Frequency response 2 * a * w**beta * exp(-w**gamma) for w > 0, else 0.

    ``a`` scales the peak value to 2 (L1 normalization).
    """
    omega = np.asarray(omega, dtype=np.float64)
    out = np.zeros_like(omega)
    pos = omega > 0
    w = omega[pos]
    log_a = (beta / gamma) * (1.0 + np.log(gamma) - np.log(beta))
    out[pos] = 2.0 * np.exp(log_a + beta * np.log(w) - w**gamma)
    return out


@dataclass(frozen=True)
class FilterBank:
    n: int
    fs: float
    gamma: float
    beta: float
    voices_per_octave: int
    scales: np.ndarray
    center_freqs: np.ndarray
    # Wavelet values on the non-negative DFT bins 0..n//2, one row per scale.
    psi_half: np.ndarray

    @property
    def n_scales(self) -> int:
        return self.scales.size

    @property
    def omega_peak(self) -> float:
        return morse_peak(self.gamma, self.beta)

    def psi(self, row: int) -> np.ndarray:
        """Full-length frequency response of one scale; zero on negative bins."""
        full = np.zeros(self.n)
        full[: self.psi_half.shape[1]] = self.psi_half[row]
        return full


def _scale_range(n: int, gamma: float, beta: float) -> tuple[float, float]:
    wp = morse_peak(gamma, beta)

    def decay(s):
        # log(psi(s*pi) / psi(wp)) - log(NYQUIST_DECAY)
        w = s * np.pi
        return beta * np.log(w / wp) - (w**gamma - wp**gamma) - np.log(NYQUIST_DECAY)

    s_min = brentq(decay, wp / np.pi, 10.0 * wp / np.pi)
    # Time spread of the wavelet at scale s is about s * sqrt(beta * gamma) / wp;
    # stop where two widths of +-1 spread still fit in the signal.
    s_max = n * wp / (4.0 * np.sqrt(beta * gamma))
    return s_min, s_max


def build_filter_bank(n: int, fs: float, gamma: float = GAMMA,
                      time_bandwidth: float = TIME_BANDWIDTH,
                      voices_per_octave: int = VOICES_PER_OCTAVE) -> FilterBank:
    """Morse wavelets on a geometric scale grid for signals of ``n`` samples at ``fs``."""
    if n < 32:
        raise TooShort(f"need at least 32 samples, got {n}")
    beta = time_bandwidth / gamma
    s_min, s_max = _scale_range(n, gamma, beta)
    n_octaves = max(np.log2(s_max / s_min), 0.0)
    count = int(np.floor(n_octaves * voices_per_octave)) + 1
    scales = s_min * 2.0 ** (np.arange(count) / voices_per_octave)
    wp = morse_peak(gamma, beta)
    center_freqs = wp / (2.0 * np.pi * scales) * fs
    omega = 2.0 * np.pi * np.arange(n // 2 + 1) / n
    psi_half = morse_wavelet(scales[:, None] * omega[None, :], gamma, beta)
    return FilterBank(n=n, fs=float(fs), gamma=gamma, beta=beta,
                      voices_per_octave=voices_per_octave, scales=scales,
                      center_freqs=center_freqs, psi_half=psi_half)


def _spectrum(x: np.ndarray, bank: FilterBank) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != bank.n:
        raise LengthMismatch(f"signal has {x.size} samples, filter bank expects {bank.n}")
    return np.fft.fft(x)


def cwt(x: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Complex coefficients, shape (n_scales, n): row j is IDFT(DFT(x) * psi_j).

    Convolution is periodic.
    """
    spec = _spectrum(x, bank)
    half = bank.psi_half.shape[1]
    prod = np.zeros((bank.n_scales, bank.n), dtype=np.complex128)
    prod[:, :half] = spec[None, :half] * bank.psi_half
    return np.fft.ifft(prod, axis=1)


@dataclass(frozen=True)
class Scalogram:
    power: np.ndarray
    scales: np.ndarray
    center_freqs: np.ndarray
    fs: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.power.shape


def power(z: np.ndarray, bank: FilterBank | None = None) -> Scalogram:
    """Entrywise squared modulus of CWT coefficients."""
    p = np.abs(z) ** 2
    if bank is None:
        return Scalogram(p, np.arange(p.shape[0], dtype=np.float64), np.full(p.shape[0], np.nan),
                         np.nan)
    return Scalogram(p, bank.scales, bank.center_freqs, bank.fs)


def scalogram(x: np.ndarray, bank: FilterBank) -> Scalogram:
    """|CWT|**2 computed one scale at a time to bound peak memory on long segments."""
    spec = _spectrum(x, bank)
    half = bank.psi_half.shape[1]
    out = np.empty((bank.n_scales, bank.n))
    row = np.zeros(bank.n, dtype=np.complex128)
    for j in range(bank.n_scales):
        row[:half] = spec[:half] * bank.psi_half[j]
        z = np.fft.ifft(row)
        out[j] = z.real**2 + z.imag**2
    return Scalogram(out, bank.scales, bank.center_freqs, bank.fs)
