"""Framing, mel filterbank and the fixed 20x20 MFCC feature matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from ._util import round_half_up
from .audio import Waveform

N_COEFFS = 20  # cepstral coefficients retained (indices 1..20, c0 dropped)
N_TIME = 20  # time columns after segment averaging
DEFAULT_N_FILTERS = 26
LOG_FLOOR = 1e-12


@dataclass
class FrameParams:
    """Analysis geometry: window length in samples, overlap percent, FFT size."""

    window_len: int = 245
    overlap_pct: float = 45.0
    fft_size: int = 512

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2 samples")
        if not 0.0 <= self.overlap_pct < 100.0:
            raise ValueError("overlap_pct must lie in [0, 100)")
        if self.fft_size < self.window_len:
            raise ValueError("fft_size must be >= window_len")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")

    @property
    def hop(self) -> int:
        h = round_half_up(self.window_len * (1.0 - self.overlap_pct / 100.0))
        return max(h, 1)


def hamming_window(n: int) -> np.ndarray:
    """w[k] = 0.54 - 0.46*cos(2*pi*k/(n-1)); endpoints are exactly 0.54 - 0.46."""
    if n < 2:
        raise ValueError("window needs at least 2 points")
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def frame_signal(wave: Waveform, params: FrameParams) -> np.ndarray:
    """Slice into overlapping frames, zero-padding the final partial frame.

    Frame count is ceil((len - window_len)/hop) + 1.
    """
    n = len(wave)
    w = params.window_len
    if n < w:
        raise ValueError(f"signal of {n} samples shorter than window {w}")
    hop = params.hop
    count = int(np.ceil((n - w) / hop)) + 1
    frames = np.zeros((count, w))
    for i in range(count):
        chunk = wave.samples[i * hop : i * hop + w]
        frames[i, : len(chunk)] = chunk
    return frames


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_filters: int, fft_size: int, sample_rate: int
) -> np.ndarray:
    """Triangular filters on a mel-spaced grid from 0 Hz to Nyquist.

    Returns (n_filters, fft_size//2 + 1) weights; each row peaks at its own
    center frequency and adjacent filters overlap triangularly.
    """
    if n_filters < 20:
        raise ValueError("need at least 20 mel filters")
    if fft_size < 16:
        raise ValueError("fft_size too small for a filterbank")
    edges_mel = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_filters + 2)
    edges_hz = mel_to_hz(edges_mel)
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    weights = np.zeros((n_filters, bin_freqs.size))
    for i in range(n_filters):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def mfcc_frames(
    wave: Waveform, params: FrameParams, n_filters: int = DEFAULT_N_FILTERS
) -> np.ndarray:
    """Per-frame MFCC vectors, coefficients 1..20 (c0 dropped).

    Pipeline per frame: Hamming window, power spectrum on fft_size points,
    mel filterbank energies, log with floor 1e-12, orthonormal DCT-II.
    """
    if n_filters <= N_COEFFS:
        raise ValueError(
            f"n_filters must exceed {N_COEFFS} to retain coefficients 1..{N_COEFFS}"
        )
    frames = frame_signal(wave, params)
    windowed = frames * hamming_window(params.window_len)
    power = np.abs(np.fft.rfft(windowed, n=params.fft_size, axis=1)) ** 2
    fb = mel_filterbank(n_filters, params.fft_size, wave.sample_rate)
    energies = power @ fb.T
    log_e = np.log(np.maximum(energies, LOG_FLOOR))
    cepstra = dct(log_e, type=2, norm="ortho", axis=1)
    return cepstra[:, 1 : N_COEFFS + 1]


def to_feature_matrix(vectors: np.ndarray) -> np.ndarray:
    """Reduce (n_frames, 20) MFCC vectors to a fixed (20, 20) matrix.

    With >= 20 frames the time axis is cut into 20 contiguous segments
    (boundaries by rounding) and each segment is averaged; with fewer frames
    columns repeat frames by nearest-index mapping.  Rows are coefficients,
    columns are time positions.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("expected a non-empty (n_frames, n_coeffs) array")
    t = vectors.shape[0]
    cols = np.empty((N_TIME, vectors.shape[1]))
    if t >= N_TIME:
        bounds = [round_half_up(j * t / N_TIME) for j in range(N_TIME + 1)]
        for j in range(N_TIME):
            cols[j] = vectors[bounds[j] : bounds[j + 1]].mean(axis=0)
    else:
        for j in range(N_TIME):
            idx = round_half_up(j * (t - 1) / (N_TIME - 1)) if t > 1 else 0
            cols[j] = vectors[idx]
    return cols.T


def extract_features(
    wave: Waveform,
    params: FrameParams | None = None,
    n_filters: int = DEFAULT_N_FILTERS,
) -> np.ndarray:
    """Waveform straight to the (20, 20) coefficient-by-time matrix."""
    return to_feature_matrix(mfcc_frames(wave, params or FrameParams(), n_filters))
