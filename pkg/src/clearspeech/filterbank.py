"""FIR design, adaptive noise cancellation and channel-normalization filters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import Waveform

FIR_KINDS = ("lowpass", "highpass", "bandpass", "bandstop")

# RASTA band-pass on log trajectories: numerator 0.1*(2 + z^-1 - z^-3 - 2 z^-4).
# A pole of 0.98 appears in the original formulation but decays too slowly to
# kill DC within a couple hundred frames; the widely used 0.94 variant does.
RASTA_NUMER = 0.1 * np.array([2.0, 1.0, 0.0, -1.0, -2.0])
RASTA_POLE = 0.94


@dataclass
class FirSpec:
    """Windowed-sinc FIR design request.

    edges_hz carries one cutoff for lowpass/highpass, two for bandpass/bandstop.
    """

    kind: str
    edges_hz: tuple[float, ...]
    num_taps: int = 101
    sample_rate: int = 8000

    def __post_init__(self):
        if self.kind not in FIR_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        self.edges_hz = tuple(float(e) for e in self.edges_hz)
        need = 1 if self.kind in ("lowpass", "highpass") else 2
        if len(self.edges_hz) != need:
            raise ValueError(f"{self.kind} needs {need} edge(s), got {len(self.edges_hz)}")
        nyquist = self.sample_rate / 2.0
        for e in self.edges_hz:
            if not 0.0 < e < nyquist:
                raise ValueError(f"cutoff {e} Hz outside open interval (0, {nyquist})")
        if need == 2 and self.edges_hz[0] >= self.edges_hz[1]:
            raise ValueError("band edges must be strictly increasing")
        if self.num_taps < 3 or self.num_taps % 2 == 0:
            raise ValueError("num_taps must be an odd integer >= 3")


def _sinc_lowpass(cutoff_hz: float, num_taps: int, sample_rate: int) -> np.ndarray:
    # Hamming-windowed sinc, normalized to unity DC gain.
    fc = cutoff_hz / sample_rate
    m = np.arange(num_taps) - (num_taps - 1) / 2.0
    h = 2.0 * fc * np.sinc(2.0 * fc * m)
    h *= np.hamming(num_taps)
    return h / np.sum(h)


def _amplitude_at(taps: np.ndarray, freq_hz: float, sample_rate: int) -> float:
    # Zero-phase amplitude of a symmetric (type I) filter.
    m = np.arange(len(taps)) - (len(taps) - 1) / 2.0
    return float(np.sum(taps * np.cos(2.0 * np.pi * freq_hz / sample_rate * m)))


def design_fir(spec: FirSpec) -> np.ndarray:
    """Design linear-phase FIR taps for the requested band shape.

    Low-pass is a Hamming-windowed sinc with unity DC gain; high-pass and
    band-stop come from spectral inversion, band-pass from the difference of
    two low-passes normalized to unity gain at the band center.
    """
    n = spec.num_taps
    mid = (n - 1) // 2
    if spec.kind == "lowpass":
        return _sinc_lowpass(spec.edges_hz[0], n, spec.sample_rate)
    if spec.kind == "highpass":
        taps = -_sinc_lowpass(spec.edges_hz[0], n, spec.sample_rate)
        taps[mid] += 1.0
        return taps
    f1, f2 = spec.edges_hz
    band = _sinc_lowpass(f2, n, spec.sample_rate) - _sinc_lowpass(
        f1, n, spec.sample_rate
    )
    center = (f1 + f2) / 2.0
    band /= _amplitude_at(band, center, spec.sample_rate)
    if spec.kind == "bandpass":
        return band
    taps = -band
    taps[mid] += 1.0
    return taps


def apply_fir(wave: Waveform, taps: np.ndarray) -> Waveform:
    """Convolve with zero initial state; output length equals input length."""
    taps = np.asarray(taps, dtype=np.float64)
    if taps.size == 0:
        raise ValueError("empty tap vector")
    out = np.convolve(wave.samples, taps)[: len(wave)]
    return Waveform(out, wave.sample_rate)


@dataclass
class AdaptiveParams:
    order: int = 8
    mu: float = 0.01
    eps: float = 1e-8  # NLMS power-floor regularizer

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def _reference_matrix(reference: np.ndarray, order: int) -> np.ndarray:
    # Row i holds [ref[i], ref[i-1], ..., ref[i-order+1]], zero-padded history.
    padded = np.concatenate([np.zeros(order - 1), reference])
    view = np.lib.stride_tricks.sliding_window_view(padded, order)
    return view[:, ::-1]


def _adaptive_cancel(
    primary: Waveform,
    reference: Waveform,
    params: AdaptiveParams,
    normalized: bool,
) -> tuple[Waveform, np.ndarray]:
    if len(primary) != len(reference):
        raise ValueError(
            f"length mismatch: primary {len(primary)} vs reference {len(reference)}"
        )
    if primary.sample_rate != reference.sample_rate:
        raise ValueError("sample rate mismatch between primary and reference")
    x = _reference_matrix(reference.samples, params.order)
    w = np.zeros(params.order)
    n = len(primary)
    residual = np.empty(n)
    history = np.empty((n, params.order))
    p = primary.samples
    for i in range(n):
        xi = x[i]
        e = p[i] - w @ xi
        residual[i] = e
        if normalized:
            w = w + params.mu * e * xi / (params.eps + xi @ xi)
        else:
            w = w + params.mu * e * xi
        history[i] = w
    return Waveform(residual, primary.sample_rate), history


def lms_cancel(
    primary: Waveform, reference: Waveform, params: AdaptiveParams | None = None
) -> tuple[Waveform, np.ndarray]:
    """LMS noise canceller: w <- w + mu*e*x.  Returns (residual, weight history)."""
    return _adaptive_cancel(primary, reference, params or AdaptiveParams(), False)


def nlms_cancel(
    primary: Waveform, reference: Waveform, params: AdaptiveParams | None = None
) -> tuple[Waveform, np.ndarray]:
    """Power-normalized LMS: w <- w + mu*e*x/(eps + ||x||^2)."""
    return _adaptive_cancel(
        primary, reference, params or AdaptiveParams(mu=0.5), True
    )


def erle_db(mic: Waveform, residual: Waveform) -> float:
    """Echo-return-loss enhancement: 10*log10(sum(mic^2)/sum(residual^2))."""
    if len(mic) != len(residual):
        raise ValueError("length mismatch between mic and residual")
    res_power = float(np.sum(residual.samples**2))
    if res_power == 0.0:
        raise ValueError("residual is all zeros, ERLE undefined")
    mic_power = float(np.sum(mic.samples**2))
    if mic_power == 0.0:
        raise ValueError("mic signal is all zeros, ERLE undefined")
    return 10.0 * np.log10(mic_power / res_power)


def cmn(features: np.ndarray) -> np.ndarray:
    """Cepstral mean normalization: subtract each coefficient's mean over time.

    `features` is (n_coefficients, n_frames); output rows have zero mean.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        raise ValueError("empty feature matrix")
    if features.ndim != 2:
        raise ValueError("feature matrix must be 2-D (coefficients x frames)")
    return features - features.mean(axis=1, keepdims=True)


def rasta_filter(trajectories: np.ndarray, pole: float = RASTA_POLE) -> np.ndarray:
    """Band-pass log-domain trajectories along the frame axis.

    H(z) = 0.1*(2 + z^-1 - z^-3 - 2 z^-4) / (1 - pole*z^-1), zero initial
    state.  Accepts (n_bands, n_frames) or a single 1-D trajectory.
    """
    trajectories = np.asarray(trajectories, dtype=np.float64)
    if not 0.0 < pole < 1.0:
        raise ValueError("pole must lie in (0, 1)")
    if trajectories.ndim not in (1, 2):
        raise ValueError("expected a 1-D or 2-D trajectory array")
    if trajectories.shape[-1] < 5:
        raise ValueError("need at least 5 frames to run the RASTA filter")
    return lfilter(RASTA_NUMER, [1.0, -pole], trajectories, axis=-1)
