"""Spectral, statistical and Kalman speech enhancement plus hybrid pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal.windows import triang
from scipy.special import i0e, i1e

from .audio import Waveform
from .features import hamming_window
from .filterbank import (
    AdaptiveParams,
    FirSpec,
    apply_fir,
    design_fir,
    lms_cancel,
    nlms_cancel,
    rasta_filter,
)

SUBTRACT_VARIANTS = ("boll", "berouti", "sim", "kamath")
STATISTICAL_VARIANTS = ("wiener", "mmse", "logmmse", "omlsa")

# Berouti over-subtraction ramp: alpha = BASE - SLOPE * segmental SNR(dB),
# clamped to [1, 5].
_BEROUTI_BASE = 4.0
_BEROUTI_SLOPE = 3.0 / 20.0
_ALPHA_LO, _ALPHA_HI = 1.0, 5.0

# Per-band over-subtraction tweaks for the multi-band rule: unity below 1 kHz,
# heavier in the mid bands, lighter near Nyquist.
_BAND_TWEAK_LOW_HZ = 1000.0
_BAND_TWEAK_HIGH_OFFSET_HZ = 2000.0
_BAND_TWEAKS = (1.0, 2.5, 1.5)

_OMLSA_SMOOTHING = 0.7
_OMLSA_PRIOR = 0.5

KALMAN_BLOCK = 256  # samples per block, 50 percent overlap-add


def _window(name: str, n: int) -> np.ndarray:
    if name == "hamming":
        return hamming_window(n)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    if name == "rect":
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


@dataclass
class StftParams:
    frame_len: int = 256
    hop: int = 128
    fft_size: int = 256
    window: str = "hamming"

    def __post_init__(self):
        if self.frame_len < 2:
            raise ValueError("frame_len must be >= 2")
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("need 0 < hop <= frame_len")
        if self.fft_size < self.frame_len:
            raise ValueError("fft_size must be >= frame_len")
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        _window(self.window, self.frame_len)  # validates the name


@dataclass
class SpectralFrames:
    """One-sided STFT split into magnitudes and phases, (n_frames, n_bins)."""

    magnitudes: np.ndarray
    phases: np.ndarray
    params: StftParams
    original_length: int

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]


@dataclass
class NoisePsd:
    power: np.ndarray  # per-bin noise power, length n_bins
    frames_used: int


@dataclass
class EnhanceConfig:
    """Knobs shared by the subtraction and statistical enhancers.

    alpha=None selects the segmental-SNR over-subtraction ramp for the
    Berouti-style rules; an explicit alpha pins the factor (alpha=1, beta=0
    reduces them to plain power subtraction).
    """

    variant: str = "logmmse"
    alpha: float | None = None
    beta: float = 0.002
    exponent: float = 2.0  # generalized-subtraction exponent p
    dd_alpha: float = 0.98  # decision-directed smoothing
    bands: int = 4
    ar_order: int = 10
    iterations: int = 3
    gain_floor_db: float = -25.0

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 1.0:
            raise ValueError("explicit alpha must be >= 1")
        if not 0.0 <= self.beta <= 0.1:
            raise ValueError("beta must lie in [0, 0.1]")
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")
        if not 0.0 <= self.dd_alpha < 1.0:
            raise ValueError("dd_alpha must lie in [0, 1)")
        if self.bands < 1:
            raise ValueError("bands must be >= 1")
        if self.ar_order < 1:
            raise ValueError("ar_order must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def stft(wave: Waveform, params: StftParams | None = None) -> SpectralFrames:
    """Analysis: frames = 1 + floor((len - frame_len)/hop), one-sided spectra."""
    params = params or StftParams()
    n = len(wave)
    if n < params.frame_len:
        raise ValueError(f"signal of {n} samples shorter than frame {params.frame_len}")
    count = 1 + (n - params.frame_len) // params.hop
    idx = np.arange(params.frame_len) + params.hop * np.arange(count)[:, None]
    frames = wave.samples[idx] * _window(params.window, params.frame_len)
    spectra = np.fft.rfft(frames, n=params.fft_size, axis=1)
    return SpectralFrames(np.abs(spectra), np.angle(spectra), params, n)


def istft(frames: SpectralFrames, sample_rate: int) -> Waveform:
    """Weighted overlap-add resynthesis.

    Each frame is windowed again on synthesis and the sum is normalized by the
    accumulated squared window, which reconstructs unmodified spectra exactly
    and tapers frame boundaries of modified ones.
    """
    p = frames.params
    win = _window(p.window, p.frame_len)
    spectra = frames.magnitudes * np.exp(1j * frames.phases)
    time_frames = np.fft.irfft(spectra, n=p.fft_size, axis=1)[:, : p.frame_len]
    span = p.hop * (frames.n_frames - 1) + p.frame_len
    out = np.zeros(span)
    den = np.zeros(span)
    for m in range(frames.n_frames):
        start = m * p.hop
        out[start : start + p.frame_len] += win * time_frames[m]
        den[start : start + p.frame_len] += win**2
    interior = den[p.frame_len : -p.frame_len] if span > 2 * p.frame_len else den
    if interior.size and np.min(interior) < 1e-8 * np.max(den):
        raise ValueError(
            "window/hop geometry leaves coverage gaps and cannot be inverted"
        )
    out /= np.maximum(den, 1e-12)
    if span < frames.original_length:
        out = np.concatenate([out, np.zeros(frames.original_length - span)])
    return Waveform(out[: frames.original_length], sample_rate)


def estimate_noise(frames: SpectralFrames, leading_frames: int = 10) -> NoisePsd:
    """Average the power of the leading frames into a per-bin noise PSD."""
    if leading_frames < 1:
        raise ValueError("need at least one noise frame")
    k = min(leading_frames, frames.n_frames)
    if k == 0:
        raise ValueError("no frames available for noise estimation")
    return NoisePsd(np.mean(frames.magnitudes[:k] ** 2, axis=0), k)


def estimate_noise_masked(frames: SpectralFrames, noise_mask) -> NoisePsd:
    """Noise PSD from externally selected frames (e.g. VAD silence labels)."""
    mask = np.asarray(noise_mask, dtype=bool)
    if mask.shape != (frames.n_frames,):
        raise ValueError("mask length must equal the frame count")
    if not mask.any():
        raise ValueError("mask selects no frames")
    return NoisePsd(
        np.mean(frames.magnitudes[mask] ** 2, axis=0), int(mask.sum())
    )


def _check_dims(frames: SpectralFrames, noise: NoisePsd) -> None:
    if noise.power.shape != (frames.n_bins,):
        raise ValueError(
            f"noise PSD has {noise.power.shape[0]} bins, frames have {frames.n_bins}"
        )


def _berouti_alpha(seg_snr_db: np.ndarray, base: float) -> np.ndarray:
    return np.clip(base - _BEROUTI_SLOPE * seg_snr_db, _ALPHA_LO, _ALPHA_HI)


def _band_tweaks(n_bands: int, sample_rate: int) -> np.ndarray:
    edges = np.linspace(0.0, sample_rate / 2.0, n_bands + 1)
    centers = (edges[:-1] + edges[1:]) / 2.0
    hi_cut = sample_rate / 2.0 - _BAND_TWEAK_HIGH_OFFSET_HZ
    tweaks = np.full(n_bands, _BAND_TWEAKS[1])
    tweaks[centers <= _BAND_TWEAK_LOW_HZ] = _BAND_TWEAKS[0]
    tweaks[centers > hi_cut] = _BAND_TWEAKS[2]
    return tweaks


def spectral_subtract(
    frames: SpectralFrames,
    noise: NoisePsd,
    config: EnhanceConfig | None = None,
    sample_rate: int = 8000,
) -> SpectralFrames:
    """Magnitude-domain noise subtraction; phases pass through untouched.

    Variants: "boll" plain power subtraction with a beta*noise floor,
    "berouti" adds segmental-SNR-driven over-subtraction, "sim" generalizes
    the exponent, "kamath" applies the Berouti rule per frequency band.
    """
    config = config or EnhanceConfig(variant="boll")
    if config.variant not in SUBTRACT_VARIANTS:
        raise ValueError(
            f"variant {config.variant!r} is not one of {SUBTRACT_VARIANTS}"
        )
    _check_dims(frames, noise)
    power = frames.magnitudes**2
    d = noise.power
    beta = config.beta

    if config.variant == "boll":
        out_power = np.maximum(power - d, beta * d)
    elif config.variant == "berouti":
        seg = 10.0 * np.log10(
            np.maximum(power.sum(axis=1), 1e-300) / max(d.sum(), 1e-300)
        )
        if config.alpha is None:
            alpha = _berouti_alpha(seg, _BEROUTI_BASE)[:, None]
        else:
            alpha = config.alpha
        out_power = np.maximum(power - alpha * d, beta * d)
    elif config.variant == "sim":
        p = config.exponent
        alpha = 1.0 if config.alpha is None else config.alpha
        mag_p = frames.magnitudes**p
        d_p = d ** (p / 2.0)
        out_power = np.maximum(mag_p - alpha * d_p, beta * d_p) ** (2.0 / p)
        return SpectralFrames(
            np.sqrt(out_power), frames.phases, frames.params, frames.original_length
        )
    else:  # kamath
        n_bins = frames.n_bins
        edges = np.linspace(0, n_bins, config.bands + 1).round().astype(int)
        tweaks = _band_tweaks(config.bands, sample_rate)
        out_power = np.empty_like(power)
        base = _BEROUTI_BASE if config.alpha is None else config.alpha
        for b in range(config.bands):
            lo, hi = edges[b], edges[b + 1]
            if hi <= lo:
                continue
            pb, db = power[:, lo:hi], d[lo:hi]
            seg = 10.0 * np.log10(
                np.maximum(pb.sum(axis=1), 1e-300) / max(db.sum(), 1e-300)
            )
            alpha = _berouti_alpha(seg, base)[:, None]
            out_power[:, lo:hi] = np.maximum(pb - alpha * tweaks[b] * db, beta * db)

    return SpectralFrames(
        np.sqrt(out_power), frames.phases, frames.params, frames.original_length
    )


def exp_integral_e1(x):
    """E1(x) for x > 0: power series below 1, continued fraction above.

    Vectorized; absolute accuracy around 1e-10 or better on (0, 700).
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise ValueError("E1 is defined here for positive arguments only")
    out = np.empty_like(x)

    small = x < 1.0
    if small.any():
        xs = x[small]
        # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^(k+1) x^k / (k * k!)
        euler_gamma = 0.5772156649015329
        total = np.zeros_like(xs)
        term = np.ones_like(xs)
        for k in range(1, 40):
            term = term * xs / k
            total += term * ((-1.0) ** (k + 1)) / k
        out[small] = -euler_gamma - np.log(xs) + total

    big = ~small
    if big.any():
        xb = x[big]
        # Descending evaluation of the continued fraction
        # E1(x) = exp(-x) / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...)))).
        acc = np.zeros_like(xb)
        for k in range(60, 0, -1):
            acc = (k * k) / (xb + 2.0 * k + 1.0 - acc)
        out[big] = np.exp(-xb) / (xb + 1.0 - acc)

    return out if out.shape else float(out)


def wiener_gain(xi):
    """Wiener suppression gain xi/(1+xi)."""
    xi = np.asarray(xi, dtype=np.float64)
    return xi / (1.0 + xi)


def mmse_stsa_gain(xi, gamma):
    """Short-time spectral amplitude MMSE gain (Bessel form), overflow-safe."""
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.maximum(np.asarray(gamma, dtype=np.float64), 1e-12)
    v = np.maximum(xi * gamma / (1.0 + xi), 1e-12)
    half = v / 2.0
    # exp(-v/2)*I0(v/2) == i0e(v/2) etc., so the e^{v/2} growth cancels.
    bessel = (1.0 + v) * i0e(half) + v * i1e(half)
    return (np.sqrt(np.pi) / 2.0) * (np.sqrt(v) / gamma) * bessel


def log_mmse_gain(xi, gamma):
    """Log-spectral amplitude MMSE gain: (xi/(1+xi)) * exp(E1(v)/2)."""
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.maximum(np.asarray(gamma, dtype=np.float64), 1e-12)
    v = np.maximum(xi * gamma / (1.0 + xi), 1e-12)
    return wiener_gain(xi) * np.exp(0.5 * exp_integral_e1(v))


def statistical_enhance(
    frames: SpectralFrames, noise: NoisePsd, config: EnhanceConfig | None = None
) -> SpectralFrames:
    """Gain-based enhancement with a decision-directed a-priori SNR.

    Per frame t and bin k:
        gamma = |Y|^2 / D
        xi_t  = dd_alpha * G_{t-1}^2 gamma_{t-1} + (1 - dd_alpha) * max(gamma_t - 1, 0)
    with the first frame assuming unit prior gain.  Variant picks the gain
    rule ("wiener", "mmse", "logmmse", "omlsa"); gains are clamped to
    [10^(gain_floor_db/20), 1].
    """
    config = config or EnhanceConfig()
    if config.variant not in STATISTICAL_VARIANTS:
        raise ValueError(
            f"variant {config.variant!r} is not one of {STATISTICAL_VARIANTS}"
        )
    _check_dims(frames, noise)
    d = np.maximum(noise.power, 1e-15)
    g_min = 10.0 ** (config.gain_floor_db / 20.0)
    dd = config.dd_alpha

    out_mag = np.empty_like(frames.magnitudes)
    prev_term = None  # G^2 * gamma carried from the previous frame
    p_smooth = np.full(frames.n_bins, _OMLSA_PRIOR)
    for t in range(frames.n_frames):
        gamma = np.maximum(frames.magnitudes[t] ** 2 / d, 1e-12)
        instant = np.maximum(gamma - 1.0, 0.0)
        if prev_term is None:
            xi = dd + (1.0 - dd) * instant
        else:
            xi = dd * prev_term + (1.0 - dd) * instant
        xi = np.maximum(xi, 1e-12)

        if config.variant == "wiener":
            gain = wiener_gain(xi)
        elif config.variant == "mmse":
            gain = mmse_stsa_gain(xi, gamma)
        elif config.variant == "logmmse":
            gain = log_mmse_gain(xi, gamma)
        else:  # omlsa
            base = log_mmse_gain(xi, gamma)
            v = xi * gamma / (1.0 + xi)
            likelihood = np.exp(np.minimum(v, 50.0)) / (1.0 + xi)
            p_raw = likelihood / (1.0 + likelihood)
            p_smooth = (
                _OMLSA_SMOOTHING * p_smooth + (1.0 - _OMLSA_SMOOTHING) * p_raw
            )
            gain = np.clip(base, g_min, 1.0) ** p_smooth * g_min ** (1.0 - p_smooth)

        gain = np.clip(gain, g_min, 1.0)
        out_mag[t] = gain * frames.magnitudes[t]
        prev_term = gain**2 * gamma

    return SpectralFrames(out_mag, frames.phases, frames.params, frames.original_length)


def levinson_durbin(autocorr: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Solve for AR predictor coefficients from autocorrelation lags.

    Returns (phi, err) with s[n] ~ sum_i phi[i]*s[n-1-i] and final prediction
    error variance err.
    """
    r = np.asarray(autocorr, dtype=np.float64)
    if r.size < order + 1:
        raise ValueError("need order+1 autocorrelation lags")
    if r[0] <= 0:
        raise ValueError("zero-lag autocorrelation must be positive")
    phi = np.zeros(order)
    err = r[0]
    for i in range(order):
        acc = r[i + 1] - sum(phi[j] * r[i - j] for j in range(i))
        k = acc / err
        new_phi = phi.copy()
        new_phi[i] = k
        for j in range(i):
            new_phi[j] = phi[j] - k * phi[i - 1 - j]
        phi = new_phi
        err *= 1.0 - k * k
        if err <= 0:
            err = 1e-12
            break
    return phi, float(err)


def _ar_fit(block: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    n = block.size
    lags = np.array(
        [block[: n - k] @ block[k:] for k in range(order + 1)]
    ) / n
    lags[0] += 1e-12 + 1e-9 * lags[0]  # light diagonal loading
    return levinson_durbin(lags, order)


def _kalman_filter_block(
    noisy: np.ndarray, phi: np.ndarray, q: float, r: float
) -> np.ndarray:
    p_ord = phi.size
    f = np.zeros((p_ord, p_ord))
    if p_ord > 1:
        f[:-1, 1:] = np.eye(p_ord - 1)
    f[-1] = phi[::-1]
    h_idx = p_ord - 1
    x = np.zeros(p_ord)
    p_cov = np.eye(p_ord) * max(float(np.var(noisy)), q, 1e-8)
    out = np.empty_like(noisy)
    for n in range(noisy.size):
        x = f @ x
        p_cov = f @ p_cov @ f.T
        p_cov[h_idx, h_idx] += q
        s = p_cov[h_idx, h_idx] + r
        k_gain = p_cov[:, h_idx] / s
        x = x + k_gain * (noisy[n] - x[h_idx])
        p_cov = p_cov - np.outer(k_gain, p_cov[h_idx, :])
        out[n] = x[h_idx]
    return out


def kalman_enhance(
    wave: Waveform, noise_variance: float, config: EnhanceConfig | None = None
) -> Waveform:
    """Iterative AR-model Kalman filtering in 256-sample half-overlapped blocks.

    Each block refits an AR model (Levinson-Durbin on the current estimate),
    runs a scalar-observation Kalman filter against the noisy block, and
    iterates.  Blocks are recombined by triangular overlap-add.  All-zero
    blocks pass through; noise_variance == 0 degenerates to the identity.
    """
    config = config or EnhanceConfig()
    if noise_variance < 0:
        raise ValueError("noise_variance must be >= 0")
    n = len(wave)
    if n < KALMAN_BLOCK:
        raise ValueError(f"signal shorter than one {KALMAN_BLOCK}-sample block")
    order = config.ar_order
    if order >= KALMAN_BLOCK // 4:
        raise ValueError("ar_order too large for the block size")

    hop = KALMAN_BLOCK // 2
    n_blocks = int(np.ceil(max(n - KALMAN_BLOCK, 0) / hop)) + 1
    padded = np.concatenate(
        [wave.samples, np.zeros(hop * (n_blocks - 1) + KALMAN_BLOCK - n)]
    )
    win = triang(KALMAN_BLOCK)
    out = np.zeros(padded.size)
    den = np.zeros(padded.size)
    for b in range(n_blocks):
        start = b * hop
        block = padded[start : start + KALMAN_BLOCK]
        if np.mean(block**2) < 1e-12 or noise_variance == 0.0:
            filtered = block
        else:
            estimate = block
            filtered = block
            for _ in range(config.iterations):
                phi, q = _ar_fit(estimate, order)
                filtered = _kalman_filter_block(block, phi, q, noise_variance)
                estimate = filtered
        out[start : start + KALMAN_BLOCK] += win * filtered
        den[start : start + KALMAN_BLOCK] += win
    out /= np.maximum(den, 1e-12)
    return Waveform(out[:n], wave.sample_rate)


@dataclass
class HybridContext:
    """Side inputs consumed by pipeline stages.

    reference feeds the adaptive cancellers; noise_psd overrides the
    leading-frames estimate; noise_variance feeds the Kalman stage (estimated
    from the leading samples when absent).
    """

    reference: Waveform | None = None
    noise_psd: NoisePsd | None = None
    noise_variance: float | None = None
    noise_frames: int = 10
    stft_params: StftParams = field(default_factory=StftParams)
    adaptive: AdaptiveParams = field(default_factory=lambda: AdaptiveParams(mu=0.5))
    config: EnhanceConfig = field(default_factory=EnhanceConfig)
    fir_taps: int = 101


def _spectral_stage(wave: Waveform, variant: str, ctx: HybridContext) -> Waveform:
    frames = stft(wave, ctx.stft_params)
    noise = ctx.noise_psd or estimate_noise(frames, ctx.noise_frames)
    cfg = replace(ctx.config, variant=variant)
    if variant in SUBTRACT_VARIANTS:
        cleaned = spectral_subtract(frames, noise, cfg, wave.sample_rate)
    else:
        cleaned = statistical_enhance(frames, noise, cfg)
    return istft(cleaned, wave.sample_rate)


def _rasta_stage(wave: Waveform, ctx: HybridContext) -> Waveform:
    # Channel normalization on log-magnitude trajectories, resynthesized with
    # the original phases.
    frames = stft(wave, ctx.stft_params)
    log_mag = np.log(np.maximum(frames.magnitudes, 1e-12))
    filtered = rasta_filter(log_mag.T).T
    cleaned = SpectralFrames(
        np.exp(filtered), frames.phases, frames.params, frames.original_length
    )
    return istft(cleaned, wave.sample_rate)


def run_hybrid(
    wave: Waveform, stages: list[str], context: HybridContext | None = None
) -> Waveform:
    """Chain enhancement stages left to right, each consuming the previous output.

    Stage names: FIR as "fir:kind:edge[:edge2]", adaptive "lms"/"nlms",
    subtraction and statistical variants by name, "kalman", and "rasta" for
    log-spectral channel normalization.  Output length always equals input
    length.
    """
    if not stages:
        raise ValueError("empty stage list")
    ctx = context or HybridContext()
    current = wave
    for stage in stages:
        name = stage.strip().lower()
        if name.startswith("fir:"):
            parts = name.split(":")
            if len(parts) < 3:
                raise ValueError(f"malformed FIR stage {stage!r}")
            spec = FirSpec(
                kind=parts[1],
                edges_hz=tuple(float(p) for p in parts[2:]),
                num_taps=ctx.fir_taps,
                sample_rate=current.sample_rate,
            )
            current = apply_fir(current, design_fir(spec))
        elif name in ("lms", "nlms"):
            if ctx.reference is None:
                raise ValueError(f"stage {name!r} requires a noise reference")
            cancel = lms_cancel if name == "lms" else nlms_cancel
            current, _ = cancel(current, ctx.reference, ctx.adaptive)
        elif name in SUBTRACT_VARIANTS or name in STATISTICAL_VARIANTS:
            current = _spectral_stage(current, name, ctx)
        elif name == "kalman":
            nv = ctx.noise_variance
            if nv is None:
                lead = current.samples[: ctx.noise_frames * ctx.stft_params.hop]
                nv = float(np.var(lead)) if lead.size else 0.0
            current = kalman_enhance(current, nv, ctx.config)
        elif name == "rasta":
            current = _rasta_stage(current, ctx)
        else:
            raise ValueError(f"unknown stage {stage!r}")
    return current
