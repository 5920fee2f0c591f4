"""Scikit-learn style wrappers so the DSP chain composes as a Pipeline.

Transformers map lists of Waveforms (or (samples, rate) pairs) through
trimming, enhancement and feature extraction; the recognizer is a classifier
over (20, 20) feature matrices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .audio import Waveform
from .enhance import (
    EnhanceConfig,
    StftParams,
    SUBTRACT_VARIANTS,
    estimate_noise,
    istft,
    kalman_enhance,
    spectral_subtract,
    statistical_enhance,
    stft,
)
from .features import FrameParams, extract_features
from .filterbank import cmn
from .recognizer import (
    NoLegalPathError,
    init_uniform,
    recognize,
    train,
    viterbi,
)
from .vad import VadParams, trim_to_voiced


def check_waveform(x) -> Waveform:
    """Accept a Waveform or a (samples, sample_rate) pair."""
    if isinstance(x, Waveform):
        return x
    if isinstance(x, (tuple, list)) and len(x) == 2:
        return Waveform(np.asarray(x[0], dtype=np.float64), int(x[1]))
    raise ValueError(
        "expected a Waveform or (samples, sample_rate) pair, "
        f"got {type(x).__name__}"
    )


def check_waveform_list(X) -> list[Waveform]:
    waves = [check_waveform(x) for x in X]
    if not waves:
        raise ValueError("empty input collection")
    return waves


class VoicedTrimmer(BaseEstimator, TransformerMixin):
    """Trim each waveform to its detected speech region."""

    def __init__(
        self,
        frame_ms=10.0,
        energy_high=8.0,
        energy_low=3.0,
        zcr_threshold=0.25,
        noise_calibration_frames=10,
    ):
        self.frame_ms = frame_ms
        self.energy_high = energy_high
        self.energy_low = energy_low
        self.zcr_threshold = zcr_threshold
        self.noise_calibration_frames = noise_calibration_frames

    def _params(self):
        return VadParams(
            frame_ms=self.frame_ms,
            energy_high=self.energy_high,
            energy_low=self.energy_low,
            zcr_threshold=self.zcr_threshold,
            noise_calibration_frames=self.noise_calibration_frames,
        )

    def fit(self, X, y=None):
        check_waveform_list(X)
        return self

    def transform(self, X):
        params = self._params()
        return [trim_to_voiced(w, params) for w in check_waveform_list(X)]


class SpectralEnhancer(BaseEstimator, TransformerMixin):
    """Per-utterance enhancement with a leading-frames noise estimate.

    variant selects the rule: spectral subtraction ("boll", "berouti", "sim",
    "kamath"), statistical gains ("wiener", "mmse", "logmmse", "omlsa") or
    time-domain "kalman".
    """

    def __init__(
        self,
        variant="logmmse",
        alpha=None,
        beta=0.002,
        dd_alpha=0.98,
        bands=4,
        ar_order=10,
        iterations=3,
        noise_frames=10,
        frame_len=256,
        hop=128,
        fft_size=256,
        window="hamming",
    ):
        self.variant = variant
        self.alpha = alpha
        self.beta = beta
        self.dd_alpha = dd_alpha
        self.bands = bands
        self.ar_order = ar_order
        self.iterations = iterations
        self.noise_frames = noise_frames
        self.frame_len = frame_len
        self.hop = hop
        self.fft_size = fft_size
        self.window = window

    def fit(self, X, y=None):
        check_waveform_list(X)
        return self

    def transform(self, X):
        config = EnhanceConfig(
            variant=self.variant,
            alpha=self.alpha,
            beta=self.beta,
            dd_alpha=self.dd_alpha,
            bands=self.bands,
            ar_order=self.ar_order,
            iterations=self.iterations,
        )
        stft_params = StftParams(
            frame_len=self.frame_len,
            hop=self.hop,
            fft_size=self.fft_size,
            window=self.window,
        )
        out = []
        for wave in check_waveform_list(X):
            if self.variant == "kalman":
                lead = wave.samples[: self.noise_frames * stft_params.hop]
                out.append(kalman_enhance(wave, float(np.var(lead)), config))
                continue
            frames = stft(wave, stft_params)
            noise = estimate_noise(frames, self.noise_frames)
            if self.variant in SUBTRACT_VARIANTS:
                cleaned = spectral_subtract(frames, noise, config, wave.sample_rate)
            else:
                cleaned = statistical_enhance(frames, noise, config)
            out.append(istft(cleaned, wave.sample_rate))
        return out


class MfccExtractor(BaseEstimator, TransformerMixin):
    """Waveforms to stacked (20, 20) MFCC matrices."""

    def __init__(self, window_len=245, overlap_pct=45.0, fft_size=512, n_filters=26):
        self.window_len = window_len
        self.overlap_pct = overlap_pct
        self.fft_size = fft_size
        self.n_filters = n_filters

    def fit(self, X, y=None):
        check_waveform_list(X)
        return self

    def transform(self, X):
        params = FrameParams(
            window_len=self.window_len,
            overlap_pct=self.overlap_pct,
            fft_size=self.fft_size,
        )
        return np.stack(
            [
                extract_features(w, params, self.n_filters)
                for w in check_waveform_list(X)
            ]
        )


class CepstralMeanNormalizer(BaseEstimator, TransformerMixin):
    """Remove per-coefficient means over time from each feature matrix."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return cmn(X)
        return np.stack([cmn(m) for m in X])


class HmmWordRecognizer(BaseEstimator, ClassifierMixin):
    """Isolated-word classifier: one Bakis HMM per label, best score wins."""

    def __init__(self, n_states=5, max_iters=20, tol=1e-4):
        self.n_states = n_states
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 3:
            raise ValueError("X must be (n_samples, dim, time)")
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on sample count")
        self.classes_ = np.unique(y)
        self.models_ = []
        for label in self.classes_:
            samples = [X[i] for i in range(len(y)) if y[i] == label]
            model = init_uniform(int(label), samples, self.n_states)
            self.models_.append(
                train(model, samples, max_iters=self.max_iters, tol=self.tol)
            )
        return self

    def predict(self, X):
        if not hasattr(self, "models_"):
            raise NotFittedError(
                "this HmmWordRecognizer instance is not fitted yet"
            )
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        labels = []
        for matrix in X:
            label, _ = recognize(self.models_, matrix)
            labels.append(label)
        return np.asarray(labels)

    def predict_log_scores(self, X):
        """Per-sample dict of label -> Viterbi log-probability."""
        if not hasattr(self, "models_"):
            raise NotFittedError(
                "this HmmWordRecognizer instance is not fitted yet"
            )
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        scores = []
        for matrix in X:
            row = {}
            for model in self.models_:
                try:
                    _, lp = viterbi(model, matrix)
                    row[model.label] = lp
                except NoLegalPathError:
                    row[model.label] = -np.inf
            scores.append(row)
        return scores
