"""Energy/ZCR frame classification and two-threshold utterance endpointing."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio import Waveform

# Below this mean-square level a calibration estimate is considered digital
# silence; it also guards the degenerate all-zero noise floor.
ABS_SILENCE_FLOOR = 1e-9


class VusLabel(Enum):
    VOICED = "voiced"
    UNVOICED = "unvoiced"
    SILENT = "silent"


@dataclass
class VadParams:
    frame_ms: float = 10.0
    energy_high: float = 8.0  # x noise floor: speech onset threshold
    energy_low: float = 3.0  # x noise floor: boundary refinement threshold
    zcr_threshold: float = 0.25  # crossings per sample
    noise_calibration_frames: int = 10

    def __post_init__(self):
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be positive")
        if not 0 < self.energy_low < self.energy_high:
            raise ValueError("need 0 < energy_low < energy_high")
        if self.zcr_threshold <= 0:
            raise ValueError("zcr_threshold must be positive")
        if self.noise_calibration_frames < 1:
            raise ValueError("noise_calibration_frames must be >= 1")

    def frame_len(self, sample_rate: int) -> int:
        n = int(round(self.frame_ms * sample_rate / 1000.0))
        return max(n, 1)


class NoSpeechFoundError(ValueError):
    """No sustained above-threshold region exists in the signal."""


def short_time_energy(frame: np.ndarray) -> float:
    """Mean squared amplitude of one frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("empty frame")
    return float(np.mean(frame**2))


def zero_crossing_rate(frame: np.ndarray) -> float:
    """Sign changes per sample step; exact zeros count as positive."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size < 2:
        raise ValueError("zcr needs at least two samples")
    signs = np.where(frame >= 0.0, 1, -1)
    return float(np.count_nonzero(signs[1:] != signs[:-1])) / (frame.size - 1)


def classify_vus(
    frame: np.ndarray, params: VadParams, noise_floor: float
) -> VusLabel:
    """Label one frame voiced/unvoiced/silent against a noise-floor reference."""
    floor = max(noise_floor, ABS_SILENCE_FLOOR)
    energy = short_time_energy(frame)
    if energy < params.energy_low * floor:
        return VusLabel.SILENT
    if (
        energy >= params.energy_high * floor
        and zero_crossing_rate(frame) < params.zcr_threshold
    ):
        return VusLabel.VOICED
    return VusLabel.UNVOICED


def _frame_energies(wave: Waveform, params: VadParams) -> tuple[np.ndarray, int]:
    frame_len = params.frame_len(wave.sample_rate)
    n_frames = len(wave) // frame_len
    if n_frames < 1:
        raise ValueError("signal shorter than one frame")
    trimmed = wave.samples[: n_frames * frame_len]
    frames = trimmed.reshape(n_frames, frame_len)
    return np.mean(frames**2, axis=1), frame_len


def calibrated_noise_floor(wave: Waveform, params: VadParams) -> float:
    """Noise-floor reference for thresholding.

    Mean energy of the leading calibration frames, with two guards: it never
    drops below an absolute silence floor, and it is capped at
    peak/(2*energy_high) so that a recording with no quiet region at all
    (calibration frames already contain speech) still yields a usable
    threshold instead of masking everything.
    """
    energies, _ = _frame_energies(wave, params)
    k = min(params.noise_calibration_frames, len(energies))
    leading = float(np.mean(energies[:k]))
    peak = float(np.max(energies))
    return max(ABS_SILENCE_FLOOR, min(leading, peak / (2.0 * params.energy_high)))


def detect_endpoints(
    wave: Waveform, params: VadParams | None = None
) -> tuple[int, int]:
    """Locate the speech region as (begin_sample, end_sample), end exclusive.

    Two-threshold scheme: find the first/last run of 3 consecutive frames at or
    above energy_high * floor, then widen each boundary through frames that stay
    above energy_low * floor.  The 3-frame sustain rejects isolated clicks.
    """
    params = params or VadParams()
    energies, frame_len = _frame_energies(wave, params)
    n = len(energies)
    if n <= params.noise_calibration_frames:
        raise ValueError(
            f"signal has {n} frames, need more than "
            f"{params.noise_calibration_frames} calibration frames"
        )
    floor = calibrated_noise_floor(wave, params)
    high = params.energy_high * floor
    low = params.energy_low * floor

    sustained = energies >= high
    runs = sustained[:-2] & sustained[1:-1] & sustained[2:] if n >= 3 else np.array([])
    hits = np.nonzero(runs)[0]
    if hits.size == 0:
        raise NoSpeechFoundError("no sustained above-threshold region found")

    begin_frame = int(hits[0])
    while begin_frame > 0 and energies[begin_frame - 1] >= low:
        begin_frame -= 1
    end_frame = int(hits[-1]) + 2
    while end_frame < n - 1 and energies[end_frame + 1] >= low:
        end_frame += 1

    begin = begin_frame * frame_len
    end = min((end_frame + 1) * frame_len, len(wave))
    return begin, end


def trim_to_voiced(wave: Waveform, params: VadParams | None = None) -> Waveform:
    """Cut a waveform down to its detected speech region."""
    begin, end = detect_endpoints(wave, params)
    return Waveform(wave.samples[begin:end].copy(), wave.sample_rate)


def label_frames(
    wave: Waveform, params: VadParams | None = None
) -> list[tuple[float, float, VusLabel]]:
    """Per-frame (energy, zcr, label) rows using the calibrated noise floor."""
    params = params or VadParams()
    frame_len = params.frame_len(wave.sample_rate)
    n_frames = len(wave) // frame_len
    if n_frames < 1:
        raise ValueError("signal shorter than one frame")
    floor = calibrated_noise_floor(wave, params)
    rows = []
    for i in range(n_frames):
        frame = wave.samples[i * frame_len : (i + 1) * frame_len]
        rows.append(
            (
                short_time_energy(frame),
                zero_crossing_rate(frame),
                classify_vus(frame, params, floor),
            )
        )
    return rows
