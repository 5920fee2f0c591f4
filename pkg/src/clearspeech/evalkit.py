"""SNR-improvement tables, window/overlap accuracy grids, spectrogram export
and deterministic CSV reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_write_bytes
from .audio import NoiseSpec, Waveform, mix_at_snr, snr_db, synth_word
from .enhance import HybridContext, StftParams, estimate_noise, run_hybrid, stft
from .features import FrameParams, extract_features, frame_signal
from .recognizer import init_uniform, recognize, train, word_accuracy

PASSTHROUGH = "none"


@dataclass
class SnrTable:
    noise_labels: list[str]
    method_labels: list[str]
    before: np.ndarray  # (n_noises,)
    after: np.ndarray  # (n_noises, n_methods)


@dataclass
class AccuracyGrid:
    windows: list[int]
    overlaps: list[float]
    frames: np.ndarray  # (n_windows, n_overlaps) frame count per token
    snr: np.ndarray  # measured test-material SNR in dB
    accuracy: np.ndarray  # percent correct


def _oracle_psd(noise_samples: np.ndarray, rate: int, params: StftParams):
    scaled = Waveform(noise_samples, rate)
    frames = stft(scaled, params)
    return estimate_noise(frames, frames.n_frames)


def enhance_with_method(
    noisy: Waveform,
    method: str,
    context: HybridContext | None = None,
) -> Waveform:
    """Run one named method (a comma-free hybrid stage) or the passthrough."""
    if method == PASSTHROUGH:
        return noisy
    return run_hybrid(noisy, [method], context)


def snr_improvement_table(
    clean_set: list[Waveform],
    noise_specs: list[tuple[str, NoiseSpec]],
    methods: list[str],
    noise_mode: str = "leading",
    stft_params: StftParams | None = None,
    noise_frames: int = 10,
) -> SnrTable:
    """Average before/after SNR over the clean set for each noise x method.

    noise_mode "leading" estimates the noise PSD from each utterance's leading
    frames; "oracle" hands the enhancer the PSD of the actual added noise.
    """
    if not clean_set:
        raise ValueError("clean set is empty")
    if not noise_specs or not methods:
        raise ValueError("need at least one noise spec and one method")
    if noise_mode not in ("leading", "oracle"):
        raise ValueError("noise_mode must be 'leading' or 'oracle'")
    stft_params = stft_params or StftParams()
    before = np.zeros(len(noise_specs))
    after = np.zeros((len(noise_specs), len(methods)))
    for ni, (_, spec) in enumerate(noise_specs):
        for clean in clean_set:
            noise = spec.realize(len(clean), clean.sample_rate)
            noisy = mix_at_snr(clean, noise, spec.target_snr_db)
            before[ni] += snr_db(clean, noisy)
            added = noisy.samples - clean.samples
            for mi, method in enumerate(methods):
                ctx = HybridContext(
                    stft_params=stft_params, noise_frames=noise_frames
                )
                if noise_mode == "oracle":
                    ctx.noise_psd = _oracle_psd(
                        added, clean.sample_rate, stft_params
                    )
                    ctx.noise_variance = float(np.var(added))
                enhanced = enhance_with_method(noisy, method, ctx)
                after[ni, mi] += snr_db(clean, enhanced)
    before /= len(clean_set)
    after /= len(clean_set)
    return SnrTable(
        [label for label, _ in noise_specs], list(methods), before, after
    )


@dataclass
class GridCorpus:
    """Waveforms grouped per label for grid evaluation."""

    train: dict[int, list[Waveform]]
    test: dict[int, list[Waveform]]
    clean_test: dict[int, list[Waveform]] | None = None  # SNR reference


def default_grid_corpus(
    labels: list[int],
    seed: int,
    train_per_word: int = 5,
    test_per_word: int = 5,
    reused_per_word: int = 1,
    sample_rate: int = 8000,
) -> GridCorpus:
    """Synthesize the standard overlapped split.

    Each word gets train_per_word training tokens and test_per_word unseen
    test tokens; the test list then repeats the first reused_per_word
    training tokens, so a fifth of the training material reappears at test
    time under the defaults.
    """
    if reused_per_word > train_per_word:
        raise ValueError("cannot reuse more tokens than were trained on")
    train_set: dict[int, list[Waveform]] = {}
    test_set: dict[int, list[Waveform]] = {}
    for label in labels:
        train_set[label] = [
            synth_word(label, seed * 1000 + label * 50 + i, sample_rate)
            for i in range(train_per_word)
        ]
        test_set[label] = [
            synth_word(label, seed * 1000 + label * 50 + 500 + i, sample_rate)
            for i in range(test_per_word)
        ] + train_set[label][:reused_per_word]
    return GridCorpus(train=train_set, test=test_set, clean_test=test_set)


def accuracy_grid(
    corpus: GridCorpus,
    windows: list[int],
    overlaps: list[float],
    n_states: int = 5,
    fft_size: int = 512,
    enhance_stages: list[str] | None = None,
    context: HybridContext | None = None,
) -> AccuracyGrid:
    """Train/test the recognizer at every (window, overlap) combination.

    Cells hold the per-token frame count, the measured SNR of the test
    material against its clean reference (captured once; capped when
    identical) and the word accuracy percentage.
    """
    if not windows or not overlaps:
        raise ValueError("empty window or overlap axis")
    if not corpus.train or not corpus.test:
        raise ValueError("grid corpus needs train and test material")

    test_waves: dict[int, list[Waveform]] = {}
    snr_sum, snr_count = 0.0, 0
    for label, waves in sorted(corpus.test.items()):
        processed = []
        for i, wave in enumerate(waves):
            if enhance_stages:
                wave = run_hybrid(wave, enhance_stages, context)
            if corpus.clean_test is not None:
                ref = corpus.clean_test[label][i]
                snr_sum += snr_db(ref, wave)
                snr_count += 1
            processed.append(wave)
        test_waves[label] = processed
    measured_snr = snr_sum / snr_count if snr_count else float("nan")

    shape = (len(windows), len(overlaps))
    frames = np.zeros(shape)
    snr_cells = np.full(shape, measured_snr)
    accuracy = np.zeros(shape)
    for wi, window_len in enumerate(windows):
        for oi, overlap in enumerate(overlaps):
            params = FrameParams(
                window_len=window_len, overlap_pct=overlap, fft_size=fft_size
            )
            sample_wave = next(iter(test_waves.values()))[0]
            frames[wi, oi] = frame_signal(sample_wave, params).shape[0]
            models = []
            for label, waves in sorted(corpus.train.items()):
                feats = [extract_features(w, params) for w in waves]
                models.append(
                    train(init_uniform(label, feats, n_states), feats)
                )
            correct = total = 0
            for label, waves in sorted(test_waves.items()):
                for wave in waves:
                    predicted, _ = recognize(
                        models, extract_features(wave, params)
                    )
                    correct += int(predicted == label)
                    total += 1
            accuracy[wi, oi] = word_accuracy(correct, total)
    return AccuracyGrid(list(windows), list(overlaps), frames, snr_cells, accuracy)


def export_spectrogram(
    wave: Waveform, path, stft_params: StftParams | None = None
) -> None:
    """Write a binary PGM (P5) of the log-magnitude STFT plus an .axis.txt
    sidecar carrying the scale parameters.

    Rows are frequency bins (low frequencies at the bottom of the image),
    columns are frames; levels normalize min..max to 0..255.
    """
    stft_params = stft_params or StftParams()
    frames = stft(wave, stft_params)
    log_mag = 20.0 * np.log10(frames.magnitudes + 1e-12)
    lo, hi = float(log_mag.min()), float(log_mag.max())
    if hi > lo:
        levels = np.rint((log_mag - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        levels = np.zeros_like(log_mag, dtype=np.uint8)
    image = levels.T[::-1]  # (bins, frames), top row = highest frequency
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + image.tobytes())

    sidecar = str(path)
    if sidecar.endswith(".pgm"):
        sidecar = sidecar[: -len(".pgm")]
    sidecar += ".axis.txt"
    text = (
        f"sample_rate={wave.sample_rate}\n"
        f"frame_len={stft_params.frame_len}\n"
        f"hop={stft_params.hop}\n"
        f"fft_size={stft_params.fft_size}\n"
        f"bins={frames.n_bins}\n"
        f"frames={frames.n_frames}\n"
        f"db_min={lo:.4f}\n"
        f"db_max={hi:.4f}\n"
    )
    atomic_write_bytes(sidecar, text.encode("ascii"))


def _csv_bytes(rows: list[list[str]]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _f4(value: float) -> str:
    return f"{value:.4f}"


def write_report(table, path) -> None:
    """Serialize an SnrTable or AccuracyGrid as CSV with 4-decimal cells."""
    if isinstance(table, SnrTable):
        rows = [["noise", "before", *table.method_labels]]
        for i, label in enumerate(table.noise_labels):
            rows.append(
                [label, _f4(table.before[i]), *(_f4(v) for v in table.after[i])]
            )
    elif isinstance(table, AccuracyGrid):
        rows = [["window", "variable", *(_f4(o) for o in table.overlaps)]]
        for wi, window_len in enumerate(table.windows):
            for name, grid in (
                ("frames", table.frames),
                ("snr_db", table.snr),
                ("accuracy", table.accuracy),
            ):
                rows.append(
                    [str(window_len), name, *(_f4(v) for v in grid[wi])]
                )
    else:
        raise ValueError(f"cannot serialize {type(table).__name__} as a report")
    atomic_write_bytes(path, _csv_bytes(rows))
