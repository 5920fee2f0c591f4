"""Waveform container, 16-bit PCM WAV I/O, SNR arithmetic and a synthetic digit corpus."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import atomic_write_bytes

DEFAULT_SAMPLE_RATE = 8000
PCM_SCALE = 32768.0  # symmetric power-of-two scaling for 16-bit PCM
SNR_CAP_DB = 120.0  # reported for identical (or absurdly close) signals
NOISE_SIGMA = 0.3  # std-dev of generated white noise before clipping
WORD_SECONDS = 3.0  # duration of one synthetic digit token

# Formant-like frequency triples (Hz) for digits 0..9.  Neighbouring digits are
# separated by ~10 percent per band so a +/-3 percent speaker detune never makes
# two digits collide.
FORMANT_TABLE = (
    (230.0, 900.0, 2400.0),
    (260.0, 1000.0, 2550.0),
    (290.0, 1110.0, 2710.0),
    (320.0, 1230.0, 2880.0),
    (350.0, 1360.0, 3060.0),
    (385.0, 1500.0, 3250.0),
    (420.0, 1660.0, 3400.0),
    (460.0, 1830.0, 3560.0),
    (500.0, 2020.0, 3700.0),
    (545.0, 2230.0, 3850.0),
)
_FORMANT_AMPLITUDES = (1.0, 0.7, 0.45)
_WORD_PEAK = 0.38
_JITTER_LEVEL = 0.003  # low-level additive jitter, also the lead-in noise floor


class WavFormatError(ValueError):
    """File is not a readable 16-bit mono PCM WAV."""


class NotWavError(WavFormatError):
    """Missing RIFF/WAVE magic or mandatory chunks."""


class UnsupportedFormatError(WavFormatError):
    """Compressed, multi-channel or non-16-bit payload."""


class TruncatedWavError(WavFormatError):
    """Data chunk shorter than its declared size."""


@dataclass(eq=False)
class Waveform:
    """Mono audio: float64 samples plus a sample rate in Hz.

    Treated as immutable after construction; operations return new instances.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM WAV file, normalizing samples by 1/32768."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise NotWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (declared,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + declared]
        if chunk_id == b"fmt " and fmt is None:
            if len(body) < 16:
                raise TruncatedWavError(f"{path}: fmt chunk shorter than 16 bytes")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data" and payload is None:
            if len(body) < declared:
                raise TruncatedWavError(
                    f"{path}: data chunk declares {declared} bytes, "
                    f"only {len(body)} present"
                )
            payload = body
        pos += 8 + declared + (declared & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise NotWavError(f"{path}: missing fmt or data chunk")

    audio_format, channels, rate, _byte_rate, _align, bits = fmt
    if audio_format != 1 or channels != 1 or bits != 16:
        raise UnsupportedFormatError(
            f"{path}: need mono 16-bit PCM, got format={audio_format} "
            f"channels={channels} bits={bits}"
        )

    samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / PCM_SCALE
    return Waveform(samples, int(rate))


def write_wav(wave: Waveform, path) -> None:
    """Write 16-bit mono PCM.  Samples are clipped to [-1, 1] before quantizing."""
    x = np.clip(wave.samples, -1.0, 1.0)
    pcm = np.clip(np.rint(x * PCM_SCALE), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, wave.sample_rate, wave.sample_rate * 2, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    atomic_write_bytes(path, header + payload)


def snr_db(reference: Waveform, test: Waveform) -> float:
    """SNR of `test` against `reference`: 10*log10(sum(ref^2)/sum((test-ref)^2)).

    Capped at +120 dB; identical inputs report the cap rather than infinity.
    """
    if len(reference) != len(test):
        raise ValueError(
            f"length mismatch: reference {len(reference)} vs test {len(test)}"
        )
    if reference.sample_rate != test.sample_rate:
        raise ValueError("sample rate mismatch between reference and test")
    ref_power = float(np.sum(reference.samples**2))
    if ref_power == 0.0:
        raise ValueError("reference signal is all zeros")
    err_power = float(np.sum((test.samples - reference.samples) ** 2))
    if err_power == 0.0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(ref_power / err_power), SNR_CAP_DB)


def mix_at_snr(clean: Waveform, noise: Waveform, target_snr_db: float) -> Waveform:
    """Scale `noise` and add it to `clean` so snr_db(clean, mix) == target."""
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("sample rate mismatch between clean and noise")
    if len(noise) < len(clean):
        raise ValueError(
            f"noise too short: {len(noise)} samples for {len(clean)} of clean"
        )
    clean_power = float(np.sum(clean.samples**2))
    if clean_power == 0.0:
        raise ValueError("clean signal is silent, SNR target is meaningless")
    segment = noise.samples[: len(clean)]
    noise_power = float(np.sum(segment**2))
    if noise_power == 0.0:
        raise ValueError("noise segment is silent, cannot scale to target SNR")
    gain = np.sqrt(clean_power / (noise_power * 10.0 ** (target_snr_db / 10.0)))
    return Waveform(clean.samples + gain * segment, clean.sample_rate)


def gen_white_noise(
    length: int, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> Waveform:
    """Seeded zero-mean Gaussian noise (NumPy PCG64), sigma 0.3, clipped to [-1, 1]."""
    if length <= 0:
        raise ValueError("length must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    samples = np.clip(rng.standard_normal(length) * NOISE_SIGMA, -1.0, 1.0)
    return Waveform(samples, sample_rate)


def synth_word(
    label: int, speaker_seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> Waveform:
    """Synthesize a 3-second digit token.

    A digit is three fixed formant-like sinusoids under a raised-cosine
    attack/sustain/release envelope with a slow amplitude wobble.  The seed
    detunes each formant by at most 3 percent, randomizes phases and adds
    low-level jitter, standing in for speaker variation.  The 0.2 s lead-in
    and lead-out carry jitter only, which later doubles as noise-estimation
    headroom.  Deterministic per (label, speaker_seed).
    """
    if not 0 <= label <= 9:
        raise ValueError(f"label must be a digit 0..9, got {label}")
    if speaker_seed < 0:
        raise ValueError("speaker_seed must be non-negative")
    n = int(round(WORD_SECONDS * sample_rate))
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([label, speaker_seed]))
    )

    detune = 1.0 + 0.03 * rng.uniform(-1.0, 1.0, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    am_rate = 2.0 + rng.uniform(0.0, 1.0)  # Hz
    am_phase = rng.uniform(0.0, 2.0 * np.pi)

    t = np.arange(n) / sample_rate
    env = np.zeros(n)
    a0, a1 = int(0.20 * sample_rate), int(0.35 * sample_rate)
    r0, r1 = int(2.65 * sample_rate), int(2.80 * sample_rate)
    env[a0:a1] = 0.5 - 0.5 * np.cos(np.pi * np.linspace(0.0, 1.0, a1 - a0))
    env[a1:r0] = 1.0
    env[r0:r1] = 0.5 + 0.5 * np.cos(np.pi * np.linspace(0.0, 1.0, r1 - r0))
    env *= 1.0 + 0.12 * np.sin(2.0 * np.pi * am_rate * t + am_phase)

    tone = np.zeros(n)
    for (freq, amp, phase, d) in zip(
        FORMANT_TABLE[label], _FORMANT_AMPLITUDES, phases, detune
    ):
        tone += amp * np.sin(2.0 * np.pi * freq * d * t + phase)
    tone *= _WORD_PEAK / sum(_FORMANT_AMPLITUDES)

    samples = env * tone + _JITTER_LEVEL * rng.standard_normal(n)
    return Waveform(np.clip(samples, -1.0, 1.0), sample_rate)


@dataclass
class NoiseSpec:
    """Recipe for a noise source: seeded white noise or a noise WAV on disk."""

    kind: str = "white"  # "white" | "file"
    target_snr_db: float = 0.0
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("white", "file"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file noise spec needs a path")

    def realize(self, length: int, sample_rate: int) -> Waveform:
        if self.kind == "white":
            return gen_white_noise(length, self.seed, sample_rate)
        wave = read_wav(self.path)
        if wave.sample_rate != sample_rate:
            raise ValueError(
                f"noise file rate {wave.sample_rate} != expected {sample_rate}"
            )
        return wave


@dataclass
class CorpusEntry:
    label: int
    speaker_id: str
    utterance_index: int
    path: str


@dataclass
class CorpusManifest:
    """Tab-separated corpus index: one row per utterance, paths relative to root."""

    entries: list[CorpusEntry] = field(default_factory=list)
    sample_rate: int = DEFAULT_SAMPLE_RATE


def write_manifest(manifest: CorpusManifest, path) -> None:
    lines = [f"# sample_rate={manifest.sample_rate}"]
    for e in manifest.entries:
        lines.append(f"{e.label}\t{e.speaker_id}\t{e.utterance_index}\t{e.path}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path) -> CorpusManifest:
    manifest = CorpusManifest()
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "sample_rate=" in line:
                manifest.sample_rate = int(line.split("sample_rate=")[1])
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{i}: expected 4 tab-separated fields")
        label = int(parts[0])
        if not 0 <= label <= 9:
            raise ValueError(f"{path}:{i}: label {label} outside 0..9")
        manifest.entries.append(
            CorpusEntry(label, parts[1], int(parts[2]), parts[3])
        )
    return manifest


def build_corpus(
    out_dir,
    seed: int,
    speakers: int = 10,
    utterances: int = 1,
    labels=range(10),
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> CorpusManifest:
    """Write a synthetic digit corpus plus manifest.tsv under `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = CorpusManifest(sample_rate=sample_rate)
    for label in labels:
        for s in range(speakers):
            for u in range(utterances):
                speaker_seed = seed * 10000 + s * 100 + u
                wave = synth_word(label, speaker_seed, sample_rate)
                name = f"digit{label}_s{s:02d}_u{u:02d}.wav"
                write_wav(wave, out_dir / name)
                manifest.entries.append(CorpusEntry(label, f"s{s:02d}", u, name))
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest


def load_corpus(manifest_path) -> tuple[CorpusManifest, list[Waveform]]:
    """Load every utterance listed in a manifest, resolving paths against it."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    waves = []
    for e in manifest.entries:
        wave = read_wav(manifest_path.parent / e.path)
        if wave.sample_rate != manifest.sample_rate:
            raise ValueError(
                f"{e.path}: rate {wave.sample_rate} != manifest {manifest.sample_rate}"
            )
        waves.append(wave)
    return manifest, waves
