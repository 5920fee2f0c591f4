import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clearspeech.audio import (
    NotWavError,
    NoiseSpec,
    PCM_SCALE,
    SNR_CAP_DB,
    TruncatedWavError,
    UnsupportedFormatError,
    Waveform,
    build_corpus,
    gen_white_noise,
    load_corpus,
    mix_at_snr,
    read_manifest,
    read_wav,
    snr_db,
    synth_word,
    write_manifest,
    write_wav,
)
from clearspeech.audio import CorpusEntry, CorpusManifest


class TestWaveform:
    def test_len_and_duration(self):
        w = Waveform(np.zeros(4000), 8000)
        assert len(w) == 4000
        assert w.duration == 0.5

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            Waveform(np.zeros((2, 100)), 8000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            Waveform(np.zeros(10), 0)


class TestWavRoundTrip:
    def test_ramp_quantization_bound(self, tmp_path):
        ramp = Waveform(np.linspace(-0.9, 0.9, 100), 8000)
        write_wav(ramp, tmp_path / "r.wav")
        back = read_wav(tmp_path / "r.wav")
        assert back.sample_rate == 8000
        assert np.max(np.abs(back.samples - ramp.samples)) <= 1.0 / PCM_SCALE

    def test_zeros_round_trip_exact(self, tmp_path):
        write_wav(Waveform(np.zeros(64), 16000), tmp_path / "z.wav")
        back = read_wav(tmp_path / "z.wav")
        assert back.sample_rate == 16000
        assert np.all(back.samples == 0.0)

    def test_noise_round_trip(self, tmp_path):
        noise = gen_white_noise(5000, 21)
        write_wav(noise, tmp_path / "n.wav")
        back = read_wav(tmp_path / "n.wav")
        assert np.max(np.abs(back.samples - noise.samples)) <= 1.0 / PCM_SCALE

    def test_full_scale_clips_not_wraps(self, tmp_path):
        w = Waveform(np.array([1.5, -1.5, 1.0, -1.0]), 8000)
        write_wav(w, tmp_path / "c.wav")
        back = read_wav(tmp_path / "c.wav")
        assert back.samples[0] == back.samples[2]
        assert back.samples[1] == pytest.approx(-1.0)


def _wav_bytes(payload, fmt_tag=1, channels=1, bits=16, rate=8000, extra_chunk=None):
    fmt = struct.pack(
        "<HHIIHH", fmt_tag, channels, rate,
        rate * channels * bits // 8, channels * bits // 8, bits,
    )
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    if extra_chunk is not None:
        cid, body = extra_chunk
        chunks += cid + struct.pack("<I", len(body)) + body
        if len(body) % 2:
            chunks += b"\x00"  # chunk pad byte
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


class TestWavParsing:
    def test_skips_unknown_odd_sized_chunk(self, tmp_path):
        payload = struct.pack("<3h", 100, -200, 300)
        blob = _wav_bytes(payload, extra_chunk=(b"LIST", b"junk!"))
        (tmp_path / "x.wav").write_bytes(blob)
        wave = read_wav(tmp_path / "x.wav")
        assert np.allclose(wave.samples * PCM_SCALE, [100, -200, 300])

    def test_not_riff(self, tmp_path):
        (tmp_path / "bad.wav").write_bytes(b"OggS" + b"\x00" * 40)
        with pytest.raises(NotWavError):
            read_wav(tmp_path / "bad.wav")

    def test_float_format_rejected(self, tmp_path):
        blob = _wav_bytes(b"\x00" * 8, fmt_tag=3)
        (tmp_path / "f.wav").write_bytes(blob)
        with pytest.raises(UnsupportedFormatError):
            read_wav(tmp_path / "f.wav")

    def test_stereo_rejected(self, tmp_path):
        blob = _wav_bytes(b"\x00" * 8, channels=2)
        (tmp_path / "s.wav").write_bytes(blob)
        with pytest.raises(UnsupportedFormatError):
            read_wav(tmp_path / "s.wav")

    def test_truncated_payload(self, tmp_path):
        blob = _wav_bytes(struct.pack("<4h", 1, 2, 3, 4))
        (tmp_path / "t.wav").write_bytes(blob[:-4])
        with pytest.raises(TruncatedWavError):
            read_wav(tmp_path / "t.wav")


class TestSnrDb:
    def test_identical_hits_cap(self, tone):
        w = tone(440)
        assert snr_db(w, w) == SNR_CAP_DB

    def test_equal_power_noise_is_zero_db(self):
        ref = Waveform(np.array([1.0, -1.0, 1.0, -1.0]), 8000)
        test = Waveform(ref.samples + np.array([1.0, 1.0, -1.0, -1.0]), 8000)
        assert snr_db(ref, test) == pytest.approx(0.0, abs=1e-12)

    def test_twenty_db_case(self):
        # orthogonal disturbance with power 0.01x the reference power
        n = 8000
        t = np.arange(n) / 8000
        ref = Waveform(np.sin(2 * np.pi * 100 * t), 8000)
        noise = 0.1 * np.cos(2 * np.pi * 100 * t)
        assert snr_db(ref, Waveform(ref.samples + noise, 8000)) == pytest.approx(
            20.0, abs=1e-9
        )

    def test_doubling_noise_drops_6db(self, tone):
        ref = tone(200)
        noise = gen_white_noise(len(ref), 3).samples
        a = snr_db(ref, Waveform(ref.samples + noise, 8000))
        b = snr_db(ref, Waveform(ref.samples + 2 * noise, 8000))
        assert a - b == pytest.approx(20 * np.log10(2), abs=1e-9)

    def test_length_mismatch(self, tone):
        with pytest.raises(ValueError):
            snr_db(tone(100, seconds=1.0), tone(100, seconds=0.5))

    def test_zero_reference(self):
        z = Waveform(np.zeros(16), 8000)
        with pytest.raises(ValueError):
            snr_db(z, z)


class TestMixAtSnr:
    def test_zero_db_equalizes_power(self, tone):
        clean = tone(300)
        noise = gen_white_noise(len(clean), 9)
        mixed = mix_at_snr(clean, noise, 0.0)
        added = mixed.samples - clean.samples
        assert np.sum(added**2) == pytest.approx(np.sum(clean.samples**2))

    def test_high_target_is_near_identity(self, tone):
        clean = tone(300)
        mixed = mix_at_snr(clean, gen_white_noise(len(clean), 9), 120.0)
        assert np.max(np.abs(mixed.samples - clean.samples)) < 1e-5

    def test_closed_form_gain(self):
        clean = Waveform(np.array([1.0, -1.0, 1.0, -1.0]), 8000)  # power 1
        noise = Waveform(np.array([2.0, 2.0, -2.0, -2.0]), 8000)  # power 4
        mixed = mix_at_snr(clean, noise, 10.0)
        g = (mixed.samples - clean.samples)[0] / noise.samples[0]
        assert g == pytest.approx(np.sqrt(1.0 / 40.0), abs=1e-12)

    def test_noise_too_short(self, tone):
        clean = tone(300, seconds=1.0)
        with pytest.raises(ValueError):
            mix_at_snr(clean, gen_white_noise(len(clean) // 2, 1), 0.0)

    def test_silent_clean(self):
        z = Waveform(np.zeros(100), 8000)
        with pytest.raises(ValueError):
            mix_at_snr(z, gen_white_noise(100, 1), 0.0)

    @given(target=st.floats(-20, 60), seed=st.integers(0, 2**20))
    @settings(max_examples=25, deadline=None)
    def test_round_trips_target(self, target, seed):
        clean = make_tone_cached()
        mixed = mix_at_snr(clean, gen_white_noise(len(clean), seed), target)
        assert abs(snr_db(clean, mixed) - target) <= 1e-9


_CACHED_TONE = None


def make_tone_cached():
    global _CACHED_TONE
    if _CACHED_TONE is None:
        t = np.arange(4000) / 8000
        _CACHED_TONE = Waveform(0.5 * np.sin(2 * np.pi * 250 * t), 8000)
    return _CACHED_TONE


class TestGenWhiteNoise:
    def test_deterministic(self):
        assert np.array_equal(
            gen_white_noise(1000, 7).samples, gen_white_noise(1000, 7).samples
        )

    def test_mean_near_zero(self):
        assert abs(np.mean(gen_white_noise(10**5, 7).samples)) < 0.02

    def test_std_near_sigma(self):
        assert np.std(gen_white_noise(10**5, 11).samples) == pytest.approx(
            0.3, abs=0.01
        )

    def test_single_sample(self):
        w = gen_white_noise(1, 0)
        assert len(w) == 1
        assert np.isfinite(w.samples[0])
        assert -1.0 <= w.samples[0] <= 1.0

    def test_bounded(self):
        assert np.max(np.abs(gen_white_noise(10**5, 13).samples)) <= 1.0


class TestSynthWord:
    def test_deterministic(self):
        a = synth_word(4, 17)
        b = synth_word(4, 17)
        assert np.array_equal(a.samples, b.samples)

    def test_duration_exact(self):
        for rate in (8000, 16000):
            assert len(synth_word(0, 1, rate)) == 3 * rate

    def test_labels_have_distinct_peaks(self):
        spec0 = np.abs(np.fft.rfft(synth_word(0, 5).samples))
        spec1 = np.abs(np.fft.rfft(synth_word(1, 5).samples))
        assert np.argmax(spec0) != np.argmax(spec1)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            synth_word(10, 1)

    def test_nearest_centroid_separates_labels(self):
        # mean-spectrum centroids from one seed set classify a second seed set;
        # log-spaced bands absorb the per-speaker detune while keeping the
        # wider label-to-label formant spacing apart
        edges = 100 * (4000 / 100) ** (np.arange(49) / 48)
        freqs = np.fft.rfftfreq(24000, 1 / 8000)

        def banded(label, seed):
            power = np.abs(np.fft.rfft(synth_word(label, seed).samples)) ** 2
            e = np.array(
                [
                    power[(freqs >= lo) & (freqs < hi)].sum()
                    for lo, hi in zip(edges[:-1], edges[1:])
                ]
            )
            e = np.sqrt(e)
            return e / np.linalg.norm(e)

        centroids = [
            np.mean([banded(lab, s) for s in (1, 2, 3)], axis=0)
            for lab in range(10)
        ]
        for lab in range(10):
            probe = banded(lab, 99)
            dists = [np.linalg.norm(probe - c) for c in centroids]
            assert int(np.argmin(dists)) == lab


class TestNoiseSpec:
    def test_white_realize(self):
        spec = NoiseSpec(kind="white", seed=5)
        assert np.array_equal(
            spec.realize(100, 8000).samples, gen_white_noise(100, 5).samples
        )

    def test_file_realize(self, tmp_path):
        noise = gen_white_noise(500, 2)
        write_wav(noise, tmp_path / "n.wav")
        spec = NoiseSpec(kind="file", path=str(tmp_path / "n.wav"))
        got = spec.realize(500, 8000)
        assert np.max(np.abs(got.samples - noise.samples)) <= 1.0 / PCM_SCALE

    def test_file_needs_path(self):
        with pytest.raises(ValueError):
            NoiseSpec(kind="file")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            NoiseSpec(kind="pink")


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = CorpusManifest(
            entries=[CorpusEntry(3, "s00", 0, "digit3_s00_u00.wav")],
            sample_rate=16000,
        )
        write_manifest(manifest, tmp_path / "m.tsv")
        back = read_manifest(tmp_path / "m.tsv")
        assert back.sample_rate == 16000
        assert back.entries == manifest.entries

    def test_label_out_of_range_rejected(self, tmp_path):
        (tmp_path / "m.tsv").write_text("11\ts00\t0\tx.wav\n")
        with pytest.raises(ValueError):
            read_manifest(tmp_path / "m.tsv")

    def test_field_count_checked(self, tmp_path):
        (tmp_path / "m.tsv").write_text("1\ts00\t0\n")
        with pytest.raises(ValueError):
            read_manifest(tmp_path / "m.tsv")


class TestBuildCorpus:
    def test_files_and_manifest(self, tmp_path):
        manifest = build_corpus(
            tmp_path, seed=3, speakers=2, utterances=1, labels=[0, 1]
        )
        assert len(manifest.entries) == 4
        names = sorted(p.name for p in tmp_path.glob("*.wav"))
        assert names == [
            "digit0_s00_u00.wav",
            "digit0_s01_u00.wav",
            "digit1_s00_u00.wav",
            "digit1_s01_u00.wav",
        ]
        _, waves = load_corpus(tmp_path / "manifest.tsv")
        assert len(waves) == 4
        assert all(len(w) == 24000 for w in waves)

    def test_deterministic_bytes(self, tmp_path):
        build_corpus(tmp_path / "a", seed=8, speakers=1, labels=[5])
        build_corpus(tmp_path / "b", seed=8, speakers=1, labels=[5])
        fa = (tmp_path / "a" / "digit5_s00_u00.wav").read_bytes()
        fb = (tmp_path / "b" / "digit5_s00_u00.wav").read_bytes()
        assert fa == fb
