import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from clearspeech.audio import Waveform, gen_white_noise, mix_at_snr, snr_db, synth_word
from clearspeech.enhance import (
    EnhanceConfig,
    HybridContext,
    NoisePsd,
    SpectralFrames,
    StftParams,
    estimate_noise,
    estimate_noise_masked,
    exp_integral_e1,
    istft,
    kalman_enhance,
    levinson_durbin,
    log_mmse_gain,
    mmse_stsa_gain,
    run_hybrid,
    spectral_subtract,
    statistical_enhance,
    stft,
    wiener_gain,
)
from clearspeech.filterbank import AdaptiveParams


def make_frames(mags, params=None, bins=None):
    """Frames with zero phases from a (t, bins) magnitude array."""
    mags = np.atleast_2d(np.asarray(mags, dtype=np.float64))
    params = params or StftParams()
    length = params.hop * (mags.shape[0] - 1) + params.frame_len
    return SpectralFrames(mags, np.zeros_like(mags), params, length)


class TestStftParams:
    def test_geometry_validated(self):
        with pytest.raises(ValueError):
            StftParams(hop=0)
        with pytest.raises(ValueError):
            StftParams(hop=300, frame_len=256)
        with pytest.raises(ValueError):
            StftParams(fft_size=255)
        with pytest.raises(ValueError):
            StftParams(window="kaiser")


class TestStft:
    def test_zero_input(self):
        frames = stft(Waveform(np.zeros(2048), 8000))
        assert np.all(frames.magnitudes == 0.0)
        assert frames.n_bins == 129

    def test_tone_peak_bin(self, tone):
        frames = stft(tone(1000, seconds=0.5))
        mean_mag = frames.magnitudes.mean(axis=0)
        assert int(np.argmax(mean_mag)) == 32  # 1000 * 256 / 8000

    def test_frame_count_formula(self):
        frames = stft(
            Waveform(np.zeros(24000), 8000), StftParams(frame_len=240, hop=120)
        )
        assert frames.n_frames == 199

    def test_too_short(self):
        with pytest.raises(ValueError):
            stft(Waveform(np.zeros(100), 8000))


class TestIstft:
    def test_noise_round_trip_interior(self):
        noise = gen_white_noise(8192, 3)
        back = istft(stft(noise), 8000)
        err = np.abs(back.samples[256:-256] - noise.samples[256:-256])
        assert err.max() <= 1e-6

    def test_tone_round_trip(self, tone):
        w = tone(440, seconds=1.0)
        back = istft(stft(w), 8000)
        assert np.abs(back.samples[256:-256] - w.samples[256:-256]).max() <= 1e-6

    def test_zero_frames(self):
        frames = stft(Waveform(np.zeros(4096), 8000))
        assert np.all(istft(frames, 8000).samples == 0.0)

    def test_length_restored_exactly(self):
        noise = gen_white_noise(5000, 1)  # not hop-aligned
        assert len(istft(stft(noise), 8000)) == 5000

    def test_gap_geometry_rejected(self):
        params = StftParams(frame_len=256, hop=256, window="hann")
        frames = stft(gen_white_noise(4096, 2), params)
        with pytest.raises(ValueError):
            istft(frames, 8000)

    @given(seed=st.integers(0, 100), n=st.integers(1024, 3000))
    @settings(max_examples=15, deadline=None)
    def test_round_trip_property(self, seed, n):
        noise = gen_white_noise(n, seed)
        back = istft(stft(noise), 8000)
        assert len(back) == n
        assert np.abs(back.samples[256:-256] - noise.samples[256:-256]).max() <= 1e-6


class TestEstimateNoise:
    def test_constant_magnitude(self):
        frames = make_frames(np.full((5, 129), 3.0))
        psd = estimate_noise(frames, 5)
        assert np.allclose(psd.power, 9.0)
        assert psd.frames_used == 5

    def test_single_frame(self):
        mags = np.abs(np.random.default_rng(0).normal(size=(4, 129)))
        frames = make_frames(mags)
        psd = estimate_noise(frames, 1)
        assert np.array_equal(psd.power, mags[0] ** 2)

    def test_white_noise_roughly_flat(self):
        frames = stft(gen_white_noise(65536, 9))
        psd = estimate_noise(frames, 400)
        interior = psd.power[5:-5]  # window leakage shapes the edge bins
        assert interior.max() / interior.mean() < 1.5
        assert interior.min() / interior.mean() > 0.6

    def test_masked_selects_frames(self):
        mags = np.abs(np.random.default_rng(1).normal(size=(6, 129))) + 0.1
        frames = make_frames(mags)
        mask = np.array([True, False, True, False, False, False])
        psd = estimate_noise_masked(frames, mask)
        assert np.allclose(psd.power, (mags[[0, 2]] ** 2).mean(axis=0))
        assert psd.frames_used == 2

    def test_masked_rejects_empty(self):
        frames = make_frames(np.ones((3, 129)))
        with pytest.raises(ValueError):
            estimate_noise_masked(frames, np.zeros(3, dtype=bool))


class TestEnhanceConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EnhanceConfig(alpha=0.5)
        with pytest.raises(ValueError):
            EnhanceConfig(beta=0.5)
        with pytest.raises(ValueError):
            EnhanceConfig(dd_alpha=1.0)
        with pytest.raises(ValueError):
            EnhanceConfig(bands=0)


class TestSpectralSubtract:
    def test_zero_noise_is_identity(self):
        mags = np.abs(np.random.default_rng(2).normal(size=(8, 129))) + 0.5
        frames = make_frames(mags)
        silent = NoisePsd(np.zeros(129), 1)
        for variant in ("boll", "berouti", "sim", "kamath"):
            out = spectral_subtract(frames, silent, EnhanceConfig(variant=variant))
            assert np.allclose(out.magnitudes, mags, atol=1e-12), variant

    def test_boll_exact_cancellation_leaves_floor(self):
        mags = np.full((4, 129), 2.0)
        frames = make_frames(mags)
        noise = NoisePsd(np.full(129, 4.0), 10)
        cfg = EnhanceConfig(variant="boll", beta=0.002)
        out = spectral_subtract(frames, noise, cfg)
        assert np.allclose(out.magnitudes**2, 0.002 * 4.0)

    def test_boll_closed_form(self):
        mags = np.array([[3.0, 1.0, 0.5]])
        noise = NoisePsd(np.array([4.0, 0.25, 1.0]), 1)
        frames = make_frames(mags, StftParams(frame_len=4, hop=2, fft_size=4))
        out = spectral_subtract(frames, noise, EnhanceConfig(variant="boll", beta=0.01))
        expected = np.sqrt(np.maximum(mags**2 - noise.power, 0.01 * noise.power))
        assert np.allclose(out.magnitudes, expected)

    def test_berouti_alpha1_equals_boll(self):
        mags = np.abs(np.random.default_rng(3).normal(size=(6, 129))) + 0.1
        frames = make_frames(mags)
        noise = NoisePsd(np.full(129, 0.04), 10)
        boll = spectral_subtract(frames, noise, EnhanceConfig(variant="boll"))
        berouti = spectral_subtract(
            frames, noise, EnhanceConfig(variant="berouti", alpha=1.0)
        )
        assert np.max(np.abs(boll.magnitudes - berouti.magnitudes)) <= 1e-12

    def test_sim_p2_alpha1_equals_boll(self):
        mags = np.abs(np.random.default_rng(4).normal(size=(6, 129))) + 0.1
        frames = make_frames(mags)
        noise = NoisePsd(np.full(129, 0.04), 10)
        boll = spectral_subtract(frames, noise, EnhanceConfig(variant="boll"))
        sim = spectral_subtract(
            frames, noise, EnhanceConfig(variant="sim", alpha=1.0, exponent=2.0)
        )
        assert np.max(np.abs(boll.magnitudes - sim.magnitudes)) <= 1e-12

    def test_berouti_ramp_clamps(self):
        # one bin: seg SNR -20 dB drives alpha to the upper clamp of 5,
        # +40 dB drives it to the lower clamp of 1
        params = StftParams(frame_len=4, hop=2, fft_size=4)
        noise = NoisePsd(np.array([1.0, 0.0, 0.0]), 1)
        low = make_frames(np.array([[0.1, 0.0, 0.0]]), params)
        out = spectral_subtract(low, noise, EnhanceConfig(variant="berouti", beta=0.0))
        # 0.01 - 5*1 < 0 -> floored at 0
        assert out.magnitudes[0, 0] == 0.0
        high = make_frames(np.array([[100.0, 0.0, 0.0]]), params)
        out = spectral_subtract(high, noise, EnhanceConfig(variant="berouti", beta=0.0))
        assert out.magnitudes[0, 0] == pytest.approx(np.sqrt(100.0**2 - 1.0))

    def test_kamath_band_structure(self):
        from clearspeech.enhance import _band_tweaks

        assert np.allclose(_band_tweaks(4, 8000), [1.0, 2.5, 1.5, 1.5])

    def test_phase_passthrough(self):
        noise = gen_white_noise(4096, 5)
        frames = stft(noise)
        psd = estimate_noise(frames, 10)
        for variant in ("boll", "berouti", "sim", "kamath"):
            out = spectral_subtract(frames, psd, EnhanceConfig(variant=variant))
            assert np.array_equal(out.phases, frames.phases)

    def test_wrong_variant(self):
        frames = make_frames(np.ones((2, 129)))
        with pytest.raises(ValueError):
            spectral_subtract(frames, NoisePsd(np.ones(129), 1),
                              EnhanceConfig(variant="wiener"))

    def test_dimension_mismatch(self):
        frames = make_frames(np.ones((2, 129)))
        with pytest.raises(ValueError):
            spectral_subtract(frames, NoisePsd(np.ones(64), 1))


class TestExpIntegral:
    def test_anchor_at_one(self):
        assert exp_integral_e1(1.0) == pytest.approx(0.21938393439537618, abs=1e-10)

    def test_matches_scipy(self):
        x = np.concatenate(
            [np.linspace(0.001, 0.999, 200), np.linspace(1.0, 600.0, 200)]
        )
        ours = exp_integral_e1(x)
        assert np.max(np.abs(ours - scipy.special.exp1(x))) <= 1e-10

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            exp_integral_e1(0.0)
        with pytest.raises(ValueError):
            exp_integral_e1(np.array([1.0, -2.0]))

    @given(x=st.floats(1e-3, 500.0))
    @settings(max_examples=50, deadline=None)
    def test_pointwise_property(self, x):
        assert exp_integral_e1(x) == pytest.approx(
            float(scipy.special.exp1(x)), abs=1e-10
        )


class TestGainRules:
    def test_wiener_closed_form(self):
        assert wiener_gain(1.0) == 0.5
        assert wiener_gain(np.array([3.0]))[0] == 0.75

    @given(x1=st.floats(0.001, 100), x2=st.floats(0.001, 100))
    @settings(max_examples=30, deadline=None)
    def test_wiener_monotone(self, x1, x2):
        if x1 == x2:
            return
        lo, hi = min(x1, x2), max(x1, x2)
        assert wiener_gain(lo) < wiener_gain(hi)

    def test_mmse_against_unscaled_bessels(self):
        # reference form with plain I0/I1, valid while v stays moderate
        xi = np.array([0.5, 1.0, 4.0, 10.0])
        gamma = np.array([1.0, 2.0, 3.0, 8.0])
        v = xi * gamma / (1.0 + xi)
        ref = (
            (np.sqrt(np.pi) / 2.0)
            * (np.sqrt(v) / gamma)
            * np.exp(-v / 2.0)
            * ((1.0 + v) * scipy.special.i0(v / 2.0) + v * scipy.special.i1(v / 2.0))
        )
        assert np.allclose(mmse_stsa_gain(xi, gamma), ref, atol=1e-12)

    def test_mmse_survives_huge_v(self):
        g = mmse_stsa_gain(np.array([1e4]), np.array([1e4]))
        assert np.isfinite(g).all()

    def test_logmmse_formula(self):
        xi, gamma = 1.0, 2.0  # v = 1
        expected = 0.5 * np.exp(0.5 * exp_integral_e1(1.0))
        assert log_mmse_gain(xi, gamma) == pytest.approx(expected, abs=1e-12)


class TestStatisticalEnhance:
    def test_vanishing_noise_keeps_signal(self):
        mags = np.abs(np.random.default_rng(6).normal(size=(10, 129))) + 1.0
        frames = make_frames(mags)
        tiny = NoisePsd(np.full(129, 1e-12 * np.mean(mags**2)), 1)
        for variant in ("wiener", "mmse", "logmmse"):
            out = statistical_enhance(frames, tiny, EnhanceConfig(variant=variant))
            assert np.all(out.magnitudes >= 0.999 * mags), variant

    def test_wiener_gain_half_at_xi_one(self):
        # dd_alpha 0 makes xi = gamma - 1; gamma = 2 pins xi at 1
        mags = np.full((3, 129), np.sqrt(2.0))
        frames = make_frames(mags)
        noise = NoisePsd(np.ones(129), 1)
        out = statistical_enhance(
            frames, noise, EnhanceConfig(variant="wiener", dd_alpha=0.0)
        )
        assert np.allclose(out.magnitudes, 0.5 * mags)

    def test_logmmse_at_v_one(self):
        mags = np.full((1, 129), np.sqrt(2.0))
        frames = make_frames(mags)
        noise = NoisePsd(np.ones(129), 1)
        out = statistical_enhance(
            frames, noise, EnhanceConfig(variant="logmmse", dd_alpha=0.0)
        )
        gain = 0.5 * np.exp(0.5 * exp_integral_e1(1.0))
        assert np.allclose(out.magnitudes, gain * mags, atol=1e-12)

    def test_decision_directed_recursion(self):
        # two frames, one effective bin, replicated by hand
        dd, d = 0.98, 4.0
        m0, m1 = 4.0, 1.0
        g_min = 10 ** (-25 / 20)

        gamma0 = m0**2 / d
        xi0 = dd + (1 - dd) * max(gamma0 - 1, 0)
        g0 = min(max(xi0 / (1 + xi0), g_min), 1.0)
        gamma1 = m1**2 / d
        xi1 = dd * g0**2 * gamma0 + (1 - dd) * max(gamma1 - 1, 0)
        g1 = min(max(xi1 / (1 + xi1), g_min), 1.0)

        frames = make_frames(np.array([[m0], [m1]]),
                             StftParams(frame_len=2, hop=1, fft_size=2))
        out = statistical_enhance(
            frames, NoisePsd(np.array([d]), 1), EnhanceConfig(variant="wiener")
        )
        assert out.magnitudes[0, 0] == pytest.approx(g0 * m0, abs=1e-12)
        assert out.magnitudes[1, 0] == pytest.approx(g1 * m1, abs=1e-12)

    def test_gains_never_exceed_one(self):
        noisy = mix_at_snr(synth_word(1, 2), gen_white_noise(24000, 3), 0.0)
        frames = stft(noisy)
        psd = estimate_noise(frames, 10)
        for variant in ("wiener", "mmse", "logmmse", "omlsa"):
            out = statistical_enhance(frames, psd, EnhanceConfig(variant=variant))
            assert np.all(out.magnitudes <= frames.magnitudes + 1e-12), variant

    def test_gain_floor_respected(self):
        # pure noise input: gains bottom out at the -25 dB floor, never below
        noise = gen_white_noise(8192, 8)
        frames = stft(noise)
        psd = estimate_noise(frames, frames.n_frames)
        out = statistical_enhance(frames, psd, EnhanceConfig(variant="logmmse"))
        g_min = 10 ** (-25 / 20)
        nonzero = frames.magnitudes > 1e-12
        ratio = out.magnitudes[nonzero] / frames.magnitudes[nonzero]
        assert ratio.min() >= g_min - 1e-12

    def test_omlsa_interpolates_toward_floor(self):
        # weak bins get pushed below the plain log-MMSE gain
        noisy = mix_at_snr(synth_word(4, 11), gen_white_noise(24000, 99), 0.0)
        frames = stft(noisy)
        psd = estimate_noise(frames, 10)
        log_out = statistical_enhance(frames, psd, EnhanceConfig(variant="logmmse"))
        om_out = statistical_enhance(frames, psd, EnhanceConfig(variant="omlsa"))
        assert np.mean(om_out.magnitudes) < np.mean(log_out.magnitudes)

    def test_phase_passthrough(self):
        noisy = mix_at_snr(synth_word(0, 1), gen_white_noise(24000, 2), 5.0)
        frames = stft(noisy)
        psd = estimate_noise(frames, 10)
        out = statistical_enhance(frames, psd, EnhanceConfig(variant="logmmse"))
        assert np.array_equal(out.phases, frames.phases)


class TestLevinsonDurbin:
    def test_matches_toeplitz_solve(self):
        rng = np.random.default_rng(12)
        # stable AR(3) process autocorrelation, estimated from a long draw
        x = np.zeros(50000)
        e = rng.normal(size=50000)
        for t in range(3, 50000):
            x[t] = 0.6 * x[t - 1] - 0.3 * x[t - 2] + 0.1 * x[t - 3] + e[t]
        lags = np.array([x[: 50000 - k] @ x[k:] for k in range(4)]) / 50000
        phi, err = levinson_durbin(lags, 3)
        from scipy.linalg import toeplitz

        direct = np.linalg.solve(toeplitz(lags[:3]), lags[1:4])
        assert np.allclose(phi, direct, atol=1e-8)
        assert err > 0

    def test_needs_enough_lags(self):
        with pytest.raises(ValueError):
            levinson_durbin(np.array([1.0, 0.5]), 2)

    def test_zero_lag_must_be_positive(self):
        with pytest.raises(ValueError):
            levinson_durbin(np.zeros(3), 2)


class TestKalman:
    def test_zero_noise_variance_is_identity(self):
        w = gen_white_noise(1024, 4)
        out = kalman_enhance(w, 0.0)
        assert np.max(np.abs(out.samples - w.samples)) <= 1e-6

    def test_zeros_stay_zeros(self):
        out = kalman_enhance(Waveform(np.zeros(1024), 8000), 0.1)
        assert np.all(out.samples == 0.0)

    def test_ar2_improvement(self):
        rng = np.random.Generator(np.random.PCG64(7))
        n = 8192
        e = rng.normal(0, 1, n)
        x = np.zeros(n)
        for t in range(2, n):
            x[t] = 1.3 * x[t - 1] - 0.8 * x[t - 2] + e[t]
        x = 0.1 * x / np.std(x)
        clean = Waveform(x, 8000)
        noise = rng.normal(0, np.std(x), n)
        noisy = Waveform(x + noise, 8000)
        out = kalman_enhance(
            noisy, float(np.var(noise)), EnhanceConfig(ar_order=2, iterations=2)
        )
        assert snr_db(clean, out) - snr_db(clean, noisy) >= 3.0

    def test_block_too_short(self):
        with pytest.raises(ValueError):
            kalman_enhance(Waveform(np.zeros(100), 8000), 0.1)

    def test_order_bounded_by_block(self):
        with pytest.raises(ValueError):
            kalman_enhance(gen_white_noise(1024, 1), 0.1, EnhanceConfig(ar_order=64))

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            kalman_enhance(gen_white_noise(1024, 1), -1.0)

    def test_length_preserved(self):
        w = gen_white_noise(1000, 5)  # not block aligned
        assert len(kalman_enhance(w, 0.01)) == 1000


class TestRunHybrid:
    def test_single_stage_matches_direct_call(self):
        noisy = mix_at_snr(synth_word(2, 3), gen_white_noise(24000, 4), 0.0)
        ctx = HybridContext()
        via_hybrid = run_hybrid(noisy, ["boll"], ctx)
        frames = stft(noisy, ctx.stft_params)
        psd = estimate_noise(frames, ctx.noise_frames)
        cfg = EnhanceConfig(**{**ctx.config.__dict__, "variant": "boll"})
        direct = istft(spectral_subtract(frames, psd, cfg, 8000), 8000)
        assert np.array_equal(via_hybrid.samples, direct.samples)

    def test_empty_pipeline_rejected(self):
        with pytest.raises(ValueError):
            run_hybrid(gen_white_noise(4096, 1), [], HybridContext())

    def test_unknown_stage(self):
        with pytest.raises(ValueError):
            run_hybrid(gen_white_noise(4096, 1), ["reverse"], HybridContext())

    def test_adaptive_stage_needs_reference(self):
        with pytest.raises(ValueError):
            run_hybrid(gen_white_noise(4096, 1), ["nlms"], HybridContext())

    def test_fir_stage_spec(self):
        w = gen_white_noise(4096, 6)
        out = run_hybrid(w, ["fir:lowpass:1000"], HybridContext())
        assert len(out) == len(w)
        spec_in = np.abs(np.fft.rfft(w.samples))
        spec_out = np.abs(np.fft.rfft(out.samples))
        hi = slice(2048 // 2, None)  # well above the cutoff
        assert spec_out[hi].sum() < 0.05 * spec_in[hi].sum()

    def test_length_preserved_all_stages(self):
        clean = synth_word(5, 8)
        noisy = mix_at_snr(clean, gen_white_noise(24000, 9), 5.0)
        ref = gen_white_noise(24000, 10)
        ctx = HybridContext(reference=ref)
        for stage in ["boll", "berouti", "sim", "kamath", "wiener", "mmse",
                      "logmmse", "omlsa", "kalman", "rasta", "lms", "nlms",
                      "fir:highpass:100"]:
            out = run_hybrid(noisy, [stage], ctx)
            assert len(out) == len(noisy), stage

    def test_chain_beats_single_stages(self):
        clean = synth_word(4, 11)
        ref = gen_white_noise(len(clean), 123)
        channel = np.array([0.6, -0.4, 0.2, -0.1])
        filtered = np.convolve(ref.samples, channel)[: len(clean)]
        g = np.sqrt(np.sum(clean.samples**2) / np.sum(filtered**2))
        noisy = Waveform(clean.samples + g * filtered, 8000)
        ref_scaled = Waveform(g * ref.samples, 8000)
        ctx = HybridContext(
            reference=ref_scaled, adaptive=AdaptiveParams(order=8, mu=0.05)
        )
        before = snr_db(clean, noisy)
        nlms_only = snr_db(clean, run_hybrid(noisy, ["nlms"], ctx)) - before
        wiener_only = snr_db(clean, run_hybrid(noisy, ["wiener"], ctx)) - before
        chain = snr_db(clean, run_hybrid(noisy, ["nlms", "wiener"], ctx)) - before
        assert chain >= nlms_only
        assert chain >= wiener_only
