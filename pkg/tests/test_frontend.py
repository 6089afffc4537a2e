"""Front end: wav ingestion, filterbank pipeline, CMVN, energy SAD."""

import math
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdsv.frontend import (
    FRAME_LENGTH,
    FRAME_SHIFT,
    AudioBuffer,
    AudioFormatError,
    AudioTooShortError,
    FrontendConfig,
    InsufficientFramesError,
    apply_cmvn,
    compute_fbank,
    energy_sad,
    num_frames,
    read_wav,
    write_wav,
)


def write_pcm16(path, samples_i16, rate=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(width)
        f.setframerate(rate)
        f.writeframes(np.asarray(samples_i16, dtype="<i2").tobytes())


def tone(freq_hz, seconds=1.0, amplitude=0.9):
    t = np.arange(int(seconds * 16000)) / 16000.0
    return amplitude * np.sin(2.0 * np.pi * freq_hz * t)


class TestReadWav:
    def test_silence_roundtrip(self, tmp_path):
        p = tmp_path / "z.wav"
        write_pcm16(p, np.zeros(16000, dtype=np.int16))
        buf = read_wav(p)
        assert len(buf.samples) == 16000
        np.testing.assert_array_equal(buf.samples, 0.0)

    def test_scaling_boundary(self, tmp_path):
        p = tmp_path / "m.wav"
        write_pcm16(p, [-32768])
        assert read_wav(p).samples[0] == -1.0

    def test_wrong_rate_names_both(self, tmp_path):
        p = tmp_path / "8k.wav"
        write_pcm16(p, np.zeros(100, dtype=np.int16), rate=8000)
        with pytest.raises(AudioFormatError, match="16000.*8000"):
            read_wav(p)

    def test_stereo_rejected(self, tmp_path):
        p = tmp_path / "st.wav"
        write_pcm16(p, np.zeros(200, dtype=np.int16), channels=2)
        with pytest.raises(AudioFormatError, match="mono"):
            read_wav(p)

    def test_not_a_wav(self, tmp_path):
        p = tmp_path / "junk.wav"
        p.write_bytes(b"this is not RIFF data")
        with pytest.raises(AudioFormatError):
            read_wav(p)

    def test_write_read_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        x = (rng.random(5000) * 2 - 1) * 0.5
        p = tmp_path / "r.wav"
        write_wav(p, AudioBuffer(x))
        back = read_wav(p)
        np.testing.assert_allclose(back.samples, x, atol=1.0 / 32768.0)


class TestComputeFbank:
    def test_silence_hits_log_floor(self):
        cfg = FrontendConfig()
        feats = compute_fbank(AudioBuffer(np.zeros(16000)), cfg)
        assert feats.shape == (98, 40)
        np.testing.assert_allclose(feats, math.log(cfg.energy_floor), atol=1e-12)
        # all frames identical
        assert (feats == feats[0]).all()

    def test_frame_count_formula(self):
        feats = compute_fbank(AudioBuffer(np.zeros(16000)), FrontendConfig())
        assert feats.shape[0] == (16000 - 400) // 160 + 1 == 98

    def test_sine_lands_in_analytic_mel_bin(self):
        cfg = FrontendConfig()
        feats = compute_fbank(AudioBuffer(tone(1000.0)), cfg)

        # independent oracle: HTK mel-scale bin edges and triangle weights
        def mel(f):
            return 2595.0 * math.log10(1.0 + f / 700.0)

        def imel(m):
            return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

        edges = [imel(mel(cfg.mel_low_hz) + j *
                      (mel(cfg.mel_high_hz) - mel(cfg.mel_low_hz)) / (cfg.num_mel_bins + 1))
                 for j in range(cfg.num_mel_bins + 2)]
        weights = []
        for m in range(cfg.num_mel_bins):
            lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
            w = min((1000.0 - lo) / (center - lo), (hi - 1000.0) / (hi - center))
            weights.append(max(w, 0.0))
        expected_bin = int(np.argmax(weights))
        assert edges[expected_bin] <= 1000.0 <= edges[expected_bin + 2]
        assert (feats.argmax(axis=1) == expected_bin).all()

    def test_too_short_raises(self):
        with pytest.raises(AudioTooShortError):
            compute_fbank(AudioBuffer(np.zeros(399)), FrontendConfig())

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        buf = AudioBuffer(rng.random(8000) - 0.5)
        a = compute_fbank(buf, FrontendConfig())
        b = compute_fbank(buf, FrontendConfig())
        assert (a == b).all()

    def test_entries_respect_floor(self):
        cfg = FrontendConfig()
        rng = np.random.default_rng(5)
        feats = compute_fbank(AudioBuffer((rng.random(6000) - 0.5) * 0.01), cfg)
        assert (feats >= math.log(cfg.energy_floor) - 1e-12).all()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FrontendConfig(mel_low_hz=100.0, mel_high_hz=50.0)
        with pytest.raises(ValueError):
            FrontendConfig(fft_size=256)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=FRAME_LENGTH, max_value=30000))
def test_frame_count_formula_property(n):
    feats = compute_fbank(AudioBuffer(np.zeros(n)), FrontendConfig())
    assert feats.shape[0] == (n - FRAME_LENGTH) // FRAME_SHIFT + 1 == num_frames(n)


class TestApplyCmvn:
    def test_constant_dimension_becomes_zero(self):
        feats = np.tile([3.0, -1.0, 0.5], (10, 1))
        out = apply_cmvn(feats)
        np.testing.assert_array_equal(out, 0.0)

    def test_two_value_hand_computation(self):
        out = apply_cmvn(np.array([[1.0], [3.0]]))
        np.testing.assert_allclose(out, [[-1.0], [1.0]], atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        feats = rng.standard_normal((50, 40)) * 3 + 2
        once = apply_cmvn(feats)
        twice = apply_cmvn(once)
        np.testing.assert_allclose(twice, once, atol=1e-6)

    def test_output_statistics(self):
        rng = np.random.default_rng(7)
        out = apply_cmvn(rng.standard_normal((200, 40)) * 5 - 3)
        assert np.abs(out.mean(axis=0)).max() < 1e-6
        assert np.abs(out.var(axis=0) - 1.0).max() < 1e-6

    def test_single_frame_rejected(self):
        with pytest.raises(InsufficientFramesError):
            apply_cmvn(np.ones((1, 40)))


class TestEnergySad:
    def test_all_silence_is_all_nonspeech(self):
        mask = energy_sad(AudioBuffer(np.zeros(16000)), FrontendConfig())
        assert mask.shape == (98,)
        assert not mask.any()

    def test_constant_tone_boundary_behaviors(self):
        # one exact 32-sample period tiled, so frame energies tie bit-for-bit
        period = 0.9 * np.sin(2.0 * np.pi * np.arange(32) / 32.0)
        buf = AudioBuffer(np.tile(period, 500))
        assert energy_sad(buf, FrontendConfig(sad_energy_offset=-0.5)).all()
        # equal energies with strict > and zero offset: nothing passes
        assert not energy_sad(buf, FrontendConfig(sad_energy_offset=0.0)).any()

    def test_half_tone_half_silence_transition(self):
        cfg = FrontendConfig()
        x = np.concatenate([tone(1000.0, seconds=0.5), np.zeros(8000)])
        mask = energy_sad(AudioBuffer(x), cfg)
        # frames fully inside the tone: start + 400 <= 8000
        last_full = (8000 - FRAME_LENGTH) // FRAME_SHIFT
        first_silent = 8000 // FRAME_SHIFT  # no tone samples at all
        assert mask[: last_full - cfg.sad_context_frames + 1].all()
        assert not mask[first_silent + cfg.sad_context_frames:].any()

    def test_mask_length_matches_fbank(self):
        rng = np.random.default_rng(8)
        for n in (400, 415, 1000, 7777, 16000):
            buf = AudioBuffer(rng.random(n) - 0.5)
            cfg = FrontendConfig()
            assert len(energy_sad(buf, cfg)) == compute_fbank(buf, cfg).shape[0]
