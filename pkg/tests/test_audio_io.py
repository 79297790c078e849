"""WAV round trips, stereo downmix, and resampler fidelity."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stckit.audio_io import (
    AudioClip,
    UnsupportedWavError,
    WavFormatError,
    normalize_peak,
    read_wav,
    resample,
    write_wav,
)


def write_pcm16(path, samples, rate, channels=1):
    """Minimal PCM16 writer used as an independent reference encoder."""
    raw = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767)
    body = raw.astype("<i2").tobytes()
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, channels, rate,
                                       rate * 2 * channels, 2 * channels, 16))
        fh.write(b"data" + struct.pack("<I", len(body)))
        fh.write(body)


class TestReadWav:
    def test_pcm16_header_arithmetic(self, tmp_path):
        """1 s of PCM16 at 48 kHz comes back as 48000 samples at rate 48000."""
        p = tmp_path / "a.wav"
        write_pcm16(p, np.zeros(48000), 48000)
        clip = read_wav(p)
        assert len(clip.samples) == 48000
        assert clip.sample_rate == 48000

    def test_all_zero_payload(self, tmp_path):
        p = tmp_path / "z.wav"
        write_pcm16(p, np.zeros(100), 16000)
        assert np.all(read_wav(p).samples == 0.0)

    def test_stereo_downmix_cancels(self, tmp_path):
        """Channels (+0.5, -0.5) average to an all-zero mono clip."""
        p = tmp_path / "s.wav"
        inter = np.empty(2000)
        inter[0::2] = 0.5
        inter[1::2] = -0.5
        write_pcm16(p, inter, 16000, channels=2)
        clip = read_wav(p)
        assert len(clip.samples) == 1000
        assert np.max(np.abs(clip.samples)) < 1e-4

    def test_pcm16_scaling(self, tmp_path):
        p = tmp_path / "v.wav"
        write_pcm16(p, np.array([0.5, -0.5, 0.25]), 16000)
        clip = read_wav(p)
        np.testing.assert_allclose(clip.samples, [0.5, -0.5, 0.25], atol=1e-4)

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"RIFX####WAVE" + b"\x00" * 64)
        with pytest.raises(WavFormatError):
            read_wav(p)

    def test_unsupported_encoding(self, tmp_path):
        p = tmp_path / "u8.wav"
        body = b"\x80" * 32
        with open(p, "wb") as fh:
            fh.write(b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE")
            fh.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 8000, 8000, 1, 8))
            fh.write(b"data" + struct.pack("<I", len(body)) + body)
        with pytest.raises(UnsupportedWavError):
            read_wav(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_wav(tmp_path / "nope.wav")


class TestWriteWav:
    def test_float32_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        clip = AudioClip(rng.uniform(-1, 1, 5000).astype(np.float32), 16000)
        p = tmp_path / "rt.wav"
        write_wav(clip, p)
        back = read_wav(p)
        assert back.sample_rate == 16000
        assert np.max(np.abs(back.samples - clip.samples)) < 1e-6

    def test_empty_clip(self, tmp_path):
        p = tmp_path / "e.wav"
        write_wav(AudioClip(np.zeros(0, dtype=np.float32), 16000), p)
        assert len(read_wav(p).samples) == 0

    def test_full_scale_exact(self, tmp_path):
        p = tmp_path / "one.wav"
        write_wav(AudioClip(np.array([1.0], dtype=np.float32), 16000), p)
        assert read_wav(p).samples[0] == 1.0

    def test_unwritable_path(self, tmp_path):
        clip = AudioClip(np.zeros(10, dtype=np.float32), 16000)
        with pytest.raises(OSError):
            write_wav(clip, tmp_path / "no" / "such" / "dir.wav")


class TestResample:
    def test_48k_to_16k_length(self):
        clip = AudioClip(np.zeros(48000, dtype=np.float32), 48000)
        out = resample(clip, 16000)
        assert len(out.samples) == 16000
        assert out.sample_rate == 16000

    def test_identity_rate(self):
        rng = np.random.default_rng(1)
        clip = AudioClip(rng.uniform(-1, 1, 777).astype(np.float32), 16000)
        out = resample(clip, 16000)
        np.testing.assert_array_equal(out.samples, clip.samples)

    def test_sine_against_direct_synthesis(self):
        """1 kHz sine resampled 48k->16k matches a 16 kHz synthesis of it."""
        t48 = np.arange(96000) / 48000.0
        clip = AudioClip(0.6 * np.sin(2 * np.pi * 1000 * t48), 48000)
        out = resample(clip, 16000)

        spec = np.abs(np.fft.rfft(out.samples * np.hanning(len(out.samples))))
        peak_hz = np.argmax(spec) * 16000 / len(out.samples)
        assert abs(peak_hz - 1000.0) < 1.0

        # amplitude within 1% of the directly synthesized tone, interior only
        t16 = np.arange(len(out.samples)) / 16000.0
        ref = 0.6 * np.sin(2 * np.pi * 1000 * t16)
        mid = slice(500, -500)
        amp = np.sqrt(np.mean(out.samples[mid] ** 2) / np.mean(ref[mid] ** 2))
        assert abs(amp - 1.0) < 0.01

    def test_upsample_tone_preserved(self):
        t16 = np.arange(16000) / 16000.0
        clip = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t16), 16000)
        out = resample(clip, 48000)
        spec = np.abs(np.fft.rfft(out.samples * np.hanning(len(out.samples))))
        peak_hz = np.argmax(spec) * 48000 / len(out.samples)
        assert abs(peak_hz - 440.0) < 1.0

    def test_bad_rate(self):
        clip = AudioClip(np.zeros(10, dtype=np.float32), 16000)
        with pytest.raises(ValueError):
            resample(clip, 0)

    @given(n=st.integers(100, 50000), rate_pair=st.sampled_from(
        [(48000, 16000), (16000, 48000), (44100, 16000), (16000, 8000)]))
    @settings(max_examples=25, deadline=None)
    def test_duration_preserved(self, n, rate_pair):
        """Duration in seconds changes by less than one sample period."""
        src, dst = rate_pair
        clip = AudioClip(np.zeros(n, dtype=np.float32), src)
        out = resample(clip, dst)
        assert abs(out.duration - clip.duration) <= 1.0 / dst + 1e-12


def test_normalize_peak():
    clip = AudioClip(np.array([0.1, -0.2, 0.05], dtype=np.float32), 16000)
    out = normalize_peak(clip)
    assert abs(np.max(np.abs(out.samples)) - 0.95) < 1e-6
    silent = normalize_peak(AudioClip(np.zeros(5, dtype=np.float32), 16000))
    assert np.all(silent.samples == 0.0)
