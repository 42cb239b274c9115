import wave

import numpy as np
import pytest

from psyhide.audio_io import AudioFormatError, AudioSignal, read_wav, to_pcm16, write_wav


def _write_raw(path, data, channels=1, width=2, rate=16000):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(data).tobytes())


def test_zeros_file(tmp_path):
    p = tmp_path / "z.wav"
    _write_raw(p, np.zeros(16000, dtype="<i2"))
    sig = read_wav(p)
    assert len(sig) == 16000 and sig.sample_rate_hz == 16000
    assert not sig.samples.any()


def test_full_scale_sample(tmp_path):
    p = tmp_path / "m.wav"
    _write_raw(p, np.array([32767, -32768], dtype="<i2"))
    assert read_wav(p).samples.tolist() == [32767 / 32768, -1.0]


def test_stereo_average(tmp_path):
    p = tmp_path / "s.wav"
    _write_raw(p, np.array([16384, -16384, 8192, 8192], dtype="<i2"), channels=2)
    assert read_wav(p).samples.tolist() == [0.0, 0.25]


def test_downmix_linear(tmp_path):
    rng = np.random.default_rng(1)
    lr = rng.integers(-8000, 8000, size=(50, 2)).astype("<i2")
    _write_raw(tmp_path / "a.wav", lr, channels=2)
    _write_raw(tmp_path / "b.wav", (lr * 2).astype("<i2"), channels=2)
    assert np.array_equal(read_wav(tmp_path / "b.wav").samples, 2 * read_wav(tmp_path / "a.wav").samples)


def test_round_trip_within_one_lsb(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, 4000)
    p = tmp_path / "r.wav"
    assert write_wav(AudioSignal(x), p) == 0
    assert np.max(np.abs(read_wav(p).samples - x)) <= 1 / 32768


def test_clipping_counted():
    pcm, clipped = to_pcm16([1.5, -2.0, 0.0])
    assert pcm.tolist() == [32767, -32768, 0]
    assert clipped == 2


def test_write_clips_with_warning(tmp_path, caplog):
    p = tmp_path / "c.wav"
    assert write_wav(AudioSignal([1.5, 0.0]), p) == 1
    assert read_wav(p).samples[0] == 32767 / 32768
    assert "clipped" in caplog.text


def test_empty_signal_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_wav(AudioSignal([]), tmp_path / "e.wav")


def test_wrong_rate_rejected(tmp_path):
    p = tmp_path / "r.wav"
    _write_raw(p, np.zeros(10, dtype="<i2"), rate=8000)
    with pytest.raises(AudioFormatError):
        read_wav(p)


def test_eight_bit_rejected(tmp_path):
    p = tmp_path / "b.wav"
    _write_raw(p, np.zeros(10, dtype=np.uint8), width=1)
    with pytest.raises(AudioFormatError):
        read_wav(p)


def test_truncated_file(tmp_path):
    p = tmp_path / "t.wav"
    _write_raw(p, np.zeros(1000, dtype="<i2"))
    p.write_bytes(p.read_bytes()[:-500])
    with pytest.raises(OSError):
        read_wav(p)


def test_not_a_wav(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"hello world, definitely not RIFF")
    with pytest.raises(AudioFormatError):
        read_wav(p)


def test_signal_immutable_and_finite():
    sig = AudioSignal([0.1, 0.2])
    with pytest.raises(ValueError):
        sig.samples[0] = 1.0
    with pytest.raises(ValueError):
        AudioSignal([np.nan])
