import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _synth import dominant_frequency
from vocalfold.signal import (
    AudioClip,
    ClipTooShortError,
    EmptyAudioError,
    MultiChannelError,
    UnreadableAudioError,
    is_voiced,
    load_clip,
    read_manifest,
    resample_linear,
    segment_clip,
    write_wav,
    zero_crossing_rate,
)


def _write_raw(path, data: bytes, rate=8000, channels=1, width=2):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(data)


def test_load_one_second_16bit(tmp_path):
    p = tmp_path / "tone.wav"
    t = np.arange(8000) / 8000
    write_wav(p, 0.8 * np.sin(2 * np.pi * 200 * t), 8000)
    clip = load_clip(p, 8000)
    assert len(clip.samples) == 8000
    assert np.max(np.abs(clip.samples)) <= 1.0
    assert not clip.resampled


def test_load_8bit_is_centred(tmp_path):
    p = tmp_path / "u8.wav"
    _write_raw(p, bytes([128, 255, 0, 128]), width=1)
    clip = load_clip(p, 8000)
    np.testing.assert_allclose(clip.samples, [0.0, 127 / 128, -1.0, 0.0])


def test_all_zero_wav_is_accepted(tmp_path):
    p = tmp_path / "zero.wav"
    _write_raw(p, bytes(2 * 800))
    clip = load_clip(p, 8000)
    assert not np.any(clip.samples)


def test_load_errors_are_distinct(tmp_path):
    with pytest.raises(UnreadableAudioError):
        load_clip(tmp_path / "missing.wav")
    junk = tmp_path / "junk.wav"
    junk.write_bytes(b"not a wav file at all")
    with pytest.raises(UnreadableAudioError):
        load_clip(junk)
    stereo = tmp_path / "stereo.wav"
    _write_raw(stereo, bytes(4 * 100), channels=2)
    with pytest.raises(MultiChannelError):
        load_clip(stereo)
    empty = tmp_path / "empty.wav"
    _write_raw(empty, b"")
    with pytest.raises(EmptyAudioError):
        load_clip(empty)


def test_resample_16k_to_8k(tmp_path):
    p = tmp_path / "hi.wav"
    t = np.arange(16000) / 16000
    write_wav(p, 0.5 * np.sin(2 * np.pi * 440 * t), 16000)
    clip = load_clip(p, 8000)
    assert clip.resampled
    assert len(clip.samples) == 8000
    assert abs(dominant_frequency(clip.samples, 8000) - 440) < 0.01 * 440


@settings(max_examples=30, deadline=None)
@given(f=st.floats(50, 1900), src=st.sampled_from([11025, 16000, 22050, 44100]))
def test_resampling_preserves_tone_frequency(f, src):
    t = np.arange(src // 2) / src
    y = resample_linear(np.sin(2 * np.pi * f * t), src, 8000)
    assert abs(dominant_frequency(y, 8000) - f) < 0.01 * f


def _clip(n, rate=8000.0):
    return AudioClip(np.sin(np.arange(n) * 0.1), rate)


def test_segment_counts():
    segs = segment_clip(_clip(8000), 0.05, 0.025)
    assert len(segs) == 39
    assert all(len(s.samples) == 400 for s in segs)
    assert [s.start_index for s in segs[:3]] == [0, 200, 400]
    assert len(segment_clip(_clip(400))) == 1
    with pytest.raises(ClipTooShortError):
        segment_clip(_clip(399))
    with pytest.raises(ValueError):
        segment_clip(_clip(800), 0.025, 0.05)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(400, 5000), win=st.integers(20, 400), hop_frac=st.floats(0.1, 0.95))
def test_segmentation_count_and_reconstruction(n, win, hop_frac):
    hop = max(1, min(win - 1, int(win * hop_frac)))
    rate = 8000.0
    x = np.random.default_rng(n).standard_normal(n)
    clip = AudioClip(x, rate)
    segs = segment_clip(clip, win / rate, hop / rate)
    assert len(segs) == (n - win) // hop + 1
    for a, b in zip(segs, segs[1:]):
        assert b.start_index - a.start_index == hop
    for s in segs:
        assert abs(s.duration_s - win / rate) <= 1 / rate
        np.testing.assert_array_equal(s.samples, x[s.start_index : s.start_index + win])
    # stitching the hop-length heads plus the final window rebuilds the covered region
    rebuilt = np.concatenate([s.samples[:hop] for s in segs[:-1]] + [segs[-1].samples])
    np.testing.assert_array_equal(rebuilt, x[: segs[-1].start_index + win])


def test_voicing_gate():
    rate = 8000
    zero = segment_clip(AudioClip(np.zeros(800), rate))[0]
    assert not is_voiced(zero)

    # 100 Hz sine: RMS equals the clip RMS, and ZCR is 2 crossings per 80 samples
    t = np.arange(800) / rate
    sine = AudioClip(np.sin(2 * np.pi * 100 * t + 0.3), rate)
    seg = segment_clip(sine)[0]
    assert zero_crossing_rate(seg.samples) == pytest.approx(10 / 399, abs=1 / 399)
    assert is_voiced(seg, 0.1, 0.3)

    noise = AudioClip(np.random.default_rng(0).standard_normal(800), rate)
    nseg = segment_clip(noise)[0]
    assert abs(zero_crossing_rate(nseg.samples) - 0.5) < 0.06
    assert not is_voiced(nseg, 0.1, 0.3)


def test_quiet_segment_fails_energy_floor():
    rate = 8000
    x = np.concatenate([np.sin(np.arange(1200) * 0.1), 0.01 * np.sin(np.arange(400) * 0.1)])
    segs = segment_clip(AudioClip(x, rate))
    assert is_voiced(segs[0])
    assert not is_voiced(segs[-1])


def test_manifest(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("path,speaker_id,label,vowel\nclips/a.wav,s1,positive,/i/\n/abs/b.wav, s2 ,0,o\n")
    recs = read_manifest(m)
    assert recs[0].path == str(tmp_path / "clips" / "a.wav")
    assert (recs[0].speaker_id, recs[0].label, recs[0].vowel) == ("s1", 1, "i")
    assert (recs[1].path, recs[1].speaker_id, recs[1].label, recs[1].vowel) == ("/abs/b.wav", "s2", 0, "other")
    bad = tmp_path / "bad.csv"
    bad.write_text("path,speaker\nx,y\n")
    with pytest.raises(ValueError):
        read_manifest(bad)
