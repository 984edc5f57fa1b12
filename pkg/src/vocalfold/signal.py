"""Audio ingest, voicing gate and fixed-length overlapping segmentation."""
from __future__ import annotations

import csv
import math
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

VOWELS = ("a", "i", "u", "other")


class AudioError(Exception):
    """Base class for ingest failures."""


class UnreadableAudioError(AudioError):
    pass


class MultiChannelError(AudioError):
    pass


class EmptyAudioError(AudioError):
    pass


class ClipTooShortError(AudioError):
    pass


def parse_label(value) -> int | None:
    if value is None:
        return None
    if isinstance(value, (int, np.integer)) and value in (0, 1):
        return int(value)
    v = str(value).strip().lower()
    if v in ("", "none", "unknown"):
        return None
    if v in ("1", "pos", "positive", "true"):
        return 1
    if v in ("0", "neg", "negative", "false"):
        return 0
    raise ValueError(f"unrecognised label {value!r}")


def parse_vowel(value) -> str:
    v = (value or "other").strip().lower().strip("/")
    return v if v in VOWELS else "other"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: float
    speaker_id: str = ""
    label: int | None = None
    vowel: str = "other"
    resampled: bool = False
    path: str = ""

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if len(self.samples) == 0:
            raise EmptyAudioError("clip has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("clip contains non-finite samples")
        if self.vowel not in VOWELS:
            raise ValueError(f"vowel must be one of {VOWELS}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples))))

    def meta(self) -> "ClipMeta":
        return ClipMeta(self.path, self.speaker_id, self.label, self.vowel, self.sample_rate, self.rms)


class ClipMeta(NamedTuple):
    path: str
    speaker_id: str
    label: int | None
    vowel: str
    sample_rate: float
    rms: float


@dataclass(frozen=True)
class Segment:
    samples: np.ndarray
    start_index: int
    duration_s: float
    source: ClipMeta
    index: int = 0

    @property
    def sample_rate(self) -> float:
        return self.source.sample_rate


def resample_linear(x: np.ndarray, src_rate: float, dst_rate: float) -> np.ndarray:
    """Linear-interpolation resampling; output never extrapolates past the last input sample."""
    n = len(x)
    n_out = int(math.floor((n - 1) * dst_rate / src_rate + 1e-9)) + 1
    t = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(t, np.arange(n), x)


def load_clip(path, expected_rate: float = 8000.0, speaker_id: str = "", label=None, vowel: str = "other") -> AudioClip:
    """Read a mono 8- or 16-bit PCM WAV file, scaled to [-1, 1].

    Input at any other rate is resampled to ``expected_rate`` and the clip is
    flagged ``resampled``.
    """
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (OSError, EOFError, wave.Error) as exc:
        raise UnreadableAudioError(f"{path}: {exc}") from exc
    if channels != 1:
        raise MultiChannelError(f"{path}: expected mono audio, found {channels} channels")
    if width == 1:
        x = (np.frombuffer(raw, dtype=np.uint8).astype(float) - 128.0) / 128.0
    elif width == 2:
        x = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    else:
        raise UnreadableAudioError(f"{path}: unsupported sample width {8 * width} bits")
    if x.size == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    resampled = False
    if rate != expected_rate:
        x = resample_linear(x, rate, expected_rate)
        resampled = True
    return AudioClip(x, float(expected_rate), speaker_id, parse_label(label), parse_vowel(vowel), resampled, str(path))


def write_wav(path, samples, sample_rate: int) -> None:
    """Write mono 16-bit PCM; samples are clipped to [-1, 1]."""
    pcm = np.round(np.clip(np.asarray(samples, float), -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())


def segment_clip(clip: AudioClip, win_s: float = 0.05, hop_s: float = 0.025) -> list[Segment]:
    """Cut a clip into windows of ``win_s`` seconds every ``hop_s`` seconds.

    A trailing stretch too short to fill a window is dropped.
    """
    if not win_s > hop_s > 0:
        raise ValueError("need win_s > hop_s > 0")
    W = int(round(win_s * clip.sample_rate))
    H = int(round(hop_s * clip.sample_rate))
    n = len(clip.samples)
    if n < W:
        raise ClipTooShortError(f"clip of {n} samples is shorter than one {W}-sample window")
    meta = clip.meta()
    count = (n - W) // H + 1
    return [
        Segment(clip.samples[i * H : i * H + W], i * H, W / clip.sample_rate, meta, i)
        for i in range(count)
    ]


def zero_crossing_rate(x: np.ndarray) -> float:
    """Fraction of adjacent sample pairs whose signs differ."""
    if len(x) < 2:
        return 0.0
    s = np.signbit(x)
    return float(np.count_nonzero(s[1:] != s[:-1]) / (len(x) - 1))


def is_voiced(seg: Segment, energy_floor: float = 0.1, zcr_ceiling: float = 0.3) -> bool:
    """RMS at least ``energy_floor`` times the clip RMS, and ZCR at most ``zcr_ceiling``."""
    rms = float(np.sqrt(np.mean(np.square(seg.samples))))
    if rms == 0.0:
        return False
    return rms >= energy_floor * seg.source.rms and zero_crossing_rate(seg.samples) <= zcr_ceiling


class ManifestRecord(NamedTuple):
    path: str
    speaker_id: str
    label: int | None
    vowel: str


def read_manifest(path) -> list[ManifestRecord]:
    """Parse a ``path,speaker_id,label,vowel`` CSV; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        missing = {"path", "speaker_id", "label", "vowel"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest header lacks {sorted(missing)}")
        out = []
        for row in reader:
            p = Path(row["path"].strip())
            if not p.is_absolute():
                p = base / p
            out.append(ManifestRecord(str(p), row["speaker_id"].strip(), parse_label(row["label"]), parse_vowel(row["vowel"])))
    return out
