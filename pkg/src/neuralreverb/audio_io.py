"""Audio file I/O and dataset handling.

Reads/writes RIFF WAV (PCM16, PCM24, float32), applies the dataset
conventions (peak normalization, linear fade-out) and builds seeded
train/validation/test splits from paired dry/wet clips.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UnsupportedFormatError, WavParseError

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform at a fixed sample rate, amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("AudioClip requires a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ClipPair:
    """One dry/wet example with its split assignment."""

    dry: AudioClip
    wet: AudioClip
    id: str
    split: str = "train"

    def __post_init__(self):
        if len(self.dry) != len(self.wet):
            raise DataError(f"pair {self.id!r}: dry/wet length mismatch")
        if self.dry.sample_rate != self.wet.sample_rate:
            raise DataError(f"pair {self.id!r}: dry/wet sample rate mismatch")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class PairedDataset:
    """Immutable collection of dry/wet pairs with split labels."""

    pairs: tuple

    def __post_init__(self):
        ids = [p.id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise DataError("pair ids must be unique")

    def subset(self, split: str) -> tuple:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return tuple(p for p in self.pairs if p.split == split)

    def __len__(self):
        return len(self.pairs)


# --- WAV container -------------------------------------------------------

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE

BIT_DEPTHS = ("pcm16", "pcm24", "float32")


def load_wav(path) -> AudioClip:
    """Read a WAV file, average channels to mono, scale to [-1, 1].

    Supports PCM 16/24-bit and IEEE float32. Raises WavParseError on a
    malformed container and UnsupportedFormatError on other codecs.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavParseError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavParseError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or len(fmt) < 16:
        raise WavParseError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavParseError(f"{path}: missing data chunk")

    code, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if code == _FMT_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavParseError(f"{path}: short extensible fmt chunk")
        (code,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1 or rate <= 0:
        raise WavParseError(f"{path}: bad channel count or sample rate")

    if code == _FMT_PCM and bits == 16:
        raw = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif code == _FMT_PCM and bits == 24:
        usable = len(data) - len(data) % 3
        b = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        val = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        val -= (val & 0x800000) << 1  # sign-extend
        samples = val.astype(np.float64) / 8388608.0
    elif code == _FMT_FLOAT and bits == 32:
        raw = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: format code {code}, {bits}-bit not supported")

    frames = samples.size // channels
    if frames == 0:
        raise WavParseError(f"{path}: empty data chunk")
    samples = samples[: frames * channels].reshape(frames, channels).mean(axis=1)
    return AudioClip(samples, rate)


def save_wav(clip: AudioClip, path, bit_depth: str = "pcm16") -> int:
    """Write a mono WAV file.

    Integer depths clamp samples to [-1, 1]; returns the number of
    clamped samples (0 when nothing was out of range).
    """
    if bit_depth not in BIT_DEPTHS:
        raise ValueError(f"bit_depth must be one of {BIT_DEPTHS}")
    x = clip.samples
    clipped = 0
    if bit_depth == "pcm16":
        clipped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
        ints = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
        code, bits = _FMT_PCM, 16
    elif bit_depth == "pcm24":
        clipped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
        ints = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype(np.int32)
        u = ints.astype(np.uint32) & 0xFFFFFF
        b = np.empty((u.size, 3), dtype=np.uint8)
        b[:, 0] = u & 0xFF
        b[:, 1] = (u >> 8) & 0xFF
        b[:, 2] = (u >> 16) & 0xFF
        payload = b.tobytes()
        code, bits = _FMT_PCM, 24
    else:
        payload = x.astype("<f4").tobytes()
        code, bits = _FMT_FLOAT, 32

    block = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        code,
        1,
        clip.sample_rate,
        clip.sample_rate * block,
        block,
        bits,
        b"data",
        len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if len(payload) & 1:
            fh.write(b"\x00")
    return clipped


# --- dataset conventions --------------------------------------------------


def normalize_amplitude(clip: AudioClip) -> AudioClip:
    """Scale so the peak absolute sample is exactly 1.0 (per file)."""
    peak = float(np.max(np.abs(clip.samples)))
    if peak == 0.0:
        raise ValueError("cannot normalize an all-zero clip")
    return AudioClip(clip.samples / peak, clip.sample_rate)


def apply_fadeout(clip: AudioClip, duration_s: float = 0.5) -> AudioClip:
    """Multiply the last `duration_s` seconds by a linear ramp ending at 0.

    With N fade samples the ramp is 1-(k+1)/N, so the final sample is
    exactly zero. duration_s=0 is the identity.
    """
    n = int(round(duration_s * clip.sample_rate))
    if n < 0 or n > len(clip):
        raise ValueError("fade duration exceeds clip length")
    if n == 0:
        return clip
    out = clip.samples.copy()
    ramp = 1.0 - (np.arange(1, n + 1, dtype=np.float64) / n)
    out[-n:] *= ramp
    return AudioClip(out, clip.sample_rate)


def split_dataset(pairs, val_frac: float = 0.05, test_frac: float = 0.05, seed: int = 0) -> PairedDataset:
    """Assign pairs to train/validation/test splits, deterministically per seed.

    Held-out counts are round-half-up of frac*N with a minimum of one pair
    per split (624 pairs at 5%/5% hold out 31 validation and 31 test).
    """
    for frac in (val_frac, test_frac):
        if not 0.0 < frac < 1.0:
            raise ValueError("split fractions must lie in (0, 1)")
    if val_frac + test_frac >= 1.0:
        raise ValueError("val_frac + test_frac must be < 1")
    n = len(pairs)
    if n < 3:
        raise ValueError("need at least 3 pairs to form three splits")

    n_val = max(1, int(np.floor(val_frac * n + 0.5)))
    n_test = max(1, int(np.floor(test_frac * n + 0.5)))
    if n - n_val - n_test < 1:
        raise ValueError("split fractions leave no training pairs")

    order = np.random.default_rng(seed).permutation(n)
    assignment = {}
    for rank, idx in enumerate(order):
        if rank < n_val:
            assignment[idx] = "validation"
        elif rank < n_val + n_test:
            assignment[idx] = "test"
        else:
            assignment[idx] = "train"

    labeled = tuple(
        ClipPair(p.dry, p.wet, p.id, assignment[i]) for i, p in enumerate(pairs)
    )
    return PairedDataset(labeled)


# --- manifest -------------------------------------------------------------


def read_manifest(path):
    """Parse a manifest of `dry_path<TAB>wet_path<TAB>id` lines."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected dry<TAB>wet<TAB>id")
            entries.append(tuple(parts))
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return entries


def load_manifest(path, expected_sample_rate: int | None = None):
    """Load every pair named in a manifest as unlabeled ClipPairs."""
    pairs = []
    for dry_path, wet_path, pair_id in read_manifest(path):
        dry = load_wav(dry_path)
        wet = load_wav(wet_path)
        if expected_sample_rate is not None:
            for clip, p in ((dry, dry_path), (wet, wet_path)):
                if clip.sample_rate != expected_sample_rate:
                    raise DataError(
                        f"{p}: sample rate {clip.sample_rate} != required "
                        f"{expected_sample_rate} (resample offline)"
                    )
        pairs.append(ClipPair(dry, wet, pair_id))
    return pairs
