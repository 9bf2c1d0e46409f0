"""Deterministic signal-processing primitives.

Framing with neighbor context, hann-windowed overlap-add synthesis,
pre-emphasis, log power spectra and a velvet-noise impulse-response
generator (the latter used to synthesize known reverberant targets in
tests). Everything here is plain numpy; the differentiable variants of
pre-emphasis and the log spectrum live in the training loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

SPECTRAL_FLOOR = 1e-10


@dataclass(frozen=True)
class FrameStack:
    """A frame plus its +-k neighbors: rows oldest to newest, row k is current."""

    frames: np.ndarray  # [2k+1, frame_size]
    center_index: int
    hop: int

    @property
    def k(self) -> int:
        return self.frames.shape[0] // 2

    @property
    def center(self) -> np.ndarray:
        return self.frames[self.k]


def _as_samples(signal) -> np.ndarray:
    samples = getattr(signal, "samples", signal)
    return np.asarray(samples, dtype=np.float64)


def frame_signal(signal, frame_size: int = 4096, hop: int = 2048) -> np.ndarray:
    """Slice a signal into half-overlapping frames, zero-padding the tail.

    Frame i covers samples [i*hop, i*hop + frame_size); the frame count is
    ceil(len/hop) so every sample is covered. Returns [n_frames, frame_size].
    """
    x = _as_samples(signal)
    if x.size == 0:
        raise ValueError("cannot frame an empty signal")
    if frame_size % 2 != 0:
        raise ValueError("frame_size must be even")
    if hop != frame_size // 2:
        raise ValueError("hop must be frame_size/2")
    count = -(-x.size // hop)
    frames = np.zeros((count, frame_size), dtype=np.float64)
    for i in range(count):
        chunk = x[i * hop : i * hop + frame_size]
        frames[i, : chunk.size] = chunk
    return frames


def make_context(frames: np.ndarray, i: int, k: int = 4) -> FrameStack:
    """Gather frames[i-k .. i+k] into a stack, zero rows where out of range."""
    frames = np.asarray(frames, dtype=np.float64)
    n, size = frames.shape
    if not 0 <= i < n:
        raise ValueError(f"frame index {i} out of range [0, {n})")
    stack = np.zeros((2 * k + 1, size), dtype=np.float64)
    for j in range(2 * k + 1):
        src = i - k + j
        if 0 <= src < n:
            stack[j] = frames[src]
    return FrameStack(stack, i, size // 2)


def stack_all(frames: np.ndarray, k: int = 4) -> np.ndarray:
    """Context stacks for every frame at once: [n_frames, 2k+1, frame_size]."""
    frames = np.asarray(frames, dtype=np.float64)
    n, size = frames.shape
    padded = np.zeros((n + 2 * k, size), dtype=np.float64)
    padded[k : k + n] = frames
    return np.stack([padded[i : i + 2 * k + 1] for i in range(n)])


def periodic_hann(n: int) -> np.ndarray:
    """DFT-even hann window; overlap sum at 50% hop is constant."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Hann-window frames, accumulate at hop offsets, divide by the COLA gain.

    Inverts frame_signal on interior samples (the first and last hop-length
    regions see partial overlap and are excluded from that guarantee).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ShapeError("frames must be a 2-D [n_frames, frame_size] array")
    n, size = frames.shape
    if hop != size // 2:
        raise ValueError("hop must be frame_size/2")
    window = periodic_hann(size)
    gain = window.sum() / hop
    out = np.zeros((n - 1) * hop + size, dtype=np.float64)
    for i in range(n):
        out[i * hop : i * hop + size] += frames[i] * window
    return out / gain


def pre_emphasis(signal: np.ndarray, coeff: float = 0.95) -> np.ndarray:
    """First-order high-pass weighting: y[0]=x[0], y[n]=x[n]-coeff*x[n-1]."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("signal must be non-empty")
    y = x.copy()
    y[..., 1:] = x[..., 1:] - coeff * x[..., :-1]
    return y


def log_power_spectrum(frame: np.ndarray, eps: float = SPECTRAL_FLOOR) -> np.ndarray:
    """log(|FFT|^2 + eps) over the len/2+1 non-redundant bins."""
    x = np.asarray(frame, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("frame contains non-finite values")
    spectrum = np.fft.rfft(x, axis=-1)
    return np.log(spectrum.real**2 + spectrum.imag**2 + eps)


def velvet_noise_ir(
    length_samples: int,
    density_per_s: int = 2000,
    sample_rate: int = 16000,
    seed: int = 0,
) -> np.ndarray:
    """Sparse pseudo-random impulse response: one +-1 pulse per grid interval.

    The grid is sample_rate/density samples wide; pulse position within each
    interval and pulse sign are uniform, deterministic per seed.
    """
    if sample_rate % density_per_s != 0:
        raise ValueError("sample_rate must be a multiple of density_per_s")
    grid = sample_rate // density_per_s
    if length_samples <= 0 or length_samples % grid != 0:
        raise ValueError(f"length must be a positive multiple of the {grid}-sample grid")
    n_pulses = length_samples // grid
    rng = np.random.default_rng(seed)
    positions = np.arange(n_pulses) * grid + rng.integers(0, grid, size=n_pulses)
    signs = rng.integers(0, 2, size=n_pulses) * 2 - 1
    ir = np.zeros(length_samples, dtype=np.float64)
    ir[positions] = signs
    return ir
