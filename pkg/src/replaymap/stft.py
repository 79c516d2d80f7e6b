"""Per-channel short-time Fourier transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import MultiChannelSegment

WINDOWS = ("hann", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters: power-of-two window length, hop, window shape."""

    n_fft: int = 1024
    hop: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.n_fft < 2 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise ValueError(f"n_fft must be a power of two >= 2, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ValueError(f"hop must satisfy 0 < hop <= n_fft, got {self.hop}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")

    def window_values(self) -> np.ndarray:
        if self.window == "hann":
            # Periodic Hann, the standard analysis window for STFT framing.
            n = np.arange(self.n_fft)
            return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.n_fft)
        return np.ones(self.n_fft)

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.n_fft:
            raise ValueError(
                f"segment of {n_samples} samples is shorter than one frame ({self.n_fft})"
            )
        return (n_samples - self.n_fft) // self.hop + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided STFT per channel: values (N, F, T) with F = n_fft/2 + 1."""

    values: np.ndarray
    freqs_hz: np.ndarray
    sample_rate: int
    config: StftConfig
    source_id: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        expected_f = self.config.n_fft // 2 + 1
        if vals.ndim != 3 or vals.shape[1] != expected_f:
            raise ValueError(f"values must have shape (N, {expected_f}, T), got {vals.shape}")
        freqs = np.asarray(self.freqs_hz, dtype=np.float64)
        if freqs.shape != (expected_f,):
            raise ValueError(f"freqs_hz must have shape ({expected_f},)")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "freqs_hz", freqs)

    @property
    def channel_count(self) -> int:
        return self.values.shape[0]

    @property
    def frame_count(self) -> int:
        return self.values.shape[2]


def stft(seg: MultiChannelSegment, config: StftConfig | None = None) -> ComplexSpectrogram:
    """Compute the windowed one-sided STFT of every channel.

    Frame ``t`` covers samples ``[t*hop, t*hop + n_fft)``; the trailing
    partial frame is dropped, so ``T = (n_samples - n_fft) // hop + 1``.
    Raises ValueError when the segment is shorter than one frame.
    """
    cfg = config or StftConfig()
    n_frames = cfg.frame_count(seg.n_samples)
    window = cfg.window_values()
    frames = np.lib.stride_tricks.sliding_window_view(seg.samples, cfg.n_fft, axis=1)
    frames = frames[:, :: cfg.hop, :][:, :n_frames, :]  # (N, T, n_fft)
    spectra = np.fft.rfft(frames * window, axis=2)  # (N, T, F)
    freqs = np.arange(cfg.n_fft // 2 + 1) * (seg.sample_rate / cfg.n_fft)
    return ComplexSpectrogram(
        values=np.ascontiguousarray(spectra.transpose(0, 2, 1)),
        freqs_hz=freqs,
        sample_rate=seg.sample_rate,
        config=cfg,
        source_id=seg.source_id,
    )
