"""Synthetic far-field plane-wave recordings with known direction of arrival.

Per-channel delays come from :func:`replaymap.geometry.propagation_delays`,
the same helper the steering vectors use, so the simulator and the
beamformers share one sign convention by construction.  Fractional delays
are applied as a frequency-domain phase ramp on a zero-padded buffer, which
is exact for bandlimited signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acoustic_map import AcousticMap, BandConfig, compute_acoustic_map
from .audio import MultiChannelSegment
from .beamforming import BeamformerKind, DelayAndSum
from .geometry import (
    AngularGrid,
    Direction,
    MicArrayGeometry,
    build_steering_field,
    builtin_geometry,
    default_grid,
    propagation_delays,
)
from .stft import StftConfig


@dataclass(frozen=True)
class Tone:
    f_hz: float


@dataclass(frozen=True)
class BandNoise:
    low_hz: float
    high_hz: float


@dataclass(frozen=True)
class SpeechLike:
    """Harmonic stack with 1/n amplitude rolloff and random phases."""

    f0_hz: float = 155.0


SourceSignal = Tone | BandNoise | SpeechLike


@dataclass(frozen=True)
class PlaneWaveSpec:
    direction: Direction
    signal: SourceSignal = Tone(1000.0)
    amplitude: float = 0.5
    snr_db: float | None = None  # None = noise-free
    duration_s: float = 1.0
    sample_rate: int = 44100
    edge_fade_s: float = 0.01  # raised-cosine ramps; 0 disables

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not 0 <= self.edge_fade_s <= self.duration_s / 2:
            raise ValueError("edge_fade_s must lie in [0, duration_s / 2]")
        if isinstance(self.signal, Tone) and not 0 < self.signal.f_hz < self.sample_rate / 2:
            raise ValueError(f"tone frequency must lie in (0, fs/2), got {self.signal.f_hz}")
        if isinstance(self.signal, BandNoise) and not 0 <= self.signal.low_hz < self.signal.high_hz:
            raise ValueError("band noise requires 0 <= low < high")


def _edge_fade(x: np.ndarray, spec: PlaneWaveSpec) -> np.ndarray:
    """Raised-cosine ramps at both ends; sharp edges would ring through the
    fractional-delay reconstruction and leak across frequency bins."""
    ramp_len = int(round(spec.edge_fade_s * spec.sample_rate))
    if ramp_len == 0:
        return x
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp_len) / ramp_len)
    out = x.copy()
    out[:ramp_len] *= ramp
    out[-ramp_len:] *= ramp[::-1]
    return out


def _source_samples(spec: PlaneWaveSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    fs = spec.sample_rate
    t = np.arange(n) / fs
    sig = spec.signal
    if isinstance(sig, Tone):
        return _edge_fade(spec.amplitude * np.cos(2.0 * np.pi * sig.f_hz * t), spec)
    if isinstance(sig, BandNoise):
        white = rng.standard_normal(n)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, 1.0 / fs)
        spectrum[(freqs < sig.low_hz) | (freqs > sig.high_hz)] = 0.0
        shaped = np.fft.irfft(spectrum, n)
        rms = np.sqrt(np.mean(shaped**2))
        if rms > 0:
            shaped = shaped * (spec.amplitude / (math.sqrt(2.0) * rms))
        return _edge_fade(shaped, spec)
    if isinstance(sig, SpeechLike):
        top = int((0.45 * fs) / sig.f0_hz)
        out = np.zeros(n)
        for harmonic in range(1, max(top, 1) + 1):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            out += np.cos(2.0 * np.pi * harmonic * sig.f0_hz * t + phase) / harmonic
        rms = np.sqrt(np.mean(out**2))
        return _edge_fade(out * (spec.amplitude / (math.sqrt(2.0) * rms)), spec)
    raise TypeError(f"unknown signal {sig!r}")


def simulate_plane_wave(
    geometry: MicArrayGeometry, spec: PlaneWaveSpec, rng=None
) -> MultiChannelSegment:
    """Render the source at each microphone with its far-field delay.

    Channel ``i`` is the source delayed by ``<p_i, u> / c`` (negative values
    advance), matching the steering-vector phase so a delay-and-sum map
    peaks at the simulated direction.  White noise is added per channel at
    ``snr_db`` relative to the mean channel power when requested.
    """
    rng = np.random.default_rng(rng)
    fs = spec.sample_rate
    n = int(round(spec.duration_s * fs))
    delays = propagation_delays(geometry, spec.direction)
    pad = int(math.ceil(np.abs(delays).max() * fs)) + 32
    buffer = np.zeros(n + 2 * pad)
    buffer[pad : pad + n] = _source_samples(spec, n, rng)
    spectrum = np.fft.rfft(buffer)
    freqs = np.fft.rfftfreq(buffer.size, 1.0 / fs)
    channels = np.empty((geometry.channel_count, n))
    for i, tau in enumerate(delays):
        shifted = np.fft.irfft(spectrum * np.exp(-2j * np.pi * freqs * tau), buffer.size)
        channels[i] = shifted[pad : pad + n]
    if spec.snr_db is not None:
        signal_power = np.mean(channels**2)
        noise_std = math.sqrt(signal_power) * 10.0 ** (-spec.snr_db / 20.0)
        channels = channels + rng.normal(0.0, noise_std, channels.shape)
    source_id = (
        f"sim:{type(spec.signal).__name__.lower()}"
        f":az{spec.direction.azimuth_deg:g}:el{spec.direction.elevation_deg:g}"
    )
    return MultiChannelSegment(samples=channels, sample_rate=fs, source_id=source_id)


SYNTHETIC_SAMPLE_RATE = 16000
SYNTHETIC_STFT = StftConfig(n_fft=512, hop=256, window="hann")
# Four narrow bands over the harmonic range keep per-map beamforming cheap.
SYNTHETIC_BANDS = BandConfig(
    edges_hz=((100.0, 700.0), (700.0, 1300.0), (1300.0, 1900.0), (1900.0, 2500.0))
)


def synthetic_direction(class_label: int, rng: np.random.Generator) -> Direction:
    """Random direction in the negative (class 0) or positive (class 1) azimuth hemisphere."""
    azimuth = rng.uniform(16.0, 64.0)
    if class_label == 0:
        azimuth = -azimuth
    return Direction(azimuth_deg=azimuth, elevation_deg=rng.uniform(-18.0, 18.0))


def make_synthetic_dataset(
    n_per_class: int,
    rng=None,
    *,
    geometry: MicArrayGeometry | None = None,
    grid: AngularGrid | None = None,
    kind: BeamformerKind = DelayAndSum(),
    duration_s: float = 0.25,
    snr_db: float = 20.0,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, list[AcousticMap]]:
    """Labeled acoustic maps whose peak hemisphere encodes the class.

    Class 0 sources sit at azimuth < 0, class 1 at azimuth > 0, run through
    the full pipeline (simulate -> stft -> beamform -> aggregate ->
    normalize).  Returns stacked map values (2n, K, A, E), integer labels,
    and the underlying :class:`AcousticMap` objects.
    """
    rng = np.random.default_rng(rng)
    geometry = geometry or builtin_geometry("hex-6")
    resolved_grid = grid or default_grid()
    all_freqs = np.arange(SYNTHETIC_STFT.n_fft // 2 + 1) * (
        SYNTHETIC_SAMPLE_RATE / SYNTHETIC_STFT.n_fft
    )
    in_band = np.concatenate(SYNTHETIC_BANDS.bin_indices(all_freqs))
    steering = build_steering_field(geometry, resolved_grid, all_freqs[in_band])
    values, labels, maps = [], [], []
    for index in range(2 * n_per_class):
        label = index % 2
        spec = PlaneWaveSpec(
            direction=synthetic_direction(label, rng),
            signal=SpeechLike(f0_hz=rng.uniform(120.0, 220.0)),
            snr_db=snr_db,
            duration_s=duration_s,
            sample_rate=SYNTHETIC_SAMPLE_RATE,
        )
        seg = simulate_plane_wave(geometry, spec, rng)
        acoustic = compute_acoustic_map(
            seg,
            geometry,
            grid=resolved_grid,
            stft_config=SYNTHETIC_STFT,
            kind=kind,
            bands=SYNTHETIC_BANDS,
            threads=threads,
            steering_field=steering,
        )
        values.append(acoustic.values)
        labels.append(label)
        maps.append(acoustic)
    return np.stack(values), np.asarray(labels, dtype=np.int64), maps
