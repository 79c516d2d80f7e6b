"""Multi-channel WAV reading/writing and segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

# Normalization divisors: integer samples are mapped to [-1, 1] by the type's
# maximum magnitude (|int16 min| = 32768, |int32 min| = 2**31).
_INT_SCALE = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2147483648.0}


@dataclass(frozen=True)
class MultiChannelSegment:
    """A block of synchronized audio, samples shaped (channels, n_samples)."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"samples must have shape (N, T) with N, T >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", data)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.sample_rate


def read_wav(path) -> MultiChannelSegment:
    """Read a PCM WAV file (16/32-bit int or 32-bit float) normalized to [-1, 1].

    Integer samples are divided by the type's maximum magnitude; float
    samples are passed through.  Raises ValueError for unsupported codecs or
    truncated files.
    """
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises assorted types for malformed RIFF
        raise ValueError(f"could not read WAV file {path}: {exc}") from exc
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype in _INT_SCALE:
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype in (np.dtype(np.float32), np.dtype(np.float64)):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype} in {path}")
    return MultiChannelSegment(samples=samples.T, sample_rate=int(rate), source_id=str(path))


def write_wav(path, segment: MultiChannelSegment, sample_format: str = "int16") -> None:
    """Write a segment as PCM WAV.

    ``sample_format`` is one of ``int16``, ``int32``, ``float32``.  Integer
    formats quantize with rounding and saturate at full scale, so a
    write/read round trip of data in [-1, 1] errs by at most 2**-15 (int16).
    """
    data = segment.samples.T
    if sample_format == "int16":
        out = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    elif sample_format == "int32":
        out = np.clip(np.round(data * 2147483648.0), -(2**31), 2**31 - 1).astype(np.int32)
    elif sample_format == "float32":
        out = data.astype(np.float32)
    else:
        raise ValueError(f"unsupported sample_format {sample_format!r}")
    wavfile.write(str(path), segment.sample_rate, out)


def segment(seg: MultiChannelSegment, max_seconds: float, min_samples: int = 1) -> list[MultiChannelSegment]:
    """Split into contiguous non-overlapping chunks of at most ``max_seconds``.

    The trailing partial chunk is kept only if it has at least
    ``min_samples`` samples (pass the STFT window length to drop tails too
    short to frame).
    """
    if max_seconds <= 0:
        raise ValueError(f"max_seconds must be positive, got {max_seconds}")
    chunk = max(1, int(round(max_seconds * seg.sample_rate)))
    pieces = []
    for index, start in enumerate(range(0, seg.n_samples, chunk)):
        block = seg.samples[:, start : start + chunk]
        if block.shape[1] < min_samples and start > 0:
            break
        pieces.append(
            MultiChannelSegment(
                samples=block,
                sample_rate=seg.sample_rate,
                source_id=f"{seg.source_id}#{index}" if seg.source_id else f"#{index}",
            )
        )
    return pieces
