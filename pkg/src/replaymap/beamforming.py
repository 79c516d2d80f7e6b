"""Narrowband directional pseudo-power under DAS, MVDR, and SRP-PHAT.

All three processors scan a steering field over the angular grid and emit a
nonnegative power value per (frequency, frame, azimuth, elevation).  The
delay-and-sum response is ``|a^H X|^2``; MVDR is the Capon spectrum
``1 / (a^H R^-1 a)`` with one diagonally loaded covariance per (segment,
frequency); SRP-PHAT applies ``|a^H (X / (|X| + eps))|^2``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericsError
from .geometry import AngularGrid, SteeringField
from .stft import ComplexSpectrogram

DEFAULT_DIAG_LOAD_REL = 1e-3
DEFAULT_PHAT_EPS_REL = 1e-8
_CHUNK_BINS = 64  # fixed work unit so thread count cannot change results


@dataclass(frozen=True)
class DelayAndSum:
    pass


@dataclass(frozen=True)
class Mvdr:
    diag_load_rel: float = DEFAULT_DIAG_LOAD_REL

    def __post_init__(self):
        if not self.diag_load_rel > 0:
            raise ValueError(f"diag_load_rel must be > 0, got {self.diag_load_rel}")


@dataclass(frozen=True)
class SrpPhat:
    """PHAT weighting; ``eps=None`` selects 1e-8 x the per-frame peak magnitude."""

    eps: float | None = None

    def __post_init__(self):
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"eps must be > 0 when given, got {self.eps}")


BeamformerKind = DelayAndSum | Mvdr | SrpPhat


def beamformer_from_name(
    name: str,
    diag_load_rel: float = DEFAULT_DIAG_LOAD_REL,
    phat_eps: float | None = None,
) -> BeamformerKind:
    if name == "das":
        return DelayAndSum()
    if name == "mvdr":
        return Mvdr(diag_load_rel=diag_load_rel)
    if name == "srp-phat":
        return SrpPhat(eps=phat_eps)
    raise ValueError(f"unknown beamformer {name!r}; expected das, mvdr, or srp-phat")


def beamformer_name(kind: BeamformerKind) -> str:
    return {DelayAndSum: "das", Mvdr: "mvdr", SrpPhat: "srp-phat"}[type(kind)]


@dataclass(frozen=True)
class NarrowbandPowerField:
    """Directional power per (frequency, frame, azimuth, elevation)."""

    values: np.ndarray  # (F, T, A, E), nonnegative
    freqs_hz: np.ndarray
    grid: AngularGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        freqs = np.asarray(self.freqs_hz, dtype=np.float64)
        a, e = self.grid.shape
        if vals.ndim != 4 or vals.shape[0] != freqs.size or vals.shape[2:] != (a, e):
            raise ValueError(f"values must have shape (F, T, {a}, {e}), got {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("power values must be finite and nonnegative")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "freqs_hz", freqs)


def _select_bins(x: ComplexSpectrogram, field: SteeringField) -> np.ndarray:
    """Indices of the field's frequencies inside the spectrogram's bin axis."""
    if field.geometry.channel_count != x.channel_count:
        raise ValueError(
            f"channel mismatch: steering field has {field.geometry.channel_count}, "
            f"spectrogram has {x.channel_count}"
        )
    idx = np.searchsorted(x.freqs_hz, field.freqs_hz)
    if np.any(idx >= x.freqs_hz.size) or not np.array_equal(x.freqs_hz[idx], field.freqs_hz):
        raise ValueError("steering field frequencies are not bins of the spectrogram")
    return idx


def _chunks(n: int) -> list[slice]:
    return [slice(s, min(s + _CHUNK_BINS, n)) for s in range(0, n, _CHUNK_BINS)]


def _run_chunked(fn, n_bins: int, threads: int) -> list[np.ndarray]:
    """Apply ``fn`` to fixed frequency chunks, optionally across threads.

    The chunk grid is independent of the thread count, so parallel and
    serial runs produce bitwise-identical results.
    """
    chunks = _chunks(n_bins)
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def steered_power(field_chunk: np.ndarray, spec_chunk: np.ndarray) -> np.ndarray:
    """|a^H X|^2 for every grid point: (Fc,A,E,N) x (N,Fc,T) -> (Fc,T,A,E)."""
    fc, a, e, n = field_chunk.shape
    weights = field_chunk.conj().reshape(fc, a * e, n)
    y = weights @ spec_chunk.transpose(1, 0, 2)  # (Fc, A*E, T)
    power = y.real**2 + y.imag**2
    return power.reshape(fc, a, e, -1).transpose(0, 3, 1, 2)


def das_power(
    x: ComplexSpectrogram, field: SteeringField, threads: int = 1
) -> NarrowbandPowerField:
    """Delay-and-sum pseudo-power ``|a(f,d)^H X(f,t)|^2`` over the grid."""
    idx = _select_bins(x, field)
    parts = _run_chunked(
        lambda c: steered_power(field.values[c], x.values[:, idx[c], :]),
        idx.size,
        threads,
    )
    return NarrowbandPowerField(
        values=np.concatenate(parts, axis=0), freqs_hz=field.freqs_hz, grid=field.grid
    )


def phat_normalize(values: np.ndarray, eps: float | None) -> np.ndarray:
    """Whiten spectrogram magnitudes: ``X / (|X| + eps)``.

    With ``eps=None`` each frame uses 1e-8 x its own peak magnitude across
    channels and bins.  All-zero entries stay zero.
    """
    mag = np.abs(values)
    if eps is None:
        eps_t = DEFAULT_PHAT_EPS_REL * mag.max(axis=(0, 1), keepdims=True)
    else:
        eps_t = np.full((1, 1, values.shape[2]), float(eps))
    denom = mag + eps_t
    out = np.zeros_like(values)
    np.divide(values, denom, out=out, where=denom > 0)
    return out


def srp_phat_power(
    x: ComplexSpectrogram,
    field: SteeringField,
    eps: float | None = None,
    threads: int = 1,
) -> NarrowbandPowerField:
    """Steered response power with phase transform weighting."""
    idx = _select_bins(x, field)
    whitened = phat_normalize(x.values, eps)
    parts = _run_chunked(
        lambda c: steered_power(field.values[c], whitened[:, idx[c], :]),
        idx.size,
        threads,
    )
    return NarrowbandPowerField(
        values=np.concatenate(parts, axis=0), freqs_hz=field.freqs_hz, grid=field.grid
    )


def covariance_from_snapshots(snapshots: np.ndarray, diag_load_rel: float) -> np.ndarray:
    """Diagonally loaded sample covariance of (N, T) snapshots.

    ``R = (1/T) sum_t x x^H + delta I`` with ``delta = diag_load_rel *
    trace(R0) / N``.  The unloaded estimate is symmetrized so the result is
    exactly Hermitian.
    """
    n, t = snapshots.shape
    r0 = snapshots @ snapshots.conj().T / t
    r0 = (r0 + r0.conj().T) / 2
    delta = diag_load_rel * np.trace(r0).real / n
    return r0 + delta * np.eye(n)


def estimate_covariance(
    x: ComplexSpectrogram, bin_index: int, diag_load_rel: float = DEFAULT_DIAG_LOAD_REL
) -> np.ndarray:
    """Loaded spatial covariance of one frequency bin across all frames."""
    return covariance_from_snapshots(x.values[:, bin_index, :], diag_load_rel)


def mvdr_weights(covariance: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """Distortionless weights ``R^-1 a / (a^H R^-1 a)`` for one direction."""
    ra = np.linalg.solve(covariance, steering)
    return ra / (steering.conj() @ ra)


def capon_spectrum(covariance: np.ndarray, field_f: np.ndarray) -> np.ndarray:
    """1 / (a^H R^-1 a) for every grid point of one frequency, shape (A, E)."""
    a, e, n = field_f.shape
    try:
        chol = np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"covariance is not positive definite despite loading: {exc}") from exc
    cols = field_f.reshape(a * e, n).T  # steering vectors as columns
    y = solve_triangular(chol, cols, lower=True)
    quad = (y.real**2 + y.imag**2).sum(axis=0)  # a^H R^-1 a, real by construction
    return (1.0 / quad).reshape(a, e)


def mvdr_power(
    x: ComplexSpectrogram,
    field: SteeringField,
    diag_load_rel: float = DEFAULT_DIAG_LOAD_REL,
    threads: int = 1,
) -> NarrowbandPowerField:
    """Capon spectrum per frequency, one covariance per (segment, frequency).

    Values are constant across frames within the segment and are broadcast
    over the frame axis to keep a single tensor layout for all processors.
    """
    idx = _select_bins(x, field)
    n_frames = x.frame_count

    def run(chunk: slice) -> np.ndarray:
        out = np.empty((idx[chunk].size, n_frames) + field.grid.shape)
        for row, bin_index in enumerate(idx[chunk]):
            cov = covariance_from_snapshots(x.values[:, bin_index, :], diag_load_rel)
            out[row] = capon_spectrum(cov, field.values[chunk][row])[None]
        return out

    parts = _run_chunked(run, idx.size, threads)
    return NarrowbandPowerField(
        values=np.concatenate(parts, axis=0), freqs_hz=field.freqs_hz, grid=field.grid
    )


def power_field(
    x: ComplexSpectrogram,
    field: SteeringField,
    kind: BeamformerKind,
    threads: int = 1,
) -> NarrowbandPowerField:
    """Dispatch to the processor selected by ``kind``."""
    if isinstance(kind, DelayAndSum):
        return das_power(x, field, threads=threads)
    if isinstance(kind, Mvdr):
        return mvdr_power(x, field, diag_load_rel=kind.diag_load_rel, threads=threads)
    if isinstance(kind, SrpPhat):
        return srp_phat_power(x, field, eps=kind.eps, threads=threads)
    raise TypeError(f"unknown beamformer kind {kind!r}")
