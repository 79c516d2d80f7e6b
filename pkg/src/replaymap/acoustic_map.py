"""Band/time-averaged acoustic maps: aggregation, files, rendering, pipeline.

An acoustic map collapses a narrowband power field to one (azimuth x
elevation) slice per frequency band by averaging over the band's bins and
all frames.  :func:`compute_acoustic_map` runs the full chain
(STFT -> beamformer -> aggregate -> normalize) without materializing the
full per-bin power tensor, building steering vectors chunk by chunk.
"""

from __future__ import annotations

import json
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio import MultiChannelSegment
from .beamforming import (
    BeamformerKind,
    DelayAndSum,
    Mvdr,
    NarrowbandPowerField,
    SrpPhat,
    capon_spectrum,
    steered_power,
    beamformer_name,
    covariance_from_snapshots,
    phat_normalize,
)
from .errors import FileFormatError
from .geometry import (
    AngularGrid,
    MicArrayGeometry,
    SPEED_OF_SOUND,
    default_grid,
    grid_unit_directions,
)
from .stft import ComplexSpectrogram, StftConfig, stft

_MAP_MAGIC = b"AMAP"
_MAP_VERSION = 1
_CHUNK_BINS = 64

FIG_BAND_EDGES = ((100.0, 500.0), (500.0, 3000.0), (3000.0, 8000.0), (8000.0, 22050.0))
FIG_BAND_NAMES = ("Low", "Mid", "High", "Super-High")


@dataclass(frozen=True)
class BandConfig:
    """Disjoint half-open frequency bands [low, high) in Hz, sorted ascending.

    A degenerate band with ``low == high`` is allowed and matches no bins;
    this is how a band clipped away by the Nyquist limit is represented.
    """

    edges_hz: tuple[tuple[float, float], ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        edges = tuple((float(lo), float(hi)) for lo, hi in self.edges_hz)
        if len(edges) < 1:
            raise ValueError("at least one band is required")
        for lo, hi in edges:
            if not (np.isfinite(lo) and np.isfinite(hi) and 0.0 <= lo <= hi):
                raise ValueError(f"band ({lo}, {hi}) must satisfy 0 <= low <= high")
        for (_, hi), (lo2, _) in zip(edges, edges[1:]):
            if lo2 < hi:
                raise ValueError("bands must be sorted ascending and disjoint")
        object.__setattr__(self, "edges_hz", edges)
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != len(edges):
                raise ValueError("names must match the number of bands")
            object.__setattr__(self, "names", names)

    @property
    def band_count(self) -> int:
        return len(self.edges_hz)

    def band_name(self, index: int) -> str:
        if self.names is not None:
            return self.names[index]
        lo, hi = self.edges_hz[index]
        return f"{lo:g}-{hi:g}Hz"

    def bin_indices(self, freqs_hz: np.ndarray) -> list[np.ndarray]:
        """Per-band indices of bins with low <= freq < high."""
        freqs = np.asarray(freqs_hz)
        return [np.nonzero((freqs >= lo) & (freqs < hi))[0] for lo, hi in self.edges_hz]


def default_bands(sample_rate: int) -> BandConfig:
    """The four standard bands (Low/Mid/High/Super-High) clipped to [0, fs/2].

    A band entirely above Nyquist degenerates to an empty band and a warning
    is emitted (e.g. Super-High at 16 kHz).
    """
    nyquist = sample_rate / 2.0
    edges = []
    for (lo, hi), name in zip(FIG_BAND_EDGES, FIG_BAND_NAMES):
        lo_c, hi_c = min(lo, nyquist), min(hi, nyquist)
        if lo_c >= hi_c:
            warnings.warn(
                f"band {name} ({lo:g}-{hi:g} Hz) is empty at sample rate {sample_rate}",
                stacklevel=2,
            )
        edges.append((lo_c, hi_c))
    return BandConfig(edges_hz=tuple(edges), names=FIG_BAND_NAMES)


@dataclass(frozen=True)
class AcousticMap:
    """Directional energy per band over the angular grid, shape (K, A, E)."""

    values: np.ndarray
    bands: BandConfig
    grid: AngularGrid
    beamformer: str = "das"
    source_id: str = ""
    sample_rate: int | None = None
    normalized: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        expected = (self.bands.band_count,) + self.grid.shape
        if vals.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("map values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def band_count(self) -> int:
        return self.values.shape[0]


def aggregate(power: NarrowbandPowerField, bands: BandConfig) -> AcousticMap:
    """Average a power field over each band's bins and all frames.

    Output[m] = (1 / (|B_m| * T)) * sum_{f in B_m} sum_t power[f, t].  Bands
    with no in-range bins produce an all-zero slice and a warning; it is an
    error for every band to be empty.  The frame sum is order-canonicalized
    (sorted before accumulation) so permuting frames changes nothing, not
    even the rounding.
    """
    per_band = bands.bin_indices(power.freqs_hz)
    if all(idx.size == 0 for idx in per_band):
        raise ValueError("no band contains any frequency bin of the power field")
    n_frames = power.values.shape[1]
    out = np.zeros((bands.band_count,) + power.grid.shape)
    for m, idx in enumerate(per_band):
        if idx.size == 0:
            warnings.warn(f"band {bands.band_name(m)} contains no frequency bins", stacklevel=2)
            continue
        frame_sums = power.values[idx].sum(axis=0)  # (T, A, E)
        total = np.sort(frame_sums, axis=0).sum(axis=0)
        out[m] = total / (idx.size * n_frames)
    return AcousticMap(values=out, bands=bands, grid=power.grid)


def normalize(m: AcousticMap) -> AcousticMap:
    """Scale each band slice to peak 1; all-zero slices stay zero."""
    values = m.values.copy()
    for k in range(m.band_count):
        peak = values[k].max()
        if peak > 0:
            values[k] /= peak
    return replace(m, values=values, normalized=True)


def log_compress(m: AcousticMap) -> AcousticMap:
    """Apply log1p to the raw energies (optional dynamic-range compression)."""
    return replace(m, values=np.log1p(m.values), normalized=False)


def band_argmax(m: AcousticMap, band_index: int):
    """Grid direction of the band slice's maximum."""
    a, e = np.unravel_index(int(np.argmax(m.values[band_index])), m.grid.shape)
    return m.grid.direction(int(a), int(e))


def compute_acoustic_map(
    seg: MultiChannelSegment,
    geometry: MicArrayGeometry,
    *,
    grid: AngularGrid | None = None,
    stft_config: StftConfig | None = None,
    kind: BeamformerKind = DelayAndSum(),
    bands: BandConfig | None = None,
    normalize_map: bool = True,
    log_compress_map: bool = False,
    threads: int = 1,
    steering_field=None,
) -> AcousticMap:
    """Full feature pipeline: STFT, beamform in-band bins, band/time average.

    Only bins inside the configured bands are beamformed, and steering
    vectors are built per fixed-size frequency chunk, so memory stays
    bounded for long inputs and large grids.  Results are independent of
    ``threads`` (bitwise for DAS/SRP-PHAT).  Pass a precomputed
    ``steering_field`` covering the in-band bins to amortize the steering
    exponentials when many recordings share one configuration.
    """
    grid = grid or default_grid()
    spectrogram = stft(seg, stft_config)
    bands = bands or default_bands(seg.sample_rate)
    return map_from_spectrogram(
        spectrogram,
        geometry,
        grid=grid,
        kind=kind,
        bands=bands,
        normalize_map=normalize_map,
        log_compress_map=log_compress_map,
        threads=threads,
        steering_field=steering_field,
    )


def map_from_spectrogram(
    spectrogram: ComplexSpectrogram,
    geometry: MicArrayGeometry,
    *,
    grid: AngularGrid,
    kind: BeamformerKind,
    bands: BandConfig,
    normalize_map: bool = True,
    log_compress_map: bool = False,
    threads: int = 1,
    steering_field=None,
) -> AcousticMap:
    if geometry.channel_count != spectrogram.channel_count:
        raise ValueError(
            f"geometry has {geometry.channel_count} microphones but the recording "
            f"has {spectrogram.channel_count} channels"
        )
    per_band = bands.bin_indices(spectrogram.freqs_hz)
    if all(idx.size == 0 for idx in per_band):
        raise ValueError("no band contains any frequency bin; check band edges and sample rate")

    delays = grid_unit_directions(grid) @ geometry.positions.T / SPEED_OF_SOUND  # (A, E, N)
    if steering_field is not None and (
        steering_field.grid.shape != grid.shape
        or steering_field.geometry.channel_count != geometry.channel_count
    ):
        raise ValueError("steering_field does not match the requested grid/geometry")
    n_frames = spectrogram.frame_count
    if isinstance(kind, SrpPhat):
        spec_values = phat_normalize(spectrogram.values, kind.eps)
    else:
        spec_values = spectrogram.values

    tasks = []  # (band index, bin indices chunk); fixed layout regardless of threads
    for m, idx in enumerate(per_band):
        for start in range(0, idx.size, _CHUNK_BINS):
            tasks.append((m, idx[start : start + _CHUNK_BINS]))

    def steering_rows(idx: np.ndarray) -> np.ndarray:
        freqs = spectrogram.freqs_hz[idx]
        if steering_field is not None:
            rows = np.searchsorted(steering_field.freqs_hz, freqs)
            if rows.size and rows.max() < steering_field.freqs_hz.size and np.array_equal(
                steering_field.freqs_hz[rows], freqs
            ):
                return steering_field.values[rows]
        return np.exp(-2j * np.pi * freqs[:, None, None, None] * delays[None])

    def run(task) -> np.ndarray:
        _, idx = task
        steering = steering_rows(idx)
        if isinstance(kind, Mvdr):
            partial = np.zeros(grid.shape)
            for row, bin_index in enumerate(idx):
                cov = covariance_from_snapshots(
                    spectrogram.values[:, bin_index, :], kind.diag_load_rel
                )
                partial += capon_spectrum(cov, steering[row])
            return partial * n_frames
        return steered_power(steering, spec_values[:, idx, :]).sum(axis=(0, 1))

    if threads <= 1 or len(tasks) <= 1:
        partials = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(run, tasks))

    values = np.zeros((bands.band_count,) + grid.shape)
    for (m, _), partial in zip(tasks, partials):
        values[m] += partial
    for m, idx in enumerate(per_band):
        if idx.size == 0:
            warnings.warn(f"band {bands.band_name(m)} contains no frequency bins", stacklevel=2)
        else:
            values[m] /= idx.size * n_frames

    out = AcousticMap(
        values=values,
        bands=bands,
        grid=grid,
        beamformer=beamformer_name(kind),
        source_id=spectrogram.source_id,
        sample_rate=spectrogram.sample_rate,
    )
    if log_compress_map:
        out = log_compress(out)
    if normalize_map:
        out = normalize(out)
    return out


def save_map(m: AcousticMap, path) -> None:
    """Write ``<path>`` (binary f32 LE payload) and ``<path>.json`` metadata."""
    path = Path(path)
    k, a, e = m.values.shape
    header = _MAP_MAGIC + struct.pack("<IIII", _MAP_VERSION, k, a, e)
    payload = m.values.astype("<f4").tobytes(order="C")
    path.write_bytes(header + payload)
    meta = {
        "source_id": m.source_id,
        "beamformer": m.beamformer,
        "normalized": m.normalized,
        "sample_rate": m.sample_rate,
        "band_edges_hz": [list(edge) for edge in m.bands.edges_hz],
        "band_names": list(m.bands.names) if m.bands.names else None,
        "azimuths_deg": m.grid.azimuths_deg.tolist(),
        "elevations_deg": m.grid.elevations_deg.tolist(),
    }
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_map(path) -> AcousticMap:
    """Read a map written by :func:`save_map`; values round-trip bit-exactly."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:4] != _MAP_MAGIC:
        raise FileFormatError(f"{path} is not an acoustic map file (bad magic)")
    version, k, a, e = struct.unpack("<IIII", raw[4:20])
    if version != _MAP_VERSION:
        raise FileFormatError(f"{path}: unsupported map version {version}")
    expected = 20 + 4 * k * a * e
    if len(raw) != expected:
        raise FileFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw[20:], dtype="<f4").reshape(k, a, e).astype(np.float64)
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        raise FileFormatError(f"missing metadata sidecar {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    bands = BandConfig(
        edges_hz=tuple(tuple(edge) for edge in meta["band_edges_hz"]),
        names=tuple(meta["band_names"]) if meta.get("band_names") else None,
    )
    grid = AngularGrid(
        azimuths_deg=np.asarray(meta["azimuths_deg"]),
        elevations_deg=np.asarray(meta["elevations_deg"]),
    )
    if bands.band_count != k or grid.shape != (a, e):
        raise FileFormatError(f"{path}: metadata shape disagrees with payload dims {k}x{a}x{e}")
    return AcousticMap(
        values=values,
        bands=bands,
        grid=grid,
        beamformer=meta.get("beamformer", "das"),
        source_id=meta.get("source_id", ""),
        sample_rate=meta.get("sample_rate"),
        normalized=bool(meta.get("normalized", False)),
    )


def render_map(m: AcousticMap, band_index: int, path) -> None:
    """Write one band slice as a grayscale image, azimuth across, elevation up.

    The image is A pixels wide and E pixels tall; intensity is the slice
    normalized to its own peak.  ``.pgm`` paths get a plain binary PGM,
    anything else is handed to Pillow (extension selects the format).
    """
    if not 0 <= band_index < m.band_count:
        raise ValueError(f"band index {band_index} out of range [0, {m.band_count})")
    band = m.values[band_index]
    peak = band.max()
    scaled = band / peak if peak > 0 else np.zeros_like(band)
    pixels = np.flip((scaled.T * 255.0).round().astype(np.uint8), axis=0)  # (E, A), top = +90
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        height, width = pixels.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (width, height) + pixels.tobytes())
    else:
        from PIL import Image

        Image.fromarray(pixels, mode="L").save(path)
