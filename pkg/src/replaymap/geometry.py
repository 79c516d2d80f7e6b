"""Microphone array geometry, angular grids, and plane-wave steering vectors.

Coordinate convention: x forward, y left, z up.  A look direction with
azimuth ``a`` and elevation ``b`` (both in degrees) has unit vector
``[cos b cos a, cos b sin a, sin b]``.  The far-field delay of microphone
``p`` for that direction is ``<p, u> / c``, and the steering element is
``exp(-j * 2*pi*f * delay)``.  The simulator reuses :func:`propagation_delays`
so synthetic recordings and steering vectors can never disagree in sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_SOUND = 343.0
"""Propagation speed used in all delay computations, in m/s."""

BUILTIN_GEOMETRY_IDS = ("linear-2", "linear-4", "hex-6", "hex-7")

DEFAULT_AZIMUTH_COUNT = 91
DEFAULT_ELEVATION_COUNT = 41


def _readonly(values, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Direction:
    """A look direction in degrees, azimuth and elevation both in [-90, 90]."""

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        for name in ("azimuth_deg", "elevation_deg"):
            value = getattr(self, name)
            if not (math.isfinite(value) and -90.0 <= value <= 90.0):
                raise ValueError(f"{name} must be finite and in [-90, 90], got {value!r}")


@dataclass(frozen=True)
class MicArrayGeometry:
    """A named set of 3-D microphone positions in meters, shape (N, 3)."""

    name: str
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"positions must have shape (N, 3) with N >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if pos.shape[0] >= 2 and np.all(pos == pos[0]):
            raise ValueError("at least two microphone positions must be distinct")
        object.__setattr__(self, "positions", _readonly(pos))

    @property
    def channel_count(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class AngularGrid:
    """Discrete azimuth/elevation grid, angles in degrees, strictly increasing."""

    azimuths_deg: np.ndarray
    elevations_deg: np.ndarray

    def __post_init__(self):
        for name in ("azimuths_deg", "elevations_deg"):
            angles = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if angles.size < 1:
                raise ValueError(f"{name} must be nonempty")
            if not np.all(np.isfinite(angles)):
                raise ValueError(f"{name} must be finite")
            if np.any(angles < -90.0) or np.any(angles > 90.0):
                raise ValueError(f"{name} must lie in [-90, 90]")
            if angles.size > 1 and not np.all(np.diff(angles) > 0):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, _readonly(angles))

    @property
    def shape(self) -> tuple[int, int]:
        return self.azimuths_deg.size, self.elevations_deg.size

    def direction(self, az_index: int, el_index: int) -> Direction:
        return Direction(float(self.azimuths_deg[az_index]), float(self.elevations_deg[el_index]))


def default_grid() -> AngularGrid:
    """91 azimuths (2 deg step) x 41 elevations (4.5 deg step) over [-90, 90]."""
    return AngularGrid(
        azimuths_deg=np.linspace(-90.0, 90.0, DEFAULT_AZIMUTH_COUNT),
        elevations_deg=np.linspace(-90.0, 90.0, DEFAULT_ELEVATION_COUNT),
    )


@dataclass(frozen=True)
class SteeringField:
    """Precomputed steering vectors of shape (F, A, E, N), unit modulus."""

    geometry: MicArrayGeometry
    grid: AngularGrid
    freqs_hz: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freqs_hz, dtype=np.float64))
        a, e = self.grid.shape
        expected = (freqs.size, a, e, self.geometry.channel_count)
        if self.values.shape != expected:
            raise ValueError(f"steering values must have shape {expected}, got {self.values.shape}")
        object.__setattr__(self, "freqs_hz", _readonly(freqs))
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def unit_direction(d: Direction) -> np.ndarray:
    """Unit vector [cos b cos a, cos b sin a, sin b] for a look direction."""
    az = math.radians(d.azimuth_deg)
    el = math.radians(d.elevation_deg)
    return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


def grid_unit_directions(grid: AngularGrid) -> np.ndarray:
    """Unit direction vectors for every grid point, shape (A, E, 3)."""
    az = np.radians(grid.azimuths_deg)[:, None]
    el = np.radians(grid.elevations_deg)[None, :]
    u = np.empty(grid.shape + (3,))
    u[..., 0] = np.cos(el) * np.cos(az)
    u[..., 1] = np.cos(el) * np.sin(az)
    u[..., 2] = np.broadcast_to(np.sin(el), grid.shape)
    return u


def propagation_delays(geometry: MicArrayGeometry, d: Direction) -> np.ndarray:
    """Far-field delay of each microphone for direction ``d``, in seconds.

    Channel ``i`` of a plane wave from ``d`` is the source delayed by
    ``<p_i, u(d)> / c``; the matching steering element is
    ``exp(-j * 2*pi*f * delay_i)``.
    """
    return geometry.positions @ unit_direction(d) / SPEED_OF_SOUND


def steering_vector(geometry: MicArrayGeometry, f_hz: float, d: Direction) -> np.ndarray:
    """Plane-wave steering vector, complex shape (N,), unit modulus elements."""
    if not (math.isfinite(f_hz) and f_hz >= 0.0):
        raise ValueError(f"f_hz must be finite and >= 0, got {f_hz!r}")
    return np.exp(-2j * np.pi * f_hz * propagation_delays(geometry, d))


def build_steering_field(
    geometry: MicArrayGeometry, grid: AngularGrid, freqs_hz
) -> SteeringField:
    """Precompute steering vectors for every (frequency, grid point) pair.

    Parameters
    ----------
    freqs_hz : array-like
        Nonempty, sorted ascending physical frequencies in Hz.

    Returns
    -------
    SteeringField
        Table of shape (F, A, E, N) with values[f, a, e, :] equal to
        ``steering_vector(geometry, freqs_hz[f], grid point (a, e))``.
    """
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    if freqs.size == 0:
        raise ValueError("freqs_hz must be nonempty")
    if np.any(freqs < 0) or not np.all(np.isfinite(freqs)):
        raise ValueError("freqs_hz must be finite and >= 0")
    if freqs.size > 1 and np.any(np.diff(freqs) < 0):
        raise ValueError("freqs_hz must be sorted ascending")
    delays = grid_unit_directions(grid) @ geometry.positions.T / SPEED_OF_SOUND  # (A, E, N)
    values = np.exp(-2j * np.pi * freqs[:, None, None, None] * delays[None])
    return SteeringField(geometry=geometry, grid=grid, freqs_hz=freqs, values=values)


def builtin_geometry(geometry_id: str, spacing: float = 0.05) -> MicArrayGeometry:
    """Construct one of the parameterized builtin arrays.

    ``linear-2`` / ``linear-4`` place microphones on the y axis (broadside to
    the forward x axis) with the given inter-mic spacing; an x-oriented line
    could not tell left from right.  ``hex-6`` is a regular hexagon of
    circumradius ``spacing`` in the horizontal plane and ``hex-7`` adds a
    center microphone.
    """
    if not (math.isfinite(spacing) and spacing > 0):
        raise ValueError(f"spacing must be positive, got {spacing!r}")
    if geometry_id in ("linear-2", "linear-4"):
        n = int(geometry_id.split("-")[1])
        offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
        positions = np.zeros((n, 3))
        positions[:, 1] = offsets
    elif geometry_id in ("hex-6", "hex-7"):
        angles = np.radians(60.0 * np.arange(6))
        vertices = spacing * np.stack([np.cos(angles), np.sin(angles), np.zeros(6)], axis=1)
        positions = vertices if geometry_id == "hex-6" else np.vstack([vertices, np.zeros(3)])
    else:
        raise ValueError(f"unknown builtin geometry {geometry_id!r}; known: {BUILTIN_GEOMETRY_IDS}")
    return MicArrayGeometry(name=geometry_id, positions=positions)


def load_geometry(path) -> MicArrayGeometry:
    """Load a geometry from a JSON file {"name": str, "positions_m": [[x,y,z],...]}."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"geometry file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "name" not in doc or "positions_m" not in doc:
        raise ValueError(f"geometry file {path}: expected keys 'name' and 'positions_m'")
    try:
        positions = np.asarray(doc["positions_m"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"geometry file {path}: positions_m must be an array of [x, y, z]") from exc
    return MicArrayGeometry(name=str(doc["name"]), positions=positions)


def save_geometry(geometry: MicArrayGeometry, path) -> None:
    """Write a geometry to the JSON schema read by :func:`load_geometry`."""
    doc = {"name": geometry.name, "positions_m": geometry.positions.tolist()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def resolve_geometry(spec: str, spacing: float = 0.05) -> MicArrayGeometry:
    """Interpret ``spec`` as a builtin id first, then as a path to a JSON file."""
    if spec in BUILTIN_GEOMETRY_IDS:
        return builtin_geometry(spec, spacing=spacing)
    if Path(spec).exists():
        return load_geometry(spec)
    raise ValueError(f"geometry {spec!r} is neither a builtin id {BUILTIN_GEOMETRY_IDS} nor a file")
