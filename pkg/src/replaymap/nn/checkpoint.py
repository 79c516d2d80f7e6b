"""Checkpoints: a raw little-endian tensor blob plus a JSON manifest.

The manifest records tensor names/shapes, the architecture, and the
preprocessing the model was trained with (band edges, grid angles,
normalization flag).  Loading for inference must refuse a checkpoint whose
preprocessing disagrees with the requested feature configuration; see
:func:`require_matching_preprocessing`.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FileFormatError
from .model import ArchConfig, ReplayNet

_FORMAT_VERSION = 1


def preprocessing_metadata(
    band_edges_hz,
    azimuths_deg,
    elevations_deg,
    normalized: bool,
    beamformer: str | None = None,
    sample_rate: int | None = None,
) -> dict:
    """Canonical preprocessing description stored in checkpoint manifests."""
    return {
        "band_edges_hz": [[float(lo), float(hi)] for lo, hi in band_edges_hz],
        "azimuths_deg": [float(a) for a in np.atleast_1d(azimuths_deg)],
        "elevations_deg": [float(e) for e in np.atleast_1d(elevations_deg)],
        "normalized": bool(normalized),
        "beamformer": beamformer,
        "sample_rate": sample_rate,
    }


def save_checkpoint(net: ReplayNet, path, preprocessing: dict | None = None) -> None:
    """Write ``<path>`` (tensor blob) and ``<path>.json`` (manifest)."""
    path = Path(path)
    tensors = []
    blob = bytearray()
    for kind, items in (("param", net.named_parameters()), ("buffer", net.named_buffers())):
        for name, value in items.items():
            raw = np.ascontiguousarray(value).astype(f"<{value.dtype.kind}{value.dtype.itemsize}").tobytes()
            tensors.append(
                {
                    "name": name,
                    "kind": kind,
                    "shape": list(value.shape),
                    "dtype": str(value.dtype),
                    "offset": len(blob),
                }
            )
            blob.extend(raw)
    manifest = {
        "format_version": _FORMAT_VERSION,
        "arch": net.arch_dict(),
        "dtype": str(net.dtype),
        "tensors": tensors,
        "preprocessing": preprocessing or {},
    }
    path.write_bytes(bytes(blob))
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ReplayNet, dict]:
    """Rebuild the network from a checkpoint; returns (net, preprocessing)."""
    path = Path(path)
    manifest_path = Path(str(path) + ".json")
    if not manifest_path.exists():
        raise FileFormatError(f"missing checkpoint manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"corrupt checkpoint manifest {manifest_path}: {exc}") from exc
    if manifest.get("format_version") != _FORMAT_VERSION:
        raise FileFormatError(f"unsupported checkpoint version {manifest.get('format_version')}")
    raw = path.read_bytes()
    arch_fields = dict(manifest["arch"])
    for key in ("in_shape", "block_channels", "block_kernels"):
        arch_fields[key] = tuple(arch_fields[key])
    net = ReplayNet(ArchConfig(**arch_fields), seed=0, dtype=np.dtype(manifest["dtype"]))
    for entry in manifest["tensors"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * dtype.itemsize
        if end > len(raw):
            raise FileFormatError(f"checkpoint blob truncated at tensor {entry['name']}")
        value = np.frombuffer(raw[start:end], dtype=dtype.newbyteorder("<")).astype(dtype).reshape(shape)
        if entry["kind"] == "param":
            net.set_parameter(entry["name"], value)
        else:
            net.set_buffer(entry["name"], value)
    return net, manifest.get("preprocessing", {})


def map_preprocessing(acoustic_map) -> dict:
    """Preprocessing description of an :class:`AcousticMap` (duck-typed)."""
    return preprocessing_metadata(
        band_edges_hz=acoustic_map.bands.edges_hz,
        azimuths_deg=acoustic_map.grid.azimuths_deg,
        elevations_deg=acoustic_map.grid.elevations_deg,
        normalized=acoustic_map.normalized,
        beamformer=acoustic_map.beamformer,
        sample_rate=acoustic_map.sample_rate,
    )


def score_maps(path, acoustic_maps) -> np.ndarray:
    """Detection scores for acoustic maps using a stored checkpoint.

    Refuses to run when the maps' preprocessing (band edges, grid,
    normalization, and beamformer/sample rate when recorded) differs from
    what the checkpoint was trained with.
    """
    net, trained_with = load_checkpoint(path)
    acoustic_maps = list(acoustic_maps)
    if not acoustic_maps:
        raise ValueError("at least one acoustic map is required")
    if trained_with:
        for m in acoustic_maps:
            require_matching_preprocessing(trained_with, map_preprocessing(m))
    batch = np.stack([m.values for m in acoustic_maps])
    return net.predict_score(batch)


def require_matching_preprocessing(checkpoint_meta: dict, requested: dict) -> None:
    """Raise FileFormatError when feature settings disagree with the checkpoint.

    Compares band edges, grid angles, and the normalization flag; the
    beamformer and sample rate are compared when both sides record them.
    """
    strict_keys = ("band_edges_hz", "azimuths_deg", "elevations_deg", "normalized")
    for key in strict_keys:
        if checkpoint_meta.get(key) != requested.get(key):
            raise FileFormatError(
                f"checkpoint preprocessing mismatch on {key!r}: "
                f"model was trained with {checkpoint_meta.get(key)!r}, request uses {requested.get(key)!r}"
            )
    for key in ("beamformer", "sample_rate"):
        ours, theirs = checkpoint_meta.get(key), requested.get(key)
        if ours is not None and theirs is not None and ours != theirs:
            raise FileFormatError(
                f"checkpoint preprocessing mismatch on {key!r}: {ours!r} != {theirs!r}"
            )
