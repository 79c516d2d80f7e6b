"""Beamformed acoustic maps and a lightweight CNN for replay speech detection.

The pipeline projects multi-channel recordings onto a discrete
azimuth/elevation grid with classical beamforming (delay-and-sum, MVDR, or
SRP-PHAT), averages the directional energy into per-band acoustic maps, and
classifies maps as genuine or replayed speech with a small
depthwise-separable CNN trained from scratch.
"""

__version__ = "0.1.0"

from .geometry import (
    AngularGrid,
    Direction,
    MicArrayGeometry,
    SPEED_OF_SOUND,
    SteeringField,
    build_steering_field,
    builtin_geometry,
    default_grid,
    load_geometry,
    propagation_delays,
    save_geometry,
    steering_vector,
    unit_direction,
)
from .audio import MultiChannelSegment, read_wav, segment, write_wav
from .stft import ComplexSpectrogram, StftConfig, stft
from .beamforming import (
    BeamformerKind,
    DelayAndSum,
    Mvdr,
    NarrowbandPowerField,
    SrpPhat,
    beamformer_from_name,
    das_power,
    estimate_covariance,
    mvdr_power,
    mvdr_weights,
    power_field,
    srp_phat_power,
)
from .acoustic_map import (
    AcousticMap,
    BandConfig,
    aggregate,
    band_argmax,
    compute_acoustic_map,
    default_bands,
    load_map,
    log_compress,
    normalize,
    render_map,
    save_map,
)
from .simulate import (
    BandNoise,
    PlaneWaveSpec,
    SpeechLike,
    Tone,
    make_synthetic_dataset,
    simulate_plane_wave,
)
from .evaluation import (
    EvalConfig,
    ManifestEntry,
    RunSummary,
    ScoreSet,
    compute_eer,
    evaluate,
    load_manifest,
    make_splits,
    roc_points,
    summarize_runs,
    write_manifest,
)
from .estimators import AcousticMapTransformer, ReplayNetClassifier
from .errors import FileFormatError, NumericsError
from . import nn

__all__ = [
    "AcousticMap",
    "AcousticMapTransformer",
    "AngularGrid",
    "BandConfig",
    "BandNoise",
    "BeamformerKind",
    "ComplexSpectrogram",
    "DelayAndSum",
    "Direction",
    "EvalConfig",
    "FileFormatError",
    "ManifestEntry",
    "MicArrayGeometry",
    "MultiChannelSegment",
    "Mvdr",
    "NarrowbandPowerField",
    "NumericsError",
    "PlaneWaveSpec",
    "ReplayNetClassifier",
    "RunSummary",
    "SPEED_OF_SOUND",
    "ScoreSet",
    "SpeechLike",
    "SrpPhat",
    "SteeringField",
    "StftConfig",
    "Tone",
    "aggregate",
    "band_argmax",
    "beamformer_from_name",
    "build_steering_field",
    "builtin_geometry",
    "compute_acoustic_map",
    "compute_eer",
    "das_power",
    "default_bands",
    "default_grid",
    "estimate_covariance",
    "evaluate",
    "load_geometry",
    "load_manifest",
    "load_map",
    "log_compress",
    "make_splits",
    "make_synthetic_dataset",
    "mvdr_power",
    "mvdr_weights",
    "nn",
    "normalize",
    "power_field",
    "propagation_delays",
    "read_wav",
    "render_map",
    "roc_points",
    "save_geometry",
    "save_map",
    "segment",
    "simulate_plane_wave",
    "srp_phat_power",
    "steering_vector",
    "stft",
    "summarize_runs",
    "unit_direction",
    "write_manifest",
    "write_wav",
]
