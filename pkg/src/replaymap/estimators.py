"""scikit-learn compatible wrappers around the feature pipeline and CNN.

``AcousticMapTransformer`` turns multi-channel recordings into acoustic-map
tensors and ``ReplayNetClassifier`` fits/scores the lightweight CNN, so the
two compose in a :class:`sklearn.pipeline.Pipeline`:

    Pipeline([("maps", AcousticMapTransformer(geometry="hex-6", sample_rate=44100)),
              ("clf", ReplayNetClassifier(epochs=30))])
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .acoustic_map import BandConfig, compute_acoustic_map, default_bands
from .audio import MultiChannelSegment
from .beamforming import beamformer_from_name
from .geometry import AngularGrid, MicArrayGeometry, default_grid, resolve_geometry
from .nn.model import GENUINE_CLASS
from .nn.train import TrainConfig, train
from .stft import StftConfig


def as_segments(X, sample_rate: int | None) -> list[MultiChannelSegment]:
    """Validation helper: coerce transformer input to a list of segments.

    Accepts :class:`MultiChannelSegment` objects or (channels, samples)
    arrays; raw arrays require ``sample_rate``.
    """
    segments = []
    for index, item in enumerate(X):
        if isinstance(item, MultiChannelSegment):
            segments.append(item)
            continue
        arr = np.asarray(item, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"item {index}: expected a (channels, samples) array, got shape {arr.shape}")
        if sample_rate is None:
            raise ValueError("sample_rate is required when passing raw arrays")
        segments.append(MultiChannelSegment(samples=arr, sample_rate=sample_rate, source_id=f"item{index}"))
    if not segments:
        raise ValueError("X must contain at least one recording")
    return segments


def check_map_tensor(X) -> np.ndarray:
    """Validation helper: require a finite (n, K, A, E) float tensor."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"expected maps of shape (n, bands, azimuths, elevations), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("map tensor contains non-finite values")
    return arr


class AcousticMapTransformer(BaseEstimator, TransformerMixin):
    """Stateless transformer: recordings in, (n, K, A, E) map tensors out.

    Parameters mirror the pipeline knobs: geometry (builtin id, file path,
    or :class:`MicArrayGeometry`), STFT framing, beamformer selection, band
    edges (None = the four standard bands for the sample rate), and
    per-band peak normalization.
    """

    def __init__(
        self,
        geometry="hex-6",
        spacing=0.05,
        sample_rate=None,
        n_fft=1024,
        hop=512,
        window="hann",
        beamformer="das",
        diag_load_rel=1e-3,
        phat_eps=None,
        band_edges_hz=None,
        azimuths_deg=None,
        elevations_deg=None,
        normalize=True,
        log_compress=False,
        threads=1,
    ):
        self.geometry = geometry
        self.spacing = spacing
        self.sample_rate = sample_rate
        self.n_fft = n_fft
        self.hop = hop
        self.window = window
        self.beamformer = beamformer
        self.diag_load_rel = diag_load_rel
        self.phat_eps = phat_eps
        self.band_edges_hz = band_edges_hz
        self.azimuths_deg = azimuths_deg
        self.elevations_deg = elevations_deg
        self.normalize = normalize
        self.log_compress = log_compress
        self.threads = threads

    def _resolved_geometry(self) -> MicArrayGeometry:
        if isinstance(self.geometry, MicArrayGeometry):
            return self.geometry
        return resolve_geometry(str(self.geometry), spacing=self.spacing)

    def _resolved_grid(self) -> AngularGrid:
        if self.azimuths_deg is None and self.elevations_deg is None:
            return default_grid()
        base = default_grid()
        return AngularGrid(
            azimuths_deg=np.asarray(self.azimuths_deg if self.azimuths_deg is not None else base.azimuths_deg),
            elevations_deg=np.asarray(self.elevations_deg if self.elevations_deg is not None else base.elevations_deg),
        )

    def fit(self, X=None, y=None):
        self._resolved_geometry()
        StftConfig(n_fft=self.n_fft, hop=self.hop, window=self.window)
        beamformer_from_name(self.beamformer, self.diag_load_rel, self.phat_eps)
        return self

    def transform(self, X) -> np.ndarray:
        geometry = self._resolved_geometry()
        grid = self._resolved_grid()
        cfg = StftConfig(n_fft=self.n_fft, hop=self.hop, window=self.window)
        kind = beamformer_from_name(self.beamformer, self.diag_load_rel, self.phat_eps)
        maps = []
        for seg in as_segments(X, self.sample_rate):
            if self.band_edges_hz is not None:
                bands = BandConfig(edges_hz=tuple(tuple(edge) for edge in self.band_edges_hz))
            else:
                bands = default_bands(seg.sample_rate)
            maps.append(
                compute_acoustic_map(
                    seg,
                    geometry,
                    grid=grid,
                    stft_config=cfg,
                    kind=kind,
                    bands=bands,
                    normalize_map=self.normalize,
                    log_compress_map=self.log_compress,
                    threads=self.threads,
                ).values
            )
        return np.stack(maps)


class ReplayNetClassifier(BaseEstimator, ClassifierMixin):
    """Binary genuine/replay classifier over acoustic-map tensors.

    ``fit`` trains the from-scratch CNN deterministically for the given
    seed; ``predict_proba`` exposes softmax probabilities with class 1 =
    genuine, and ``decision_function`` is the genuine probability used as
    the detection score.
    """

    def __init__(
        self,
        epochs=50,
        batch_size=32,
        learning_rate=1e-3,
        optimizer="adam",
        mixup_alpha=0.05,
        seed=0,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.mixup_alpha = mixup_alpha
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            mixup_alpha=self.mixup_alpha,
            seed=self.seed,
        )

    def fit(self, X, y):
        maps = check_map_tensor(X)
        labels = np.asarray(y)
        classes = np.unique(labels)
        if classes.size != 2:
            raise ValueError(f"expected exactly two classes, got {classes}")
        indices = np.searchsorted(classes, labels)
        result = train(maps, indices, self._train_config())
        self.classes_ = classes
        self.net_ = result.net
        self.history_ = result.history
        self.n_features_in_ = int(np.prod(maps.shape[1:]))
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise AttributeError("classifier is not fitted; call fit first")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        return self.net_.predict_proba(check_map_tensor(X))

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def decision_function(self, X) -> np.ndarray:
        """Detection score per item: probability of class index 1 (genuine)."""
        return self.predict_proba(X)[:, GENUINE_CLASS]
