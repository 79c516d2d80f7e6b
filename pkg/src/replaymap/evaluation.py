"""Dataset manifests, environment splits, EER/ROC metrics, and the eval loop.

Score convention: higher means more genuine.  The false-acceptance rate
(FAR) is measured on replay recordings accepted at a threshold, the
false-rejection rate (FRR) on genuine recordings rejected.  The reported
EER interpolates between achievable ROC operating points (the ROC convex
hull), which is what keeps the estimate stable on small test sets.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import t as student_t

from .acoustic_map import BandConfig, compute_acoustic_map
from .audio import read_wav
from .beamforming import BeamformerKind, DelayAndSum, beamformer_name
from .geometry import AngularGrid, MicArrayGeometry, build_steering_field, default_grid
from .nn.model import GENUINE_CLASS
from .nn.train import TrainConfig, train
from .stft import StftConfig

LABELS = ("genuine", "replay")
DEVICES = ("D1", "D2", "D3", "D4")
ENVIRONMENTS = ("EnvA", "EnvB", "EnvC", "EnvD")
SPLITS = ("train", "test")
MANIFEST_FIELDS = ("wav_path", "label", "device", "environment", "speaker_id", "split")

# Two-sided 95% critical values of Student's t, df = 1..10 (printed-table
# precision; df=4 -> 2.776 covers the five-run protocol).
_T_TABLE_95 = (12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228)


@dataclass(frozen=True)
class ManifestEntry:
    wav_path: str
    label: str
    device: str
    environment: str
    speaker_id: str
    split: str

    def __post_init__(self):
        if not self.wav_path:
            raise ValueError("wav_path must be nonempty")
        for name, allowed in (("label", LABELS), ("device", DEVICES),
                              ("environment", ENVIRONMENTS), ("split", SPLITS)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @property
    def class_index(self) -> int:
        return GENUINE_CLASS if self.label == "genuine" else 1 - GENUINE_CLASS


def load_manifest(path) -> list[ManifestEntry]:
    """Parse and validate a manifest CSV; errors name the offending row."""
    entries = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ValueError(
                f"manifest {path} must have header {','.join(MANIFEST_FIELDS)}, "
                f"got {reader.fieldnames}"
            )
        for number, row in enumerate(reader, start=2):
            if any(value is None for value in row.values()) or None in row:
                raise ValueError(f"manifest {path} row {number}: wrong number of fields")
            try:
                entries.append(ManifestEntry(**{k: row[k] for k in MANIFEST_FIELDS}))
            except ValueError as exc:
                raise ValueError(f"manifest {path} row {number}: {exc}") from exc
    return entries


def write_manifest(entries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        for entry in entries:
            writer.writerow({k: getattr(entry, k) for k in MANIFEST_FIELDS})


def make_splits(
    entries,
    mode: str,
    holdout_env: str | None = None,
    device: str | None = None,
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Train/test partition for one device.

    ``env-dependent`` honors each entry's split flag; ``env-independent``
    trains on every environment except ``holdout_env`` and tests on it.
    Device filtering happens first (one model per microphone array).
    """
    pool = [e for e in entries if device is None or e.device == device]
    if mode == "env-dependent":
        train_set = [e for e in pool if e.split == "train"]
        test_set = [e for e in pool if e.split == "test"]
    elif mode == "env-independent":
        if holdout_env not in ENVIRONMENTS:
            raise ValueError(f"holdout_env must be one of {ENVIRONMENTS}, got {holdout_env!r}")
        train_set = [e for e in pool if e.environment != holdout_env]
        test_set = [e for e in pool if e.environment == holdout_env]
    else:
        raise ValueError(f"mode must be 'env-dependent' or 'env-independent', got {mode!r}")
    if not train_set or not test_set:
        raise ValueError(
            f"empty {'train' if not train_set else 'test'} side for mode={mode}, "
            f"device={device}, holdout={holdout_env}"
        )
    return train_set, test_set


@dataclass(frozen=True)
class ScoreSet:
    """Detection scores with binary labels (1 = genuine, 0 = replay)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if scores.ndim != 1 or scores.shape != labels.shape:
            raise ValueError("scores and labels must be 1-D and the same length")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 (replay) or 1 (genuine)")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def require_both_classes(self) -> None:
        if self.labels.min() == self.labels.max():
            raise ValueError("score set must contain both classes")


def _operating_points(s: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC staircase (FAR, TPR, threshold) for accept-iff-score>=threshold.

    Points run from (0, 0) (accept nothing) to (1, 1) (accept everything),
    one point per distinct score.
    """
    order = np.argsort(-s.scores, kind="mergesort")
    sorted_scores = s.scores[order]
    genuine = s.labels[order] == 1
    n_genuine = int(genuine.sum())
    n_replay = genuine.size - n_genuine
    cuts = np.nonzero(np.diff(sorted_scores))[0]
    cuts = np.r_[cuts, sorted_scores.size - 1]
    tp = np.cumsum(genuine)[cuts]
    fp = np.cumsum(~genuine)[cuts]
    far = np.r_[0.0, fp / n_replay]
    tpr = np.r_[0.0, tp / n_genuine]
    thresholds = np.r_[sorted_scores[0] + 1.0, sorted_scores[cuts]]
    return far, tpr, thresholds


def roc_points(s: ScoreSet) -> np.ndarray:
    """Monotone (FAR, TPR) staircase including (0, 0) and (1, 1)."""
    s.require_both_classes()
    far, tpr, _ = _operating_points(s)
    return np.column_stack([far, tpr])


def _upper_hull(far: np.ndarray, tpr: np.ndarray, thresholds: np.ndarray):
    """Upper convex hull of the ROC staircase (least concave majorant)."""
    hull: list[int] = []
    for i in range(far.size):
        while len(hull) >= 2:
            ox, oy = far[hull[-2]], tpr[hull[-2]]
            ax, ay = far[hull[-1]], tpr[hull[-1]]
            cross = (ax - ox) * (tpr[i] - oy) - (ay - oy) * (far[i] - ox)
            if cross >= 0:  # middle point is on or below the chord
                hull.pop()
            else:
                break
        hull.append(i)
    idx = np.asarray(hull)
    return far[idx], tpr[idx], thresholds[idx]


def compute_eer(s: ScoreSet) -> tuple[float, float]:
    """Equal error rate and a balanced operating threshold.

    The rate walks the convex hull of the ROC operating points and linearly
    interpolates where FAR crosses FRR (exact crossings at a vertex are
    returned as-is), which keeps the estimate stable on small sets.
    Perfectly separated scores give 0.0, identical score distributions 0.5.
    The threshold is the sweep point where the empirical step-function FAR
    and FRR come closest, so |FAR - FRR| at the returned threshold is at
    most one count step for tie-free scores.
    """
    s.require_both_classes()
    far_steps, tpr_steps, thr_steps = _operating_points(s)
    far, tpr, _ = _upper_hull(far_steps, tpr_steps, thr_steps)
    gap = far - (1.0 - tpr)  # increases monotonically from -1 to +1 along the hull
    i = int(np.searchsorted(gap >= 0, True))
    if gap[i] == 0:
        eer = float(far[i])
    else:
        frac = -gap[i - 1] / (gap[i] - gap[i - 1])
        eer = float(far[i - 1] + frac * (far[i] - far[i - 1]))
    balance = np.abs(far_steps - (1.0 - tpr_steps))
    return eer, float(thr_steps[int(np.argmin(balance))])


def far_frr_at(s: ScoreSet, threshold: float) -> tuple[float, float]:
    """Empirical step-function rates at a threshold (accept iff score >= t)."""
    genuine = s.scores[s.labels == 1]
    replay = s.scores[s.labels == 0]
    return float((replay >= threshold).mean()), float((genuine < threshold).mean())


@dataclass(frozen=True)
class RunSummary:
    """Mean EER over repeated runs with a Student-t 95% confidence interval."""

    eers: tuple[float, ...]
    mean: float
    std: float
    ci95_half_width: float


def t_critical_95(df: int) -> float:
    if df < 1:
        raise ValueError("need at least two runs for a confidence interval")
    if df <= len(_T_TABLE_95):
        return _T_TABLE_95[df - 1]
    return float(student_t.ppf(0.975, df))


def summarize_runs(eers) -> RunSummary:
    values = np.asarray(list(eers), dtype=np.float64)
    if values.size < 2:
        raise ValueError(f"need at least 2 runs to summarize, got {values.size}")
    mean = float(values.mean())
    std = float(values.std(ddof=1))
    half_width = t_critical_95(values.size - 1) * std / np.sqrt(values.size)
    return RunSummary(eers=tuple(float(v) for v in values), mean=mean, std=std,
                      ci95_half_width=float(half_width))


@dataclass(frozen=True)
class EvalConfig:
    """Everything the evaluation loop needs besides the manifest itself."""

    geometry: MicArrayGeometry
    device: str | None = None
    grid: AngularGrid = field(default_factory=default_grid)
    stft_config: StftConfig = field(default_factory=StftConfig)
    kind: BeamformerKind = field(default_factory=DelayAndSum)
    bands: BandConfig | None = None
    normalize_map: bool = True
    log_compress_map: bool = False
    train_config: TrainConfig = field(default_factory=TrainConfig)
    runs: int = 5
    holdout_env: str | None = None
    threads: int = 1
    wav_root: str | None = None

    def resolve_path(self, wav_path: str) -> Path:
        path = Path(wav_path)
        if not path.is_absolute() and self.wav_root:
            path = Path(self.wav_root) / path
        return path


def extract_maps(entries, cfg: EvalConfig) -> np.ndarray:
    """Acoustic maps for manifest entries, shape (n, K, A, E).

    Entries are independent; extraction may fan out over a thread pool but
    results are assembled in manifest order.  One steering field per sample
    rate is built lazily and shared, which amortizes the steering
    exponentials across the manifest (results are identical either way).
    """
    steering_cache: dict[int, object] = {}

    def steering_for(sample_rate: int):
        field = steering_cache.get(sample_rate)
        if field is None:
            bands = cfg.bands or default_bands(sample_rate)
            n_fft = cfg.stft_config.n_fft
            freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
            bins = np.concatenate(bands.bin_indices(freqs))
            field = build_steering_field(cfg.geometry, cfg.grid, freqs[bins])
            steering_cache[sample_rate] = field
        return field

    def one(entry: ManifestEntry) -> np.ndarray:
        path = cfg.resolve_path(entry.wav_path)
        if not path.exists():
            raise FileNotFoundError(f"audio file {path} from manifest does not exist")
        seg = read_wav(path)
        return compute_acoustic_map(
            seg,
            cfg.geometry,
            grid=cfg.grid,
            stft_config=cfg.stft_config,
            kind=cfg.kind,
            bands=cfg.bands,
            normalize_map=cfg.normalize_map,
            log_compress_map=cfg.log_compress_map,
            steering_field=steering_for(seg.sample_rate),
        ).values

    entries = list(entries)
    if cfg.threads <= 1 or len(entries) <= 1:
        maps = [one(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            maps = list(pool.map(one, entries))
    return np.stack(maps)


def _eer_or_none(scores: np.ndarray, labels: np.ndarray, context: str):
    trial = ScoreSet(scores=scores, labels=labels)
    if trial.labels.min() == trial.labels.max():
        warnings.warn(f"{context}: only one class present, EER undefined", stacklevel=2)
        return None
    eer, _ = compute_eer(trial)
    return eer


def evaluate(entries, mode: str, cfg: EvalConfig) -> dict:
    """Train/score per the protocol and report EERs with confidence intervals.

    One model per device, ``cfg.runs`` independent trainings that differ
    only in seed, and a per-environment EER breakdown.  The returned dict
    is JSON-serializable.
    """
    train_entries, test_entries = make_splits(
        entries, mode, holdout_env=cfg.holdout_env, device=cfg.device
    )
    train_maps = extract_maps(train_entries, cfg)
    test_maps = extract_maps(test_entries, cfg)
    train_labels = np.array([e.class_index for e in train_entries])
    test_labels = np.array([e.class_index for e in test_entries])
    test_envs = np.array([e.environment for e in test_entries])

    seeds = [cfg.train_config.seed + run for run in range(cfg.runs)]
    overall_eers = []
    env_eers: dict[str, list] = {env: [] for env in sorted(set(test_envs))}
    for seed in seeds:
        result = train(train_maps, train_labels, replace(cfg.train_config, seed=seed))
        scores = result.net.predict_score(test_maps)
        eer, _ = compute_eer(ScoreSet(scores=scores, labels=test_labels))
        overall_eers.append(eer)
        for env in env_eers:
            mask = test_envs == env
            env_eers[env].append(
                _eer_or_none(scores[mask], test_labels[mask], f"environment {env}")
            )

    def summary_dict(eers: list) -> dict | None:
        if any(e is None for e in eers):
            return None
        if len(eers) == 1:
            return {"per_run_eer": eers, "mean_eer": eers[0], "std": 0.0, "ci95_half_width": None}
        s = summarize_runs(eers)
        return {
            "per_run_eer": list(s.eers),
            "mean_eer": s.mean,
            "std": s.std,
            "ci95_half_width": s.ci95_half_width,
        }

    return {
        "device": cfg.device,
        "mode": mode,
        "holdout_environment": cfg.holdout_env,
        "beamformer": beamformer_name(cfg.kind),
        "runs": cfg.runs,
        "seeds": seeds,
        "train_size": len(train_entries),
        "test_size": len(test_entries),
        "overall": summary_dict(overall_eers),
        "per_environment": {env: summary_dict(eers) for env, eers in env_eers.items()},
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
