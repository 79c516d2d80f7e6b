import numpy as np
import pytest

from replaymap.evaluation import (
    ENVIRONMENTS,
    EvalConfig,
    ManifestEntry,
    ScoreSet,
    compute_eer,
    evaluate,
    far_frr_at,
    load_manifest,
    make_splits,
    roc_points,
    summarize_runs,
    t_critical_95,
    write_manifest,
)
from replaymap.geometry import builtin_geometry
from replaymap.nn.train import TrainConfig
from replaymap.simulate import (
    PlaneWaveSpec,
    SpeechLike,
    SYNTHETIC_BANDS,
    SYNTHETIC_STFT,
    simulate_plane_wave,
    synthetic_direction,
)
from replaymap.audio import write_wav


def eer_oracle(scores, labels):
    """Exhaustive-threshold EER oracle, independent of the production path.

    Enumerates every achievable (FAR, TPR) operating point by sweeping all
    thresholds, prunes to the least concave majorant by repeatedly deleting
    points on or under a chord, then interpolates the FAR = FRR crossing.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    genuine = scores[labels == 1]
    replay = scores[labels == 0]
    points = [(0.0, 0.0, float(scores.max()) + 1.0)]
    for th in sorted(set(scores), reverse=True):
        far = float(np.mean(replay >= th))
        tpr = float(np.mean(genuine >= th))
        points.append((far, tpr, float(th)))
    changed = True
    while changed:
        changed = False
        for i in range(1, len(points) - 1):
            x0, y0, _ = points[i - 1]
            x1, y1, _ = points[i]
            x2, y2, _ = points[i + 1]
            chord = y0 + (y2 - y0) * (x1 - x0) / (x2 - x0) if x2 > x0 else max(y0, y2)
            if y1 <= chord + 1e-15:
                del points[i]
                changed = True
                break
    for (x0, y0, t0), (x1, y1, t1) in zip(points, points[1:]):
        g0 = x0 + y0 - 1.0
        g1 = x1 + y1 - 1.0
        if g1 >= 0.0:
            if g1 == 0.0 and g0 < 0.0:
                return x1, t1
            frac = -g0 / (g1 - g0)
            return x0 + frac * (x1 - x0), t0 + frac * (t1 - t0)
    raise AssertionError("no crossing found")


def random_score_set(rng, n_genuine=None, n_replay=None, separation=0.0):
    n_genuine = n_genuine or int(rng.integers(3, 40))
    n_replay = n_replay or int(rng.integers(3, 40))
    genuine = rng.normal(separation, 1.0, n_genuine)
    replay = rng.normal(0.0, 1.0, n_replay)
    scores = np.concatenate([genuine, replay])
    labels = np.concatenate([np.ones(n_genuine, dtype=int), np.zeros(n_replay, dtype=int)])
    return ScoreSet(scores=scores, labels=labels)


class TestComputeEer:
    def test_perfect_separation(self):
        s = ScoreSet(scores=[0.9, 0.8, 0.1, 0.2], labels=[1, 1, 0, 0])
        eer, _ = compute_eer(s)
        assert eer == 0.0

    def test_identical_distributions(self):
        s = ScoreSet(scores=[0.5] * 6, labels=[1, 1, 1, 0, 0, 0])
        eer, _ = compute_eer(s)
        assert eer == pytest.approx(0.5)

    def test_one_error_each_side_crossing(self):
        s = ScoreSet(scores=[0.9, 0.4, 0.6, 0.1], labels=[1, 1, 0, 0])
        eer, _ = compute_eer(s)
        assert eer == pytest.approx(0.25)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            s = random_score_set(rng, separation=float(rng.uniform(0, 3)))
            eer, _ = compute_eer(s)
            expected, _ = eer_oracle(s.scores, s.labels)
            assert abs(eer - expected) < 1e-9

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            s = random_score_set(rng, separation=1.0)
            eer, _ = compute_eer(s)
            warped = ScoreSet(scores=np.exp(0.7 * s.scores) + 3.0, labels=s.labels)
            assert compute_eer(warped)[0] == pytest.approx(eer, abs=1e-12)

    def test_negating_scores_and_swapping_labels(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            s = random_score_set(rng, separation=1.0)
            flipped = ScoreSet(scores=-s.scores, labels=1 - s.labels)
            assert compute_eer(flipped)[0] == pytest.approx(compute_eer(s)[0], abs=1e-12)

    def test_bounds_and_fixed_point(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            s = random_score_set(rng, separation=float(rng.uniform(0, 2)))
            eer, threshold = compute_eer(s)
            assert 0.0 <= eer <= 1.0
            assert eer <= 0.5 + 1e-12  # higher score = more genuine + interpolation
            far, frr = far_frr_at(s, threshold)
            n_min = min((s.labels == 1).sum(), (s.labels == 0).sum())
            assert abs(far - frr) <= 1.0 / n_min + 1e-12

    def test_permuted_labels_near_half(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(0, 1, 1000)
        labels = rng.permutation(np.repeat([0, 1], 500))
        eer, _ = compute_eer(ScoreSet(scores=scores, labels=labels))
        assert abs(eer - 0.5) <= 0.1

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both classes"):
            compute_eer(ScoreSet(scores=[0.1, 0.2], labels=[1, 1]))


class TestRocPoints:
    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(0)
        s = random_score_set(rng)
        pts = roc_points(s)
        assert tuple(pts[0]) == (0.0, 0.0)
        assert tuple(pts[-1]) == (1.0, 1.0)
        assert np.all(np.diff(pts[:, 0]) >= 0)
        assert np.all(np.diff(pts[:, 1]) >= 0)

    def test_perfect_scores_pass_through_corner(self):
        s = ScoreSet(scores=[0.9, 0.8, 0.1, 0.2], labels=[1, 1, 0, 0])
        pts = roc_points(s)
        assert any((far, tpr) == (0.0, 1.0) for far, tpr in pts)

    def test_invariant_to_monotone_transform(self):
        rng = np.random.default_rng(1)
        s = random_score_set(rng)
        warped = ScoreSet(scores=np.tanh(s.scores) * 2 + 5, labels=s.labels)
        np.testing.assert_array_equal(roc_points(s), roc_points(warped))

    def test_trapezoid_auc_matches_pairwise_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            # quantized scores so ties genuinely occur
            n_g, n_r = int(rng.integers(3, 25)), int(rng.integers(3, 25))
            genuine = np.round(rng.normal(0.5, 1, n_g), 1)
            replay = np.round(rng.normal(0, 1, n_r), 1)
            s = ScoreSet(
                scores=np.concatenate([genuine, replay]),
                labels=np.concatenate([np.ones(n_g, int), np.zeros(n_r, int)]),
            )
            pts = roc_points(s)
            auc = np.trapezoid(pts[:, 1], pts[:, 0])
            pairwise = (
                np.sum(genuine[:, None] > replay[None, :])
                + 0.5 * np.sum(genuine[:, None] == replay[None, :])
            ) / (n_g * n_r)
            assert abs(auc - pairwise) < 1e-12


class TestSummarizeRuns:
    def test_all_equal_zero_half_width(self):
        summary = summarize_runs([12.0] * 5)
        assert summary.mean == 12.0
        assert summary.ci95_half_width == 0.0

    def test_hand_computed_case(self):
        summary = summarize_runs([10.0, 10.0, 10.0, 10.0, 15.0])
        assert summary.mean == pytest.approx(11.0, abs=1e-12)
        assert summary.std == pytest.approx(np.sqrt(5.0), abs=1e-12)
        assert summary.ci95_half_width == pytest.approx(2.776, abs=1e-9)

    def test_single_run_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            summarize_runs([10.0])

    def test_t_table(self):
        assert t_critical_95(4) == 2.776
        assert t_critical_95(1) == 12.706
        assert t_critical_95(40) == pytest.approx(2.021, abs=0.01)
        with pytest.raises(ValueError):
            t_critical_95(0)


def make_entries(n_per_env=4, device="D3"):
    entries = []
    index = 0
    for env in ENVIRONMENTS:
        for i in range(n_per_env):
            entries.append(
                ManifestEntry(
                    wav_path=f"{env}_{i}.wav",
                    label="genuine" if index % 2 == 0 else "replay",
                    device=device,
                    environment=env,
                    speaker_id=f"spk{i % 3}",
                    split="train" if i < n_per_env // 2 else "test",
                )
            )
            index += 1
    return entries


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = make_entries()
        path = tmp_path / "m.csv"
        write_manifest(entries, path)
        assert load_manifest(path) == entries

    def test_two_row_file(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "wav_path,label,device,environment,speaker_id,split\n"
            "a.wav,genuine,D1,EnvA,s1,train\n"
            "b.wav,replay,D2,EnvB,s2,test\n",
            encoding="utf-8",
        )
        entries = load_manifest(path)
        assert len(entries) == 2
        assert entries[0].label == "genuine" and entries[1].device == "D2"

    def test_bad_label_names_row(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "wav_path,label,device,environment,speaker_id,split\n"
            "a.wav,genuine,D1,EnvA,s1,train\n"
            "b.wav,spoofed,D1,EnvA,s1,train\n",
            encoding="utf-8",
        )
        with pytest.raises(ValueError, match="row 3"):
            load_manifest(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("path,label\na,b\n", encoding="utf-8")
        with pytest.raises(ValueError, match="header"):
            load_manifest(path)


class TestMakeSplits:
    def test_env_independent_partition_sizes(self):
        entries = make_entries(n_per_env=10)
        train_set, test_set = make_splits(entries, "env-independent", holdout_env="EnvD")
        assert len(train_set) == 30 and len(test_set) == 10
        assert all(e.environment != "EnvD" for e in train_set)
        assert all(e.environment == "EnvD" for e in test_set)

    def test_env_dependent_respects_flags(self):
        entries = make_entries(n_per_env=6)
        train_set, test_set = make_splits(entries, "env-dependent")
        assert all(e.split == "train" for e in train_set)
        assert all(e.split == "test" for e in test_set)
        assert len(train_set) + len(test_set) == len(entries)

    def test_device_filter_first(self):
        entries = make_entries(device="D1") + make_entries(device="D2")
        train_set, test_set = make_splits(entries, "env-dependent", device="D1")
        assert all(e.device == "D1" for e in train_set + test_set)

    def test_holdout_sweep_is_a_partition(self):
        rng = np.random.default_rng(0)
        entries = []
        for i in range(40):
            entries.append(
                ManifestEntry(
                    wav_path=f"{i}.wav",
                    label=("genuine", "replay")[int(rng.integers(2))],
                    device="D2",
                    environment=ENVIRONMENTS[int(rng.integers(4))],
                    speaker_id="s",
                    split=("train", "test")[int(rng.integers(2))],
                )
            )
        seen = []
        for env in ENVIRONMENTS:
            _, test_set = make_splits(entries, "env-independent", holdout_env=env)
            seen.extend(test_set)
        assert sorted(e.wav_path for e in seen) == sorted(e.wav_path for e in entries)

    def test_empty_side_rejected(self):
        entries = [e for e in make_entries() if e.environment == "EnvA"]
        with pytest.raises(ValueError, match="empty"):
            make_splits(entries, "env-independent", holdout_env="EnvB")
        with pytest.raises(ValueError):
            make_splits(entries, "bogus-mode")


@pytest.fixture(scope="module")
def synthetic_corpus(tmp_path_factory):
    """Small on-disk corpus of simulated hemisphere recordings + manifest."""
    root = tmp_path_factory.mktemp("corpus")
    geometry = builtin_geometry("hex-6")
    rng = np.random.default_rng(42)
    entries = []
    for i in range(48):
        label = i % 2
        spec = PlaneWaveSpec(
            direction=synthetic_direction(label, rng),
            signal=SpeechLike(f0_hz=rng.uniform(120, 220)),
            snr_db=20.0,
            duration_s=0.25,
            sample_rate=16000,
        )
        seg = simulate_plane_wave(geometry, spec, rng)
        name = f"clip{i:03d}.wav"
        write_wav(root / name, seg, sample_format="float32")
        entries.append(
            ManifestEntry(
                wav_path=name,
                label="genuine" if label == 1 else "replay",
                device="D3",
                environment=ENVIRONMENTS[(i // 2) % 2],
                speaker_id=f"spk{i % 5}",
                split="train" if i < 32 else "test",
            )
        )
    return root, geometry, entries


class TestEvaluate:
    def _config(self, root, geometry, runs=2):
        return EvalConfig(
            geometry=geometry,
            device="D3",
            stft_config=SYNTHETIC_STFT,
            bands=SYNTHETIC_BANDS,
            train_config=TrainConfig(epochs=16, batch_size=16, seed=0),
            runs=runs,
            threads=2,
            wav_root=str(root),
        )

    def test_env_dependent_report(self, synthetic_corpus):
        root, geometry, entries = synthetic_corpus
        report = evaluate(entries, "env-dependent", self._config(root, geometry))
        assert report["device"] == "D3" and report["mode"] == "env-dependent"
        assert report["train_size"] == 32 and report["test_size"] == 16
        assert len(report["overall"]["per_run_eer"]) == 2
        assert report["overall"]["mean_eer"] <= 0.3  # easily separable data
        assert set(report["per_environment"]) == {"EnvA", "EnvB"}
        for cell in report["per_environment"].values():
            assert cell is None or 0.0 <= cell["mean_eer"] <= 1.0
        import json

        json.dumps(report)  # report must be JSON-serializable

    def test_env_independent_report(self, synthetic_corpus):
        root, geometry, entries = synthetic_corpus
        cfg = self._config(root, geometry, runs=1)
        from dataclasses import replace

        report = evaluate(entries, "env-independent", replace(cfg, holdout_env="EnvB"))
        assert report["holdout_environment"] == "EnvB"
        assert set(report["per_environment"]) == {"EnvB"}
        assert report["overall"]["ci95_half_width"] is None  # single run

    def test_extraction_order_independent_of_threads(self, synthetic_corpus):
        from dataclasses import replace

        from replaymap.evaluation import extract_maps

        root, geometry, entries = synthetic_corpus
        cfg = self._config(root, geometry)
        serial = extract_maps(entries[:8], replace(cfg, threads=1))
        threaded = extract_maps(entries[:8], replace(cfg, threads=4))
        np.testing.assert_array_equal(serial, threaded)

    def test_missing_audio_rejected(self, synthetic_corpus):
        root, geometry, entries = synthetic_corpus
        broken = entries[:8] + [
            ManifestEntry(
                wav_path="missing.wav", label="genuine", device="D3",
                environment="EnvA", speaker_id="s", split="test",
            )
        ]
        with pytest.raises(FileNotFoundError):
            evaluate(broken, "env-dependent", self._config(root, geometry, runs=1))
