import cmath
import json
import math

import numpy as np
import pytest

from replaymap.geometry import (
    AngularGrid,
    Direction,
    MicArrayGeometry,
    SPEED_OF_SOUND,
    build_steering_field,
    builtin_geometry,
    default_grid,
    load_geometry,
    propagation_delays,
    resolve_geometry,
    save_geometry,
    steering_vector,
    unit_direction,
)


def scalar_steering(positions, f_hz, azimuth_deg, elevation_deg):
    """Independent scalar evaluation of the steering formula (test oracle)."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    u = (math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))
    out = []
    for p in positions:
        dot = p[0] * u[0] + p[1] * u[1] + p[2] * u[2]
        out.append(cmath.exp(-1j * 2.0 * math.pi * f_hz * dot / SPEED_OF_SOUND))
    return np.array(out)


def random_geometry(rng, n=None):
    n = n or int(rng.integers(1, 9))
    positions = rng.uniform(-0.2, 0.2, (n, 3))
    return MicArrayGeometry(name=f"random-{n}", positions=positions)


class TestUnitDirection:
    def test_axis_cases(self):
        np.testing.assert_allclose(unit_direction(Direction(0, 0)), [1, 0, 0], atol=1e-12)
        np.testing.assert_allclose(unit_direction(Direction(90, 0)), [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(unit_direction(Direction(0, 90)), [0, 0, 1], atol=1e-12)

    def test_unit_norm_random(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            d = Direction(rng.uniform(-90, 90), rng.uniform(-90, 90))
            assert abs(np.linalg.norm(unit_direction(d)) - 1.0) < 1e-12

    def test_domain_enforced(self):
        with pytest.raises(ValueError):
            Direction(120.0, 0.0)
        with pytest.raises(ValueError):
            Direction(0.0, float("nan"))


class TestSteeringVector:
    def test_single_mic_at_origin(self):
        g = MicArrayGeometry(name="one", positions=np.zeros((1, 3)))
        a = steering_vector(g, 1234.0, Direction(33, -12))
        np.testing.assert_allclose(a, [1 + 0j], atol=1e-15)

    def test_zero_frequency_all_ones(self):
        g = random_geometry(np.random.default_rng(1))
        a = steering_vector(g, 0.0, Direction(10, 20))
        np.testing.assert_allclose(a, np.ones(g.channel_count), atol=1e-15)

    def test_two_mic_phases(self):
        # mics at +-0.1 m along x, wave from (0, 0): phases are -+ 2*pi*0.1
        g = MicArrayGeometry(name="pair", positions=[[0.1, 0, 0], [-0.1, 0, 0]])
        a = steering_vector(g, 343.0, Direction(0, 0))
        expected = np.exp(-1j * 2 * np.pi * (343.0 / SPEED_OF_SOUND) * np.array([0.1, -0.1]))
        np.testing.assert_allclose(a, expected, atol=1e-12)

    def test_unit_modulus_and_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            g = random_geometry(rng)
            f = rng.uniform(0, 8000)
            az, el = rng.uniform(-90, 90, 2)
            a = steering_vector(g, f, Direction(az, el))
            assert np.max(np.abs(np.abs(a) - 1.0)) < 1e-12
            np.testing.assert_allclose(a, scalar_steering(g.positions, f, az, el), atol=1e-12)

    def test_conjugate_symmetry_for_mirror_symmetric_array(self):
        # hexagon: position k maps to -position at k+3
        g = builtin_geometry("hex-6", 0.07)
        a = steering_vector(g, 2500.0, Direction(41, 13))
        for i in range(6):
            assert abs(a[i] - np.conj(a[(i + 3) % 6])) < 1e-12

    def test_translation_multiplies_by_global_phase(self):
        rng = np.random.default_rng(3)
        g = random_geometry(rng, n=5)
        offset = rng.uniform(-1, 1, 3)
        g2 = MicArrayGeometry(name="shifted", positions=g.positions + offset)
        d = Direction(-25, 40)
        f = 1700.0
        a1 = steering_vector(g, f, d)
        a2 = steering_vector(g2, f, d)
        ratio = a2 / a1
        assert np.max(np.abs(ratio - ratio[0])) < 1e-12
        assert abs(abs(ratio[0]) - 1.0) < 1e-12
        # |a^H x| is therefore unchanged when x comes from the translated array
        x = a2 * (0.3 - 0.8j)
        assert abs(np.abs(a2.conj() @ x) - np.abs(a1.conj() @ (a1 * (0.3 - 0.8j)))) < 1e-10

    def test_rejects_negative_frequency(self):
        g = random_geometry(np.random.default_rng(0))
        with pytest.raises(ValueError):
            steering_vector(g, -1.0, Direction(0, 0))


class TestSteeringField:
    def test_single_mic_small_grid_all_ones(self):
        g = MicArrayGeometry(name="one", positions=np.zeros((1, 3)))
        grid = AngularGrid(azimuths_deg=[-10, 10], elevations_deg=[-5, 5])
        field = build_steering_field(g, grid, [500.0])
        assert field.values.shape == (1, 2, 2, 1)
        np.testing.assert_allclose(field.values, 1.0, atol=1e-15)

    def test_default_grid_shape(self):
        g = builtin_geometry("linear-4")
        freqs = np.linspace(100, 4000, 6)
        field = build_steering_field(g, default_grid(), freqs)
        assert field.values.shape == (6, 91, 41, 4)

    def test_spot_check_against_steering_vector(self):
        rng = np.random.default_rng(11)
        g = random_geometry(rng, n=3)
        grid = AngularGrid(azimuths_deg=[-60, -20, 10, 70], elevations_deg=[-45, 0, 45])
        freqs = [250.0, 1000.0, 3150.0]
        field = build_steering_field(g, grid, freqs)
        for _ in range(10):
            fi = int(rng.integers(0, 3))
            ai = int(rng.integers(0, 4))
            ei = int(rng.integers(0, 3))
            expected = steering_vector(g, freqs[fi], grid.direction(ai, ei))
            np.testing.assert_allclose(field.values[fi, ai, ei], expected, atol=1e-12)

    def test_unit_modulus_everywhere(self):
        g = builtin_geometry("hex-7", 0.06)
        grid = AngularGrid(azimuths_deg=[-50, 0, 50], elevations_deg=[-30, 30])
        field = build_steering_field(g, grid, [100.0, 7000.0])
        assert np.max(np.abs(np.abs(field.values) - 1.0)) < 1e-12

    def test_rejects_empty_and_unsorted_frequencies(self):
        g = builtin_geometry("linear-2")
        grid = AngularGrid(azimuths_deg=[0.0], elevations_deg=[0.0])
        with pytest.raises(ValueError):
            build_steering_field(g, grid, [])
        with pytest.raises(ValueError):
            build_steering_field(g, grid, [500.0, 100.0])


class TestBuiltinGeometries:
    def test_linear_2_symmetric_spacing(self):
        g = builtin_geometry("linear-2", spacing=0.1)
        np.testing.assert_allclose(g.positions, [[0, -0.05, 0], [0, 0.05, 0]], atol=1e-15)

    def test_linear_4_even_spacing(self):
        g = builtin_geometry("linear-4", spacing=0.04)
        assert g.channel_count == 4
        np.testing.assert_allclose(np.diff(g.positions[:, 1]), 0.04, atol=1e-15)
        np.testing.assert_allclose(g.positions[:, [0, 2]], 0.0, atol=1e-15)
        np.testing.assert_allclose(g.positions.sum(axis=0), 0.0, atol=1e-15)

    def test_hex_7_vertices_plus_origin(self):
        r = 0.045
        g = builtin_geometry("hex-7", spacing=r)
        assert g.channel_count == 7
        np.testing.assert_allclose(np.linalg.norm(g.positions[:6], axis=1), r, atol=1e-15)
        np.testing.assert_allclose(g.positions[6], 0.0, atol=1e-15)
        # regular hexagon: consecutive vertices are one circumradius apart
        ring = np.vstack([g.positions[:6], g.positions[0]])
        np.testing.assert_allclose(np.linalg.norm(np.diff(ring, axis=0), axis=1), r, atol=1e-12)

    def test_unknown_id_and_bad_spacing(self):
        with pytest.raises(ValueError):
            builtin_geometry("octagon-8")
        with pytest.raises(ValueError):
            builtin_geometry("hex-6", spacing=0.0)


class TestGeometryIO:
    def test_round_trip(self, tmp_path):
        g = builtin_geometry("hex-6", 0.05)
        path = tmp_path / "hex.json"
        save_geometry(g, path)
        loaded = load_geometry(path)
        assert loaded.name == "hex-6"
        np.testing.assert_allclose(loaded.positions, g.positions)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json {", encoding="utf-8")
        with pytest.raises(ValueError):
            load_geometry(path)

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "nokeys.json"
        path.write_text(json.dumps({"positions": [[0, 0, 0]]}), encoding="utf-8")
        with pytest.raises(ValueError):
            load_geometry(path)

    def test_invariant_violations(self):
        with pytest.raises(ValueError):
            MicArrayGeometry(name="dup", positions=[[0.1, 0, 0], [0.1, 0, 0]])
        with pytest.raises(ValueError):
            MicArrayGeometry(name="empty", positions=np.zeros((0, 3)))
        with pytest.raises(ValueError):
            MicArrayGeometry(name="inf", positions=[[np.inf, 0, 0]])

    def test_resolve_geometry(self, tmp_path):
        assert resolve_geometry("linear-2").channel_count == 2
        g = builtin_geometry("hex-6")
        path = tmp_path / "g.json"
        save_geometry(g, path)
        assert resolve_geometry(str(path)).channel_count == 6
        with pytest.raises(ValueError):
            resolve_geometry("no-such-geometry")


class TestAngularGrid:
    def test_default_grid_sizes_and_steps(self):
        grid = default_grid()
        assert grid.shape == (91, 41)
        np.testing.assert_allclose(np.diff(grid.azimuths_deg), 2.0, atol=1e-12)
        np.testing.assert_allclose(np.diff(grid.elevations_deg), 4.5, atol=1e-12)
        assert grid.azimuths_deg[0] == -90.0 and grid.azimuths_deg[-1] == 90.0

    def test_validation(self):
        with pytest.raises(ValueError):
            AngularGrid(azimuths_deg=[10, 0], elevations_deg=[0])
        with pytest.raises(ValueError):
            AngularGrid(azimuths_deg=[0], elevations_deg=[-100, 0])
        with pytest.raises(ValueError):
            AngularGrid(azimuths_deg=[], elevations_deg=[0])

    def test_delays_match_steering_phase(self):
        rng = np.random.default_rng(5)
        g = random_geometry(rng, n=4)
        d = Direction(12, -34)
        tau = propagation_delays(g, d)
        a = steering_vector(g, 700.0, d)
        np.testing.assert_allclose(a, np.exp(-2j * np.pi * 700.0 * tau), atol=1e-15)
