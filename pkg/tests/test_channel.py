import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.channel.schemas import Scene
from app.channel.service import (
    clean_signals,
    comm_channel_stack,
    comm_channel_vector,
    comm_measurement_matrix,
    generate_pilots,
    kron_diagonal_columns,
    noise_variance_for_snr,
    radar_channel_matrix,
    radar_measurement_matrix,
    radar_measurement_matrix_kron,
    synthesize_observation,
)
from app.geometry.schemas import Position


class TestChannelSynthesis:
    def test_radar_channel_is_complex_symmetric(self, on_grid_scene, small_array):
        h = radar_channel_matrix(on_grid_scene, small_array, 16, 30e3)
        assert h.shape == (8, 8)
        assert_allclose(h, h.T, atol=1e-14)

    def test_time_offset_is_a_common_phase(self, on_grid_scene, small_array):
        synced = on_grid_scene.model_copy(update={"time_offset": 0.0})
        n, f0 = 32, 30e3
        ratio = comm_channel_vector(on_grid_scene, small_array, n, f0) / comm_channel_vector(
            synced, small_array, n, f0
        )
        expected = np.exp(-2j * np.pi * n * f0 * on_grid_scene.time_offset)
        assert_allclose(ratio, np.full(8, expected), rtol=1e-10)

    def test_los_only_channel(self, small_array):
        scene = Scene(user=Position(x=30.0, y=0.0), los_gain=2.0 + 0j)
        stack = comm_channel_stack(scene, small_array, [0.0, 1e6])
        # user lies on the array axis: broadside response scaled by the LoS gain
        assert_allclose(stack, np.full((2, 8), 2.0 / np.sqrt(8)), atol=1e-12)


class TestPilots:
    def test_shapes_and_normalization(self, rng):
        pilots = generate_pilots(16, 256, 32, 30e3, rng)
        assert_array_equal(pilots.subcarriers, 32 * np.arange(1, 9))
        assert pilots.num_pilots == 8
        assert_allclose(np.linalg.norm(pilots.downlink, axis=1), np.ones(8))
        assert_allclose(np.abs(pilots.uplink), np.ones(8))
        assert_allclose(pilots.frequencies, pilots.subcarriers * 30e3)


class TestMeasurementMatrices:
    def test_representation_matches_synthesis(
        self, on_grid_scene, truth_params, small_array, small_pilots
    ):
        signal_r, signal_c = clean_signals(on_grid_scene, small_array, small_pilots)
        phi_r = radar_measurement_matrix(truth_params, small_array, small_pilots)
        phi_c = comm_measurement_matrix(truth_params, small_array, small_pilots)
        assert phi_r.shape == (8 * 4, 17)
        assert_allclose(phi_r @ on_grid_scene.gains_r, signal_r, rtol=1e-10, atol=1e-12)
        assert_allclose(phi_c @ on_grid_scene.gains_c, signal_c, rtol=1e-10, atol=1e-12)

    def test_kronecker_columns(self, truth_params, small_array, small_pilots):
        direct = radar_measurement_matrix(truth_params, small_array, small_pilots)
        kron = radar_measurement_matrix_kron(truth_params, small_array, small_pilots)
        assert kron.shape == (direct.shape[0], 17 * 17)
        assert_allclose(kron[:, kron_diagonal_columns(17)], direct, atol=1e-14)

    def test_diagonal_column_indices(self):
        assert_array_equal(kron_diagonal_columns(3), [0, 4, 8])


class TestNoise:
    def test_snr_scaling(self):
        signal = np.full(10, 2.0 + 0j)
        assert noise_variance_for_snr(signal, 10.0) == pytest.approx(0.4)

    def test_zero_signal_falls_back_to_unit_power(self):
        assert noise_variance_for_snr(np.zeros(4, dtype=complex), 20.0) == pytest.approx(0.01)

    def test_observation_is_reproducible(self, on_grid_scene, small_array, small_pilots):
        first = synthesize_observation(on_grid_scene, small_array, small_pilots, 0.1, 0.2, 7)
        second = synthesize_observation(on_grid_scene, small_array, small_pilots, 0.1, 0.2, 7)
        assert_array_equal(first.y_r, second.y_r)
        assert_array_equal(first.y_c, second.y_c)

    def test_noiseless_observation_equals_clean_signal(
        self, on_grid_scene, small_array, small_pilots
    ):
        observation = synthesize_observation(
            on_grid_scene, small_array, small_pilots, 0.0, 0.0, 0
        )
        signal_r, signal_c = clean_signals(on_grid_scene, small_array, small_pilots)
        assert_array_equal(observation.y_r, signal_r)
        assert_array_equal(observation.y_c, signal_c)
