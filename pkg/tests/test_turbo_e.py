import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from app.channel.service import synthesize_observation
from app.harness.validation import enumerate_module_b, gaussian_conditioning
from app.prior.schemas import PriorHyperParams
from app.prior.service import default_hyper_params
from app.solver.service import observation_blocks
from app.turbo_e.schemas import GaussianMessage, ObservationBlock, TurboControl
from app.turbo_e.service import (
    _factor,
    extrinsic_message,
    initial_message,
    lmmse_module_a,
    module_b,
    spike_slab_branch_update,
    turbo_estep,
)


def random_message(rng, size):
    mean = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return GaussianMessage(mean=mean, var=rng.uniform(0.05, 2.0, size))


def random_hyper(rng, size, **overrides):
    values = {
        "lambda_": rng.uniform(0.05, 0.95),
        "rho_r": rng.uniform(0.05, 0.95),
        "rho_c": rng.uniform(0.05, 0.95),
        "slab_var_r": rng.uniform(0.5, 2.0, size),
        "slab_var_c": rng.uniform(0.5, 2.0, size),
        "user_echo_prior": None,
        "los_prior": None,
    }
    values.update(overrides)
    return PriorHyperParams(**values)


class TestGaussianMessage:
    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValidationError):
            GaussianMessage(mean=np.zeros(2), var=np.array([1.0, 0.0]))

    def test_split_and_stack(self, rng):
        message = random_message(rng, 6)
        radar, comm = message.split()
        assert radar.size == comm.size == 3
        assert_array_equal(GaussianMessage.stack(radar, comm).mean, message.mean)


class TestExtrinsic:
    def test_subtracts_prior_information(self):
        ext = extrinsic_message(
            np.array([1.0 + 1j]), np.array([0.5]), np.array([0.0j]), np.array([1.0])
        )
        assert ext.var[0] == pytest.approx(1.0)
        assert ext.mean[0] == pytest.approx(2.0 + 2j)

    def test_precision_floor(self):
        ext = extrinsic_message(
            np.array([0.0j]), np.array([2.0]), np.array([0.0j]), np.array([1.0]), var_max=1e6
        )
        assert ext.var[0] == pytest.approx(1e6)


class TestModuleA:
    def test_matches_gaussian_conditioning(self, rng):
        for _ in range(10):
            cols = int(rng.integers(2, 20))
            rows = int(rng.integers(cols, 2 * cols))
            phi = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
            y = rng.standard_normal(rows) + 1j * rng.standard_normal(rows)
            prior = random_message(rng, cols)
            result = lmmse_module_a(ObservationBlock(y=y, phi=phi, noise_var=0.3), prior)
            mean, cov = gaussian_conditioning(y, phi, 0.3, prior.mean, prior.var)
            assert_allclose(result.post_mean, mean, rtol=1e-8, atol=1e-10)
            assert_allclose(result.post_cov, cov, rtol=1e-8, atol=1e-10)
            assert not result.regularized

    def test_block_checks_row_count(self):
        with pytest.raises(ValidationError):
            ObservationBlock(y=np.zeros(3), phi=np.zeros((4, 2)), noise_var=1.0)

    def test_singular_system_is_regularized(self, caplog):
        with caplog.at_level(logging.WARNING):
            _, regularized = _factor(np.zeros((3, 3), dtype=complex))
        assert regularized
        assert "jitter" in caplog.text


class TestSpikeSlab:
    def test_certain_activity_is_gaussian_posterior(self):
        update = spike_slab_branch_update(np.array([2.0 + 0j]), 1.0, 3.0, 1.0)
        assert update.post_active_prob[0] == pytest.approx(1.0)
        assert update.post_mean[0] == pytest.approx(1.5)
        assert update.post_var[0] == pytest.approx(0.75)

    def test_impossible_activity_is_zero(self):
        update = spike_slab_branch_update(np.array([2.0 + 0j]), 1.0, 3.0, 0.0)
        assert update.post_active_prob[0] == 0.0
        assert update.post_mean[0] == 0.0
        assert update.post_var[0] == 0.0

    def test_large_observation_is_active(self):
        update = spike_slab_branch_update(np.array([50.0 + 0j]), 1.0, 1.0, 0.01)
        assert update.post_active_prob[0] > 0.999


class TestModuleB:
    @pytest.mark.parametrize("size", [1, 2, 3])
    def test_matches_enumeration(self, rng, size):
        for _ in range(10):
            hyper = random_hyper(rng, size)
            message = random_message(rng, 2 * size)
            state, _ = module_b(message, hyper)
            oracle = enumerate_module_b(message, hyper)
            for key, expected in oracle.items():
                assert_allclose(getattr(state, key), expected, rtol=0, atol=1e-9, err_msg=key)

    def test_separate_mode_uses_independent_branches(self, rng):
        hyper = random_hyper(rng, 4)
        message = random_message(rng, 8)
        state, _ = module_b(message, hyper, joint=False)
        radar, _ = message.split()
        branch = spike_slab_branch_update(
            radar.mean, radar.var, hyper.slab_var_r, hyper.lambda_ * hyper.rho_r
        )
        assert_allclose(state.support_prob_r, branch.post_active_prob)
        either = 1 - (1 - state.support_prob_r) * (1 - state.support_prob_c)
        assert_allclose(state.support_prob_joint, either)

    def test_fixed_index_zero(self, rng):
        hyper = random_hyper(rng, 3, user_echo_prior=0.0, los_prior=1.0)
        state, _ = module_b(random_message(rng, 6), hyper)
        assert state.support_prob_r[0] == 0.0
        assert state.support_prob_c[0] == pytest.approx(1.0)
        assert state.support_prob_joint[0] == pytest.approx(1.0)

    def test_joint_prior_couples_branches(self):
        hyper = random_hyper(
            np.random.default_rng(0),
            1,
            lambda_=0.05,
            rho_r=0.5,
            rho_c=0.5,
            slab_var_r=np.ones(1),
            slab_var_c=np.ones(1),
        )
        weak_radar = np.array([0.6 + 0j])
        strong_comm = GaussianMessage(
            mean=np.concatenate([weak_radar, [5.0 + 0j]]), var=np.array([0.1, 0.1])
        )
        silent_comm = GaussianMessage(
            mean=np.concatenate([weak_radar, [0.0j]]), var=np.array([0.1, 0.1])
        )
        coupled, _ = module_b(strong_comm, hyper)
        alone, _ = module_b(silent_comm, hyper)
        assert coupled.support_prob_r[0] > alone.support_prob_r[0]


class TestTurboEStep:
    def test_initial_message_variances(self):
        hyper = default_hyper_params(2, 2, 1, 9)
        message = initial_message(hyper)
        radar, comm = message.split()
        assert radar.var[0] == pytest.approx(1.0)
        assert radar.var[1] == pytest.approx(hyper.lambda_ * hyper.rho_r)
        assert comm.var[1] == pytest.approx(hyper.lambda_ * hyper.rho_c)

    def test_noiseless_recovery_at_true_parameters(
        self, on_grid_scene, truth_params, small_array, small_pilots, small_grid
    ):
        observation = synthesize_observation(on_grid_scene, small_array, small_pilots, 0.0, 0.0, 0)
        blocks = observation_blocks(truth_params, observation, small_array, small_pilots)
        hyper = default_hyper_params(2, 3, 1, small_grid.num_points)
        state = turbo_estep(*blocks, hyper, ctrl=TurboControl(max_iters=50))

        assert_array_equal(state.support_prob_r > 0.5, on_grid_scene.supports.s_r)
        assert_array_equal(state.support_prob_c > 0.5, on_grid_scene.supports.s_c)
        for estimate, truth in (
            (state.x_mean_r, on_grid_scene.gains_r),
            (state.x_mean_c, on_grid_scene.gains_c),
        ):
            assert np.linalg.norm(estimate - truth) / np.linalg.norm(truth) < 1e-6
        assert state.dense_cov_r.shape == (17, 17)
        assert state.message_to_a.size == 34

    def test_non_convergence_is_flagged(
        self, on_grid_scene, truth_params, small_array, small_pilots, small_grid
    ):
        observation = synthesize_observation(
            on_grid_scene, small_array, small_pilots, 0.05, 0.05, 3
        )
        blocks = observation_blocks(truth_params, observation, small_array, small_pilots)
        hyper = default_hyper_params(2, 3, 1, small_grid.num_points)
        state = turbo_estep(*blocks, hyper, ctrl=TurboControl(max_iters=1))
        assert not state.converged
        assert state.iterations == 1

    def test_zero_observation_lowers_support(self, rng, small_array, small_pilots, small_grid):
        rows = small_pilots.frequencies.size * small_array.num_antennas
        size = small_grid.num_points + 1
        blocks = [
            ObservationBlock(
                y=np.zeros(rows, dtype=complex),
                phi=rng.standard_normal((rows, size)) + 1j * rng.standard_normal((rows, size)),
                noise_var=0.1,
            )
            for _ in range(2)
        ]
        hyper = default_hyper_params(2, 3, 1, small_grid.num_points)
        state = turbo_estep(*blocks, hyper)

        assert_allclose(state.x_mean_r, 0.0, atol=1e-12)
        assert_allclose(state.x_mean_c, 0.0, atol=1e-12)
        for probs in (state.support_prob_r, state.support_prob_c, state.support_prob_joint):
            assert np.all(probs[1:] < hyper.lambda_)

    def test_grid_permutation_permutes_posterior(
        self, rng, on_grid_scene, truth_params, small_array, small_pilots, small_grid
    ):
        observation = synthesize_observation(
            on_grid_scene, small_array, small_pilots, 0.05, 0.05, 3
        )
        blocks = observation_blocks(truth_params, observation, small_array, small_pilots)
        hyper = default_hyper_params(2, 3, 1, small_grid.num_points).model_copy(
            update={
                "slab_var_r": rng.uniform(0.5, 2.0, small_grid.num_points + 1),
                "slab_var_c": rng.uniform(0.5, 2.0, small_grid.num_points + 1),
            }
        )
        order = np.concatenate([[0], 1 + rng.permutation(small_grid.num_points)])
        permuted_blocks = [
            ObservationBlock(y=block.y, phi=block.phi[:, order], noise_var=block.noise_var)
            for block in blocks
        ]
        permuted_hyper = hyper.model_copy(
            update={"slab_var_r": hyper.slab_var_r[order], "slab_var_c": hyper.slab_var_c[order]}
        )
        # a fixed number of exchanges keeps both runs on the same iterate
        ctrl = TurboControl(max_iters=10, tol=1e-300)
        state = turbo_estep(*blocks, hyper, ctrl=ctrl)
        permuted = turbo_estep(*permuted_blocks, permuted_hyper, ctrl=ctrl)

        for key in (
            "support_prob_r",
            "support_prob_c",
            "support_prob_joint",
            "x_mean_r",
            "x_mean_c",
        ):
            assert_allclose(
                getattr(permuted, key), getattr(state, key)[order], rtol=1e-7, atol=1e-9
            )
