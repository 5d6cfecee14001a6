import numpy as np
import pytest
from numpy.testing import assert_array_equal

from app.core.exceptions import SceneGenerationError
from app.geometry.service import grid_points
from app.prior.schemas import PriorHyperParams, SupportTriple
from app.prior.service import (
    default_hyper_params,
    draw_time_offset,
    draw_user_position,
    sample_gains,
    sample_supports,
    scene_from_counts,
    scene_from_prior,
)

USER = np.array([30.0, 0.0])


class TestHyperParams:
    def test_defaults_follow_counts(self):
        hyper = default_hyper_params(9, 10, 5, 400)
        assert hyper.lambda_ == pytest.approx(14 / 400)
        assert hyper.rho_r == pytest.approx(9 / 15)
        assert hyper.rho_c == pytest.approx(10 / 15)
        assert hyper.size == 401
        assert hyper.user_echo_prior == 1.0
        assert hyper.los_prior == 1.0

    def test_blind_user_echo(self):
        assert default_hyper_params(1, 1, 0, 10, sees_user=False).user_echo_prior == 0.0

    def test_rejects_nonpositive_slab(self):
        with pytest.raises(ValueError):
            PriorHyperParams(
                lambda_=0.1, rho_r=0.5, rho_c=0.5, slab_var_r=np.zeros(3), slab_var_c=np.ones(3)
            )


class TestSupports:
    def test_branch_support_implies_joint(self, rng):
        hyper = default_hyper_params(5, 5, 2, 100)
        for _ in range(20):
            supports = sample_supports(hyper, 100, rng)
            assert not np.any(supports.s_r & ~supports.s)
            assert not np.any(supports.s_c & ~supports.s)
            assert supports.s_c[0]

    def test_hierarchy_is_validated(self):
        with pytest.raises(ValueError):
            SupportTriple(s=[False], s_r=[True], s_c=[False])

    def test_gains_vanish_off_support(self, rng):
        hyper = default_hyper_params(5, 5, 2, 100)
        supports = sample_supports(hyper, 100, rng)
        gains_r, gains_c = sample_gains(supports, hyper, rng)
        assert_array_equal(gains_r != 0, supports.s_r)
        assert_array_equal(gains_c != 0, supports.s_c)


class TestSceneFromCounts:
    def test_counts_and_overlap(self, small_grid, rng):
        scene = scene_from_counts(2, 3, 1, small_grid, rng, USER, min_separation_cells=1.0)
        assert len(scene.targets) == 2
        assert len(scene.scatterers) == 3
        targets = {(t.position.x, t.position.y) for t in scene.targets}
        scatterers = {(s.position.x, s.position.y) for s in scene.scatterers}
        assert len(targets & scatterers) == 1
        assert scene.supports.s_r[1:].sum() == 2
        assert scene.supports.s_c[1:].sum() == 3
        assert scene.supports.s[1:].sum() == 4

    def test_off_grid_positions_stay_in_their_cells(self, small_grid, rng):
        scene = scene_from_counts(2, 2, 0, small_grid, rng, USER, min_separation_cells=1.0)
        points = grid_points(small_grid)
        for target in scene.targets:
            offsets = np.abs(points - target.position.as_array())
            assert np.any(np.all(offsets <= small_grid.resolution / 2, axis=1))

    def test_on_grid_gains_sit_at_cell_indices(self, on_grid_scene, small_grid):
        points = grid_points(small_grid)
        for target in on_grid_scene.targets:
            q = int(np.flatnonzero(np.all(points == target.position.as_array(), axis=1))[0])
            assert on_grid_scene.gains_r[q + 1] == target.gain

    @pytest.mark.parametrize("seed", range(10))
    def test_separation_holds_after_offsets(self, seed, quick_config):
        grid = quick_config.system.grid
        user = np.array([25.0, 0.0])
        rng = np.random.default_rng(seed)
        scene = scene_from_counts(3, 4, 2, grid, rng, user, min_separation_cells=1.5)
        positions = np.array(
            [t.position.as_array() for t in scene.targets]
            + [s.position.as_array() for s in scene.scatterers]
        )
        unique = np.vstack([np.unique(positions, axis=0), user])
        assert len(unique) == 6
        gaps = np.linalg.norm(unique[:, None] - unique[None, :], axis=-1)
        gaps[np.diag_indices_from(gaps)] = np.inf
        assert gaps.min() >= 1.5 * grid.resolution - 1e-9

    def test_overlap_too_large(self, small_grid, rng):
        with pytest.raises(ValueError):
            scene_from_counts(1, 3, 2, small_grid, rng, USER)

    def test_infeasible_separation(self, small_grid, rng):
        with pytest.raises(SceneGenerationError):
            scene_from_counts(5, 5, 0, small_grid, rng, USER, min_separation_cells=3.0)


class TestSceneFromPrior:
    def test_entities_follow_supports(self, small_grid, rng):
        hyper = default_hyper_params(3, 3, 1, small_grid.num_points)
        scene = scene_from_prior(hyper, small_grid, rng, USER)
        assert len(scene.targets) == int(scene.supports.s_r[1:].sum())
        assert len(scene.scatterers) == int(scene.supports.s_c[1:].sum())
        assert scene.los_gain != 0


class TestRandomOffsets:
    def test_time_offset_within_bound(self, rng):
        draws = [draw_time_offset(1e-6, rng) for _ in range(200)]
        assert max(abs(d) for d in draws) <= 1e-6

    def test_user_offset_variance(self, rng):
        draws = np.array([draw_user_position(USER, 2.0, rng) for _ in range(4000)])
        assert np.var(draws[:, 0]) == pytest.approx(1.0, rel=0.1)
        assert np.mean(draws[:, 1]) == pytest.approx(0.0, abs=0.1)
