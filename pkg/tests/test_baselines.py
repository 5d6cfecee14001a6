import numpy as np
from numpy.testing import assert_allclose

from app.baselines.schemas import OmpConfig
from app.baselines.service import (
    omp,
    omp_estimates,
    sea_turbo_sbi_separate,
    turbo_cs_fixed_grid,
)
from app.channel.service import synthesize_observation
from app.harness.schemas import Method
from app.harness.service import (
    evaluate,
    generate_trial,
    hyper_params,
    observe,
    run_method,
    xi_prior,
)
from app.solver.schemas import SolverMode


def orthonormal_dictionary(rng, rows, cols):
    raw = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, _ = np.linalg.qr(raw)
    return q


class TestOmp:
    def test_exact_recovery_on_orthonormal_dictionary(self, rng):
        phi = orthonormal_dictionary(rng, 64, 32)
        x = np.zeros(32, dtype=complex)
        x[[3, 11, 27]] = [1.0 + 0.5j, -2.0, 0.3j]
        result = omp(phi @ x, phi, max_atoms=10, residual_tol=1e-9)
        assert sorted(result.support) == [3, 11, 27]
        assert_allclose(result.coefficients, x, atol=1e-10)
        assert result.stopping_rule == "residual_tol"

    def test_atom_budget(self, rng):
        phi = orthonormal_dictionary(rng, 64, 32)
        y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        result = omp(y, phi, max_atoms=4)
        assert len(result.support) == 4
        assert len(set(result.support)) == 4
        assert result.stopping_rule == "max_atoms"
        assert np.all(np.diff(result.residual_norms) <= 1e-12)

    def test_zero_observation(self, rng):
        phi = orthonormal_dictionary(rng, 16, 8)
        result = omp(np.zeros(16, dtype=complex), phi, max_atoms=3)
        assert result.support == []
        assert not np.any(result.coefficients)


class TestBaselineEstimators:
    def test_omp_uses_true_counts(self, quick_config):
        scene, pilots = generate_trial(quick_config, 0)
        observation = observe(quick_config, scene, pilots, 20.0, 0, 0)
        system = quick_config.system
        estimates = omp_estimates(
            observation,
            pilots,
            system.array,
            system.grid,
            OmpConfig(residual_tol=1e-12),
            xi_prior(quick_config),
            counts=(3, 4),
        )
        radar = len(estimates.detected_targets) + (estimates.user_echo is not None)
        comm = len(estimates.detected_scatterers) + (estimates.los is not None)
        assert radar == 4
        assert comm == 5
        assert estimates.diagnostics.em_iters == 0

    def test_wrappers_select_modes(self, quick_config, monkeypatch):
        seen = []

        def fake_solver(observation, pilots, array, grid, hyper, config, prior_xi):
            seen.append(config.mode)
            return config.mode

        monkeypatch.setattr("app.baselines.service.sea_turbo_sbi", fake_solver)
        config = quick_config.solver_config()
        args = (None, None, None, None, hyper_params(quick_config), config, None)
        assert turbo_cs_fixed_grid(*args) == SolverMode.FIXED_GRID
        assert sea_turbo_sbi_separate(*args) == SolverMode.SEPARATE
        assert config.mode == SolverMode.JOINT
        assert seen == [SolverMode.FIXED_GRID, SolverMode.SEPARATE]


def test_methods_on_the_same_on_grid_scene(on_grid_config):
    config = on_grid_config
    system = config.system
    scene, pilots = generate_trial(config, 0)
    observation = synthesize_observation(scene, system.array, pilots, 0.0, 0.0, 0)
    records = {
        method: evaluate(
            method,
            run_method(method, config, observation, pilots),
            scene,
            config,
            pilots,
            float("inf"),
            0,
            0.0,
        )
        for method in Method
    }

    for method in (Method.TURBO_CS, Method.SEA_SEPARATE, Method.SEA_JOINT):
        record = records[method]
        assert record.rmse_target < 1e-3, method
        assert record.rmse_scatterer < 1e-3, method
        assert record.miss_count == 0, method
        assert record.false_alarm_count == 0, method
    fixed = records[Method.TURBO_CS]
    assert fixed.nmse_radar < 1e-6
    assert fixed.nmse_comm < 1e-6
    assert fixed.nmse_radar <= records[Method.OMP].nmse_radar + 1e-9
    assert fixed.nmse_comm <= records[Method.OMP].nmse_comm + 1e-9
    assert records[Method.OMP].em_iters == records[Method.TURBO_CS].em_iters == 0
