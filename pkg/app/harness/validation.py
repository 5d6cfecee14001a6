import itertools
import logging

import numpy as np

from app.channel.schemas import SensingParams
from app.channel.service import (
    clean_signals,
    comm_measurement_matrix,
    generate_pilots,
    kron_diagonal_columns,
    radar_measurement_matrix,
    radar_measurement_matrix_kron,
)
from app.geometry.schemas import ArrayGeometry, Position
from app.geometry.service import grid_points
from app.harness.schemas import CheckResult, ExperimentConfig
from app.harness.service import generate_trial, hyper_params, observe, xi_prior
from app.m_step.schemas import SurrogateContext
from app.m_step.service import build_context, surrogate_gradient, surrogate_value
from app.prior.schemas import PriorHyperParams
from app.solver.service import observation_blocks, sea_turbo_sbi
from app.turbo_e.schemas import GaussianMessage, ObservationBlock
from app.turbo_e.service import lmmse_module_a, module_b, turbo_estep

logger = logging.getLogger(__name__)


def _cn_density(x, var):
    return np.exp(-np.abs(x) ** 2 / var) / (np.pi * var)


def enumerate_module_b(prior_from_a: GaussianMessage, hyper: PriorHyperParams) -> dict:
    """
    Exact marginals of the support model by enumerating every support configuration.

    Index 0 is treated like any other coefficient.

    Returns:
        Dictionary with support_prob_r, support_prob_c, support_prob_joint, x_mean, x_var
    """
    radar, comm = prior_from_a.split()
    size = radar.size
    out = {key: np.zeros(size) for key in ("prob_r", "prob_c", "prob_joint", "var_r", "var_c")}
    mean_r = np.zeros(size, dtype=complex)
    mean_c = np.zeros(size, dtype=complex)

    for q in range(size):
        total = 0.0
        acc = dict.fromkeys(("r", "c", "s", "m2r", "m2c"), 0.0)
        acc_mean = {"r": 0j, "c": 0j}
        for s, s_r, s_c in itertools.product((0, 1), repeat=3):
            if s == 0 and (s_r or s_c):
                continue
            weight = hyper.lambda_ if s else 1.0 - hyper.lambda_
            if s:
                weight *= hyper.rho_r if s_r else 1.0 - hyper.rho_r
                weight *= hyper.rho_c if s_c else 1.0 - hyper.rho_c
            moments = {}
            for branch, msg, slab, active in (
                ("r", radar, hyper.slab_var_r[q], s_r),
                ("c", comm, hyper.slab_var_c[q], s_c),
            ):
                x, v = msg.mean[q], msg.var[q]
                weight *= _cn_density(x, v + slab * active)
                if active:
                    mu = x * slab / (slab + v)
                    moments[branch] = (mu, slab * v / (slab + v) + abs(mu) ** 2)
                else:
                    moments[branch] = (0j, 0.0)
            total += weight
            acc["r"] += weight * s_r
            acc["c"] += weight * s_c
            acc["s"] += weight * s
            acc_mean["r"] += weight * moments["r"][0]
            acc_mean["c"] += weight * moments["c"][0]
            acc["m2r"] += weight * moments["r"][1]
            acc["m2c"] += weight * moments["c"][1]
        out["prob_r"][q] = acc["r"] / total
        out["prob_c"][q] = acc["c"] / total
        out["prob_joint"][q] = acc["s"] / total
        mean_r[q] = acc_mean["r"] / total
        mean_c[q] = acc_mean["c"] / total
        out["var_r"][q] = acc["m2r"] / total - abs(mean_r[q]) ** 2
        out["var_c"][q] = acc["m2c"] / total - abs(mean_c[q]) ** 2

    return {
        "support_prob_r": out["prob_r"],
        "support_prob_c": out["prob_c"],
        "support_prob_joint": out["prob_joint"],
        "x_mean": np.concatenate([mean_r, mean_c]),
        "x_var": np.concatenate([out["var_r"], out["var_c"]]),
    }


def gaussian_conditioning(
    y: np.ndarray, phi: np.ndarray, noise_var: float, prior_mean: np.ndarray, prior_var: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Posterior of x given y = Phi x + z by direct conditioning in observation space.
    """
    prior_cov = np.diag(prior_var)
    gain_den = phi @ prior_cov @ phi.conj().T + noise_var * np.eye(phi.shape[0])
    gain = np.linalg.solve(gain_den, phi @ prior_cov).conj().T
    mean = prior_mean + gain @ (y - phi @ prior_mean)
    cov = prior_cov - gain @ phi @ prior_cov
    return mean, cov


def _random_message(rng: np.random.Generator, size: int) -> GaussianMessage:
    mean = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return GaussianMessage(mean=mean, var=rng.uniform(0.05, 2.0, size))


def check_module_b(rng: np.random.Generator, instances: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        size = int(rng.integers(1, 4))
        hyper = PriorHyperParams(
            lambda_=rng.uniform(0.05, 0.95),
            rho_r=rng.uniform(0.05, 0.95),
            rho_c=rng.uniform(0.05, 0.95),
            slab_var_r=rng.uniform(0.5, 2.0, size),
            slab_var_c=rng.uniform(0.5, 2.0, size),
            user_echo_prior=None,
            los_prior=None,
        )
        message = _random_message(rng, 2 * size)
        state, _ = module_b(message, hyper)
        oracle = enumerate_module_b(message, hyper)
        for key, value in oracle.items():
            worst = max(worst, float(np.max(np.abs(getattr(state, key) - value))))
    return CheckResult(
        name="module_b_enumeration", passed=worst <= 1e-9, detail=f"max abs error {worst:.2e}"
    )


def check_module_a(rng: np.random.Generator, instances: int = 50) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        cols = int(rng.integers(2, 33))
        rows = int(rng.integers(cols, 2 * cols + 1))
        phi = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / 2
        y = rng.standard_normal(rows) + 1j * rng.standard_normal(rows)
        noise_var = float(rng.uniform(0.1, 1.0))
        prior = _random_message(rng, cols)
        result = lmmse_module_a(ObservationBlock(y=y, phi=phi, noise_var=noise_var), prior)
        mean, cov = gaussian_conditioning(y, phi, noise_var, prior.mean, prior.var)
        worst = max(
            worst,
            float(np.linalg.norm(result.post_mean - mean) / np.linalg.norm(mean)),
            float(np.linalg.norm(result.post_cov - cov) / np.linalg.norm(cov)),
        )
    return CheckResult(
        name="module_a_conditioning", passed=worst <= 1e-8, detail=f"max rel error {worst:.2e}"
    )


def random_state(
    config: ExperimentConfig, rng: np.random.Generator, trial: int = 0, snr_db: float = 20.0
) -> tuple[SensingParams, SurrogateContext]:
    """
    A perturbed sensing-parameter state and the surrogate context of its E-step.
    """
    system = config.system
    scene, pilots = generate_trial(config, trial)
    observation = observe(config, scene, pilots, snr_db, trial, 0)
    prior = xi_prior(config)
    grid = grid_points(system.grid)
    jitter = rng.uniform(-0.3, 0.3, grid.shape) * system.resolution
    xi = SensingParams(
        grid=grid + jitter,
        user_pos=prior.user_mean + rng.normal(0.0, 0.5, 2),
        time_offset=float(rng.uniform(-0.5, 0.5) * prior.tau_bound),
    )
    blocks = observation_blocks(xi, observation, system.array, pilots)
    state = turbo_estep(*blocks, hyper_params(config), ctrl=config.turbo)
    ctx = build_context(observation, state, system.array, pilots, prior)
    return xi, ctx


def gradient_errors(
    xi: SensingParams,
    ctx: SurrogateContext,
    grid_points_checked: int = 3,
    step_m: float = 1e-4,
    step_s: float = 1e-12,
) -> dict[str, float]:
    """
    Relative error of the analytic gradient against central finite differences, per block.

    Grid coordinates are checked at the points carrying the most posterior energy.
    """
    analytic = surrogate_gradient(xi, ctx)

    def central(update_plus, update_minus, step):
        plus = surrogate_value(xi.model_copy(update=update_plus), ctx)
        minus = surrogate_value(xi.model_copy(update=update_minus), ctx)
        return (plus - minus) / (2.0 * step)

    energy = np.abs(ctx.mean_r[1:]) ** 2 + np.abs(ctx.mean_c[1:]) ** 2
    points = np.argsort(-energy, kind="stable")[:grid_points_checked]
    picks = np.concatenate([2 * points, 2 * points + 1])
    fd_grid, an_grid = [], []
    for flat in picks:
        delta = np.zeros(xi.grid.size)
        delta[flat] = step_m
        delta = delta.reshape(xi.grid.shape)
        fd_grid.append(central({"grid": xi.grid + delta}, {"grid": xi.grid - delta}, step_m))
        an_grid.append(analytic.grid.flat[flat])

    fd_user = []
    for axis in range(2):
        delta = np.zeros(2)
        delta[axis] = step_m
        fd_user.append(
            central({"user_pos": xi.user_pos + delta}, {"user_pos": xi.user_pos - delta}, step_m)
        )
    fd_time = central(
        {"time_offset": xi.time_offset + step_s}, {"time_offset": xi.time_offset - step_s}, step_s
    )

    def relative(fd, an):
        fd, an = np.atleast_1d(fd), np.atleast_1d(an)
        return float(np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-300))

    return {
        "grid": relative(fd_grid, an_grid),
        "user": relative(fd_user, analytic.user),
        "time_offset": relative(fd_time, analytic.time_offset),
    }


def check_gradient(
    config: ExperimentConfig, rng: np.random.Generator, states: int = 20
) -> CheckResult:
    worst = 0.0
    for trial in range(states):
        xi, ctx = random_state(config, rng, trial)
        worst = max(worst, *gradient_errors(xi, ctx).values())
    return CheckResult(
        name="gradient_finite_difference", passed=worst <= 1e-5, detail=f"max rel error {worst:.2e}"
    )


def check_representation(config: ExperimentConfig) -> CheckResult:
    on_grid = config.model_copy(
        update={"scene": config.scene.model_copy(update={"on_grid": True, "mode": "counts"})}
    )
    system = on_grid.system
    scene, pilots = generate_trial(on_grid, 0)
    xi = SensingParams(
        grid=grid_points(system.grid),
        user_pos=scene.user.as_array(),
        time_offset=scene.time_offset,
    )
    signal_r, signal_c = clean_signals(scene, system.array, pilots)
    model_r = radar_measurement_matrix(xi, system.array, pilots) @ scene.gains_r
    model_c = comm_measurement_matrix(xi, system.array, pilots) @ scene.gains_c
    error = max(
        float(np.linalg.norm(model_r - signal_r) / np.linalg.norm(signal_r)),
        float(np.linalg.norm(model_c - signal_c) / np.linalg.norm(signal_c)),
    )
    return CheckResult(
        name="representation_consistency", passed=error <= 1e-10, detail=f"rel error {error:.2e}"
    )


def check_kronecker(rng: np.random.Generator) -> CheckResult:
    array = ArrayGeometry(num_antennas=2, position=Position(x=-50.0, y=0.0))
    pilots = generate_pilots(2, 2, 1, 30e3, rng)
    xi = SensingParams(
        grid=rng.uniform(-40.0, 40.0, (2, 2)), user_pos=np.array([50.0, 0.0]), time_offset=0.0
    )
    direct = radar_measurement_matrix(xi, array, pilots)
    kron = radar_measurement_matrix_kron(xi, array, pilots)[:, kron_diagonal_columns(3)]
    error = float(np.max(np.abs(direct - kron)))
    return CheckResult(name="kronecker_equivalence", passed=error <= 1e-12, detail=f"{error:.2e}")


def check_monotonicity(config: ExperimentConfig, trials: int = 3) -> CheckResult:
    system = config.system
    solver = config.solver_config().model_copy(update={"em_max_iters": 5})
    violations = 0
    steps = 0
    for trial in range(trials):
        scene, pilots = generate_trial(config, trial)
        observation = observe(config, scene, pilots, 20.0, trial, 0)
        estimates = sea_turbo_sbi(
            observation,
            pilots,
            system.array,
            system.grid,
            hyper_params(config),
            solver,
            xi_prior(config),
        )
        for before, after in estimates.diagnostics.surrogate_trace:
            steps += 1
            violations += int(after < before)
    return CheckResult(
        name="surrogate_monotonicity",
        passed=violations == 0,
        detail=f"{violations} violations in {steps} M-steps",
    )


def run_validation(config: ExperimentConfig, seed: int = 0) -> list[CheckResult]:
    """
    Run every numerical self-check; a check that raises is reported as failed.
    """
    rng = np.random.default_rng(seed)
    checks = [
        lambda: check_module_b(rng),
        lambda: check_module_a(rng),
        lambda: check_gradient(config, rng),
        lambda: check_representation(config),
        lambda: check_kronecker(rng),
        lambda: check_monotonicity(config),
    ]
    names = [
        "module_b_enumeration",
        "module_a_conditioning",
        "gradient_finite_difference",
        "representation_consistency",
        "kronecker_equivalence",
        "surrogate_monotonicity",
    ]
    results = []
    for name, check in zip(names, checks):
        try:
            result = check()
        except Exception as e:
            logger.warning(f"Check {name} raised: {e}")
            result = CheckResult(name=name, passed=False, detail=f"error: {e}")
        logger.info(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
        results.append(result)
    return results
