import logging
from collections.abc import Callable

import numpy as np

from app.channel.schemas import Observation, PilotSet, SensingParams
from app.channel.service import (
    comm_measurement_matrix,
    delay_phases,
    radar_measurement_matrix,
)
from app.geometry.schemas import ArrayGeometry
from app.geometry.service import (
    SPEED_OF_LIGHT,
    aoa_array,
    aoa_gradient,
    steering_matrix,
    steering_matrix_derivative,
    unit_vector,
)
from app.m_step.schemas import (
    ArmijoResult,
    MStepConfig,
    StepSizes,
    SurrogateContext,
    SurrogateGradient,
    XiPrior,
)
from app.turbo_e.schemas import PosteriorState

logger = logging.getLogger(__name__)


def build_context(
    observation: Observation,
    state: PosteriorState,
    array: ArrayGeometry,
    pilots: PilotSet,
    prior: XiPrior,
    noise_floor: float = 1e-12,
) -> SurrogateContext:
    """
    Surrogate context from an E-step result, using the Module-A posterior.
    """
    return SurrogateContext(
        array=array,
        pilots=pilots,
        y_r=observation.y_r,
        y_c=observation.y_c,
        mean_r=state.dense_mean_r,
        mean_c=state.dense_mean_c,
        cov_r=state.dense_cov_r,
        cov_c=state.dense_cov_c,
        noise_var_r=max(observation.noise_var_r, noise_floor),
        noise_var_c=max(observation.noise_var_c, noise_floor),
        prior=prior,
    )


def _expected_residual(
    y: np.ndarray, phi: np.ndarray, mean: np.ndarray, cov: np.ndarray
) -> float:
    """
    E||y - Phi x||^2 under x ~ CN(mean, cov): ||y - Phi mean||^2 + tr(Phi cov Phi^H).
    """
    residual = y - phi @ mean
    trace = np.sum(phi.conj() * (phi @ cov))
    return float(np.real(np.vdot(residual, residual)) + np.real(trace))


def log_prior(xi: SensingParams, prior: XiPrior) -> float:
    """
    log p(xi) up to a constant; -inf outside the grid area or the time-offset box.
    """
    if abs(xi.time_offset) > prior.tau_bound or not np.all(prior.area.contains(xi.grid)):
        return -np.inf
    offset = xi.user_pos - prior.user_mean
    return -float(offset @ offset) / prior.sigma_p2


def surrogate_value(xi: SensingParams, ctx: SurrogateContext) -> float:
    """
    EM surrogate of the log-posterior of xi at the current posterior of x.

    Q(xi) = -sum_t s2_t^-1 [||y_t - Phi_t x_t||^2 + tr(Phi_t V_t Phi_t^H)] + log p(xi),
    constants dropped.

    Args:
        xi: Sensing parameters
        ctx: Surrogate context

    Returns:
        Surrogate value, -inf when xi lies outside the prior support
    """
    prior_term = log_prior(xi, ctx.prior)
    if not np.isfinite(prior_term):
        return -np.inf
    phi_r = radar_measurement_matrix(xi, ctx.array, ctx.pilots)
    phi_c = comm_measurement_matrix(xi, ctx.array, ctx.pilots)
    data_r = _expected_residual(ctx.y_r, phi_r, ctx.mean_r, ctx.cov_r)
    data_c = _expected_residual(ctx.y_c, phi_c, ctx.mean_c, ctx.cov_c)
    return -data_r / ctx.noise_var_r - data_c / ctx.noise_var_c + prior_term


def _sensitivities(
    phi: np.ndarray,
    dphi_theta: np.ndarray,
    delay_rate: np.ndarray,
    y: np.ndarray,
    mean: np.ndarray,
    second_moment: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Derivatives of E||y - Phi x||^2 with respect to each column's angle and delay.

    With G = Phi E[xx^H] - y mean^H, a column perturbation dPhi changes the expected
    residual by 2 Re sum(conj(dPhi) G).

    Args:
        phi: Dictionary blocks, shape (N_p, M, Q+1)
        dphi_theta: Derivative of each column with respect to its angle, same shape
        delay_rate: -j 2 pi f_n per pilot, shape (N_p,)
        y: Observation, length M*N_p
        mean: Posterior mean, length Q+1
        second_moment: mean mean^H + covariance

    Returns:
        Tuple (d/dtheta, d/dtau), each of length Q+1
    """
    num_pilots, num_antennas, size = phi.shape
    flat = phi.reshape(-1, size)
    g = (flat @ second_moment - np.outer(y, mean.conj())).reshape(num_pilots, num_antennas, size)
    d_theta = 2.0 * np.real(np.sum(dphi_theta.conj() * g, axis=(0, 1)))
    d_tau = 2.0 * np.real(np.sum((delay_rate[:, None, None] * phi).conj() * g, axis=(0, 1)))
    return d_theta, d_tau


def surrogate_gradient(
    xi: SensingParams, ctx: SurrogateContext, active: np.ndarray | None = None
) -> SurrogateGradient:
    """
    Analytic gradient of ``surrogate_value`` by the chain rule through Phi(xi).

    Grid point q moves column q of both dictionaries through its angle, its radar
    delay and its communication delay. The user position moves column 0 of both
    dictionaries and, through the relative delays, every communication column. The
    time offset moves every communication phase.

    Args:
        xi: Sensing parameters
        ctx: Surrogate context
        active: Boolean mask over the Q grid points; inactive rows are zero

    Returns:
        Gradients with respect to the grid, the user position and the time offset
    """
    array, pilots = ctx.array, ctx.pilots
    bs = array.position.as_array()
    positions = xi.positions()
    thetas = aoa_array(bs, positions)
    basis = steering_matrix(thetas, array.num_antennas)
    dbasis = steering_matrix_derivative(thetas, array.num_antennas)
    phase_r, phase_c = delay_phases(xi, array, pilots)
    delay_rate = -2j * np.pi * pilots.frequencies

    beam = pilots.downlink @ basis
    dbeam = pilots.downlink @ dbasis
    phi_r = (beam * phase_r)[:, None, :] * basis[None, :, :]
    dphi_r = phase_r[:, None, :] * (
        dbeam[:, None, :] * basis[None, :, :] + beam[:, None, :] * dbasis[None, :, :]
    )
    weight_c = pilots.uplink[:, None] * phase_c
    phi_c = weight_c[:, None, :] * basis[None, :, :]
    dphi_c = weight_c[:, None, :] * dbasis[None, :, :]

    theta_r, tau_r = _sensitivities(
        phi_r, dphi_r, delay_rate, ctx.y_r, ctx.mean_r, ctx.second_moment_r
    )
    theta_c, tau_c = _sensitivities(
        phi_c, dphi_c, delay_rate, ctx.y_c, ctx.mean_c, ctx.second_moment_c
    )

    grad_theta = aoa_gradient(bs, positions)
    grad_radar_delay = 2.0 * unit_vector(positions, bs) / SPEED_OF_LIGHT
    user = xi.user_pos
    grid = xi.grid
    comm_delay_wrt_grid = (unit_vector(grid, bs) + unit_vector(grid, user)) / SPEED_OF_LIGHT
    comm_delay_wrt_user = (unit_vector(user, grid) - unit_vector(user, bs)) / SPEED_OF_LIGHT

    w_r = 1.0 / ctx.noise_var_r
    w_c = 1.0 / ctx.noise_var_c
    radar_pos = theta_r[:, None] * grad_theta + tau_r[:, None] * grad_radar_delay

    d_grid = w_r * radar_pos[1:] + w_c * (
        theta_c[1:, None] * grad_theta[1:] + tau_c[1:, None] * comm_delay_wrt_grid
    )
    d_user = w_r * radar_pos[0] + w_c * (
        theta_c[0] * grad_theta[0] + tau_c[1:] @ comm_delay_wrt_user
    )
    d_time = w_c * float(np.sum(tau_c))

    grad_grid = -d_grid
    if active is not None:
        grad_grid = np.where(np.asarray(active, dtype=bool)[:, None], grad_grid, 0.0)
    grad_user = -d_user - 2.0 * (user - ctx.prior.user_mean) / ctx.prior.sigma_p2
    return SurrogateGradient(grid=grad_grid, user=grad_user, time_offset=-d_time)


def select_active_set(
    grid: np.ndarray,
    joint_prob: np.ndarray,
    threshold: float,
    resolution: float,
    collision_cells: float = 0.1,
) -> np.ndarray:
    """
    Grid points refined by the M-step.

    A point is active when its joint support probability exceeds ``threshold``. Of two
    active points closer than ``collision_cells`` cells, the less probable is frozen.

    Args:
        grid: Grid positions, shape (Q, 2)
        joint_prob: Joint support probabilities, length Q+1 (index 0 is the user)
        threshold: Activity threshold
        resolution: Cell size in meters
        collision_cells: Collision distance in cells

    Returns:
        Boolean mask of length Q
    """
    prob = np.asarray(joint_prob)[1:]
    candidates = np.flatnonzero(prob > threshold)
    min_distance = collision_cells * resolution
    active = np.zeros(grid.shape[0], dtype=bool)
    kept: list[int] = []
    for index in candidates[np.argsort(-prob[candidates], kind="stable")]:
        if all(np.hypot(*(grid[index] - grid[other])) >= min_distance for other in kept):
            kept.append(int(index))
            active[index] = True
    return active


def hold_merging_points(
    candidate: np.ndarray,
    start: np.ndarray,
    joint_prob: np.ndarray,
    min_distance: float,
) -> np.ndarray:
    """
    Stop moved grid points from closing in on a more probable point.

    Points are placed from the most to the least probable. A point that moved and
    ends closer than ``min_distance`` to an already placed point, and closer to it than
    its start position is, goes back to its start position. The most probable point
    of a cluster therefore refines alone onto the entity.

    Args:
        candidate: Proposed grid positions, shape (Q, 2)
        start: Grid positions before the step, shape (Q, 2)
        joint_prob: Joint support probabilities, length Q+1 (index 0 is the user)
        min_distance: Merge distance in meters

    Returns:
        Grid positions with merging points held back
    """
    if min_distance <= 0.0:
        return candidate
    moved = set(np.flatnonzero(np.any(candidate != start, axis=1)).tolist())
    if not moved:
        return candidate
    prob = np.asarray(joint_prob)[1:]
    result = candidate.copy()
    placed: list[int] = []
    for index in np.argsort(-prob, kind="stable"):
        if index in moved and placed:
            others = result[placed]
            now = np.hypot(*(others - result[index]).T)
            held = np.hypot(*(others - start[index]).T)
            if np.any((now < min_distance) & (now < held)):
                result[index] = start[index]
        placed.append(int(index))
    return result


def _line_search(
    value_fn: Callable[[np.ndarray], float],
    start: np.ndarray,
    direction: np.ndarray,
    displacement: float,
    project: Callable[[np.ndarray], np.ndarray],
    value_at_start: float,
    params: MStepConfig,
) -> tuple[np.ndarray, float, bool]:
    """
    Projected backtracking along ``direction`` starting from a step of the given length.
    """
    norm = float(np.linalg.norm(direction))
    if norm == 0.0 or not np.isfinite(norm):
        return start, value_at_start, False

    alpha = displacement / norm
    for _ in range(params.max_backtracks):
        candidate = project(start + alpha * direction)
        moved = candidate - start
        if not np.any(moved):
            break
        value = value_fn(candidate)
        bound = value_at_start + params.sufficient_increase * float(np.sum(direction * moved))
        if np.isfinite(value) and value >= bound:
            return candidate, value, True
        alpha *= params.shrink
    return start, value_at_start, False


def armijo_ascent(
    xi: SensingParams,
    ctx: SurrogateContext,
    steps: StepSizes,
    params: MStepConfig | None = None,
    active: np.ndarray | None = None,
    grads: SurrogateGradient | None = None,
    joint_prob: np.ndarray | None = None,
    merge_distance: float = 0.0,
) -> ArmijoResult:
    """
    One M-step: grid, then user position, then time offset, each by Armijo backtracking.

    Each block starts from its own gradient evaluated after the previous block's
    update. Grid points are projected into the area and the time offset into its
    prior box; a block whose backtracking fails stays where it was. With ``joint_prob``
    given, moved grid points are also held back by ``hold_merging_points``.

    Args:
        xi: Current sensing parameters
        ctx: Surrogate context
        steps: Initial displacements of each block
        params: Armijo parameters
        active: Grid points allowed to move
        grads: Gradient at ``xi``, recomputed when omitted
        joint_prob: Joint support probabilities ranking the grid points
        merge_distance: Closest approach of a point to a more probable one (m)

    Returns:
        Updated parameters with the surrogate before and after
    """
    params = params or MStepConfig()
    prior = ctx.prior
    value = surrogate_value(xi, ctx)
    result = ArmijoResult(xi=xi, value_before=value, value_after=value)
    if not np.isfinite(value):
        logger.warning("M-step started outside the prior support; parameters unchanged")
        return result

    if grads is None:
        grads = surrogate_gradient(xi, ctx, active)

    def project_grid(candidate: np.ndarray) -> np.ndarray:
        candidate = prior.area.clip(candidate)
        if joint_prob is None:
            return candidate
        return hold_merging_points(candidate, xi.grid, joint_prob, merge_distance)

    grid, value, moved_grid = _line_search(
        lambda g: surrogate_value(xi.model_copy(update={"grid": g}), ctx),
        xi.grid,
        grads.grid,
        steps.eps_r,
        project_grid,
        value,
        params,
    )
    xi = xi.model_copy(update={"grid": grid})

    if moved_grid:
        grads = surrogate_gradient(xi, ctx, active)
    user, value, moved_user = _line_search(
        lambda p: surrogate_value(xi.model_copy(update={"user_pos": p}), ctx),
        xi.user_pos,
        grads.user,
        steps.eps_p,
        lambda p: p,
        value,
        params,
    )
    xi = xi.model_copy(update={"user_pos": user})

    if moved_user:
        grads = surrogate_gradient(xi, ctx, active)
    tau, value, moved_time = _line_search(
        lambda t: surrogate_value(xi.model_copy(update={"time_offset": float(t[0])}), ctx),
        np.array([xi.time_offset]),
        np.array([grads.time_offset]),
        steps.eps_t,
        lambda t: np.clip(t, -prior.tau_bound, prior.tau_bound),
        value,
        params,
    )
    xi = xi.model_copy(update={"time_offset": float(tau[0])})

    accepted = {"grid": moved_grid, "user": moved_user, "time_offset": moved_time}
    for block, moved in accepted.items():
        if not moved:
            logger.debug(f"Armijo rejected the {block} block")
    return ArmijoResult(
        xi=xi, value_before=result.value_before, value_after=value, accepted=accepted
    )
