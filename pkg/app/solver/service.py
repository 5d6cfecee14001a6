import logging

import numpy as np

from app.channel.schemas import Observation, PilotSet, SensingParams
from app.channel.service import (
    comm_measurement_matrix,
    delay_phases,
    radar_measurement_matrix,
    sparse_basis,
)
from app.geometry.schemas import ArrayGeometry, GridSpec, Position
from app.geometry.service import SPEED_OF_LIGHT, grid_points
from app.m_step.schemas import XiPrior
from app.m_step.service import armijo_ascent, build_context, select_active_set
from app.prior.schemas import PriorHyperParams
from app.solver.schemas import (
    Detection,
    Estimates,
    SolverConfig,
    SolverDiagnostics,
    SolverMode,
)
from app.turbo_e.schemas import ObservationBlock, PosteriorState
from app.turbo_e.service import turbo_estep

logger = logging.getLogger(__name__)


def initial_params(grid: GridSpec, prior: XiPrior) -> SensingParams:
    """
    Starting point of the EM loop: uniform grid, prior-mean user, zero time offset.
    """
    return SensingParams(
        grid=grid_points(grid), user_pos=np.array(prior.user_mean, dtype=float), time_offset=0.0
    )


def observation_blocks(
    xi: SensingParams,
    observation: Observation,
    array: ArrayGeometry,
    pilots: PilotSet,
    noise_floor: float = 1e-12,
) -> tuple[ObservationBlock, ObservationBlock]:
    """
    Radar and communication linear models at ``xi``.
    """
    radar = ObservationBlock(
        y=observation.y_r,
        phi=radar_measurement_matrix(xi, array, pilots),
        noise_var=max(observation.noise_var_r, noise_floor),
    )
    comm = ObservationBlock(
        y=observation.y_c,
        phi=comm_measurement_matrix(xi, array, pilots),
        noise_var=max(observation.noise_var_c, noise_floor),
    )
    return radar, comm


def reconstruct_channels(
    gains_r: np.ndarray,
    gains_c: np.ndarray,
    xi: SensingParams,
    array: ArrayGeometry,
    pilots: PilotSet,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Channels of the sparse representation on every pilot subcarrier.

    H_n^r = A diag(x^r * D_n^r) A^T and h_n^c = A (x^c * D_n^c).

    Args:
        gains_r: Radar coefficients, length Q+1
        gains_c: Communication coefficients, length Q+1
        xi: Sensing parameters
        array: Base-station array
        pilots: Pilot set

    Returns:
        Tuple (radar channels of shape (N_p, M, M), comm channels of shape (N_p, M))
    """
    basis = sparse_basis(xi, array)
    phase_r, phase_c = delay_phases(xi, array, pilots)
    radar = np.einsum("mq,fq,nq->fmn", basis, phase_r * gains_r[None, :], basis)
    comm = (phase_c * gains_c[None, :]) @ basis.T
    return radar, comm


def _detections(
    xi: SensingParams,
    gains: np.ndarray,
    probs: np.ndarray,
    threshold: float,
    merge_distance: float = 0.0,
) -> tuple[list[Detection], Detection | None]:
    found: list[Detection] = []
    index_zero = None
    above = np.flatnonzero(probs > threshold)
    for q in above[np.argsort(-probs[above], kind="stable")]:
        position = xi.user_pos if q == 0 else xi.grid[q - 1]
        detection = Detection(
            index=int(q),
            position=Position.from_array(position),
            gain=complex(gains[q]),
            probability=float(probs[q]),
        )
        if q == 0:
            index_zero = detection
        elif all(
            np.hypot(*(position - kept.position.as_array())) >= merge_distance for kept in found
        ):
            found.append(detection)
    found.sort(key=lambda d: d.index)
    return found, index_zero


def build_estimates(
    xi: SensingParams,
    gains_r: np.ndarray,
    gains_c: np.ndarray,
    probs_r: np.ndarray,
    probs_c: np.ndarray,
    threshold: float,
    array: ArrayGeometry,
    pilots: PilotSet,
    posterior: PosteriorState | None = None,
    diagnostics: SolverDiagnostics | None = None,
    merge_distance: float = 0.0,
) -> Estimates:
    """
    Detections above ``threshold`` and reconstructed channels at ``xi``.

    Of two grid detections of one branch closer than ``merge_distance``, only the more
    probable is reported.
    """
    targets, user_echo = _detections(xi, gains_r, probs_r, threshold, merge_distance)
    scatterers, los = _detections(xi, gains_c, probs_c, threshold, merge_distance)
    channel_r, channel_c = reconstruct_channels(gains_r, gains_c, xi, array, pilots)
    return Estimates(
        detected_targets=targets,
        detected_scatterers=scatterers,
        user_echo=user_echo,
        los=los,
        user_pos=Position.from_array(xi.user_pos),
        time_offset=xi.time_offset,
        xi=xi,
        gains_r=gains_r,
        gains_c=gains_c,
        channel_r=channel_r,
        channel_c=channel_c,
        posterior=posterior,
        diagnostics=diagnostics or SolverDiagnostics(),
    )


def sea_turbo_sbi(
    observation: Observation,
    pilots: PilotSet,
    array: ArrayGeometry,
    grid: GridSpec,
    hyper: PriorHyperParams,
    config: SolverConfig,
    prior_xi: XiPrior,
) -> Estimates:
    """
    Alternate the turbo E-step and the Armijo M-step over the dynamic grid.

    The loop stops when an M-step moves the sensing parameters by less than
    ``config.em_tol`` or after ``config.em_max_iters`` M-steps. In fixed-grid mode the
    M-step is skipped and a single E-step is run.

    Args:
        observation: Radar and communication observations
        pilots: Pilot set
        array: Base-station array
        grid: Initial uniform grid
        hyper: Prior hyperparameters
        config: Solver configuration
        prior_xi: Sensing-parameter prior

    Returns:
        Detections, coefficients, refined parameters, channels and diagnostics
    """
    joint = config.mode != SolverMode.SEPARATE
    merge_distance = 0.0
    xi = initial_params(grid, prior_xi)
    blocks = observation_blocks(xi, observation, array, pilots, config.noise_floor)
    state = turbo_estep(*blocks, hyper, ctrl=config.turbo, joint=joint)
    diagnostics = SolverDiagnostics(
        estep_iters=[state.iterations],
        estep_converged=state.converged,
        regularized=state.regularized,
    )

    if config.mode != SolverMode.FIXED_GRID:
        bandwidth = 2.0 / prior_xi.tau_bound
        merge_distance = config.m_step.merge_cells * grid.resolution
        for iteration in range(config.em_max_iters):
            ctx = build_context(observation, state, array, pilots, prior_xi, config.noise_floor)
            active = select_active_set(
                xi.grid,
                state.support_prob_joint,
                config.m_step.active_threshold,
                grid.resolution,
                config.m_step.collision_cells,
            )
            steps = config.m_step.step_sizes(iteration, bandwidth)
            result = armijo_ascent(
                xi,
                ctx,
                steps,
                config.m_step,
                active,
                joint_prob=state.support_prob_joint,
                merge_distance=merge_distance,
            )
            change = result.xi.distance_to(xi, SPEED_OF_LIGHT)
            xi = result.xi

            blocks = observation_blocks(xi, observation, array, pilots, config.noise_floor)
            state = turbo_estep(
                *blocks, hyper, init=state.message_to_a, ctrl=config.turbo, joint=joint
            )
            diagnostics.em_iters = iteration + 1
            diagnostics.surrogate_trace.append((result.value_before, result.value_after))
            diagnostics.active_counts.append(int(active.sum()))
            diagnostics.estep_iters.append(state.iterations)
            diagnostics.estep_converged = diagnostics.estep_converged and state.converged
            diagnostics.regularized = diagnostics.regularized or state.regularized
            logger.debug(
                f"EM iteration {iteration + 1}: change {change:.3e}, "
                f"surrogate {result.value_before:.6e} -> {result.value_after:.6e}"
            )
            if change < config.em_tol:
                diagnostics.em_converged = True
                break

    return build_estimates(
        xi,
        state.x_mean_r,
        state.x_mean_c,
        state.support_prob_r,
        state.support_prob_c,
        config.detection_threshold,
        array,
        pilots,
        posterior=state,
        diagnostics=diagnostics,
        merge_distance=merge_distance,
    )
