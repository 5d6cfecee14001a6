import logging

import numpy as np

from app.baselines.schemas import OmpConfig, OmpResult
from app.channel.schemas import Observation, PilotSet
from app.geometry.schemas import ArrayGeometry, GridSpec
from app.m_step.schemas import XiPrior
from app.prior.schemas import PriorHyperParams
from app.solver.schemas import Estimates, SolverConfig, SolverDiagnostics, SolverMode
from app.solver.service import build_estimates, initial_params, observation_blocks, sea_turbo_sbi

logger = logging.getLogger(__name__)


def omp(y: np.ndarray, phi: np.ndarray, max_atoms: int, residual_tol: float = 1e-3) -> OmpResult:
    """
    Orthogonal matching pursuit.

    Each round selects the column maximizing |phi_q^H r| / ||phi_q|| and refits all
    selected columns by least squares.

    Args:
        y: Observation vector
        phi: Dictionary with nonzero columns
        max_atoms: Maximum number of selected columns
        residual_tol: Relative residual norm at which to stop

    Returns:
        Selected support, coefficients and residual history
    """
    norms = np.linalg.norm(phi, axis=0)
    size = phi.shape[1]
    coefficients = np.zeros(size, dtype=complex)
    y_norm = float(np.linalg.norm(y))
    residual = y.astype(complex)
    residual_norms = [y_norm]
    support: list[int] = []
    if y_norm == 0.0:
        return OmpResult(
            support=[],
            coefficients=coefficients,
            residual_norms=residual_norms,
            stopping_rule="residual_tol",
        )

    rule = "max_atoms"
    for _ in range(min(max_atoms, size)):
        scores = np.abs(phi.conj().T @ residual) / np.where(norms > 0, norms, np.inf)
        scores[support] = -np.inf
        support.append(int(np.argmax(scores)))
        sub = phi[:, support]
        fitted, *_ = np.linalg.lstsq(sub, y, rcond=None)
        residual = y - sub @ fitted
        residual_norms.append(float(np.linalg.norm(residual)))
        if residual_norms[-1] < residual_tol * y_norm:
            rule = "residual_tol"
            break

    coefficients[support] = fitted
    return OmpResult(
        support=support,
        coefficients=coefficients,
        residual_norms=residual_norms,
        stopping_rule=rule,
    )


def omp_estimates(
    observation: Observation,
    pilots: PilotSet,
    array: ArrayGeometry,
    grid: GridSpec,
    config: OmpConfig,
    prior_xi: XiPrior,
    counts: tuple[int, int] | None = None,
) -> Estimates:
    """
    Separate OMP on the radar and communication blocks over the fixed uniform grid.

    Args:
        observation: Radar and communication observations
        pilots: Pilot set
        array: Base-station array
        grid: Uniform grid
        config: Stopping rules
        prior_xi: Sensing-parameter prior (its mean fixes the user column)
        counts: True (K, L); used for the atom budget when ``config.use_true_counts``

    Returns:
        Estimates with unit detection probability on every selected atom
    """
    xi = initial_params(grid, prior_xi)
    radar, comm = observation_blocks(xi, observation, array, pilots)
    if config.use_true_counts and counts is not None:
        budget_r, budget_c = counts[0] + 1, counts[1] + 1
    else:
        budget_r = budget_c = config.max_atoms
    result_r = omp(radar.y, radar.phi, budget_r, config.residual_tol)
    result_c = omp(comm.y, comm.phi, budget_c, config.residual_tol)
    logger.debug(
        f"OMP selected {len(result_r.support)} radar and {len(result_c.support)} comm atoms "
        f"({result_r.stopping_rule}, {result_c.stopping_rule})"
    )

    probs_r = np.zeros(xi.num_points + 1)
    probs_c = np.zeros(xi.num_points + 1)
    probs_r[result_r.support] = 1.0
    probs_c[result_c.support] = 1.0
    return build_estimates(
        xi,
        result_r.coefficients,
        result_c.coefficients,
        probs_r,
        probs_c,
        0.5,
        array,
        pilots,
        diagnostics=SolverDiagnostics(em_converged=True),
    )


def turbo_cs_fixed_grid(
    observation: Observation,
    pilots: PilotSet,
    array: ArrayGeometry,
    grid: GridSpec,
    hyper: PriorHyperParams,
    config: SolverConfig,
    prior_xi: XiPrior,
) -> Estimates:
    """
    Joint-prior turbo inference with the grid, user and time offset frozen.
    """
    fixed = config.model_copy(update={"mode": SolverMode.FIXED_GRID})
    return sea_turbo_sbi(observation, pilots, array, grid, hyper, fixed, prior_xi)


def sea_turbo_sbi_separate(
    observation: Observation,
    pilots: PilotSet,
    array: ArrayGeometry,
    grid: GridSpec,
    hyper: PriorHyperParams,
    config: SolverConfig,
    prior_xi: XiPrior,
) -> Estimates:
    """
    Dynamic-grid inference with independent Bernoulli(lambda rho_t) branch priors.
    """
    separate = config.model_copy(update={"mode": SolverMode.SEPARATE})
    return sea_turbo_sbi(observation, pilots, array, grid, hyper, separate, prior_xi)
