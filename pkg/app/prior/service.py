import logging

import numpy as np
from scipy.spatial.distance import pdist

from app.channel.schemas import Reflector, Scene
from app.core.exceptions import SceneGenerationError
from app.geometry.schemas import GridSpec, Position
from app.geometry.service import grid_points
from app.prior.schemas import PriorHyperParams, SupportTriple

logger = logging.getLogger(__name__)


def default_hyper_params(
    num_targets: int,
    num_scatterers: int,
    overlap: int,
    num_points: int,
    sees_user: bool = True,
    slab_var: float = 1.0,
) -> PriorHyperParams:
    """
    Hyperparameters matched to the scene counts.

    lambda = (K + L - overlap) / Q, rho_t = count_t / (K + L - overlap + 1), unit slab
    variances.

    Args:
        num_targets: Target count K
        num_scatterers: Scatterer count L
        overlap: Number of positions shared by a target and a scatterer
        num_points: Grid size Q
        sees_user: Whether the radar echo contains the user (fixes index-0 radar activity)
        slab_var: Common slab variance

    Returns:
        Prior hyperparameters for Q+1 coefficients
    """
    distinct = num_targets + num_scatterers - overlap
    lam = min(max(distinct / num_points, 1e-6), 1.0 - 1e-6)
    slab = np.full(num_points + 1, float(slab_var))
    return PriorHyperParams(
        lambda_=lam,
        rho_r=num_targets / (distinct + 1),
        rho_c=num_scatterers / (distinct + 1),
        slab_var_r=slab,
        slab_var_c=slab.copy(),
        user_echo_prior=1.0 if sees_user else 0.0,
        los_prior=1.0,
    )


def sample_supports(
    hyper: PriorHyperParams, num_points: int, rng: np.random.Generator
) -> SupportTriple:
    """
    Draw (s, s^r, s^c) for Q+1 coefficients from the joint support model.

    s_q ~ Bernoulli(lambda); given s_q = 1 the branches are Bernoulli(rho_r) and
    Bernoulli(rho_c), given s_q = 0 both are zero. A fixed index-0 activity in
    ``hyper`` overrides the draw at index 0.

    Args:
        hyper: Prior hyperparameters
        num_points: Grid size Q
        rng: Random generator

    Returns:
        Sampled supports of length Q+1
    """
    size = num_points + 1
    s = rng.random(size) < hyper.lambda_
    s_r = s & (rng.random(size) < hyper.rho_r)
    s_c = s & (rng.random(size) < hyper.rho_c)
    if hyper.user_echo_prior is not None:
        s_r[0] = rng.random() < hyper.user_echo_prior
    if hyper.los_prior is not None:
        s_c[0] = rng.random() < hyper.los_prior
    s[0] = s[0] or s_r[0] or s_c[0]
    return SupportTriple(s=s, s_r=s_r, s_c=s_c)


def sample_gains(
    supports: SupportTriple, hyper: PriorHyperParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw spike-and-slab coefficients given the supports.

    Returns:
        Tuple (x^r, x^c); zero off-support, CN(0, slab variance) on support
    """

    def draw(active: np.ndarray, slab_var: np.ndarray) -> np.ndarray:
        noise = rng.standard_normal(active.size) + 1j * rng.standard_normal(active.size)
        return np.where(active, np.sqrt(slab_var / 2.0) * noise, 0.0)

    return draw(supports.s_r, hyper.slab_var_r), draw(supports.s_c, hyper.slab_var_c)


def draw_user_position(mean: np.ndarray, sigma_p2: float, rng: np.random.Generator) -> np.ndarray:
    """
    User position drawn around the prior mean with per-axis variance sigma_p^2 / 2.
    """
    return np.asarray(mean, dtype=float) + np.sqrt(sigma_p2 / 2.0) * rng.standard_normal(2)


def draw_time_offset(bound: float, rng: np.random.Generator) -> float:
    return float(rng.uniform(-bound, bound))


def _complex_gain(rng: np.random.Generator) -> complex:
    return complex(np.sqrt(0.5) * (rng.standard_normal() + 1j * rng.standard_normal()))


def _pick_cells(
    grid: GridSpec,
    count: int,
    exclude: np.ndarray,
    min_separation_cells: float,
    rng: np.random.Generator,
    max_retries: int,
) -> np.ndarray:
    points = grid_points(grid)
    min_sep = min_separation_cells * grid.resolution
    for _ in range(max_retries):
        order = rng.permutation(points.shape[0])
        chosen: list[int] = []
        for index in order:
            candidate = points[index]
            taken = [points[i] for i in chosen] + list(exclude)
            if all(np.hypot(*(candidate - other)) >= min_sep - 1e-9 for other in taken):
                chosen.append(int(index))
                if len(chosen) == count:
                    return np.array(chosen, dtype=int)
    raise SceneGenerationError(
        f"cannot place {count} entities {min_sep} m apart on the grid after {max_retries} retries"
    )


def scene_from_counts(
    num_targets: int,
    num_scatterers: int,
    overlap: int,
    grid: GridSpec,
    rng: np.random.Generator,
    user: np.ndarray,
    time_offset: float = 0.0,
    sees_user: bool = True,
    on_grid: bool = False,
    min_separation_cells: float = 2.0,
    max_retries: int = 50,
) -> Scene:
    """
    Place a fixed number of targets and scatterers, ``overlap`` of them shared.

    Positions are distinct grid cells at least ``min_separation_cells`` apart (and as
    far from the user); off-grid scenes add a uniform offset within each cell and are
    redrawn until the offset positions keep the same separation.

    Args:
        num_targets: Target count K
        num_scatterers: Scatterer count L
        overlap: Shared positions, at most min(K, L)
        grid: Generating grid
        rng: Random generator
        user: User position, shape (2,)
        time_offset: Uplink time offset in seconds
        sees_user: Whether the radar echo contains the user
        on_grid: Place entities exactly on cell centres
        min_separation_cells: Minimum pairwise separation in cells
        max_retries: Placement attempts before giving up

    Returns:
        Scene with supports and coefficients over the generating grid

    Raises:
        ValueError: If ``overlap`` exceeds min(K, L)
        SceneGenerationError: If the separation cannot be met
    """
    if overlap > min(num_targets, num_scatterers) or overlap < 0:
        raise ValueError(f"overlap {overlap} must lie in [0, min(K, L)]")

    distinct = num_targets + num_scatterers - overlap
    points = grid_points(grid)
    min_sep = min_separation_cells * grid.resolution
    for _ in range(max_retries):
        cells = _pick_cells(
            grid, distinct, np.atleast_2d(user), min_separation_cells, rng, max_retries
        )
        positions = points[cells]
        if on_grid:
            break
        positions = positions + rng.uniform(-0.5, 0.5, size=positions.shape) * grid.resolution
        gaps = pdist(np.vstack([positions, np.atleast_2d(user)]))
        if gaps.size == 0 or gaps.min() >= min_sep - 1e-9:
            break
    else:
        raise SceneGenerationError(
            f"cannot keep {distinct} off-grid entities {min_sep} m apart "
            f"after {max_retries} retries"
        )

    target_slots = list(range(num_targets))
    scatterer_slots = list(range(overlap)) + list(range(num_targets, distinct))

    size = grid.num_points + 1
    s = np.zeros(size, dtype=bool)
    s_r = np.zeros(size, dtype=bool)
    s_c = np.zeros(size, dtype=bool)
    gains_r = np.zeros(size, dtype=complex)
    gains_c = np.zeros(size, dtype=complex)

    targets = []
    for slot in target_slots:
        gain = _complex_gain(rng)
        targets.append(Reflector(position=Position.from_array(positions[slot]), gain=gain))
        s_r[cells[slot] + 1] = True
        gains_r[cells[slot] + 1] = gain
    scatterers = []
    for slot in scatterer_slots:
        gain = _complex_gain(rng)
        scatterers.append(Reflector(position=Position.from_array(positions[slot]), gain=gain))
        s_c[cells[slot] + 1] = True
        gains_c[cells[slot] + 1] = gain
    s[cells + 1] = True

    user_echo_gain = _complex_gain(rng) if sees_user else 0j
    los_gain = _complex_gain(rng)
    s[0] = True
    s_r[0] = sees_user
    s_c[0] = True
    gains_r[0] = user_echo_gain
    gains_c[0] = los_gain

    logger.debug(f"Placed {num_targets} targets and {num_scatterers} scatterers ({overlap} shared)")
    return Scene(
        user=Position.from_array(user),
        user_echo_gain=user_echo_gain,
        los_gain=los_gain,
        targets=targets,
        scatterers=scatterers,
        time_offset=time_offset,
        supports=SupportTriple(s=s, s_r=s_r, s_c=s_c),
        gains_r=gains_r,
        gains_c=gains_c,
    )


def scene_from_prior(
    hyper: PriorHyperParams,
    grid: GridSpec,
    rng: np.random.Generator,
    user: np.ndarray,
    time_offset: float = 0.0,
) -> Scene:
    """
    Scene drawn from the sparse prior itself, entities exactly on grid cells.
    """
    supports = sample_supports(hyper, grid.num_points, rng)
    gains_r, gains_c = sample_gains(supports, hyper, rng)
    points = grid_points(grid)
    targets = [
        Reflector(position=Position.from_array(points[q - 1]), gain=complex(gains_r[q]))
        for q in np.flatnonzero(supports.s_r)
        if q > 0
    ]
    scatterers = [
        Reflector(position=Position.from_array(points[q - 1]), gain=complex(gains_c[q]))
        for q in np.flatnonzero(supports.s_c)
        if q > 0
    ]
    return Scene(
        user=Position.from_array(user),
        user_echo_gain=complex(gains_r[0]),
        los_gain=complex(gains_c[0]),
        targets=targets,
        scatterers=scatterers,
        time_offset=time_offset,
        supports=supports,
        gains_r=gains_r,
        gains_c=gains_c,
    )
