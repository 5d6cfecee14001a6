from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.channel.schemas import SensingParams
from app.geometry.schemas import Position
from app.m_step.schemas import MStepConfig
from app.turbo_e.schemas import PosteriorState, TurboControl


class SolverMode(str, Enum):
    """
    Inference variants sharing one solver.
    """

    JOINT = "joint"
    SEPARATE = "separate"
    FIXED_GRID = "fixed_grid"


class SolverConfig(BaseModel):
    """
    EM loop configuration.

    Attributes:
        em_max_iters: Maximum number of M-steps
        em_tol: Stop once the sensing parameters move less than this (meters, with the
            time offset converted to meters)
        detection_threshold: Posterior support probability of a reported detection
        mode: Joint prior with dynamic grid, separate priors, or joint prior on a frozen grid
        noise_floor: Smallest noise variance handed to the estimator
        turbo: E-step control
        m_step: M-step parameters
    """

    model_config = ConfigDict(extra="forbid")

    em_max_iters: int = Field(default=30, ge=1, description="Maximum EM iterations")
    em_tol: float = Field(default=1e-3, gt=0, description="EM stopping threshold on xi (m)")
    detection_threshold: float = Field(
        default=0.5, gt=0, lt=1, description="Posterior probability of a detection"
    )
    mode: SolverMode = Field(default=SolverMode.JOINT, description="joint | separate | fixed_grid")
    noise_floor: float = Field(default=1e-12, gt=0, description="Smallest estimator noise variance")
    turbo: TurboControl = Field(default_factory=TurboControl)
    m_step: MStepConfig = Field(default_factory=MStepConfig)


class Detection(BaseModel):
    """
    A reported target, scatterer, user echo or LoS path.

    Attributes:
        index: Coefficient index (0 is the user, q >= 1 the q-th grid point)
        position: Refined position
        gain: Posterior-mean coefficient
        probability: Posterior support probability
    """

    index: int
    position: Position
    gain: complex
    probability: float = Field(..., ge=0.0, le=1.0)


class SolverDiagnostics(BaseModel):
    """
    Convergence record of one solver run.

    Attributes:
        em_iters: M-steps performed
        em_converged: Whether the xi-change threshold was met
        estep_iters: Turbo iterations of every E-step
        estep_converged: Whether every E-step met its tolerance
        regularized: Whether any Module-A solve needed jitter
        surrogate_trace: (before, after) surrogate value of each M-step
        active_counts: Number of refined grid points in each M-step
    """

    em_iters: int = 0
    em_converged: bool = False
    estep_iters: list[int] = Field(default_factory=list)
    estep_converged: bool = True
    regularized: bool = False
    surrogate_trace: list[tuple[float, float]] = Field(default_factory=list)
    active_counts: list[int] = Field(default_factory=list)


class Estimates(BaseModel):
    """
    Solver output.

    Attributes:
        detected_targets: Radar detections at grid indices q >= 1
        detected_scatterers: Communication detections at grid indices q >= 1
        user_echo: Radar detection of the user (index 0), if any
        los: LoS detection (index 0), if any
        user_pos: User-position estimate
        time_offset: Time-offset estimate in seconds
        xi: Final sensing parameters
        gains_r: Posterior-mean radar coefficients, length Q+1
        gains_c: Posterior-mean communication coefficients, length Q+1
        channel_r: Reconstructed radar channels, shape (N_p, M, M)
        channel_c: Reconstructed communication channels, shape (N_p, M)
        posterior: Final E-step state
        diagnostics: Convergence record
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    detected_targets: list[Detection] = Field(default_factory=list)
    detected_scatterers: list[Detection] = Field(default_factory=list)
    user_echo: Detection | None = None
    los: Detection | None = None
    user_pos: Position
    time_offset: float
    xi: SensingParams
    gains_r: np.ndarray
    gains_c: np.ndarray
    channel_r: np.ndarray
    channel_c: np.ndarray
    posterior: PosteriorState | None = None
    diagnostics: SolverDiagnostics = Field(default_factory=SolverDiagnostics)
