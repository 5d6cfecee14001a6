import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.channel.schemas import PilotSet, SensingParams
from app.geometry.schemas import Area, ArrayGeometry


class XiPrior(BaseModel):
    """
    Prior on the sensing parameters.

    Attributes:
        user_mean: Mean of the Gaussian user-position prior, shape (2,)
        sigma_p2: Total user-position variance (sigma_p^2 / 2 per axis)
        tau_bound: Half-width of the uniform time-offset prior, 2/B
        area: Support of the uniform grid-position prior
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    user_mean: np.ndarray
    sigma_p2: float = Field(..., gt=0)
    tau_bound: float = Field(..., gt=0)
    area: Area


class SurrogateContext(BaseModel):
    """
    Everything the EM surrogate needs apart from the sensing parameters.

    Attributes:
        array: Base-station array
        pilots: Pilot set
        y_r: Radar observation
        y_c: Communication observation
        mean_r: Module-A posterior mean of x^r
        mean_c: Module-A posterior mean of x^c
        cov_r: Module-A posterior covariance of x^r
        cov_c: Module-A posterior covariance of x^c
        noise_var_r: Radar noise variance
        noise_var_c: Communication noise variance
        prior: Sensing-parameter prior
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    array: ArrayGeometry
    pilots: PilotSet
    y_r: np.ndarray
    y_c: np.ndarray
    mean_r: np.ndarray
    mean_c: np.ndarray
    cov_r: np.ndarray
    cov_c: np.ndarray
    noise_var_r: float = Field(..., gt=0)
    noise_var_c: float = Field(..., gt=0)
    prior: XiPrior

    @property
    def second_moment_r(self) -> np.ndarray:
        return np.outer(self.mean_r, self.mean_r.conj()) + self.cov_r

    @property
    def second_moment_c(self) -> np.ndarray:
        return np.outer(self.mean_c, self.mean_c.conj()) + self.cov_c


class SurrogateGradient(BaseModel):
    """
    Gradient of the surrogate with respect to each block of the sensing parameters.

    Attributes:
        grid: d/dr, shape (Q, 2); zero outside the active set
        user: d/dp_u, shape (2,)
        time_offset: d/dtau_o
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: np.ndarray
    user: np.ndarray
    time_offset: float


class StepSizes(BaseModel):
    """
    Initial Armijo displacements of one EM iteration.

    Attributes:
        eps_r: Grid displacement in meters
        eps_p: User displacement in meters
        eps_t: Time-offset displacement in seconds
    """

    eps_r: float = Field(..., gt=0)
    eps_p: float = Field(..., gt=0)
    eps_t: float = Field(..., gt=0)


class MStepConfig(BaseModel):
    """
    Active-set and Armijo parameters of the M-step.
    """

    model_config = ConfigDict(extra="forbid")

    active_threshold: float = Field(
        default=0.1, gt=0, lt=1, description="Joint support probability to refine a grid point"
    )
    collision_cells: float = Field(
        default=0.1, ge=0, description="Active points closer than this (in cells) are frozen"
    )
    merge_cells: float = Field(
        default=1.0,
        ge=0,
        description="A moving point stops short of a more probable one by this much (in cells)",
    )
    step_grid: float = Field(default=1.0, gt=0, description="Initial grid displacement (m)")
    step_user: float = Field(default=1.0, gt=0, description="Initial user displacement (m)")
    step_time: float = Field(
        default=0.1, gt=0, description="Initial time-offset displacement in units of 1/B"
    )
    step_decay: float = Field(
        default=0.8, gt=0, le=1, description="Per-EM-iteration decay of the initial steps"
    )
    shrink: float = Field(default=0.5, gt=0, lt=1, description="Backtracking shrink factor")
    sufficient_increase: float = Field(
        default=1e-4, gt=0, lt=1, description="Armijo sufficient-increase constant"
    )
    max_backtracks: int = Field(default=20, ge=1, description="Backtracks before a block is kept")

    def step_sizes(self, iteration: int, bandwidth: float) -> StepSizes:
        """
        Initial steps of EM iteration ``iteration`` (0-based).
        """
        decay = self.step_decay**iteration
        return StepSizes(
            eps_r=self.step_grid * decay,
            eps_p=self.step_user * decay,
            eps_t=self.step_time / bandwidth * decay,
        )


class ArmijoResult(BaseModel):
    """
    Outcome of one M-step.

    Attributes:
        xi: Updated sensing parameters
        value_before: Surrogate at the incoming parameters
        value_after: Surrogate at the updated parameters
        accepted: Whether each block (grid, user, time_offset) moved
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    xi: SensingParams
    value_before: float
    value_after: float
    accepted: dict[str, bool] = Field(default_factory=dict)
