from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from app.baselines.schemas import OmpConfig
from app.core.config import settings
from app.geometry.schemas import Area, ArrayGeometry, GridSpec, Position
from app.m_step.schemas import MStepConfig
from app.solver.schemas import SolverConfig, SolverMode
from app.turbo_e.schemas import TurboControl


class Method(str, Enum):
    OMP = "omp"
    TURBO_CS = "turbo_cs"
    SEA_SEPARATE = "sea_separate"
    SEA_JOINT = "sea_joint"


class SystemSection(BaseModel):
    """
    Physical layer and geometry: [system].
    """

    model_config = ConfigDict(extra="forbid")

    area_x_min: float = Field(default=-50.0, description="Left edge of the area (m)")
    area_y_min: float = Field(default=-50.0, description="Bottom edge of the area (m)")
    area_width: float = Field(default=100.0, gt=0, description="Area extent along x (m)")
    area_height: float = Field(default=100.0, gt=0, description="Area extent along y (m)")
    resolution: float = Field(default=5.0, gt=0, description="Grid resolution d (m)")
    num_antennas: int = Field(default=64, ge=1, description="ULA antenna count M")
    num_subcarriers: int = Field(default=1024, ge=1, description="OFDM subcarrier count N")
    subcarrier_spacing: float = Field(default=30e3, gt=0, description="Subcarrier spacing f0 (Hz)")
    pilot_spacing: int = Field(default=32, ge=1, description="Pilot interval in subcarriers")
    bs_x: float = Field(default=-50.0, description="Base-station x (m)")
    bs_y: float = Field(default=0.0, description="Base-station y (m)")
    user_x: float = Field(default=50.0, description="Prior mean of the user x (m)")
    user_y: float = Field(default=0.0, description="Prior mean of the user y (m)")
    sigma_p2: float = Field(default=1.0, gt=0, description="User-position prior variance (m^2)")
    tau_bound_factor: float = Field(
        default=2.0, gt=0, description="Time-offset bound in units of 1/B"
    )

    @field_validator("pilot_spacing")
    @classmethod
    def check_pilots(cls, value: int, info: ValidationInfo) -> int:
        subcarriers = info.data.get("num_subcarriers")
        if subcarriers is not None and value > subcarriers:
            raise ValueError("pilot spacing exceeds the subcarrier count")
        return value

    @property
    def area(self) -> Area:
        return Area(
            x_min=self.area_x_min,
            y_min=self.area_y_min,
            width=self.area_width,
            height=self.area_height,
        )

    @property
    def grid(self) -> GridSpec:
        return GridSpec(area=self.area, resolution=self.resolution)

    @property
    def array(self) -> ArrayGeometry:
        return ArrayGeometry(
            num_antennas=self.num_antennas, position=Position(x=self.bs_x, y=self.bs_y)
        )

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing

    @property
    def tau_bound(self) -> float:
        return self.tau_bound_factor / self.bandwidth

    @property
    def user_mean(self) -> np.ndarray:
        return np.array([self.user_x, self.user_y])


class SceneSection(BaseModel):
    """
    Scene generation: [scene].
    """

    model_config = ConfigDict(extra="forbid")

    mode: Literal["counts", "prior"] = Field(
        default="counts", description="Fixed entity counts or draws from the prior"
    )
    num_targets: int = Field(default=9, ge=0, description="Radar targets K")
    num_scatterers: int = Field(default=10, ge=0, description="Communication scatterers L")
    overlap: int = Field(
        default=5, ge=0, description="Positions shared by a target and a scatterer"
    )
    sees_user: bool = Field(default=True, description="The radar echo contains the user")
    on_grid: bool = Field(default=False, description="Place entities exactly on cell centres")
    min_separation_cells: float = Field(
        default=2.0, ge=0, description="Minimum entity separation in cells"
    )
    random_time_offset: bool = Field(
        default=True, description="Draw tau_o uniformly in its bound (else zero)"
    )
    random_user_offset: bool = Field(
        default=True, description="Draw the user around the prior mean (else at the mean)"
    )


class PriorSection(BaseModel):
    """
    Prior hyperparameters: [prior]. Unset values follow the scene counts.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lambda_: float | None = Field(
        default=None, ge=0, le=1, alias="lambda", description="Sparsity level lambda"
    )
    rho_r: float | None = Field(default=None, ge=0, le=1, description="Radar branch rho_r")
    rho_c: float | None = Field(default=None, ge=0, le=1, description="Comm branch rho_c")
    slab_var: float = Field(default=1.0, gt=0, description="Slab variance of every coefficient")


class SolverSection(BaseModel):
    """
    EM loop: [solver].
    """

    model_config = ConfigDict(extra="forbid")

    em_max_iters: int = Field(default=30, ge=1, description="Maximum EM iterations")
    em_tol: float = Field(default=1e-3, gt=0, description="EM stopping threshold on xi (m)")
    detection_threshold: float = Field(
        default=0.5, gt=0, lt=1, description="Posterior probability of a detection"
    )
    noise_floor: float = Field(default=1e-12, gt=0, description="Smallest estimator noise variance")


class SweepSection(BaseModel):
    """
    Monte Carlo sweep: [sweep].
    """

    model_config = ConfigDict(extra="forbid")

    snr_db: list[float] = Field(
        default_factory=lambda: [0.0, 10.0, 20.0, 30.0], min_length=1, description="SNR points (dB)"
    )
    trials: int = Field(default=20, ge=1, description="Trials per SNR point")
    seed: int = Field(default=0, ge=0, description="Master seed")
    methods: list[Method] = Field(
        default_factory=lambda: list(Method), min_length=1, description="Methods to run"
    )
    workers: int = Field(
        default_factory=lambda: settings.WORKERS, ge=1, description="Worker processes"
    )
    plots: bool = Field(default=True, description="Write SVG curves next to the CSV files")


class ExperimentConfig(BaseModel):
    """
    Full experiment configuration, one model per config-file section.
    """

    model_config = ConfigDict(extra="forbid")

    system: SystemSection = Field(default_factory=SystemSection)
    scene: SceneSection = Field(default_factory=SceneSection)
    prior: PriorSection = Field(default_factory=PriorSection)
    turbo: TurboControl = Field(default_factory=TurboControl)
    m_step: MStepConfig = Field(default_factory=MStepConfig)
    solver: SolverSection = Field(default_factory=SolverSection)
    omp: OmpConfig = Field(default_factory=OmpConfig)
    sweep: SweepSection = Field(default_factory=SweepSection)

    def solver_config(self, mode: SolverMode = SolverMode.JOINT) -> SolverConfig:
        return SolverConfig(
            **self.solver.model_dump(), mode=mode, turbo=self.turbo, m_step=self.m_step
        )


class SweepRecord(BaseModel):
    """
    Metrics of one (method, SNR, trial) run.
    """

    method: str
    snr_db: float
    trial: int
    status: str = "ok"
    rmse_target: float = float("nan")
    rmse_scatterer: float = float("nan")
    nmse_radar: float = float("nan")
    nmse_comm: float = float("nan")
    miss_count: int = 0
    false_alarm_count: int = 0
    user_pos_error: float = float("nan")
    tau_offset_error: float = float("nan")
    em_iters: int = 0
    wall_time: float = 0.0


class DetectionOut(BaseModel):
    index: int
    x: float
    y: float
    gain_real: float
    gain_imag: float
    probability: float


class ComplexArrayOut(BaseModel):
    """
    Complex array split into nested real and imaginary lists of the same shape.
    """

    shape: list[int]
    real: list
    imag: list


class MethodReport(BaseModel):
    """
    Per-method section of a simulation report.

    Attributes:
        gains_r: Radar coefficients over the refined grid, index 0 is the user echo
        gains_c: Communication coefficients, index 0 is the LoS path
        channel_r: Reconstructed radar channels, shape (N_p, M, M)
        channel_c: Reconstructed communication channels, shape (N_p, M)
    """

    method: str
    targets: list[DetectionOut]
    scatterers: list[DetectionOut]
    user_estimate: Position
    time_offset: float
    gains_r: ComplexArrayOut
    gains_c: ComplexArrayOut
    channel_r: ComplexArrayOut
    channel_c: ComplexArrayOut
    record: SweepRecord
    diagnostics: dict


class SceneSummary(BaseModel):
    user: Position
    time_offset: float
    targets: list[Position]
    scatterers: list[Position]


class SimulationReport(BaseModel):
    """
    Full report of one simulated trial.
    """

    preset: str | None
    seed: int
    snr_db: float
    scene: SceneSummary
    methods: list[MethodReport]


class SimulationRequest(BaseModel):
    """
    Body of a simulation request.

    Attributes:
        preset: Preset name
        seed: Master seed
        snr_db: SNR of the trial in dB
        methods: Methods to run (all when omitted)
        overrides: Section-wise overrides, e.g. {"scene": {"on_grid": true}}
    """

    model_config = ConfigDict(extra="forbid")

    preset: str = "quick"
    seed: int = Field(default=0, ge=0)
    snr_db: float = 20.0
    methods: list[Method] | None = None
    overrides: dict[str, dict] = Field(default_factory=dict)


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
