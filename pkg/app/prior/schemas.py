import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PriorHyperParams(BaseModel):
    """
    Hyperparameters of the three-layer sparse prior.

    Attributes:
        lambda_: Prior probability that a position hosts a target or scatterer
        rho_r: Probability of a radar target given an occupied position
        rho_c: Probability of a communication scatterer given an occupied position
        slab_var_r: Slab variances of the radar coefficients, length Q+1
        slab_var_c: Slab variances of the communication coefficients, length Q+1
        user_echo_prior: Fixed activity of the user echo (index 0, radar), or None
            to treat index 0 like any other position
        los_prior: Fixed activity of the LoS path (index 0, comm), or None
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lambda_: float = Field(..., ge=0.0, le=1.0)
    rho_r: float = Field(..., ge=0.0, le=1.0)
    rho_c: float = Field(..., ge=0.0, le=1.0)
    slab_var_r: np.ndarray
    slab_var_c: np.ndarray
    user_echo_prior: float | None = Field(default=1.0, ge=0.0, le=1.0)
    los_prior: float | None = Field(default=1.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_slab_variances(self) -> "PriorHyperParams":
        self.slab_var_r = np.asarray(self.slab_var_r, dtype=float)
        self.slab_var_c = np.asarray(self.slab_var_c, dtype=float)
        if self.slab_var_r.shape != self.slab_var_c.shape:
            raise ValueError("radar and communication slab variances differ in length")
        if np.any(self.slab_var_r <= 0) or np.any(self.slab_var_c <= 0):
            raise ValueError("slab variances must be strictly positive")
        return self

    @property
    def size(self) -> int:
        return int(self.slab_var_r.shape[0])


class SupportTriple(BaseModel):
    """
    Joint and per-branch support indicators over the Q+1 sparse coefficients.

    Attributes:
        s: Joint support (a target or a scatterer may sit at the position)
        s_r: Radar support
        s_c: Communication support
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    s: np.ndarray
    s_r: np.ndarray
    s_c: np.ndarray

    @model_validator(mode="after")
    def check_hierarchy(self) -> "SupportTriple":
        self.s = np.asarray(self.s, dtype=bool)
        self.s_r = np.asarray(self.s_r, dtype=bool)
        self.s_c = np.asarray(self.s_c, dtype=bool)
        if np.any(self.s_r & ~self.s) or np.any(self.s_c & ~self.s):
            raise ValueError("branch support active where the joint support is not")
        return self
