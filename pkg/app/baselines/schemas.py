import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class OmpConfig(BaseModel):
    """
    Stopping rules of orthogonal matching pursuit.

    Attributes:
        max_atoms: Atom budget; overridden by K+1 / L+1 when true counts are used
        residual_tol: Stop once ||r|| / ||y|| falls below this
        use_true_counts: Give the baseline the true entity counts
    """

    model_config = ConfigDict(extra="forbid")

    max_atoms: int = Field(default=16, ge=1, description="Atom budget without true counts")
    residual_tol: float = Field(default=1e-3, gt=0, description="Relative residual tolerance")
    use_true_counts: bool = Field(default=True, description="Stop at K+1 / L+1 atoms")


class OmpResult(BaseModel):
    """
    Output of one OMP run.

    Attributes:
        support: Selected column indices in selection order
        coefficients: Least-squares coefficients on the full column set (zero off-support)
        residual_norms: Residual norm before the first and after every selection
        stopping_rule: "max_atoms" or "residual_tol"
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    support: list[int]
    coefficients: np.ndarray
    residual_norms: list[float]
    stopping_rule: str
