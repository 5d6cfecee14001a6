import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class GaussianMessage(BaseModel):
    """
    Diagonal complex Gaussian message over the stacked coefficients [x^r; x^c].

    Attributes:
        mean: Complex means, length 2(Q+1)
        var: Strictly positive variances, length 2(Q+1)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mean: np.ndarray
    var: np.ndarray

    @model_validator(mode="after")
    def check_shapes(self) -> "GaussianMessage":
        self.mean = np.asarray(self.mean, dtype=complex)
        self.var = np.asarray(self.var, dtype=float)
        if self.mean.shape != self.var.shape:
            raise ValueError("message mean and variance differ in shape")
        if not np.all(np.isfinite(self.var)) or np.any(self.var <= 0):
            raise ValueError("message variances must be finite and strictly positive")
        return self

    @property
    def size(self) -> int:
        return int(self.mean.shape[0])

    def split(self) -> tuple["GaussianMessage", "GaussianMessage"]:
        """
        Radar and communication halves of a stacked message.
        """
        half = self.size // 2
        return (
            GaussianMessage(mean=self.mean[:half], var=self.var[:half]),
            GaussianMessage(mean=self.mean[half:], var=self.var[half:]),
        )

    @classmethod
    def stack(cls, radar: "GaussianMessage", comm: "GaussianMessage") -> "GaussianMessage":
        return cls(
            mean=np.concatenate([radar.mean, comm.mean]),
            var=np.concatenate([radar.var, comm.var]),
        )


class TurboControl(BaseModel):
    """
    Iteration control of the turbo E-step.

    Attributes:
        max_iters: Maximum number of Module A / Module B exchanges
        tol: Stop once the max-abs change of the posterior means falls below this
        damping: Weight of the new Module-B extrinsic message (1 disables damping)
        damped: Apply damping at all
        var_min: Lower clamp of message variances
        var_max: Upper clamp of message variances
    """

    model_config = ConfigDict(extra="forbid")

    max_iters: int = Field(default=20, ge=1, description="Turbo iterations per E-step")
    tol: float = Field(default=1e-6, gt=0, description="Convergence threshold on posterior means")
    damping: float = Field(default=0.5, gt=0, le=1, description="Extrinsic damping factor")
    damped: bool = Field(default=True, description="Damp Module-B extrinsic messages")
    var_min: float = Field(default=1e-12, gt=0, description="Lower variance clamp")
    var_max: float = Field(default=1e12, gt=0, description="Upper variance clamp")


class ObservationBlock(BaseModel):
    """
    One block y = Phi x + z of the stacked linear model, with cached Gram products.

    Attributes:
        y: Observation vector
        phi: Measurement matrix
        noise_var: Noise variance of the block
        gram: Phi^H Phi
        proj: Phi^H y
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    y: np.ndarray
    phi: np.ndarray
    noise_var: float = Field(..., gt=0)
    gram: np.ndarray | None = None
    proj: np.ndarray | None = None

    @model_validator(mode="after")
    def fill_products(self) -> "ObservationBlock":
        if self.phi.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"measurement matrix has {self.phi.shape[0]} rows for {self.y.shape[0]} samples"
            )
        if self.gram is None:
            self.gram = self.phi.conj().T @ self.phi
        if self.proj is None:
            self.proj = self.phi.conj().T @ self.y
        return self


class ModuleAResult(BaseModel):
    """
    LMMSE posterior of one block and its extrinsic message.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    post_mean: np.ndarray
    post_cov: np.ndarray
    extrinsic: GaussianMessage
    regularized: bool = False


class BranchUpdate(BaseModel):
    """
    Spike-and-slab posterior of one branch, elementwise over coefficients.

    Attributes:
        post_mean: Posterior means
        post_var: Posterior variances
        post_active_prob: Posterior probabilities that the coefficient is active
        log_likelihood_ratio: log CN(x; 0, slab+v) / CN(x; 0, v)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    post_mean: np.ndarray
    post_var: np.ndarray
    post_active_prob: np.ndarray
    log_likelihood_ratio: np.ndarray

    @property
    def likelihood_ratio(self) -> np.ndarray:
        return np.exp(self.log_likelihood_ratio)


class PosteriorState(BaseModel):
    """
    Output of the E-step.

    Attributes:
        x_mean: Module-B posterior means [x^r; x^c]
        x_var: Module-B posterior variances
        support_prob_r: Posterior P(s_q^r = 1)
        support_prob_c: Posterior P(s_q^c = 1)
        support_prob_joint: Posterior P(s_q = 1)
        dense_post_mean: Module-A posterior mean [x^r; x^c]
        dense_cov_r: Module-A posterior covariance of x^r
        dense_cov_c: Module-A posterior covariance of x^c
        message_to_a: Last prior message fed to Module A (warm start)
        iterations: Turbo iterations performed
        converged: Whether the tolerance was met
        regularized: Whether any Module-A solve needed jitter
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_mean: np.ndarray
    x_var: np.ndarray
    support_prob_r: np.ndarray
    support_prob_c: np.ndarray
    support_prob_joint: np.ndarray
    dense_post_mean: np.ndarray | None = None
    dense_cov_r: np.ndarray | None = None
    dense_cov_c: np.ndarray | None = None
    message_to_a: GaussianMessage | None = None
    iterations: int = 0
    converged: bool = True
    regularized: bool = False

    @property
    def size(self) -> int:
        return int(self.support_prob_joint.shape[0])

    @property
    def x_mean_r(self) -> np.ndarray:
        return self.x_mean[: self.size]

    @property
    def x_mean_c(self) -> np.ndarray:
        return self.x_mean[self.size :]

    @property
    def dense_mean_r(self) -> np.ndarray:
        return self.dense_post_mean[: self.size]

    @property
    def dense_mean_c(self) -> np.ndarray:
        return self.dense_post_mean[self.size :]
