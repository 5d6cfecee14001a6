import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from app.prior.schemas import PriorHyperParams
from app.turbo_e.schemas import (
    BranchUpdate,
    GaussianMessage,
    ModuleAResult,
    ObservationBlock,
    PosteriorState,
    TurboControl,
)

logger = logging.getLogger(__name__)

_JITTER_ATTEMPTS = 6


def _log(values) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(values, dtype=float))


def extrinsic_message(
    post_mean: np.ndarray,
    post_var: np.ndarray,
    prior_mean: np.ndarray,
    prior_var: np.ndarray,
    var_min: float = 1e-12,
    var_max: float = 1e12,
) -> GaussianMessage:
    """
    Subtract prior information from posterior information.

    1/v_ext = 1/v_post - 1/v_pri and m_ext = v_ext (m_post/v_post - m_pri/v_pri), with
    the extrinsic precision floored at 1/var_max and variances clamped to
    [var_min, var_max].

    Returns:
        Extrinsic Gaussian message
    """
    post_var = np.clip(post_var, var_min, var_max)
    precision = np.maximum(1.0 / post_var - 1.0 / prior_var, 1.0 / var_max)
    ext_var = np.clip(1.0 / precision, var_min, var_max)
    ext_mean = ext_var * (post_mean / post_var - prior_mean / prior_var)
    return GaussianMessage(mean=ext_mean, var=ext_var)


def _factor(matrix: np.ndarray) -> tuple[tuple, bool]:
    try:
        return cho_factor(matrix, lower=True), False
    except LinAlgError:
        pass
    scale = max(float(np.real(np.trace(matrix))) / matrix.shape[0], 1.0)
    jitter = 1e-12 * scale
    for _ in range(_JITTER_ATTEMPTS):
        try:
            factor = cho_factor(matrix + jitter * np.eye(matrix.shape[0]), lower=True)
            logger.warning(f"Module A system not positive definite; added jitter {jitter:.3e}")
            return factor, True
        except LinAlgError:
            jitter *= 100.0
    raise LinAlgError("Module A system remained singular after regularization")


def lmmse_module_a(
    block: ObservationBlock,
    prior: GaussianMessage,
    var_min: float = 1e-12,
    var_max: float = 1e12,
) -> ModuleAResult:
    """
    LMMSE estimate of x from y = Phi x + z under a diagonal Gaussian prior.

    V_post = (Phi^H Phi / s2 + diag(v_pri)^-1)^-1 and
    x_post = V_post (diag(v_pri)^-1 m_pri + Phi^H y / s2). The system is solved in
    the noise-scaled form (Phi^H Phi + s2 diag(v_pri)^-1) through a Cholesky factor.

    Args:
        block: Observation block with cached Gram products
        prior: Prior message over the block's coefficients
        var_min: Lower variance clamp of the extrinsic message
        var_max: Upper variance clamp of the extrinsic message

    Returns:
        Posterior mean and covariance, extrinsic message, and whether jitter was needed
    """
    noise_var = block.noise_var
    scaled = block.gram + np.diag(noise_var / prior.var)
    factor, regularized = _factor(scaled)
    post_mean = cho_solve(factor, block.proj + noise_var * prior.mean / prior.var)
    post_cov = noise_var * cho_solve(factor, np.eye(scaled.shape[0], dtype=complex))
    post_var = np.real(np.diag(post_cov))
    extrinsic = extrinsic_message(post_mean, post_var, prior.mean, prior.var, var_min, var_max)
    return ModuleAResult(
        post_mean=post_mean, post_cov=post_cov, extrinsic=extrinsic, regularized=regularized
    )


def log_likelihood_ratio(x_pri: np.ndarray, v_pri: np.ndarray, slab_var: np.ndarray) -> np.ndarray:
    """
    log of CN(x; 0, slab + v) / CN(x; 0, v).
    """
    total = slab_var + v_pri
    return np.log(v_pri / total) + np.abs(x_pri) ** 2 * slab_var / (v_pri * total)


def _branch_posterior(
    x_pri: np.ndarray,
    v_pri: np.ndarray,
    slab_var: np.ndarray,
    log_active: np.ndarray,
    log_inactive: np.ndarray,
) -> BranchUpdate:
    log_ratio = log_likelihood_ratio(x_pri, v_pri, slab_var)
    with np.errstate(invalid="ignore"):
        prob = expit(log_active + log_ratio - log_inactive)
    prob = np.nan_to_num(prob, nan=0.0)
    mu = x_pri * slab_var / (slab_var + v_pri)
    nu = slab_var * v_pri / (slab_var + v_pri)
    mean = prob * mu
    var = np.maximum(prob * (nu + np.abs(mu) ** 2) - np.abs(mean) ** 2, 0.0)
    return BranchUpdate(
        post_mean=mean, post_var=var, post_active_prob=prob, log_likelihood_ratio=log_ratio
    )


def spike_slab_branch_update(x_pri, v_pri, slab_var, prior_active_prob) -> BranchUpdate:
    """
    Posterior of a spike-and-slab coefficient observed through an AWGN channel.

    The coefficient prior is (1 - pi) delta(x) + pi CN(x; 0, slab_var) and the
    observation is x_pri = x + CN(0, v_pri).

    Args:
        x_pri: Observed value(s)
        v_pri: Observation noise variance(s), positive
        slab_var: Slab variance(s), positive
        prior_active_prob: Prior activity pi

    Returns:
        Posterior mean, variance, activity probability and log-likelihood ratio
    """
    x_pri = np.asarray(x_pri, dtype=complex)
    v_pri = np.asarray(v_pri, dtype=float)
    slab_var = np.asarray(slab_var, dtype=float)
    pi = np.asarray(prior_active_prob, dtype=float)
    return _branch_posterior(x_pri, v_pri, slab_var, _log(pi), _log(1.0 - pi))


def _support_messages(
    hyper: PriorHyperParams, log_ratio_r: np.ndarray, log_ratio_c: np.ndarray, joint: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Extrinsic activity of each branch and the joint support belief, in log domain.

    Returns:
        (log pi_r, log(1 - pi_r), log pi_c, log(1 - pi_c), log-odds of s_q), the last
        being None in separate mode
    """
    log_lam, log_not_lam = _log(hyper.lambda_), _log(1.0 - hyper.lambda_)
    log_rho = {"r": _log(hyper.rho_r), "c": _log(hyper.rho_c)}
    log_not_rho = {"r": _log(1.0 - hyper.rho_r), "c": _log(1.0 - hyper.rho_c)}

    if not joint:
        out = []
        for branch in ("r", "c"):
            pi = hyper.lambda_ * (hyper.rho_r if branch == "r" else hyper.rho_c)
            size = log_ratio_r.shape[0]
            out += [np.full(size, _log(pi)), np.full(size, _log(1.0 - pi))]
        return out[0], out[1], out[2], out[3], None

    # upward messages s^t -> s_q: rho L + 1 - rho against 1
    log_up = {
        "r": np.logaddexp(log_rho["r"] + log_ratio_r, log_not_rho["r"]),
        "c": np.logaddexp(log_rho["c"] + log_ratio_c, log_not_rho["c"]),
    }
    out = []
    for branch, other in (("r", "c"), ("c", "r")):
        log_den = np.logaddexp(log_not_lam, log_lam + log_up[other])
        log_active = log_rho[branch] + log_lam + log_up[other] - log_den
        log_inactive = np.logaddexp(log_not_lam, log_not_rho[branch] + log_lam + log_up[other])
        out += [log_active, log_inactive - log_den]
    joint_log_odds = log_lam + log_up["r"] + log_up["c"] - log_not_lam
    return out[0], out[1], out[2], out[3], joint_log_odds


def module_b(
    prior_from_a: GaussianMessage,
    hyper: PriorHyperParams,
    joint: bool = True,
    var_min: float = 1e-12,
    var_max: float = 1e12,
) -> tuple[PosteriorState, GaussianMessage]:
    """
    Sum-product on the support tree given Module A's extrinsic message.

    Each coefficient's AWGN likelihood ratio travels up through its branch support
    to s_q, where it meets the Bernoulli(lambda) prior and the other branch's
    message; the extrinsic activity probability returned to each branch drives its
    spike-and-slab posterior. With ``joint`` False the support layer is replaced by
    independent Bernoulli(lambda rho_t) branch priors.

    Index 0 uses the fixed activities ``user_echo_prior`` / ``los_prior`` when set.

    Args:
        prior_from_a: Extrinsic message of Module A over [x^r; x^c]
        hyper: Prior hyperparameters
        joint: Use the joint support layer
        var_min: Lower variance clamp
        var_max: Upper variance clamp

    Returns:
        Tuple of (posterior state, extrinsic message for Module A)
    """
    radar, comm = prior_from_a.split()
    ratio_r = log_likelihood_ratio(radar.mean, radar.var, hyper.slab_var_r)
    ratio_c = log_likelihood_ratio(comm.mean, comm.var, hyper.slab_var_c)
    log_pi_r, log_not_pi_r, log_pi_c, log_not_pi_c, joint_log_odds = _support_messages(
        hyper, ratio_r, ratio_c, joint
    )

    fixed = False
    if hyper.user_echo_prior is not None:
        log_pi_r[0], log_not_pi_r[0] = _log(hyper.user_echo_prior), _log(1 - hyper.user_echo_prior)
        fixed = True
    if hyper.los_prior is not None:
        log_pi_c[0], log_not_pi_c[0] = _log(hyper.los_prior), _log(1 - hyper.los_prior)
        fixed = True

    post_r = _branch_posterior(radar.mean, radar.var, hyper.slab_var_r, log_pi_r, log_not_pi_r)
    post_c = _branch_posterior(comm.mean, comm.var, hyper.slab_var_c, log_pi_c, log_not_pi_c)

    either = 1.0 - (1.0 - post_r.post_active_prob) * (1.0 - post_c.post_active_prob)
    if joint_log_odds is None:
        prob_joint = either
    else:
        with np.errstate(invalid="ignore"):
            prob_joint = np.nan_to_num(expit(joint_log_odds), nan=1.0)
        if fixed:
            prob_joint[0] = either[0]

    post_mean = np.concatenate([post_r.post_mean, post_c.post_mean])
    post_var = np.concatenate([post_r.post_var, post_c.post_var])
    state = PosteriorState(
        x_mean=post_mean,
        x_var=post_var,
        support_prob_r=post_r.post_active_prob,
        support_prob_c=post_c.post_active_prob,
        support_prob_joint=prob_joint,
    )
    extrinsic = extrinsic_message(
        post_mean, post_var, prior_from_a.mean, prior_from_a.var, var_min, var_max
    )
    return state, extrinsic


def initial_message(hyper: PriorHyperParams, var_min: float = 1e-12) -> GaussianMessage:
    """
    Zero-mean Module-A prior with variance equal to the prior activity times the slab.
    """
    activity_r = np.full(hyper.size, hyper.lambda_ * hyper.rho_r)
    activity_c = np.full(hyper.size, hyper.lambda_ * hyper.rho_c)
    if hyper.user_echo_prior is not None:
        activity_r[0] = hyper.user_echo_prior
    if hyper.los_prior is not None:
        activity_c[0] = hyper.los_prior
    var = np.concatenate([activity_r * hyper.slab_var_r, activity_c * hyper.slab_var_c])
    var = np.maximum(var, var_min)
    return GaussianMessage(mean=np.zeros(var.shape[0], dtype=complex), var=var)


def _damp(new: GaussianMessage, old: GaussianMessage, beta: float) -> GaussianMessage:
    return GaussianMessage(
        mean=beta * new.mean + (1.0 - beta) * old.mean,
        var=beta * new.var + (1.0 - beta) * old.var,
    )


def turbo_estep(
    radar: ObservationBlock,
    comm: ObservationBlock,
    hyper: PriorHyperParams,
    init: GaussianMessage | None = None,
    ctrl: TurboControl | None = None,
    joint: bool = True,
) -> PosteriorState:
    """
    Alternate Module A and Module B until the posterior means settle.

    Args:
        radar: Radar observation block
        comm: Communication observation block
        hyper: Prior hyperparameters
        init: Module-A prior to start from (defaults to ``initial_message``)
        ctrl: Iteration control
        joint: Use the joint support layer in Module B

    Returns:
        Posterior state; when the tolerance is not met within ``ctrl.max_iters`` the
        iterate with the smallest change is returned with ``converged`` False
    """
    ctrl = ctrl or TurboControl()
    message = init if init is not None else initial_message(hyper, ctrl.var_min)
    previous = None
    best: PosteriorState | None = None
    best_change = np.inf
    regularized = False

    for iteration in range(1, ctrl.max_iters + 1):
        prior_r, prior_c = message.split()
        result_r = lmmse_module_a(radar, prior_r, ctrl.var_min, ctrl.var_max)
        result_c = lmmse_module_a(comm, prior_c, ctrl.var_min, ctrl.var_max)
        regularized = regularized or result_r.regularized or result_c.regularized

        to_b = GaussianMessage.stack(result_r.extrinsic, result_c.extrinsic)
        state, to_a = module_b(to_b, hyper, joint, ctrl.var_min, ctrl.var_max)
        if ctrl.damped:
            to_a = _damp(to_a, message, ctrl.damping)

        change = np.inf if previous is None else float(np.max(np.abs(state.x_mean - previous)))
        previous = state.x_mean
        state = state.model_copy(
            update={
                "dense_post_mean": np.concatenate([result_r.post_mean, result_c.post_mean]),
                "dense_cov_r": result_r.post_cov,
                "dense_cov_c": result_c.post_cov,
                "message_to_a": to_a,
                "iterations": iteration,
                "regularized": regularized,
            }
        )
        logger.debug(f"Turbo iteration {iteration}: change {change:.3e}")

        if change <= best_change:
            best, best_change = state, change
        if change < ctrl.tol:
            return state.model_copy(update={"converged": True})
        message = to_a

    logger.warning(
        f"Turbo E-step did not converge in {ctrl.max_iters} iterations "
        f"(smallest change {best_change:.3e})"
    )
    return best.model_copy(update={"converged": False, "iterations": ctrl.max_iters})
