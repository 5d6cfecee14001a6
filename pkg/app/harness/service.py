import logging
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from app.baselines.service import omp_estimates, sea_turbo_sbi_separate, turbo_cs_fixed_grid
from app.channel.schemas import Observation, PilotSet, Scene
from app.channel.service import (
    clean_signals,
    comm_channel_stack,
    generate_pilots,
    noise_variance_for_snr,
    radar_channel_stack,
    synthesize_observation,
)
from app.core.exceptions import SceneGenerationError, SimulationError
from app.harness.metrics import channel_nmse, localization_rmse
from app.harness.schemas import (
    ComplexArrayOut,
    DetectionOut,
    ExperimentConfig,
    Method,
    MethodReport,
    SceneSummary,
    SimulationReport,
    SweepRecord,
)
from app.m_step.schemas import XiPrior
from app.prior.schemas import PriorHyperParams
from app.prior.service import (
    default_hyper_params,
    draw_time_offset,
    draw_user_position,
    scene_from_counts,
    scene_from_prior,
)
from app.solver.schemas import Detection, Estimates, SolverMode
from app.solver.service import sea_turbo_sbi

logger = logging.getLogger(__name__)

_SCENE_STREAM = 0
_PILOT_STREAM = 1
_NOISE_STREAM = 2


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    """
    Generator of one random stream of one trial, independent of every other trial.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, stream)))


def hyper_params(config: ExperimentConfig) -> PriorHyperParams:
    """
    Prior hyperparameters: defaults matched to the scene counts, then config values.
    """
    scene = config.scene
    hyper = default_hyper_params(
        scene.num_targets,
        scene.num_scatterers,
        scene.overlap,
        config.system.grid.num_points,
        sees_user=scene.sees_user,
        slab_var=config.prior.slab_var,
    )
    updates = {
        name: value
        for name, value in (
            ("lambda_", config.prior.lambda_),
            ("rho_r", config.prior.rho_r),
            ("rho_c", config.prior.rho_c),
        )
        if value is not None
    }
    return hyper.model_copy(update=updates)


def xi_prior(config: ExperimentConfig) -> XiPrior:
    system = config.system
    return XiPrior(
        user_mean=system.user_mean,
        sigma_p2=system.sigma_p2,
        tau_bound=system.tau_bound,
        area=system.area,
    )


def generate_trial(config: ExperimentConfig, trial: int) -> tuple[Scene, PilotSet]:
    """
    Scene and pilots of one trial; shared by every SNR point and method.

    Raises:
        SceneGenerationError: If the entities cannot be placed
    """
    system, scene_cfg, seed = config.system, config.scene, config.sweep.seed
    rng = trial_rng(seed, trial, _SCENE_STREAM)
    user = system.user_mean
    if scene_cfg.random_user_offset:
        user = draw_user_position(system.user_mean, system.sigma_p2, rng)
    time_offset = draw_time_offset(system.tau_bound, rng) if scene_cfg.random_time_offset else 0.0

    if scene_cfg.mode == "counts":
        scene = scene_from_counts(
            scene_cfg.num_targets,
            scene_cfg.num_scatterers,
            scene_cfg.overlap,
            system.grid,
            rng,
            user,
            time_offset=time_offset,
            sees_user=scene_cfg.sees_user,
            on_grid=scene_cfg.on_grid,
            min_separation_cells=scene_cfg.min_separation_cells,
        )
    else:
        scene = scene_from_prior(hyper_params(config), system.grid, rng, user, time_offset)

    pilots = generate_pilots(
        system.num_antennas,
        system.num_subcarriers,
        system.pilot_spacing,
        system.subcarrier_spacing,
        trial_rng(seed, trial, _PILOT_STREAM),
    )
    return scene, pilots


def observe(
    config: ExperimentConfig,
    scene: Scene,
    pilots: PilotSet,
    snr_db: float,
    trial: int,
    snr_index: int,
) -> Observation:
    """
    Noisy observation of a trial at one SNR; each block's noise variance follows its
    realized signal energy.
    """
    array = config.system.array
    signal_r, signal_c = clean_signals(scene, array, pilots)
    seed = np.random.SeedSequence(config.sweep.seed, spawn_key=(trial, _NOISE_STREAM + snr_index))
    return synthesize_observation(
        scene,
        array,
        pilots,
        noise_variance_for_snr(signal_r, snr_db),
        noise_variance_for_snr(signal_c, snr_db),
        seed,
    )


def run_method(
    method: Method,
    config: ExperimentConfig,
    observation: Observation,
    pilots: PilotSet,
) -> Estimates:
    """
    Run one estimator on an observation.
    """
    system = config.system
    hyper = hyper_params(config)
    prior = xi_prior(config)
    if method == Method.OMP:
        counts = (config.scene.num_targets, config.scene.num_scatterers)
        return omp_estimates(
            observation, pilots, system.array, system.grid, config.omp, prior, counts
        )
    solver = config.solver_config()
    if method == Method.TURBO_CS:
        return turbo_cs_fixed_grid(
            observation, pilots, system.array, system.grid, hyper, solver, prior
        )
    if method == Method.SEA_SEPARATE:
        return sea_turbo_sbi_separate(
            observation, pilots, system.array, system.grid, hyper, solver, prior
        )
    joint = solver.model_copy(update={"mode": SolverMode.JOINT})
    return sea_turbo_sbi(observation, pilots, system.array, system.grid, hyper, joint, prior)


def evaluate(
    method: Method,
    estimates: Estimates,
    scene: Scene,
    config: ExperimentConfig,
    pilots: PilotSet,
    snr_db: float,
    trial: int,
    wall_time: float,
) -> SweepRecord:
    """
    Metrics of one estimate against the ground truth.
    """
    array = config.system.array
    gate = 2.0 * config.system.resolution
    targets = localization_rmse(
        [d.position.as_array() for d in estimates.detected_targets],
        [t.position.as_array() for t in scene.targets],
        gate,
    )
    scatterers = localization_rmse(
        [d.position.as_array() for d in estimates.detected_scatterers],
        [s.position.as_array() for s in scene.scatterers],
        gate,
    )
    nmse_r = channel_nmse(
        estimates.channel_r, radar_channel_stack(scene, array, pilots.frequencies)
    )
    nmse_c = channel_nmse(estimates.channel_c, comm_channel_stack(scene, array, pilots.frequencies))
    return SweepRecord(
        method=method.value,
        snr_db=snr_db,
        trial=trial,
        rmse_target=targets.rmse,
        rmse_scatterer=scatterers.rmse,
        nmse_radar=float("nan") if nmse_r is None else nmse_r,
        nmse_comm=float("nan") if nmse_c is None else nmse_c,
        miss_count=targets.misses + scatterers.misses,
        false_alarm_count=targets.false_alarms + scatterers.false_alarms,
        user_pos_error=float(np.linalg.norm(estimates.user_pos.as_array() - scene.user.as_array())),
        tau_offset_error=abs(estimates.time_offset - scene.time_offset),
        em_iters=estimates.diagnostics.em_iters,
        wall_time=wall_time,
    )


def _run_point(
    config: ExperimentConfig, trial: int, snr_index: int
) -> tuple[Scene | None, list[tuple[SweepRecord, Estimates | None]]]:
    snr_db = config.sweep.snr_db[snr_index]
    methods = config.sweep.methods
    try:
        scene, pilots = generate_trial(config, trial)
        observation = observe(config, scene, pilots, snr_db, trial, snr_index)
    except Exception as e:
        logger.warning(f"Trial {trial} at {snr_db} dB failed during generation: {e}")
        status = f"failed: {e}"
        return None, [
            (SweepRecord(method=m.value, snr_db=snr_db, trial=trial, status=status), None)
            for m in methods
        ]

    results = []
    for method in methods:
        start = time.perf_counter()
        try:
            estimates = run_method(method, config, observation, pilots)
            record = evaluate(
                method,
                estimates,
                scene,
                config,
                pilots,
                snr_db,
                trial,
                time.perf_counter() - start,
            )
        except Exception as e:
            logger.warning(f"{method.value} failed on trial {trial} at {snr_db} dB: {e}")
            estimates = None
            record = SweepRecord(
                method=method.value,
                snr_db=snr_db,
                trial=trial,
                status=f"failed: {e}",
                wall_time=time.perf_counter() - start,
            )
        results.append((record, estimates))
    return scene, results


def run_trial(config: ExperimentConfig, trial: int, snr_index: int) -> list[SweepRecord]:
    """
    Records of every configured method on one (trial, SNR) point.
    """
    _, results = _run_point(config, trial, snr_index)
    return [record for record, _ in results]


def _run_work_item(item: tuple[ExperimentConfig, int, int]) -> list[SweepRecord]:
    return run_trial(*item)


def run_sweep(config: ExperimentConfig, workers: int | None = None) -> list[SweepRecord]:
    """
    Monte Carlo sweep over every SNR point and trial.

    Trials run in worker processes when ``workers`` > 1; the records are ordered by
    (method, SNR, trial) regardless of completion order.

    Args:
        config: Experiment configuration
        workers: Worker processes (defaults to ``config.sweep.workers``)

    Returns:
        One record per (method, SNR, trial)
    """
    sweep = config.sweep
    workers = workers or sweep.workers
    items = [
        (config, trial, snr_index)
        for snr_index in range(len(sweep.snr_db))
        for trial in range(sweep.trials)
    ]
    logger.info(
        f"Sweep: {len(sweep.methods)} methods x {len(sweep.snr_db)} SNR points x "
        f"{sweep.trials} trials on {workers} worker(s)"
    )
    start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            batches = list(executor.map(_run_work_item, items))
    else:
        batches = [_run_work_item(item) for item in items]

    order = {method.value: position for position, method in enumerate(sweep.methods)}
    snr_order = {snr: position for position, snr in enumerate(sweep.snr_db)}
    records = [record for batch in batches for record in batch]
    records.sort(key=lambda r: (order[r.method], snr_order[r.snr_db], r.trial))
    failed = sum(1 for r in records if r.status != "ok")
    logger.info(
        f"Sweep finished: {len(records)} records ({failed} failed) "
        f"in {time.perf_counter() - start:.1f} s"
    )
    return records


def _detection_out(detection: Detection) -> DetectionOut:
    return DetectionOut(
        index=detection.index,
        x=detection.position.x,
        y=detection.position.y,
        gain_real=detection.gain.real,
        gain_imag=detection.gain.imag,
        probability=detection.probability,
    )


def _complex_out(values: np.ndarray) -> ComplexArrayOut:
    values = np.asarray(values, dtype=complex)
    return ComplexArrayOut(
        shape=list(values.shape), real=values.real.tolist(), imag=values.imag.tolist()
    )


def simulate(
    config: ExperimentConfig, snr_db: float, trial: int = 0, preset: str | None = None
) -> SimulationReport:
    """
    Run every configured method on a single trial and report detections and metrics.

    Raises:
        SceneGenerationError: If the trial's scene cannot be generated
    """
    config = config.model_copy(
        update={"sweep": config.sweep.model_copy(update={"snr_db": [snr_db]})}
    )
    scene, results = _run_point(config, trial, 0)
    if scene is None:
        raise SceneGenerationError(f"trial {trial}: {results[0][0].status}")

    reports = []
    for record, estimates in results:
        if estimates is None:
            raise SimulationError(f"{record.method} {record.status}")
        reports.append(
            MethodReport(
                method=record.method,
                targets=[_detection_out(d) for d in estimates.detected_targets],
                scatterers=[_detection_out(d) for d in estimates.detected_scatterers],
                user_estimate=estimates.user_pos,
                time_offset=estimates.time_offset,
                gains_r=_complex_out(estimates.gains_r),
                gains_c=_complex_out(estimates.gains_c),
                channel_r=_complex_out(estimates.channel_r),
                channel_c=_complex_out(estimates.channel_c),
                record=record,
                diagnostics=estimates.diagnostics.model_dump(),
            )
        )
    logger.info(f"Simulated trial {trial} at {snr_db} dB with {len(reports)} method(s)")
    return SimulationReport(
        preset=preset,
        seed=config.sweep.seed,
        snr_db=snr_db,
        scene=SceneSummary(
            user=scene.user,
            time_offset=scene.time_offset,
            targets=[t.position for t in scene.targets],
            scatterers=[s.position for s in scene.scatterers],
        ),
        methods=reports,
    )
