import logging

import numpy as np

from app.channel.schemas import Observation, PilotSet, Scene, SensingParams
from app.geometry.schemas import ArrayGeometry
from app.geometry.service import (
    aoa_array,
    comm_relative_delay_array,
    radar_delay_array,
    steering_matrix,
)

logger = logging.getLogger(__name__)

_QPSK = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))


def _phase(frequencies: np.ndarray, delays: np.ndarray) -> np.ndarray:
    """
    Delay phases exp(-j 2 pi f tau) for every (frequency, delay) pair, shape (F, D).
    """
    return np.exp(-2j * np.pi * np.outer(frequencies, delays))


def radar_channel_stack(scene: Scene, array: ArrayGeometry, frequencies) -> np.ndarray:
    """
    Radar channel matrices for each frequency, shape (F, M, M).
    """
    bs = array.position.as_array()
    positions, gains = scene.radar_paths()
    steer = steering_matrix(aoa_array(bs, positions), array.num_antennas)
    weights = gains[None, :] * _phase(np.atleast_1d(frequencies), radar_delay_array(bs, positions))
    # sum_k w_k a_k a_k^T; transpose, not Hermitian
    return np.einsum("fk,mk,nk->fmn", weights, steer, steer)


def radar_channel_matrix(scene: Scene, array: ArrayGeometry, n: int, f0: float) -> np.ndarray:
    """
    Radar channel matrix H_n^r on subcarrier ``n``.

    Args:
        scene: Ground-truth scene
        array: Base-station array
        n: Subcarrier index
        f0: Subcarrier spacing in Hz

    Returns:
        Complex-symmetric M x M matrix
    """
    return radar_channel_stack(scene, array, [n * f0])[0]


def comm_channel_stack(scene: Scene, array: ArrayGeometry, frequencies) -> np.ndarray:
    """
    Uplink channel vectors for each frequency, shape (F, M).
    """
    bs = array.position.as_array()
    user = scene.user.as_array()
    positions, gains = scene.comm_paths()
    steer = steering_matrix(aoa_array(bs, positions), array.num_antennas)
    delays = comm_relative_delay_array(bs, positions, user) + scene.time_offset
    weights = gains[None, :] * _phase(np.atleast_1d(frequencies), delays)
    return weights @ steer.T


def comm_channel_vector(scene: Scene, array: ArrayGeometry, n: int, f0: float) -> np.ndarray:
    """
    Uplink channel vector h_n^c on subcarrier ``n`` including the time offset.
    """
    return comm_channel_stack(scene, array, [n * f0])[0]


def sparse_basis(xi: SensingParams, array: ArrayGeometry) -> np.ndarray:
    """
    Location-domain basis A(r, p_u): user column first, then one column per grid point.

    Returns:
        Complex array of shape (M, Q+1) with unit-norm columns
    """
    thetas = aoa_array(array.position.as_array(), xi.positions())
    return steering_matrix(thetas, array.num_antennas)


def basis_delays(xi: SensingParams, array: ArrayGeometry) -> tuple[np.ndarray, np.ndarray]:
    """
    Radar delays and communication delays (relative delay plus time offset) of the
    Q+1 basis positions.
    """
    bs = array.position.as_array()
    positions = xi.positions()
    tau_r = radar_delay_array(bs, positions)
    tau_c = comm_relative_delay_array(bs, positions, xi.user_pos) + xi.time_offset
    tau_c[0] = xi.time_offset
    return tau_r, tau_c


def delay_phases(
    xi: SensingParams, array: ArrayGeometry, pilots: PilotSet
) -> tuple[np.ndarray, np.ndarray]:
    """
    Diagonals of D_n^r and D_n^c for every pilot subcarrier, each of shape (N_p, Q+1).
    """
    tau_r, tau_c = basis_delays(xi, array)
    return _phase(pilots.frequencies, tau_r), _phase(pilots.frequencies, tau_c)


def delay_diagonals(
    xi: SensingParams, array: ArrayGeometry, n: int, f0: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit-modulus diagonals of D_n^r and D_n^c on subcarrier ``n``.

    Returns:
        Tuple of two complex arrays of length Q+1
    """
    tau_r, tau_c = basis_delays(xi, array)
    frequency = np.array([n * f0])
    return _phase(frequency, tau_r)[0], _phase(frequency, tau_c)[0]


def comm_measurement_matrix(
    xi: SensingParams, array: ArrayGeometry, pilots: PilotSet
) -> np.ndarray:
    """
    Communication measurement matrix Phi^c: stack of u_n A diag(D_n^c).

    Returns:
        Complex array of shape (M*N_p, Q+1)
    """
    basis = sparse_basis(xi, array)
    _, phase_c = delay_phases(xi, array, pilots)
    blocks = pilots.uplink[:, None, None] * basis[None, :, :] * phase_c[:, None, :]
    return blocks.reshape(-1, basis.shape[1])


def radar_measurement_matrix(
    xi: SensingParams, array: ArrayGeometry, pilots: PilotSet
) -> np.ndarray:
    """
    Radar measurement matrix Phi^r built column by column.

    Column q stacks (a_q^T v_n) D_n^r[q] a_q over the pilot subcarriers, which is
    the column of the Kronecker construction whose transmit and receive responses
    belong to the same position.

    Returns:
        Complex array of shape (M*N_p, Q+1)
    """
    basis = sparse_basis(xi, array)
    phase_r, _ = delay_phases(xi, array, pilots)
    beam = pilots.downlink @ basis
    blocks = (beam * phase_r)[:, None, :] * basis[None, :, :]
    return blocks.reshape(-1, basis.shape[1])


def radar_measurement_matrix_kron(
    xi: SensingParams, array: ArrayGeometry, pilots: PilotSet
) -> np.ndarray:
    """
    Full Kronecker radar dictionary of shape (M*N_p, (Q+1)^2).

    Memory grows with (Q+1)^2; meant for small instances only.
    """
    basis = sparse_basis(xi, array)
    phase_r, _ = delay_phases(xi, array, pilots)
    blocks = [
        np.kron((pilots.downlink[n] @ basis)[None, :], basis * phase_r[n][None, :])
        for n in range(pilots.num_pilots)
    ]
    return np.vstack(blocks)


def kron_diagonal_columns(size: int) -> np.ndarray:
    """
    0-based column indices q*(size)+q selecting Phi^r from the Kronecker dictionary.
    """
    q = np.arange(size)
    return q * size + q


def generate_pilots(
    num_antennas: int,
    num_subcarriers: int,
    spacing: int,
    f0: float,
    rng: np.random.Generator,
) -> PilotSet:
    """
    Draw pilots for one trial.

    Pilot subcarriers are n = spacing * k for k = 1..num_subcarriers // spacing.
    Downlink pilots are unit-norm complex Gaussian vectors, uplink pilots QPSK.

    Args:
        num_antennas: Antenna count M
        num_subcarriers: OFDM subcarrier count N
        spacing: Pilot spacing in subcarriers
        f0: Subcarrier spacing in Hz
        rng: Random generator

    Returns:
        Pilot set
    """
    subcarriers = spacing * np.arange(1, num_subcarriers // spacing + 1)
    count = subcarriers.shape[0]
    downlink = rng.standard_normal((count, num_antennas)) + 1j * rng.standard_normal(
        (count, num_antennas)
    )
    downlink /= np.linalg.norm(downlink, axis=1, keepdims=True)
    uplink = _QPSK[rng.integers(0, 4, size=count)]
    return PilotSet(downlink=downlink, uplink=uplink, subcarriers=subcarriers, f0=f0)


def clean_signals(
    scene: Scene, array: ArrayGeometry, pilots: PilotSet
) -> tuple[np.ndarray, np.ndarray]:
    """
    Noise-free stacked observations (H_n^r v_n, h_n^c u_n over the pilot subcarriers).
    """
    radar = radar_channel_stack(scene, array, pilots.frequencies)
    comm = comm_channel_stack(scene, array, pilots.frequencies)
    signal_r = np.einsum("fmn,fn->fm", radar, pilots.downlink).ravel()
    signal_c = (comm * pilots.uplink[:, None]).ravel()
    return signal_r, signal_c


def complex_noise(rng: np.random.Generator, size: int, variance: float) -> np.ndarray:
    """
    Circularly-symmetric complex Gaussian samples with the given variance.
    """
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def noise_variance_for_snr(signal: np.ndarray, snr_db: float) -> float:
    """
    Noise variance giving the requested per-sample SNR for a realized signal.

    A zero-energy block falls back to a unit-power reference.
    """
    snr = 10.0 ** (snr_db / 10.0)
    power = float(np.mean(np.abs(signal) ** 2)) if signal.size else 0.0
    if power <= 0.0:
        return 1.0 / snr
    return power / snr


def synthesize_observation(
    scene: Scene,
    array: ArrayGeometry,
    pilots: PilotSet,
    noise_var_r: float,
    noise_var_c: float,
    seed,
) -> Observation:
    """
    Synthesize the radar echo and uplink observations of a scene.

    Args:
        scene: Ground-truth scene
        array: Base-station array
        pilots: Pilot set
        noise_var_r: Radar noise variance
        noise_var_c: Communication noise variance
        seed: Seed (int or numpy SeedSequence) of the noise generator

    Returns:
        Observation, identical for identical seeds
    """
    rng = np.random.default_rng(seed)
    signal_r, signal_c = clean_signals(scene, array, pilots)
    y_r = signal_r + complex_noise(rng, signal_r.size, noise_var_r)
    y_c = signal_c + complex_noise(rng, signal_c.size, noise_var_c)
    logger.debug(
        f"Synthesized observation: {signal_r.size} radar and {signal_c.size} comm samples"
    )
    return Observation(y_r=y_r, y_c=y_c, noise_var_r=noise_var_r, noise_var_c=noise_var_c)
