import numpy as np
from pydantic import BaseModel


class MatchResult(BaseModel):
    """
    Localization error of one entity class.

    Attributes:
        rmse: Root mean squared distance over matched pairs, in meters
        misses: Unmatched ground-truth entities
        false_alarms: Unmatched detections
        pairs: Matched (truth index, detection index) pairs
    """

    rmse: float
    misses: int
    false_alarms: int
    pairs: list[tuple[int, int]]


def localization_rmse(detections, truth, gate: float) -> MatchResult:
    """
    Match detections to ground truth and measure the localization error.

    Pairs are formed greedily, globally closest first, and only within ``gate``.
    With no matched pair the RMSE is the gate radius; with no ground truth it is 0.

    Args:
        detections: Detected positions, shape (D, 2)
        truth: True positions, shape (T, 2)
        gate: Matching radius in meters

    Returns:
        RMSE, miss and false-alarm counts, and the matched pairs
    """
    detections = np.asarray(detections, dtype=float).reshape(-1, 2)
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    if truth.shape[0] == 0:
        return MatchResult(rmse=0.0, misses=0, false_alarms=detections.shape[0], pairs=[])

    distances = np.linalg.norm(truth[:, None, :] - detections[None, :, :], axis=-1)
    pairs: list[tuple[int, int]] = []
    free_truth = set(range(truth.shape[0]))
    free_detections = set(range(detections.shape[0]))
    for flat in np.argsort(distances, axis=None, kind="stable"):
        t, d = np.unravel_index(flat, distances.shape)
        if distances[t, d] > gate:
            break
        if t in free_truth and d in free_detections:
            pairs.append((int(t), int(d)))
            free_truth.discard(t)
            free_detections.discard(d)

    if not pairs:
        rmse = gate
    else:
        rmse = float(np.sqrt(np.mean([distances[t, d] ** 2 for t, d in pairs])))
    return MatchResult(
        rmse=rmse,
        misses=len(free_truth),
        false_alarms=len(free_detections),
        pairs=pairs,
    )


def channel_nmse(estimated: np.ndarray, truth: np.ndarray) -> float | None:
    """
    sum ||estimated - truth||^2 / sum ||truth||^2 over all subcarriers.

    Returns:
        NMSE, or None for an all-zero ground truth

    Raises:
        ValueError: If the shapes differ
    """
    estimated = np.asarray(estimated)
    truth = np.asarray(truth)
    if estimated.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimated.shape} vs {truth.shape}")
    energy = float(np.sum(np.abs(truth) ** 2))
    if energy == 0.0:
        return None
    return float(np.sum(np.abs(estimated - truth) ** 2)) / energy
