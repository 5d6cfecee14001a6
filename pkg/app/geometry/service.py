import numpy as np
from scipy.constants import speed_of_light

from app.core.exceptions import ConfigurationError, GeometryError
from app.geometry.schemas import ArrayGeometry, GridSpec, Position

SPEED_OF_LIGHT = speed_of_light

# Below this distance two points are treated as coincident.
_COINCIDENT_TOL = 1e-12


def _xy(point) -> np.ndarray:
    if isinstance(point, Position):
        return point.as_array()
    return np.asarray(point, dtype=float)


def aoa_array(anchor, points) -> np.ndarray:
    """
    Anticlockwise angle of each point seen from the anchor, measured from the x-axis.

    Angles lie in (-pi/2, 3pi/2], the range produced by an arctangent plus a pi
    correction for points left of the anchor.

    Args:
        anchor: Anchor position (Position or array of shape (2,))
        points: Array of shape (..., 2)

    Returns:
        Array of angles in radians with the leading shape of ``points``

    Raises:
        GeometryError: If any point coincides with the anchor
    """
    delta = _xy(points) - _xy(anchor)
    if np.any(np.hypot(delta[..., 0], delta[..., 1]) < _COINCIDENT_TOL):
        raise GeometryError("angle of arrival undefined for a point at the anchor")
    theta = np.arctan2(delta[..., 1], delta[..., 0])
    return np.where(theta <= -np.pi / 2, theta + 2 * np.pi, theta)


def aoa(anchor: Position, point: Position) -> float:
    """
    Angle of arrival of ``point`` at ``anchor`` in radians.

    Raises:
        GeometryError: If the points coincide
    """
    return float(aoa_array(anchor, point))


def aoa_gradient(anchor, points) -> np.ndarray:
    """
    Partial derivatives of the angle of arrival with respect to the point coordinates.

    Returns:
        Array of shape (..., 2) holding (d theta / dx, d theta / dy)
    """
    delta = _xy(points) - _xy(anchor)
    dist_sq = np.maximum(np.sum(delta**2, axis=-1), _COINCIDENT_TOL**2)
    return np.stack([-delta[..., 1] / dist_sq, delta[..., 0] / dist_sq], axis=-1)


def distance(a, b) -> np.ndarray:
    delta = _xy(a) - _xy(b)
    return np.hypot(delta[..., 0], delta[..., 1])


def unit_vector(a, b) -> np.ndarray:
    """
    Gradient of ||a - b|| with respect to ``a``; zero where the points coincide.
    """
    delta = _xy(a) - _xy(b)
    norm = np.hypot(delta[..., 0], delta[..., 1])[..., None]
    return np.divide(delta, norm, out=np.zeros_like(delta), where=norm > _COINCIDENT_TOL)


def radar_delay_array(bs, points) -> np.ndarray:
    return 2.0 * distance(bs, points) / SPEED_OF_LIGHT


def radar_delay(bs: Position, point: Position) -> float:
    """
    Round-trip delay between the base station and a reflector, in seconds.
    """
    return float(radar_delay_array(bs, point))


def comm_relative_delay_array(bs, scatterers, user) -> np.ndarray:
    """
    Excess delay of the path bs <- scatterer <- user over the direct path, in seconds.

    Non-negative by the triangle inequality; zero when the scatterer lies on the
    bs-user segment.
    """
    excess = distance(bs, scatterers) + distance(user, scatterers) - distance(bs, user)
    return np.maximum(excess, 0.0) / SPEED_OF_LIGHT


def comm_relative_delay(bs: Position, scatterer: Position, user: Position) -> float:
    return float(comm_relative_delay_array(bs, scatterer, user))


def steering_matrix(thetas, num_antennas: int) -> np.ndarray:
    """
    Half-wavelength ULA responses, one unit-norm column per angle.

    Args:
        thetas: Angles in radians, shape (K,)
        num_antennas: Antenna count M

    Returns:
        Complex array of shape (M, K)
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    m = np.arange(num_antennas)[:, None]
    return np.exp(1j * np.pi * m * np.sin(thetas)[None, :]) / np.sqrt(num_antennas)


def steering_matrix_derivative(thetas, num_antennas: int) -> np.ndarray:
    """
    Derivative of each steering column with respect to its angle, shape (M, K).
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    m = np.arange(num_antennas)[:, None]
    phase_rate = 1j * np.pi * m * np.cos(thetas)[None, :]
    return phase_rate * steering_matrix(thetas, num_antennas)


def steering(theta: float, geom: ArrayGeometry) -> np.ndarray:
    """
    Array response a(theta) of length M with unit Euclidean norm.
    """
    return steering_matrix([theta], geom.num_antennas)[:, 0]


def _check_grid(spec: GridSpec) -> None:
    for extent in (spec.area.width, spec.area.height):
        cells = extent / spec.resolution
        if not np.isclose(cells, round(cells), rtol=0.0, atol=1e-9):
            raise ConfigurationError(
                f"grid resolution {spec.resolution} m does not divide area extent {extent} m"
            )


def grid_points(spec: GridSpec) -> np.ndarray:
    """
    Cell-centre lattice of the grid in row-major order (x varies fastest).

    Returns:
        Array of shape (Q, 2)

    Raises:
        ConfigurationError: If the resolution does not divide both area extents
    """
    _check_grid(spec)
    d = spec.resolution
    xs = spec.area.x_min + (np.arange(spec.columns) + 0.5) * d
    ys = spec.area.y_min + (np.arange(spec.rows) + 0.5) * d
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.column_stack([grid_x.ravel(), grid_y.ravel()])


def uniform_grid(spec: GridSpec) -> list[Position]:
    """
    Uniform grid of cell centres as positions.

    Args:
        spec: Grid specification

    Returns:
        Q positions in row-major order

    Raises:
        ConfigurationError: If the resolution does not divide both area extents
    """
    return [Position.from_array(point) for point in grid_points(spec)]


def nearest_grid_index(spec: GridSpec, points) -> np.ndarray:
    """
    Index (0-based, into ``grid_points``) of the cell containing each point.
    """
    _check_grid(spec)
    points = _xy(points)
    col = np.floor((points[..., 0] - spec.area.x_min) / spec.resolution).astype(int)
    row = np.floor((points[..., 1] - spec.area.y_min) / spec.resolution).astype(int)
    col = np.clip(col, 0, spec.columns - 1)
    row = np.clip(row, 0, spec.rows - 1)
    return row * spec.columns + col
