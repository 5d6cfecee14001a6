import numpy as np
from pydantic import BaseModel, Field


class Position(BaseModel):
    """
    2-D coordinate in meters.

    Attributes:
        x: Abscissa in meters
        y: Ordinate in meters
    """

    x: float = Field(..., allow_inf_nan=False)
    y: float = Field(..., allow_inf_nan=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, point) -> "Position":
        return cls(x=float(point[0]), y=float(point[1]))


class Area(BaseModel):
    """
    Axis-aligned rectangle holding the scene.

    Attributes:
        x_min: Left edge in meters
        y_min: Bottom edge in meters
        width: Extent along x in meters
        height: Extent along y in meters
    """

    x_min: float
    y_min: float
    width: float = Field(..., gt=0)
    height: float = Field(..., gt=0)

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    def contains(self, points: np.ndarray) -> np.ndarray:
        """
        Elementwise membership test for an array of points of shape (..., 2).
        """
        points = np.asarray(points, dtype=float)
        return (
            (points[..., 0] >= self.x_min)
            & (points[..., 0] <= self.x_max)
            & (points[..., 1] >= self.y_min)
            & (points[..., 1] <= self.y_max)
        )

    def clip(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.stack(
            [
                np.clip(points[..., 0], self.x_min, self.x_max),
                np.clip(points[..., 1], self.y_min, self.y_max),
            ],
            axis=-1,
        )


class ArrayGeometry(BaseModel):
    """
    Half-wavelength uniform linear array at the base station.

    Attributes:
        num_antennas: Antenna count M
        position: Base-station position p_b, the anchor of every angle and delay
    """

    num_antennas: int = Field(..., ge=1)
    position: Position


class GridSpec(BaseModel):
    """
    Uniform cell-centre position grid over an area.

    Attributes:
        area: Rectangle covered by the grid
        resolution: Cell edge length d in meters
    """

    area: Area
    resolution: float = Field(..., gt=0)

    @property
    def columns(self) -> int:
        return int(round(self.area.width / self.resolution))

    @property
    def rows(self) -> int:
        return int(round(self.area.height / self.resolution))

    @property
    def num_points(self) -> int:
        return self.columns * self.rows
