import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.geometry.schemas import Position
from app.prior.schemas import SupportTriple


class Reflector(BaseModel):
    """
    A radar target or communication scatterer.

    Attributes:
        position: Location in meters
        gain: Complex reflection coefficient or path gain
    """

    position: Position
    gain: complex


class Scene(BaseModel):
    """
    Ground truth of one trial.

    Attributes:
        user: User position p_u (the 0-th target and 0-th scatterer)
        user_echo_gain: Radar gain x_0^r of the user (zero if the BS cannot see it)
        los_gain: LoS path gain x_0^c
        targets: Radar targets
        scatterers: Communication scatterers
        time_offset: Uplink timing offset tau_o in seconds
        supports: Supports over the generating grid, when the scene was built on one
        gains_r: Radar coefficients x^r over the generating grid (Q+1), if any
        gains_c: Communication coefficients x^c over the generating grid (Q+1), if any
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    user: Position
    user_echo_gain: complex = 0j
    los_gain: complex = 1 + 0j
    targets: list[Reflector] = Field(default_factory=list)
    scatterers: list[Reflector] = Field(default_factory=list)
    time_offset: float = 0.0
    supports: SupportTriple | None = None
    gains_r: np.ndarray | None = None
    gains_c: np.ndarray | None = None

    def radar_paths(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Positions (K+1, 2) and gains (K+1,) of the radar paths, user first.
        """
        positions = [self.user.as_array()] + [t.position.as_array() for t in self.targets]
        gains = [self.user_echo_gain] + [t.gain for t in self.targets]
        return np.array(positions), np.array(gains, dtype=complex)

    def comm_paths(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Positions (L+1, 2) and gains (L+1,) of the communication paths, LoS first.
        """
        positions = [self.user.as_array()] + [s.position.as_array() for s in self.scatterers]
        gains = [self.los_gain] + [s.gain for s in self.scatterers]
        return np.array(positions), np.array(gains, dtype=complex)


class SensingParams(BaseModel):
    """
    Sensing parameters xi = {r, p_u, tau_o}.

    Attributes:
        grid: Dynamic position grid r, shape (Q, 2)
        user_pos: User position estimate p_u, shape (2,)
        time_offset: Time offset estimate tau_o in seconds
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: np.ndarray
    user_pos: np.ndarray
    time_offset: float = 0.0

    @property
    def num_points(self) -> int:
        return int(self.grid.shape[0])

    def positions(self) -> np.ndarray:
        """
        All Q+1 sparse-basis positions, user first, shape (Q+1, 2).
        """
        return np.vstack([self.user_pos[None, :], self.grid])

    def distance_to(self, other: "SensingParams", speed: float) -> float:
        """
        Meters-dominated distance between two hypotheses; the time offset is
        converted to meters with ``speed``.
        """
        grid_sq = float(np.sum((self.grid - other.grid) ** 2))
        user_sq = float(np.sum((self.user_pos - other.user_pos) ** 2))
        time_sq = (speed * (self.time_offset - other.time_offset)) ** 2
        return float(np.sqrt(grid_sq + user_sq + time_sq))


class PilotSet(BaseModel):
    """
    Downlink and uplink pilots on the pilot subcarriers.

    Attributes:
        downlink: Unit-norm downlink pilots v_n^r, shape (N_p, M)
        uplink: Unit-modulus uplink pilots u_n^c, shape (N_p,)
        subcarriers: Strictly increasing subcarrier indices n, shape (N_p,)
        f0: Subcarrier spacing in Hz
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    downlink: np.ndarray
    uplink: np.ndarray
    subcarriers: np.ndarray
    f0: float = Field(..., gt=0)

    @property
    def num_pilots(self) -> int:
        return int(self.subcarriers.shape[0])

    @property
    def frequencies(self) -> np.ndarray:
        return self.subcarriers.astype(float) * self.f0


class Observation(BaseModel):
    """
    Stacked radar echo and uplink observations.

    Attributes:
        y_r: Radar observation, length M*N_p
        y_c: Communication observation, length M*N_p
        noise_var_r: Radar noise variance
        noise_var_c: Communication noise variance
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    y_r: np.ndarray
    y_c: np.ndarray
    noise_var_r: float = Field(..., ge=0.0)
    noise_var_c: float = Field(..., ge=0.0)
