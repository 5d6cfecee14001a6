import numpy as np
import pytest

from app.channel.schemas import SensingParams
from app.channel.service import generate_pilots
from app.geometry.schemas import Area, ArrayGeometry, GridSpec, Position
from app.geometry.service import grid_points
from app.harness.config import load_config
from app.prior.service import scene_from_counts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quick_config():
    return load_config(preset="quick")


@pytest.fixture
def small_grid():
    """
    4 x 4 grid of 10 m cells over a 40 m square centred on the origin.
    """
    return GridSpec(area=Area(x_min=-20.0, y_min=-20.0, width=40.0, height=40.0), resolution=10.0)


@pytest.fixture
def small_array():
    return ArrayGeometry(num_antennas=8, position=Position(x=-30.0, y=0.0))


@pytest.fixture
def small_pilots(rng):
    return generate_pilots(8, 64, 16, 30e3, rng)


@pytest.fixture
def on_grid_scene(small_grid, rng):
    return scene_from_counts(
        2,
        3,
        1,
        small_grid,
        rng,
        np.array([30.0, 0.0]),
        time_offset=5e-9,
        on_grid=True,
        min_separation_cells=1.0,
    )


@pytest.fixture
def truth_params(small_grid, on_grid_scene):
    return SensingParams(
        grid=grid_points(small_grid),
        user_pos=on_grid_scene.user.as_array(),
        time_offset=on_grid_scene.time_offset,
    )


@pytest.fixture
def on_grid_config(quick_config):
    """
    Quick preset with entities on cell centres, the user at its prior mean and no time offset.
    """
    scene = quick_config.scene.model_copy(
        update={"on_grid": True, "random_user_offset": False, "random_time_offset": False}
    )
    return quick_config.model_copy(update={"scene": scene})
