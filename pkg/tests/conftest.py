import numpy as np
import pytest

from caslab.dynamics import IntruderModel, PilotModel
from caslab.optimizer import Grid, RewardParams, backward_induction


def micro_grid(tau_max: int = 4) -> Grid:
    return Grid(
        h_cuts=np.array([-1000.0, -100.0, 0.0, 100.0, 1000.0]),
        hdot0_cuts=np.array([-25.0, 0.0, 25.0]),
        hdot1_cuts=np.array([-25.0, 0.0, 25.0]),
        tau_max=tau_max,
    )


@pytest.fixture(scope="session")
def default_table():
    """Full-size optimized table shared across test modules (built once)."""
    return backward_induction(Grid(), PilotModel(), IntruderModel(), RewardParams())


@pytest.fixture(scope="session")
def small_table():
    """Micro-grid table for cheap runtime/lookup tests."""
    return backward_induction(
        micro_grid(),
        PilotModel(response_probability=0.5, acceleration=8.0),
        IntruderModel(sigma_accel=4.0),
        RewardParams(),
    )
