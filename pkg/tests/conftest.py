import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from helpers import make_panel

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def linear_panel():
    """Two series, one covariate, y = 2 x + 1 + small noise."""
    rng = np.random.default_rng(0)
    data = {}
    for sid in ("a", "b"):
        x = rng.normal(size=(60, 1))
        data[sid] = (2 * x[:, 0] + 1 + 0.1 * rng.normal(size=60), x)
    return make_panel(data, ("x",))
