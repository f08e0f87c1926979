import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, max_angle=math.pi - 1e-3):
    from geosmc.lie import so3_exp
    ax = rng.normal(size=3)
    ax /= np.linalg.norm(ax)
    return so3_exp(ax * rng.uniform(0.0, max_angle))


def random_pose(rng, box=2.0, theta_max=math.pi - 1e-3):
    from geosmc.lie import PoseSE2
    return PoseSE2(*rng.uniform(-box, box, 2), rng.uniform(-theta_max, theta_max))
