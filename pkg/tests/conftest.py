import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_spd(rng, n, cond=100.0):
    """Random SPD matrix with trace 1 and bounded condition number."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.exp(rng.uniform(0.0, np.log(cond), n))
    m = (q * d) @ q.T
    m = (m + m.T) / 2
    return m / np.trace(m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
