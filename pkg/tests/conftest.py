import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Deterministic, moderately sized property runs; the acceptance suite does the
# large fixed-count sweeps itself.
settings.register_profile(
    "genoseq",
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("genoseq")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
