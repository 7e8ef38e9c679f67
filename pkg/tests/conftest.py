import os
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(str(resources.files("nestkit") / "data"))
DUMPS = DATA / "dumps"


def binary_matrices(min_side=2, max_side=7):
    """Random 0/1 matrices without empty rows or columns."""
    shape = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return shape.flatmap(lambda s: hnp.arrays(np.int8, s, elements=st.integers(0, 1))).filter(
        lambda a: a.sum(axis=0).all() and a.sum(axis=1).all())


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def dumps_dir():
    return DUMPS


@pytest.fixture
def archive_dir():
    d = os.environ.get("NESTKIT_DUMPS")
    if not d or not Path(d).is_dir():
        pytest.skip("CAIDA PeeringDB archive not available (set NESTKIT_DUMPS)")
    return Path(d)
