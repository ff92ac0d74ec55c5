import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

import fairtwin  # noqa: F401  (applies the BLAS thread cap)
from fairtwin.instance import Instance, generate_instance


@pytest.fixture(scope="session")
def tiny_instance():
    """One county, one existing facility, demand 5, capacity 10, unit-ish cost."""
    return Instance(
        county_ids=("c1",),
        facility_ids=("e1",),
        kinds=("existing",),
        demand={"c1": 5.0},
        capacity={"e1": 10.0},
        distance_cost=np.array([[2.0]]),
        fixed_cost={},
    )


@pytest.fixture(scope="session")
def small_instance():
    """3 counties, 3 existing + 2 temporary; big enough for real branching."""
    return generate_instance(12, 3, 3, 2)


@pytest.fixture(scope="session")
def demo_instance():
    """The demonstrator geometry at reduced size: headroom plus cheap activations."""
    return generate_instance(
        5, 4, 4, 3,
        cost_per_patient=0.01,
        fixed_cost_range=(5.0, 20.0),
        capacity_factor_range=(0.7, 2.0),
    )
