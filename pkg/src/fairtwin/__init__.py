"""fairtwin: preference-aligned surrogate objectives for a facility-allocation engine.

The numerical core is dense linear algebra on small matrices; a threaded BLAS
only adds synchronization overhead at these sizes (and wrecks run-to-run
timing), so the import pins BLAS to one thread unless the user already chose.
Parallelism happens at the process level (`--jobs`).
"""

import os as _os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

try:  # the env vars only help if numpy is not loaded yet; this always works
    import threadpoolctl as _threadpoolctl

    _blas_limit = _threadpoolctl.threadpool_limits(limits=1)
except ImportError:  # pragma: no cover
    _blas_limit = None

from .instance import (  # noqa: E402
    Allocation,
    Instance,
    InstanceFormatError,
    InstanceValidationError,
    check_feasible,
    flatten,
    generate_instance,
    load_instance,
    nominal_objective,
    save_instance,
    unflatten,
)
from .quadcost import CostTable, QuadCost, QuadCostError, linear_quad_cost  # noqa: E402

__version__ = "0.1.0"
