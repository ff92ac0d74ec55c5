"""Facility-allocation problem data and the canonical decision-vector encoding.

An instance couples counties (demand nodes) with existing and temporary
facilities. A decision assigns patients county-by-facility and activates
temporary facilities; it flattens into a single vector `u` with a fixed
layout shared by every downstream stage: the assignment matrix in row-major
county-major order, followed by the activation bits in facility-id order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INT_TOL = 1e-6


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed against the schema."""


class InstanceValidationError(ValueError):
    """Raised when instance or allocation data violates a model invariant."""


@dataclass(frozen=True)
class Instance:
    """Problem data: demands, capacities, per-patient transport costs, opening costs.

    ``facility_ids`` keeps file order; ``kinds`` marks each facility as
    ``"existing"`` or ``"temporary"``. ``fixed_cost`` has one entry per
    temporary facility.
    """

    county_ids: tuple
    facility_ids: tuple
    kinds: tuple
    demand: dict
    capacity: dict
    distance_cost: np.ndarray
    fixed_cost: dict

    def __post_init__(self):
        dc = np.asarray(self.distance_cost, dtype=float)
        dc.setflags(write=False)
        object.__setattr__(self, "distance_cost", dc)
        self._validate()

    def _validate(self):
        if len(set(self.county_ids)) != len(self.county_ids):
            raise InstanceValidationError("duplicate county id")
        if len(set(self.facility_ids)) != len(self.facility_ids):
            raise InstanceValidationError("duplicate facility id")
        if len(self.kinds) != len(self.facility_ids):
            raise InstanceValidationError("kinds: expected one entry per facility")
        for k in self.kinds:
            if k not in ("existing", "temporary"):
                raise InstanceValidationError(f"kinds: unknown kind {k!r}")
        if not any(k == "existing" for k in self.kinds):
            raise InstanceValidationError("kinds: at least one existing facility required")
        for c in self.county_ids:
            d = self.demand.get(c)
            if d is None:
                raise InstanceValidationError(f"demand: missing county {c!r}")
            if not np.isfinite(d) or d < 0:
                raise InstanceValidationError(f"demand: county {c!r} must be >= 0, got {d}")
        for f in self.facility_ids:
            cap = self.capacity.get(f)
            if cap is None:
                raise InstanceValidationError(f"capacity: missing facility {f!r}")
            if not np.isfinite(cap) or cap < 0:
                raise InstanceValidationError(f"capacity: facility {f!r} must be >= 0, got {cap}")
        for f in self.temporary_ids:
            k = self.fixed_cost.get(f)
            if k is None:
                raise InstanceValidationError(f"fixed_cost: missing temporary facility {f!r}")
            if not np.isfinite(k) or k < 0:
                raise InstanceValidationError(f"fixed_cost: facility {f!r} must be >= 0, got {k}")
        extra = set(self.fixed_cost) - set(self.temporary_ids)
        if extra:
            raise InstanceValidationError(f"fixed_cost: not a temporary facility: {sorted(map(str, extra))}")
        if self.distance_cost.shape != (self.n_counties, self.n_facilities):
            raise InstanceValidationError(
                f"distance_cost: expected shape {(self.n_counties, self.n_facilities)}, "
                f"got {self.distance_cost.shape}"
            )
        if not np.all(np.isfinite(self.distance_cost)) or np.any(self.distance_cost < 0):
            raise InstanceValidationError("distance_cost: entries must be finite and >= 0")

    @property
    def n_counties(self):
        return len(self.county_ids)

    @property
    def n_facilities(self):
        return len(self.facility_ids)

    @property
    def existing_ids(self):
        return tuple(f for f, k in zip(self.facility_ids, self.kinds) if k == "existing")

    @property
    def temporary_ids(self):
        return tuple(f for f, k in zip(self.facility_ids, self.kinds) if k == "temporary")

    @property
    def n_temporary(self):
        return len(self.temporary_ids)

    @property
    def dim(self):
        """Length of the flat decision vector: assignments plus activations."""
        return self.n_counties * self.n_facilities + self.n_temporary

    @property
    def temporary_columns(self):
        """Column indices of temporary facilities, in facility-id order."""
        return np.array([i for i, k in enumerate(self.kinds) if k == "temporary"], dtype=int)

    @property
    def existing_columns(self):
        return np.array([i for i, k in enumerate(self.kinds) if k == "existing"], dtype=int)

    def demand_vector(self):
        return np.array([self.demand[c] for c in self.county_ids], dtype=float)

    def capacity_vector(self):
        return np.array([self.capacity[f] for f in self.facility_ids], dtype=float)

    def fixed_cost_vector(self):
        return np.array([self.fixed_cost[f] for f in self.temporary_ids], dtype=float)

    @property
    def feas_tol(self):
        """Feasibility tolerance, scaled to the instance's demand magnitude."""
        scale = max(self.demand.values()) if self.demand else 0.0
        return 1e-6 * max(1.0, scale)

    def to_dict(self):
        return {
            "counties": [{"id": c, "demand": self.demand[c]} for c in self.county_ids],
            "facilities": [
                {"id": f, "kind": k, "capacity": self.capacity[f]}
                | ({"fixed_cost": self.fixed_cost[f]} if k == "temporary" else {})
                for f, k in zip(self.facility_ids, self.kinds)
            ],
            "distance_cost": [[float(v) for v in row] for row in self.distance_cost],
        }


@dataclass
class Allocation:
    """A decision: patients assigned per (county, facility) and activation bits.

    ``x`` has one row per county and one column per facility (file order);
    ``y`` has one 0/1 entry per temporary facility, in facility-id order.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=int)

    def activation(self, inst: Instance) -> dict:
        return {f: int(v) for f, v in zip(inst.temporary_ids, self.y)}


def nominal_objective(alloc: Allocation, inst: Instance) -> float:
    """Transport cost plus fixed opening costs of the activated temporaries."""
    return float(np.sum(inst.distance_cost * alloc.x) + inst.fixed_cost_vector() @ alloc.y)


def check_feasible(alloc: Allocation, inst: Instance, tol: float | None = None) -> list:
    """Return a list of human-readable constraint violations (empty if feasible)."""
    tol = inst.feas_tol if tol is None else tol
    problems = []
    if alloc.x.shape != (inst.n_counties, inst.n_facilities):
        return [f"x shape {alloc.x.shape} != {(inst.n_counties, inst.n_facilities)}"]
    if alloc.y.shape != (inst.n_temporary,):
        return [f"y shape {alloc.y.shape} != {(inst.n_temporary,)}"]
    if np.any(alloc.x < -tol):
        i, j = np.unravel_index(int(np.argmin(alloc.x)), alloc.x.shape)
        problems.append(f"negative assignment x[{inst.county_ids[i]},{inst.facility_ids[j]}]={alloc.x[i, j]}")
    for v in alloc.y:
        if v not in (0, 1):
            problems.append(f"activation not binary: {v}")
            break
    demand = inst.demand_vector()
    rows = alloc.x.sum(axis=1)
    bad = np.abs(rows - demand) > tol
    for i in np.flatnonzero(bad):
        problems.append(f"county {inst.county_ids[i]}: served {rows[i]} != demand {demand[i]}")
    caps = inst.capacity_vector()
    eff = caps.copy()
    tcols = inst.temporary_columns
    if tcols.size:
        eff[tcols] = caps[tcols] * alloc.y
    cols = alloc.x.sum(axis=0)
    bad = cols > eff + tol
    for j in np.flatnonzero(bad):
        problems.append(f"facility {inst.facility_ids[j]}: load {cols[j]} > capacity {eff[j]}")
    return problems


def flatten(alloc: Allocation, inst: Instance) -> np.ndarray:
    """Flat vector: row-major assignments (county-major) then activations."""
    if alloc.x.shape != (inst.n_counties, inst.n_facilities) or alloc.y.shape != (inst.n_temporary,):
        raise InstanceValidationError(
            f"allocation shaped {alloc.x.shape}/{alloc.y.shape} does not match instance "
            f"{(inst.n_counties, inst.n_facilities)}/{(inst.n_temporary,)}"
        )
    return np.concatenate([alloc.x.ravel(order="C"), alloc.y.astype(float)])


def unflatten(u: np.ndarray, inst: Instance, int_tol: float = INT_TOL) -> Allocation:
    """Inverse of :func:`flatten`; activation entries are snapped to exact 0/1."""
    u = np.asarray(u, dtype=float)
    if u.shape != (inst.dim,):
        raise InstanceValidationError(f"decision vector length {u.shape} != ({inst.dim},)")
    nx = inst.n_counties * inst.n_facilities
    x = u[:nx].reshape(inst.n_counties, inst.n_facilities).copy()
    yraw = u[nx:]
    y = np.rint(yraw)
    off = np.abs(yraw - y)
    if np.any(off > int_tol):
        j = int(np.argmax(off))
        raise InstanceValidationError(
            f"activation for {inst.temporary_ids[j]} is {yraw[j]}, not within {int_tol} of 0 or 1"
        )
    if np.any((y != 0) & (y != 1)):
        j = int(np.argmax((y != 0) & (y != 1)))
        raise InstanceValidationError(f"activation for {inst.temporary_ids[j]} outside {{0,1}}: {yraw[j]}")
    return Allocation(x=x, y=y.astype(int))


def generate_instance(
    seed: int,
    n_counties: int,
    n_existing: int,
    n_temporary: int,
    *,
    demand_range=(100.0, 1000.0),
    capacity_factor_range=(0.5, 1.5),
    coord_side=100.0,
    cost_per_patient=1.0,
    fixed_cost_range=(500.0, 2000.0),
) -> Instance:
    """Draw a synthetic instance from documented seeded distributions.

    Demands are uniform on ``demand_range`` rounded to whole patients;
    capacities are uniform multiples of the average per-facility demand,
    redrawn until total capacity covers total demand so the nominal problem
    is feasible; transport costs are Euclidean distances between uniform
    points on a ``coord_side`` square, scaled by ``cost_per_patient``.
    Deterministic for a fixed seed and parameter set.
    """
    if n_counties < 1 or n_existing < 1 or n_temporary < 0:
        raise InstanceValidationError(
            f"need n_counties >= 1, n_existing >= 1, n_temporary >= 0; "
            f"got {n_counties}/{n_existing}/{n_temporary}"
        )
    rng = np.random.default_rng(seed)
    n_fac = n_existing + n_temporary
    county_pts = rng.uniform(0.0, coord_side, size=(n_counties, 2))
    fac_pts = rng.uniform(0.0, coord_side, size=(n_fac, 2))
    demands = np.rint(rng.uniform(*demand_range, size=n_counties))
    total = demands.sum()
    per_fac = total / n_fac
    caps = rng.uniform(*capacity_factor_range, size=n_fac) * per_fac
    while caps.sum() < total:
        caps = rng.uniform(*capacity_factor_range, size=n_fac) * per_fac
    dists = np.linalg.norm(county_pts[:, None, :] - fac_pts[None, :, :], axis=2)
    fixed = rng.uniform(*fixed_cost_range, size=n_temporary)

    county_ids = tuple(f"c{i + 1}" for i in range(n_counties))
    facility_ids = tuple(f"e{i + 1}" for i in range(n_existing)) + tuple(
        f"t{i + 1}" for i in range(n_temporary)
    )
    kinds = ("existing",) * n_existing + ("temporary",) * n_temporary
    return Instance(
        county_ids=county_ids,
        facility_ids=facility_ids,
        kinds=kinds,
        demand={c: float(d) for c, d in zip(county_ids, demands)},
        capacity={f: float(c) for f, c in zip(facility_ids, caps)},
        distance_cost=dists * cost_per_patient,
        fixed_cost={f: float(k) for f, k in zip(facility_ids[n_existing:], fixed)},
    )


_COUNTY_KEYS = {"id", "demand"}
_FACILITY_KEYS = {"id", "kind", "capacity", "fixed_cost"}


def instance_from_dict(data: dict) -> Instance:
    """Build an Instance from the documented JSON structure (strict)."""
    if not isinstance(data, dict):
        raise InstanceFormatError("instance file must hold a JSON object")
    unknown = set(data) - {"counties", "facilities", "distance_cost"}
    if unknown:
        raise InstanceFormatError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("counties", "facilities", "distance_cost"):
        if key not in data:
            raise InstanceFormatError(f"missing required key {key!r}")

    county_ids, demand = [], {}
    for i, entry in enumerate(data["counties"]):
        if not isinstance(entry, dict) or set(entry) != _COUNTY_KEYS:
            raise InstanceFormatError(f"counties[{i}]: expected keys {sorted(_COUNTY_KEYS)}")
        county_ids.append(entry["id"])
        demand[entry["id"]] = float(entry["demand"])

    facility_ids, kinds, capacity, fixed_cost = [], [], {}, {}
    for i, entry in enumerate(data["facilities"]):
        if not isinstance(entry, dict) or not set(entry) <= _FACILITY_KEYS:
            raise InstanceFormatError(
                f"facilities[{i}]: unknown keys {sorted(set(entry) - _FACILITY_KEYS)}"
            )
        for key in ("id", "kind", "capacity"):
            if key not in entry:
                raise InstanceFormatError(f"facilities[{i}]: missing {key!r}")
        kind = entry["kind"]
        if kind == "temporary":
            if "fixed_cost" not in entry:
                raise InstanceFormatError(f"facilities[{i}]: temporary facility needs fixed_cost")
            fixed_cost[entry["id"]] = float(entry["fixed_cost"])
        elif kind == "existing":
            if "fixed_cost" in entry:
                raise InstanceFormatError(f"facilities[{i}]: fixed_cost only applies to temporary")
        else:
            raise InstanceFormatError(f"facilities[{i}]: kind must be existing or temporary")
        facility_ids.append(entry["id"])
        kinds.append(kind)
        capacity[entry["id"]] = float(entry["capacity"])

    rows = data["distance_cost"]
    if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
        raise InstanceFormatError("distance_cost must be an array of arrays")
    if len(rows) != len(county_ids) or any(len(r) != len(facility_ids) for r in rows):
        raise InstanceValidationError(
            f"distance_cost: expected {len(county_ids)}x{len(facility_ids)} entries"
        )
    return Instance(
        county_ids=tuple(county_ids),
        facility_ids=tuple(facility_ids),
        kinds=tuple(kinds),
        demand=demand,
        capacity=capacity,
        distance_cost=np.array(rows, dtype=float),
        fixed_cost=fixed_cost,
    )


def load_instance(path) -> Instance:
    """Load and validate an instance file; errors name the offending field."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=2) + "\n")
