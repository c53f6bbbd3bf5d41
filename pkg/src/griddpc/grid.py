"""Static grid model: bus/line records, admittance coupling, injections, power flow.

Angles are in radians, powers in per unit, and the slack bus angle is pinned
to zero everywhere.  Loads are negative injections.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

BUS_KINDS = ("slack", "generator", "load", "junction")

PF_TOL = 1e-10
PF_MAX_ITER = 50


class GridError(ValueError):
    """Malformed network input."""


class PowerFlowError(RuntimeError):
    """Newton iteration failed to reach the requested injections."""


@dataclass(frozen=True)
class BusRecord:
    """A single bus: identity, role, and electrical parameters."""

    id: str
    kind: str
    p_nominal: float | None
    v_mag: float
    inertia: float | None = None
    damping: float | None = None

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise GridError(f"bus {self.id!r}: unknown kind {self.kind!r}")
        if not self.v_mag > 0:
            raise GridError(f"bus {self.id!r}: v_mag must be positive")
        if self.kind in ("slack", "generator"):
            if self.inertia is None or not self.inertia > 0:
                raise GridError(f"bus {self.id!r}: inertia must be positive")
            if self.damping is None or not self.damping > 0:
                raise GridError(f"bus {self.id!r}: damping must be positive")
        if self.kind == "load" and not (self.p_nominal is not None and self.p_nominal < 0):
            raise GridError(f"bus {self.id!r}: load nominal injection must be negative")
        if self.kind == "junction" and self.p_nominal not in (None, 0.0):
            raise GridError(f"bus {self.id!r}: junction carries no nominal injection")


@dataclass(frozen=True)
class LineRecord:
    """A transmission line given by its per-unit series impedance."""

    from_bus: str
    to_bus: str
    resistance: float
    reactance: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise GridError(f"line {self.from_bus}-{self.to_bus}: self loop")
        if not self.reactance > 0:
            raise GridError(f"line {self.from_bus}-{self.to_bus}: reactance must be positive")

    @property
    def y_mag(self) -> float:
        """Magnitude of the series admittance 1/|R + jX|."""
        return 1.0 / math.hypot(self.resistance, self.reactance)


@dataclass(frozen=True)
class Network:
    """An ordered bus set with the coupling matrix used by the sine injection model.

    ``coupling[i, j] = |V_i| |V_j| |Y_ij|`` so that the injection at bus ``i``
    is ``f_i = sum_j coupling[i, j] * sin(theta_i - theta_j)``.

    Index attributes refer to positions in ``buses``:

    * ``slack``      position of the slack bus (angle reference),
    * ``generators`` positions of generator buses,
    * ``loads``      positions of buses with a nonzero nominal load,
    * ``algebraic``  positions of all buses without swing dynamics
      (loads and junctions), ordered as in ``buses``.
    """

    buses: tuple[BusRecord, ...]
    y_mag: np.ndarray
    slack: int
    generators: tuple[int, ...]
    loads: tuple[int, ...]
    junctions: tuple[int, ...]
    coupling: np.ndarray = field(repr=False)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def algebraic(self) -> tuple[int, ...]:
        return tuple(sorted(self.loads + self.junctions))

    @property
    def non_slack(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_bus) if i != self.slack)

    @property
    def inertia(self) -> np.ndarray:
        """M_i over generator buses, in ``generators`` order."""
        return np.array([self.buses[i].inertia for i in self.generators])

    @property
    def damping(self) -> np.ndarray:
        """D_i over generator buses, in ``generators`` order."""
        return np.array([self.buses[i].damping for i in self.generators])

    @property
    def gen_nominal(self) -> np.ndarray:
        return np.array([self.buses[i].p_nominal for i in self.generators])

    @property
    def load_nominal(self) -> np.ndarray:
        return np.array([self.buses[i].p_nominal for i in self.loads])

    @property
    def gen_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(P_min, P_max) per generator: nominal -/+ half the nominal."""
        nom = self.gen_nominal
        return 0.5 * nom, 1.5 * nom

    def bus_index(self, bus_id: str) -> int:
        for i, b in enumerate(self.buses):
            if b.id == bus_id:
                return i
        raise GridError(f"unknown bus {bus_id!r}")


def build_network(buses: list[BusRecord], lines: list[LineRecord]) -> Network:
    """Assemble a Network, validating labels, roles and connectivity."""
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise GridError(f"duplicate bus labels: {dup}")
    slack = [i for i, b in enumerate(buses) if b.kind == "slack"]
    if len(slack) != 1:
        raise GridError(f"expected exactly one slack bus, found {len(slack)}")

    index = {b.id: i for i, b in enumerate(buses)}
    n = len(buses)
    y = np.zeros((n, n))
    for ln in lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in index:
                raise GridError(f"line {ln.from_bus}-{ln.to_bus} references unknown bus {end!r}")
        i, j = index[ln.from_bus], index[ln.to_bus]
        y[i, j] = y[j, i] = ln.y_mag

    v = np.array([b.v_mag for b in buses])
    coupling = np.outer(v, v) * y

    net = Network(
        buses=tuple(buses),
        y_mag=y,
        slack=slack[0],
        generators=tuple(i for i, b in enumerate(buses) if b.kind == "generator"),
        loads=tuple(i for i, b in enumerate(buses) if b.kind == "load"),
        junctions=tuple(i for i, b in enumerate(buses) if b.kind == "junction"),
        coupling=coupling,
    )
    _check_connected(net)
    return net


def _check_connected(net: Network):
    reached = {net.slack}
    frontier = [net.slack]
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(net.y_mag[i])[0]:
            if j not in reached:
                reached.add(int(j))
                frontier.append(int(j))
    missing = [net.buses[i].id for i in range(net.n_bus) if i not in reached]
    if missing:
        raise GridError(f"buses unreachable from slack: {missing}")


def load_network(path=None) -> Network:
    """Read a network definition file (JSON); defaults to the bundled 9-bus system."""
    if path is None:
        text = resources.files("griddpc.data").joinpath("nine_bus.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    buses = [BusRecord(**b) for b in raw["buses"]]
    lines = [LineRecord(**ln) for ln in raw["lines"]]
    return build_network(buses, lines)


def power_injection(net: Network, theta: np.ndarray) -> np.ndarray:
    """Per-bus network injection f_i(theta) for a full angle vector (slack included)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (net.n_bus,):
        raise GridError(f"theta has shape {theta.shape}, expected ({net.n_bus},)")
    return (net.coupling * np.sin(theta[:, None] - theta[None, :])).sum(axis=1)


def injection_jacobian(net: Network, theta: np.ndarray) -> np.ndarray:
    """d f_i / d theta_j for a full angle vector."""
    cos = net.coupling * np.cos(theta[:, None] - theta[None, :])
    jac = -cos
    np.fill_diagonal(jac, cos.sum(axis=1) - np.diag(cos))
    return jac


def solve_power_flow(net: Network, p_nonslack: np.ndarray) -> np.ndarray:
    """Solve for angles such that the injections at non-slack buses match ``p_nonslack``.

    ``p_nonslack`` is ordered like ``net.non_slack``.  Returns the full angle
    vector with the slack entry fixed at 0.  Flat start, Newton iteration with
    the analytic Jacobian, residual tolerance 1e-10.
    """
    p_nonslack = np.asarray(p_nonslack, dtype=float)
    ns = list(net.non_slack)
    if p_nonslack.shape != (len(ns),):
        raise GridError(f"expected {len(ns)} injections, got shape {p_nonslack.shape}")

    theta = np.zeros(net.n_bus)
    for _ in range(PF_MAX_ITER):
        residual = power_injection(net, theta)[ns] - p_nonslack
        if np.max(np.abs(residual)) <= PF_TOL:
            return theta
        jac = injection_jacobian(net, theta)[np.ix_(ns, ns)]
        try:
            step = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian: {exc}") from exc
        if not np.all(np.isfinite(step)):
            raise PowerFlowError("Newton step diverged")
        theta[ns] -= step
    raise PowerFlowError(
        f"no convergence in {PF_MAX_ITER} iterations; requested injections may be infeasible"
    )


def static_dispatch(net: Network, loads: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Cheapest steady-state generator set-points covering the given loads.

    ``loads`` are the (negative) injections at the load buses, ``c`` the cost
    coefficients for generators followed by the slack bus.  Minimizes
    ``sum c_i P_i + c_s |P_s|`` with ``P_s = -sum P_i - sum L_i`` under the
    generator box bounds.  Generators are filled in merit order; only
    generators strictly cheaper than the slack are raised above their minimum,
    and cost ties break by bus position.
    """
    loads = np.asarray(loads, dtype=float)
    c = np.asarray(c, dtype=float)
    n_g = len(net.generators)
    if loads.shape != (len(net.loads),):
        raise GridError(f"expected {len(net.loads)} load values")
    if c.shape != (n_g + 1,):
        raise GridError(f"expected {n_g + 1} cost coefficients (generators then slack)")

    p_min, p_max = net.gen_bounds
    c_gen, c_slack = c[:n_g], c[n_g]
    p = p_min.copy()
    demand = -loads.sum()
    remaining = demand - p.sum()
    if remaining > 0:
        for i in sorted(range(n_g), key=lambda i: (c_gen[i], i)):
            if c_gen[i] >= c_slack:
                break
            take = min(remaining, p_max[i] - p_min[i])
            p[i] += take
            remaining -= take
            if remaining <= 0:
                break
    return p
