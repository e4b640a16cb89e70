"""Bus/line network model, admittance assembly and the AC power-flow equations.

Sign conventions
----------------
Powers are per-unit on ``base_mva`` (100 MW).  Injections are positive for
generators and negative for loads.

A :class:`Line` stores its *signed* series admittance ``g + j*b``; for an
ordinary inductive line ``g >= 0`` and ``b < 0`` (``y = 1/(r + jx)``).  The
matrices follow the bus-admittance convention: off-diagonal entries are the
negated line values, ``G_ij = -g`` and ``B_ij = -b``, and diagonals collect
``G_ii = sum g``, ``B_ii = sum b``.  No shunts, taps or line charging.

With these matrices the injections are::

    p_i = sum_j v_i v_j [G_ij cos(t_i - t_j) + B_ij sin(t_i - t_j)]
    q_i = sum_j v_i v_j [G_ij sin(t_i - t_j) - B_ij cos(t_i - t_j)]
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GridError

BASE_MVA = 100.0


class BusKind(str, enum.Enum):
    SLACK = "slack"
    GENERATOR = "generator"
    LOAD = "load"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_set: float = 0.0
    q_set: float = 0.0
    v_set: float = 1.0
    label: str | None = None  # observation column name mapped onto this bus

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BusKind(self.kind))
        if not self.v_set > 0:
            raise GridError(f"bus {self.id}: v_set must be positive, got {self.v_set}")
        if self.kind is BusKind.LOAD and self.p_set > 0:
            raise GridError(f"load bus {self.id} has positive p_set {self.p_set}")
        if self.kind is BusKind.GENERATOR and self.p_set < 0:
            raise GridError(f"generator bus {self.id} has negative p_set {self.p_set}")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    g: float
    b: float
    thermal_limit: float | None = None

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise GridError(f"line {self.from_bus}-{self.to_bus} is a self loop")
        if self.b == 0:
            raise GridError(f"line {self.from_bus}-{self.to_bus} has zero susceptance")

    @property
    def name(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class PowerFlowState:
    """Voltage magnitudes ``v`` (p.u.) and angles ``theta`` (rad) at every bus."""

    v: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.v, dtype=float)
        theta = np.array(self.theta, dtype=float)
        if v.ndim != 1 or v.shape != theta.shape:
            raise ValueError(f"v and theta must be 1-d of equal length, got {v.shape} and {theta.shape}")
        if np.any(~(v > 0)):
            raise ValueError("voltage magnitudes must be positive")
        v.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def flat(cls, n: int) -> "PowerFlowState":
        return cls(np.ones(n), np.zeros(n))

    def __len__(self) -> int:
        return self.v.shape[0]


def _assemble(
    n_bus: int, from_idx: Sequence[int], to_idx: Sequence[int], g: Sequence[float], b: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(from_idx, dtype=int)
    t = np.asarray(to_idx, dtype=int)
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    if f.size and (f.min() < 0 or t.min() < 0 or f.max() >= n_bus or t.max() >= n_bus):
        raise GridError("line references a bus index out of range")
    pairs = set()
    for i, j in zip(f.tolist(), t.tolist()):
        key = (min(i, j), max(i, j))
        if key in pairs:
            raise GridError(f"duplicate line between buses {key[0]} and {key[1]}; merge parallel lines first")
        pairs.add(key)

    G = np.zeros((n_bus, n_bus))
    B = np.zeros((n_bus, n_bus))
    # each unordered pair occurs once, so plain fancy-index assignment is safe
    G[f, t] = -g
    G[t, f] = -g
    B[f, t] = -b
    B[t, f] = -b
    np.add.at(G, (f, f), g)
    np.add.at(G, (t, t), g)
    np.add.at(B, (f, f), b)
    np.add.at(B, (t, t), b)
    return G, B


def _components(n_bus: int, f: np.ndarray, t: np.ndarray) -> tuple[int, np.ndarray]:
    adj = coo_matrix((np.ones(f.size), (f, t)), shape=(n_bus, n_bus))
    return connected_components(adj, directed=False)


def _line_ends(buses: Sequence[Bus], lines: Sequence[Line]) -> tuple[np.ndarray, np.ndarray]:
    index: dict[int, int] = {}
    for k, bus in enumerate(buses):
        if bus.id in index:
            raise GridError(f"duplicate bus id {bus.id}")
        index[bus.id] = k
    try:
        f = np.array([index[ln.from_bus] for ln in lines], dtype=int)
        t = np.array([index[ln.to_bus] for ln in lines], dtype=int)
    except KeyError as exc:
        raise GridError(f"line references unknown bus id {exc.args[0]}") from None
    return f, t


def _require_connected(buses: Sequence[Bus], f: np.ndarray, t: np.ndarray) -> None:
    ncomp, labels = _components(len(buses), f, t)
    if ncomp > 1:
        groups = [[buses[k].id for k in np.flatnonzero(labels == c)] for c in range(ncomp)]
        raise GridError(f"network is not connected; components: {groups}")


def build_admittance(buses: Sequence[Bus], lines: Sequence[Line]) -> tuple[np.ndarray, np.ndarray]:
    """Dense conductance and susceptance matrices ``(G, B)``.

    Rejects duplicate lines for a bus pair and disconnected networks (the
    error lists the bus ids of each component).
    """
    f, t = _line_ends(buses, lines)
    G, B = _assemble(len(buses), f, t, [ln.g for ln in lines], [ln.b for ln in lines])
    _require_connected(buses, f, t)
    return G, B


@dataclass(frozen=True)
class GridNetwork:
    """Immutable network: buses, lines and their admittance matrices.

    Bus ``id`` values are external labels; all arrays are indexed by the
    position of the bus in ``buses``.  If no bus is declared as slack, the
    generator with the largest ``p_set`` is promoted.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    base_mva: float = BASE_MVA
    G: np.ndarray = field(init=False, repr=False, compare=False)
    B: np.ndarray = field(init=False, repr=False, compare=False)
    from_idx: np.ndarray = field(init=False, repr=False, compare=False)
    to_idx: np.ndarray = field(init=False, repr=False, compare=False)
    connectivity: np.ndarray = field(init=False, repr=False, compare=False)
    slack: int = field(init=False, compare=False)

    def __post_init__(self) -> None:
        buses = list(self.buses)
        lines = tuple(self.lines)
        if not buses:
            raise GridError("network has no buses")
        f, t = _line_ends(buses, lines)
        slacks = [k for k, bus in enumerate(buses) if bus.kind is BusKind.SLACK]
        if len(slacks) > 1:
            raise GridError(f"more than one slack bus: {[buses[k].id for k in slacks]}")
        if not slacks:
            gens = [k for k, bus in enumerate(buses) if bus.kind is BusKind.GENERATOR]
            if not gens:
                raise GridError("no slack bus and no generator to promote")
            # stable: first of the largest
            k = max(gens, key=lambda k: (buses[k].p_set, -k))
            old = buses[k]
            buses[k] = Bus(old.id, BusKind.SLACK, old.p_set, old.q_set, old.v_set, old.label)
            slacks = [k]

        n = len(buses)
        G, B = _assemble(n, f, t, [ln.g for ln in lines], [ln.b for ln in lines])
        _require_connected(buses, f, t)

        deg = np.bincount(f, minlength=n) + np.bincount(t, minlength=n)
        for arr in (G, B, f, t, deg):
            arr.flags.writeable = False
        object.__setattr__(self, "buses", tuple(buses))
        object.__setattr__(self, "lines", lines)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "from_idx", f)
        object.__setattr__(self, "to_idx", t)
        object.__setattr__(self, "connectivity", deg)
        object.__setattr__(self, "slack", slacks[0])

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    def bus_index(self, bus_id: int) -> int:
        for k, bus in enumerate(self.buses):
            if bus.id == bus_id:
                return k
        raise GridError(f"unknown bus id {bus_id}")

    def line_index(self, line: Line | tuple[int, int] | int) -> int:
        """Position of a line given as a :class:`Line`, ``(from_id, to_id)`` or an index."""
        if isinstance(line, (int, np.integer)):
            if not 0 <= line < self.n_line:
                raise GridError(f"line index {line} out of range")
            return int(line)
        ends = (line.from_bus, line.to_bus) if isinstance(line, Line) else tuple(line)
        for k, ln in enumerate(self.lines):
            if {ln.from_bus, ln.to_bus} == set(ends):
                return k
        raise GridError(f"unknown line {ends[0]}-{ends[1]}")

    @property
    def line_names(self) -> list[str]:
        return [ln.name for ln in self.lines]


def _check_state(net: GridNetwork, state: PowerFlowState) -> None:
    if len(state) != net.n_bus:
        raise ValueError(f"state has {len(state)} buses, network has {net.n_bus}")


def injections(net: GridNetwork, state: PowerFlowState) -> tuple[np.ndarray, np.ndarray]:
    """Active and reactive injections ``(p, q)`` of a voltage state."""
    _check_state(net, state)
    v, th = state.v, state.theta
    d = th[:, None] - th[None, :]
    vv = v[:, None] * v[None, :]
    c, s = np.cos(d), np.sin(d)
    p = np.sum(vv * (net.G * c + net.B * s), axis=1)
    q = np.sum(vv * (net.G * s - net.B * c), axis=1)
    return p, q


def _pair_flow(net, state, i, j):
    v, th = state.v, state.theta
    d = th[i] - th[j]
    vv = v[i] * v[j]
    Gij, Bij = net.G[i, j], net.B[i, j]
    p = vv * (Gij * np.cos(d) + Bij * np.sin(d))
    q = vv * (Gij * np.sin(d) - Bij * np.cos(d))
    return p, q


def line_flow(
    net: GridNetwork, state: PowerFlowState, line: Line | tuple[int, int] | int
) -> tuple[float, float]:
    """Flow ``(p_ij, q_ij)`` on one line, oriented from ``line.from_bus`` to ``line.to_bus``.

    This is the ``j`` summand of the injection sum at bus ``i`` (matrix-entry
    form, without the bus self term), so on lossless networks the flows out of
    a bus add up to its injection.
    """
    _check_state(net, state)
    k = net.line_index(line)
    ln = net.lines[k]
    i, j = net.from_idx[k], net.to_idx[k]
    if isinstance(line, tuple) and line[0] == ln.to_bus:
        i, j = j, i
    p, q = _pair_flow(net, state, i, j)
    return float(p), float(q)


def line_flows(net: GridNetwork, state: PowerFlowState) -> tuple[np.ndarray, np.ndarray]:
    """All line flows in ``from -> to`` orientation, vectorized."""
    _check_state(net, state)
    return _pair_flow(net, state, net.from_idx, net.to_idx)


def terminal_apparent_power(net: GridNetwork, state: PowerFlowState) -> np.ndarray:
    """Physical apparent power through each series branch, the larger of its two ends.

    Unlike the summand flows above, this includes the ``v_i^2`` self terms,
    i.e. ``S_ij = V_i conj(y (V_i - V_j))``.
    """
    _check_state(net, state)
    V = state.v * np.exp(1j * state.theta)
    y = np.array([ln.g + 1j * ln.b for ln in net.lines])
    Vi, Vj = V[net.from_idx], V[net.to_idx]
    s_from = Vi * np.conj(y * (Vi - Vj))
    s_to = Vj * np.conj(y * (Vj - Vi))
    return np.maximum(np.abs(s_from), np.abs(s_to))


@dataclass(frozen=True)
class FlowDeviation:
    """Linearized flow response to an angle perturbation.

    ``line`` holds the per-line deviation in ``from -> to`` orientation.  The
    half-edge arrays list every (bus, neighbour) pair twice over the network
    (once from each end): ``edge_bus``, ``edge_nbr``, the deviation
    ``edge_dp`` and its zero-mean part ``edge_fluct``.  ``bus`` is the
    summed per-bus deviation and ``mean`` its per-line average ``bus / c_i``.
    """

    line: np.ndarray
    bus: np.ndarray
    mean: np.ndarray
    edge_bus: np.ndarray
    edge_nbr: np.ndarray
    edge_dp: np.ndarray
    edge_fluct: np.ndarray


def linearized_flow_deviation(
    net: GridNetwork,
    base_state: PowerFlowState,
    delta_theta: np.ndarray,
    *,
    include_conductance: bool = False,
) -> FlowDeviation:
    """First-order change of line flows for small angle deviations at fixed ``v``.

    ``dp_ij = B_ij v_i v_j cos(t_i - t_j) (dt_i - dt_j)``, the susceptance-
    dominated linearization.  ``include_conductance`` adds the
    ``-G_ij v_i v_j sin(t_i - t_j)`` term, giving the exact first-order
    expansion on lossy networks.
    """
    _check_state(net, base_state)
    dth = np.asarray(delta_theta, dtype=float)
    if dth.shape != (net.n_bus,):
        raise ValueError(f"delta_theta must have shape ({net.n_bus},), got {dth.shape}")
    v, th = base_state.v, base_state.theta
    i = np.concatenate([net.from_idx, net.to_idx])
    j = np.concatenate([net.to_idx, net.from_idx])
    d0 = th[i] - th[j]
    coef = net.B[i, j] * v[i] * v[j] * np.cos(d0)
    if include_conductance:
        coef = coef - net.G[i, j] * v[i] * v[j] * np.sin(d0)
    dp = coef * (dth[i] - dth[j])

    bus = np.bincount(i, weights=dp, minlength=net.n_bus)
    c = net.connectivity
    mean = bus / c
    fluct = dp - mean[i]
    return FlowDeviation(
        line=dp[: net.n_line].copy(),
        bus=bus,
        mean=mean,
        edge_bus=i,
        edge_nbr=j,
        edge_dp=dp,
        edge_fluct=fluct,
    )


def network_from_dict(data: dict[str, Any]) -> GridNetwork:
    """Build a network from the JSON document layout (see ``load_network``)."""
    try:
        buses = [
            Bus(
                id=int(b["id"]),
                kind=BusKind(str(b["kind"]).lower()),
                p_set=float(b.get("p_set", 0.0)),
                q_set=float(b.get("q_set", 0.0)),
                v_set=float(b.get("v_set", 1.0)),
                label=b.get("label"),
            )
            for b in data["buses"]
        ]
        lines = [
            Line(
                from_bus=int(ln["from"]),
                to_bus=int(ln["to"]),
                g=float(ln.get("g", 0.0)),
                b=float(ln["b"]),
                thermal_limit=None if ln.get("thermal_limit") is None else float(ln["thermal_limit"]),
            )
            for ln in data["lines"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GridError):
            raise
        raise GridError(f"malformed network document: {exc!r}") from exc
    base = float(data.get("base_mva", BASE_MVA))
    return GridNetwork(tuple(buses), tuple(lines), base)


def network_to_dict(net: GridNetwork) -> dict[str, Any]:
    return {
        "base_mva": net.base_mva,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind.value,
                "p_set": b.p_set,
                "q_set": b.q_set,
                "v_set": b.v_set,
                **({"label": b.label} if b.label is not None else {}),
            }
            for b in net.buses
        ],
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "g": ln.g, "b": ln.b, "thermal_limit": ln.thermal_limit}
            for ln in net.lines
        ],
    }


def _read_document(path: str | Path) -> dict[str, Any]:
    spath = str(path)
    if spath.startswith("builtin:"):
        name = spath.split(":", 1)[1]
        try:
            text = resources.files("gridinfer").joinpath("data", f"{name}.json").read_text()
        except FileNotFoundError:
            raise GridError(f"no builtin network named {name!r}") from None
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise GridError(f"cannot read network file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise GridError(f"{path}: network document must be a JSON object")
    return doc


def load_network(path: str | Path) -> GridNetwork:
    """Read a network JSON file.

    Layout::

        {"base_mva": 100,
         "buses": [{"id": 1, "kind": "slack|generator|load",
                    "p_set": 0.0, "q_set": 0.0, "v_set": 1.0, "label": "optional"}],
         "lines": [{"from": 1, "to": 2, "g": 0.0, "b": -10.0, "thermal_limit": 2.5}]}

    ``path`` may also be ``builtin:<name>`` for a network shipped with the
    package (``case9``, ``synth9``).
    """
    return network_from_dict(_read_document(path))


def load_reference_solution(path: str | Path) -> PowerFlowState | None:
    """The ``reference_solution`` block of a network document, if present."""
    ref = _read_document(path).get("reference_solution")
    if ref is None:
        return None
    return PowerFlowState(np.array(ref["v"]), np.array(ref["theta"]))


def save_network(net: GridNetwork, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2) + "\n", encoding="utf-8")


def random_network(
    n_bus: int,
    rng: np.random.Generator,
    *,
    extra_lines: int | None = None,
    lossless: bool = False,
    b_range: tuple[float, float] = (5.0, 20.0),
    r_over_x: tuple[float, float] = (0.05, 0.3),
    kinds: Iterable[BusKind] | None = None,
) -> GridNetwork:
    """Random connected meshed network: a random spanning tree plus extra chords.

    Used for tests and property checks.
    """
    if extra_lines is None:
        extra_lines = max(1, n_bus // 2)
    edges = set()
    order = rng.permutation(n_bus)
    for k in range(1, n_bus):
        a, c = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, c), max(a, c)))
    max_edges = n_bus * (n_bus - 1) // 2
    target = min(max_edges, len(edges) + extra_lines)
    while len(edges) < target:
        a, c = rng.choice(n_bus, size=2, replace=False)
        edges.add((int(min(a, c)), int(max(a, c))))
    lines = []
    for a, c in sorted(edges):
        x_inv = rng.uniform(*b_range)
        g = 0.0 if lossless else x_inv * rng.uniform(*r_over_x)
        lines.append(Line(a, c, g=g, b=-x_inv, thermal_limit=None))
    if kinds is None:
        kinds = [BusKind.SLACK] + [BusKind.LOAD] * (n_bus - 1)
    buses = [Bus(k, kind) for k, kind in enumerate(kinds)]
    return GridNetwork(tuple(buses), tuple(lines))
