"""Newton-Raphson AC power flow, flow reconstruction and flow-error metrics."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import PowerFlowError, SingularJacobianError
from .grid import BusKind, GridNetwork, PowerFlowState, injections, line_flows, terminal_apparent_power

log = logging.getLogger(__name__)

PIVOT_THRESHOLD = 1e-12
MAX_HALVINGS = 30
ARMIJO = 1e-4
OVERLOAD_FRACTION = 0.95
DEVIATION_BAND = 0.10
DEFAULT_POWER_FACTOR = 0.95

# Flow metrics reported for the 2015 Swiss measurement set.  Kept for
# context only: the data are proprietary, and m1 > m2 is incompatible with
# the definitions implemented in flow_metrics (which force m2 >= m1).
SWISS_REFERENCE_M1 = 0.06862
SWISS_REFERENCE_M2 = 0.01515


class BusRole(str, enum.Enum):
    SLACK = "slack"  # v, theta fixed
    PV = "pv"  # p, v fixed
    PQ = "pq"  # p, q fixed


def reactive_ratio(power_factor: float = DEFAULT_POWER_FACTOR) -> float:
    """``q/p`` ratio for a given power factor, ``tan(arccos(pf))``."""
    if not 0 < power_factor <= 1:
        raise ValueError(f"power factor must be in (0, 1], got {power_factor}")
    return math.tan(math.acos(power_factor))


@dataclass(frozen=True)
class PowerFlowSpec:
    """One snapshot to solve: network, bus roles and set-points.

    Slack: ``v_set`` and angle 0.  PV: ``p_set`` and ``v_set``.  PQ:
    ``p_set`` and ``q_set``.  Unused entries are ignored.
    """

    net: GridNetwork
    roles: tuple[BusRole, ...]
    p_set: np.ndarray
    q_set: np.ndarray
    v_set: np.ndarray

    def __post_init__(self) -> None:
        n = self.net.n_bus
        roles = tuple(BusRole(r) for r in self.roles)
        if len(roles) != n:
            raise ValueError(f"{len(roles)} roles for {n} buses")
        if sum(r is BusRole.SLACK for r in roles) != 1:
            raise ValueError("exactly one slack bus is required")
        arrays = {}
        for name in ("p_set", "q_set", "v_set"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            a.flags.writeable = False
            arrays[name] = a
        if np.any(arrays["v_set"][[k for k, r in enumerate(roles) if r is not BusRole.PQ]] <= 0):
            raise ValueError("v_set must be positive on slack and PV buses")
        object.__setattr__(self, "roles", roles)
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @classmethod
    def from_network(
        cls,
        net: GridNetwork,
        p: np.ndarray | None = None,
        q: np.ndarray | None = None,
        *,
        power_factor: float | None = None,
    ) -> "PowerFlowSpec":
        """Default roles: slack stays slack, generators are PV, loads are PQ.

        ``p``/``q`` override the network set-points.  With ``power_factor``
        the PQ reactive set-points are derived as ``q = tan(arccos pf) * p``
        (ignoring ``q`` and ``q_set``).
        """
        roles = []
        for k, bus in enumerate(net.buses):
            if k == net.slack:
                roles.append(BusRole.SLACK)
            elif bus.kind is BusKind.GENERATOR:
                roles.append(BusRole.PV)
            else:
                roles.append(BusRole.PQ)
        p = np.array([b.p_set for b in net.buses]) if p is None else np.asarray(p, dtype=float)
        if power_factor is not None:
            q = reactive_ratio(power_factor) * p
        elif q is None:
            q = np.array([b.q_set for b in net.buses])
        v = np.array([b.v_set for b in net.buses])
        return cls(net, tuple(roles), p, q, v)

    @property
    def slack(self) -> int:
        return self.roles.index(BusRole.SLACK)

    def index_sets(self) -> tuple[np.ndarray, np.ndarray]:
        """Bus indices carrying angle unknowns (PV+PQ) and magnitude unknowns (PQ)."""
        pvpq = np.array([k for k, r in enumerate(self.roles) if r is not BusRole.SLACK], dtype=int)
        pq = np.array([k for k, r in enumerate(self.roles) if r is BusRole.PQ], dtype=int)
        return pvpq, pq


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 20
    initial: PowerFlowState | None = None  # None = flat start
    line_search: bool = True


@dataclass(frozen=True)
class SolveResult:
    state: PowerFlowState
    iterations: int
    residual: float
    converged: bool
    worst_bus: int | None = None  # external id of the largest final mismatch
    history: tuple[float, ...] = field(default=(), repr=False)


def mismatch(spec: PowerFlowSpec, state: PowerFlowState) -> np.ndarray:
    """Stacked ``[p - p_set]`` on PV+PQ buses and ``[q - q_set]`` on PQ buses."""
    pvpq, pq = spec.index_sets()
    p, q = injections(spec.net, state)
    return np.concatenate([p[pvpq] - spec.p_set[pvpq], q[pq] - spec.q_set[pq]])


def jacobian(spec: PowerFlowSpec, state: PowerFlowState) -> np.ndarray:
    """Analytic Jacobian of :func:`mismatch` in ``(theta[pvpq], v[pq])`` order."""
    net = spec.net
    G, B = net.G, net.B
    v, th = state.v, state.theta
    d = th[:, None] - th[None, :]
    c, s = np.cos(d), np.sin(d)
    vv = v[:, None] * v[None, :]
    # per-pair summands of p_i (n_) and q_i (h); off-diagonal partials follow from them
    h = vv * (G * s - B * c)
    n_ = vv * (G * c + B * s)
    dp_dth = h.copy()
    dq_dth = -n_
    dp_dv = n_ / v[None, :]
    dq_dv = h / v[None, :]

    p = n_.sum(axis=1)
    q = h.sum(axis=1)
    gd, bd = np.diag(G), np.diag(B)
    idx = np.arange(net.n_bus)
    dp_dth[idx, idx] = -q - bd * v**2
    dq_dth[idx, idx] = p - gd * v**2
    dp_dv[idx, idx] = p / v + gd * v
    dq_dv[idx, idx] = q / v - bd * v

    pvpq, pq = spec.index_sets()
    top = np.hstack([dp_dth[np.ix_(pvpq, pvpq)], dp_dv[np.ix_(pvpq, pq)]])
    bottom = np.hstack([dq_dth[np.ix_(pq, pvpq)], dq_dv[np.ix_(pq, pq)]])
    return np.vstack([top, bottom])


def _initial_state(spec: PowerFlowSpec, options: SolveOptions) -> tuple[np.ndarray, np.ndarray]:
    n = spec.net.n_bus
    if options.initial is not None:
        if len(options.initial) != n:
            raise ValueError("initial state does not match the network size")
        v = options.initial.v.copy()
        th = options.initial.theta.copy()
    else:
        v = np.ones(n)
        th = np.zeros(n)
    fixed_v = [k for k, r in enumerate(spec.roles) if r is not BusRole.PQ]
    v[fixed_v] = spec.v_set[fixed_v]
    th[spec.slack] = 0.0
    return v, th


def solve_newton_raphson(spec: PowerFlowSpec, options: SolveOptions | None = None) -> SolveResult:
    """Solve the power-flow equations by Newton-Raphson.

    Each Newton step is damped by backtracking when the full step would not
    reduce the mismatch norm.  Returns a result with ``converged=False``
    (plus final residual and worst bus) when ``max_iter`` is exhausted or no
    step reduces the mismatch.  Raises
    :class:`SingularJacobianError` when an LU pivot falls below 1e-12.
    """
    options = options or SolveOptions()
    pvpq, pq = spec.index_sets()
    n_th = pvpq.size
    v, th = _initial_state(spec, options)
    history: list[float] = []
    it = 0
    while True:
        state = PowerFlowState(v, th)
        f = mismatch(spec, state)
        res = float(np.max(np.abs(f))) if f.size else 0.0
        history.append(res)
        if res <= options.tol:
            return SolveResult(state, it, res, True, None, tuple(history))
        if it >= options.max_iter or not math.isfinite(res):
            return _failed(spec, state, f, it, res, history)
        J = jacobian(spec, state)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(J, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.size and pivots.min() < PIVOT_THRESHOLD:
            raise SingularJacobianError(
                f"Jacobian pivot {pivots.min():.3e} below {PIVOT_THRESHOLD:g} at iteration {it} "
                "(islanding or voltage collapse)"
            )
        dx = scipy.linalg.lu_solve((lu, piv), f, check_finite=False)
        it += 1
        step = _backtrack(spec, v, th, f, dx, n_th, options.line_search)
        if step is None:
            return _failed(spec, state, f, it, res, history)
        v, th = step


def _backtrack(spec, v, th, f, dx, n_th, line_search):
    """Newton update, halved until the mismatch 2-norm decreases (Armijo).

    The full step is always tried first, so the quadratic tail is untouched.
    Returns None when no admissible step exists.
    """
    pvpq, pq = spec.index_sets()
    norm = float(np.linalg.norm(f))
    t = 1.0
    for _ in range(MAX_HALVINGS if line_search else 1):
        th_new = th.copy()
        v_new = v.copy()
        th_new[pvpq] -= t * dx[:n_th]
        v_new[pq] -= t * dx[n_th:]
        if np.all(np.isfinite(th_new)) and np.all(np.isfinite(v_new)) and np.all(v_new > 0):
            if not line_search:
                return v_new, th_new
            f_new = mismatch(spec, PowerFlowState(v_new, th_new))
            if np.linalg.norm(f_new) <= (1.0 - ARMIJO * t) * norm:
                return v_new, th_new
        t *= 0.5
    return None


def _failed(spec, state, f, it, res, history) -> SolveResult:
    pvpq, pq = spec.index_sets()
    buses = np.concatenate([pvpq, pq])
    worst = None
    if f.size:
        k = int(np.nanargmax(np.where(np.isfinite(f), np.abs(f), np.inf)))
        worst = spec.net.buses[int(buses[k])].id
    return SolveResult(state, it, res, False, worst, tuple(history))


def solve(spec: PowerFlowSpec, options: SolveOptions | None = None) -> SolveResult:
    """Like :func:`solve_newton_raphson` but raises on non-convergence."""
    result = solve_newton_raphson(spec, options)
    if not result.converged:
        raise PowerFlowError(
            f"no convergence after {result.iterations} iterations: residual {result.residual:.3e} "
            f"(worst bus {result.worst_bus})"
        )
    return result


@dataclass(frozen=True)
class FlowComparison:
    """Per-line true vs reconstructed flows for one snapshot."""

    line_names: tuple[str, ...]
    p_true: np.ndarray
    p_hat: np.ndarray
    deviation: np.ndarray  # p_hat - p_true
    relative: np.ndarray  # deviation / |p_true|, inf where p_true == 0
    overloaded: np.ndarray


def _as_state(x: SolveResult | PowerFlowState, what: str) -> PowerFlowState:
    if isinstance(x, SolveResult):
        if not x.converged:
            raise PowerFlowError(f"{what} solution did not converge")
        return x.state
    return x


def overload_flags(net: GridNetwork, s: np.ndarray) -> np.ndarray:
    """Lines whose apparent power ``s`` exceeds 95% of their thermal limit (broadcasts over leading axes)."""
    limit = np.array([np.inf if ln.thermal_limit is None else ln.thermal_limit for ln in net.lines])
    return np.asarray(s) > OVERLOAD_FRACTION * limit


def relative_deviation(p_true: np.ndarray, p_hat: np.ndarray) -> np.ndarray:
    dev = p_hat - p_true
    mag = np.abs(p_true)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mag > 0, dev / np.where(mag > 0, mag, 1.0), np.where(dev == 0, 0.0, np.inf))
    return rel


def reconstruct_flows(
    net: GridNetwork, solved_true: SolveResult | PowerFlowState, solved_hat: SolveResult | PowerFlowState
) -> FlowComparison:
    """Compare line flows of the true and the inferred operating point."""
    s_true = _as_state(solved_true, "true")
    s_hat = _as_state(solved_hat, "inferred")
    if len(s_true) != net.n_bus or len(s_hat) != net.n_bus:
        raise ValueError("states do not belong to this network")
    p_t, _ = line_flows(net, s_true)
    p_h, _ = line_flows(net, s_hat)
    return FlowComparison(
        line_names=tuple(net.line_names),
        p_true=p_t,
        p_hat=p_h,
        deviation=p_h - p_t,
        relative=relative_deviation(p_t, p_h),
        overloaded=overload_flags(net, terminal_apparent_power(net, s_true)),
    )


@dataclass(frozen=True)
class FlowMetrics:
    """Per-line error variance and true-flow variance, plus the two aggregates.

    ``var`` and ``sigma2`` cover every line; ``m1``/``m2`` average only over
    ``included`` lines (lines with constant true flow are excluded).
    """

    var: np.ndarray
    sigma2: np.ndarray
    m1: float
    m2: float
    included: np.ndarray
    excluded: tuple[int, ...]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)


def flow_metrics(true_series: np.ndarray, hat_series: np.ndarray, *, rtol: float = 1e-12) -> FlowMetrics:
    """Flow reconstruction error over ``N`` timestamps (rows) and ``L`` lines (columns).

    ``var_l = mean_t (p - p_hat)^2`` and ``sigma2_l`` is the population
    variance of the true flow.  With ``r_l = var_l / sigma2_l``::

        m1 = mean_l sqrt(r_l)        m2 = sqrt(mean_l r_l)

    Lines whose true flow is constant (``sigma2 <= (rtol * scale)^2``) are
    excluded with a warning.
    """
    p = np.asarray(true_series, dtype=float)
    ph = np.asarray(hat_series, dtype=float)
    if p.ndim != 2 or p.shape != ph.shape:
        raise ValueError(f"series must be 2-d with equal shapes, got {p.shape} and {ph.shape}")
    if p.shape[0] < 2:
        raise ValueError("at least two observation times are required")
    var = np.mean((p - ph) ** 2, axis=0)
    sigma2 = np.var(p, axis=0)
    scale = np.maximum(1.0, np.max(np.abs(p), axis=0))
    included = sigma2 > (rtol * scale) ** 2
    excluded = tuple(int(k) for k in np.flatnonzero(~included))
    if excluded:
        log.warning("excluding %d line(s) with constant true flow: %s", len(excluded), excluded)
    if not included.any():
        raise ValueError("every line has constant true flow; metrics undefined")
    ratio = var[included] / sigma2[included]
    m1 = float(np.mean(np.sqrt(ratio)))
    m2 = float(np.sqrt(np.mean(ratio)))
    return FlowMetrics(var, sigma2, m1, m2, included, excluded)


@dataclass(frozen=True)
class FlowReport:
    """Flow reconstruction over a series of snapshots."""

    line_names: tuple[str, ...]
    timestamps: np.ndarray
    p_true: np.ndarray  # N x L
    p_hat: np.ndarray
    overloaded: np.ndarray  # N x L, from the true flows
    metrics: FlowMetrics
    excluded_timestamps: tuple[int, ...] = ()

    @property
    def m1(self) -> float:
        return self.metrics.m1

    @property
    def m2(self) -> float:
        return self.metrics.m2

    @property
    def sigma(self) -> np.ndarray:
        return self.metrics.sigma

    @property
    def relative(self) -> np.ndarray:
        return relative_deviation(self.p_true, self.p_hat)

    def within_band(self, band: float = DEVIATION_BAND) -> float:
        """Fraction of line-timestamp pairs with ``|p_hat - p| <= band * |p|``."""
        ok = np.abs(self.p_hat - self.p_true) <= band * np.abs(self.p_true)
        return float(np.mean(ok))

    def summary(self) -> dict:
        return {
            "m1": self.m1,
            "m2": self.m2,
            "n_timestamps": int(self.timestamps.size),
            "n_lines": len(self.line_names),
            "excluded_lines": [self.line_names[k] for k in self.metrics.excluded],
            "excluded_timestamps": list(self.excluded_timestamps),
            "n_excluded_timestamps": len(self.excluded_timestamps),
            "within_10pct": self.within_band(DEVIATION_BAND),
            "overloaded_count": int(self.overloaded.sum()),
            "reference": {"swiss_2015_m1": SWISS_REFERENCE_M1, "swiss_2015_m2": SWISS_REFERENCE_M2},
        }

    def write_csv(self, path: str | Path) -> None:
        rel = self.relative
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "line", "p_true", "p_hat", "deviation", "relative_deviation", "overloaded"])
            for r, ts in enumerate(self.timestamps.tolist()):
                for c, name in enumerate(self.line_names):
                    w.writerow([
                        ts, name, repr(float(self.p_true[r, c])), repr(float(self.p_hat[r, c])),
                        repr(float(self.p_hat[r, c] - self.p_true[r, c])), repr(float(rel[r, c])),
                        int(self.overloaded[r, c]),
                    ])

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def solve_series(
    specs: Sequence[PowerFlowSpec],
    options: SolveOptions | None = None,
    *,
    warm_start: bool = False,
    retry: bool = False,
) -> list[SolveResult | None]:
    """Solve consecutive snapshots; ``None`` marks a failed timestamp.

    ``warm_start`` seeds each solve with the previous converged state
    (sequential by construction).  ``retry`` re-attempts a failed flat-start
    solve from the last converged state.
    """
    options = options or SolveOptions()
    out: list[SolveResult | None] = []
    last: PowerFlowState | None = None
    for spec in specs:
        init = last if warm_start else options.initial
        result = _try_solve(spec, SolveOptions(options.tol, options.max_iter, init))
        if result is None and retry and last is not None and init is not last:
            result = _try_solve(spec, SolveOptions(options.tol, options.max_iter, last))
        if result is not None:
            last = result.state
        out.append(result)
    return out


def _try_solve(spec: PowerFlowSpec, options: SolveOptions) -> SolveResult | None:
    try:
        result = solve_newton_raphson(spec, options)
    except (SingularJacobianError, FloatingPointError):
        return None
    return result if result.converged else None


def flow_series(
    net: GridNetwork,
    p_true: np.ndarray,
    p_hat: np.ndarray,
    *,
    timestamps: np.ndarray | None = None,
    power_factor: float = DEFAULT_POWER_FACTOR,
    options: SolveOptions | None = None,
    warm_start: bool = False,
    retry: bool = False,
) -> FlowReport:
    """Solve true and inferred injection series (``N x n_bus`` each) and score the flows.

    Timestamps where either solve fails are dropped and listed in
    ``excluded_timestamps``.
    """
    p_true = np.asarray(p_true, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    if p_true.shape != p_hat.shape or p_true.ndim != 2 or p_true.shape[1] != net.n_bus:
        raise ValueError(f"injection series must be N x {net.n_bus}")
    n = p_true.shape[0]
    ts = np.arange(n) if timestamps is None else np.asarray(timestamps)
    true_specs = [PowerFlowSpec.from_network(net, row, power_factor=power_factor) for row in p_true]
    hat_specs = [PowerFlowSpec.from_network(net, row, power_factor=power_factor) for row in p_hat]
    res_true = solve_series(true_specs, options, warm_start=warm_start, retry=retry)
    res_hat = solve_series(hat_specs, options, warm_start=warm_start, retry=retry)

    keep, dropped = [], []
    for k in range(n):
        if res_true[k] is None or res_hat[k] is None:
            dropped.append(int(ts[k]))
        else:
            keep.append(k)
    if dropped:
        log.warning("excluded %d non-converged timestamp(s): %s", len(dropped), dropped)
    if len(keep) < 2:
        raise PowerFlowError(f"only {len(keep)} timestamp(s) converged; need at least 2")
    pt = np.empty((len(keep), net.n_line))
    ph = np.empty_like(pt)
    ov = np.empty(pt.shape, dtype=bool)
    for r, k in enumerate(keep):
        cmp = reconstruct_flows(net, res_true[k], res_hat[k])
        pt[r], ph[r], ov[r] = cmp.p_true, cmp.p_hat, cmp.overloaded
    return FlowReport(
        line_names=tuple(net.line_names),
        timestamps=ts[keep],
        p_true=pt,
        p_hat=ph,
        overloaded=ov,
        metrics=flow_metrics(pt, ph),
        excluded_timestamps=tuple(dropped),
    )
