import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_bus
from gridinfer.errors import GridError
from gridinfer.grid import (
    Bus,
    BusKind,
    GridNetwork,
    Line,
    PowerFlowState,
    build_admittance,
    injections,
    line_flow,
    line_flows,
    linearized_flow_deviation,
    load_network,
    load_reference_solution,
    network_from_dict,
    network_to_dict,
    random_network,
    save_network,
    terminal_apparent_power,
)


def complex_power(net, state):
    """Independent oracle: S = V * conj(Y V) with Y = G + jB."""
    V = state.v * np.exp(1j * state.theta)
    S = V * np.conj((net.G + 1j * net.B) @ V)
    return S.real, S.imag


def random_state(n, rng, spread=0.3):
    return PowerFlowState(rng.uniform(0.9, 1.1, n), rng.uniform(-spread, spread, n))


# ---------------------------------------------------------------- admittance


def test_single_line_laplacian():
    G, B = build_admittance([Bus(1, BusKind.SLACK), Bus(2, BusKind.LOAD)], [Line(1, 2, g=0.0, b=-10.0)])
    # inductive line, b = -10: off-diagonals are -b
    np.testing.assert_array_equal(B, [[-10.0, 10.0], [10.0, -10.0]])
    np.testing.assert_array_equal(G, np.zeros((2, 2)))


def test_triangle():
    buses = [Bus(0, BusKind.SLACK), Bus(1, BusKind.LOAD), Bus(2, BusKind.LOAD)]
    lines = [Line(0, 1, 0.5, 5.0), Line(1, 2, 0.5, 5.0), Line(0, 2, 0.5, 5.0)]
    G, B = build_admittance(buses, lines)
    np.testing.assert_array_equal(np.diag(B), [10.0] * 3)
    np.testing.assert_array_equal(B[~np.eye(3, dtype=bool)], [-5.0] * 6)
    np.testing.assert_array_equal(np.diag(G), [1.0] * 3)
    np.testing.assert_array_equal(G[~np.eye(3, dtype=bool)], [-0.5] * 6)


def test_random_tree_matches_edge_by_edge_sum(rng):
    net = random_network(10, rng, extra_lines=0)
    assert net.n_line == 9
    G = np.zeros((10, 10))
    B = np.zeros((10, 10))
    for ln in net.lines:
        i, j = net.bus_index(ln.from_bus), net.bus_index(ln.to_bus)
        for a, b_ in ((i, i), (j, j)):
            G[a, b_] += ln.g
            B[a, b_] += ln.b
        for a, b_ in ((i, j), (j, i)):
            G[a, b_] -= ln.g
            B[a, b_] -= ln.b
    np.testing.assert_array_equal(net.G, G)
    np.testing.assert_array_equal(net.B, B)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 2**32 - 1))
def test_symmetry_and_degree(n, seed):
    net = random_network(n, np.random.default_rng(seed))
    np.testing.assert_array_equal(net.G, net.G.T)
    np.testing.assert_array_equal(net.B, net.B.T)
    # Laplacian rows sum to zero without shunts
    np.testing.assert_allclose(net.B.sum(axis=1), 0.0, atol=1e-12)
    deg = np.zeros(n, dtype=int)
    for ln in net.lines:
        deg[net.bus_index(ln.from_bus)] += 1
        deg[net.bus_index(ln.to_bus)] += 1
    np.testing.assert_array_equal(net.connectivity, deg)


def test_duplicate_line_rejected():
    with pytest.raises(GridError, match="duplicate"):
        two_bus_lines = (Line(1, 2, 0, -5), Line(2, 1, 0, -5))
        GridNetwork((Bus(1, BusKind.SLACK), Bus(2, BusKind.LOAD)), two_bus_lines)


def test_disconnected_rejected_with_components():
    buses = tuple(Bus(k, BusKind.SLACK if k == 1 else BusKind.LOAD) for k in (1, 2, 3, 4))
    with pytest.raises(GridError) as exc:
        GridNetwork(buses, (Line(1, 2, 0, -5), Line(3, 4, 0, -5)))
    assert "[1, 2]" in str(exc.value) and "[3, 4]" in str(exc.value)


def test_unknown_bus_in_line():
    with pytest.raises(GridError):
        GridNetwork((Bus(1, BusKind.SLACK), Bus(2, BusKind.LOAD)), (Line(1, 7, 0, -5),))


def test_slack_promotion_picks_largest_generator():
    buses = (Bus(1, BusKind.GENERATOR, 0.5), Bus(2, BusKind.GENERATOR, 2.0), Bus(3, BusKind.LOAD, -1.0))
    net = GridNetwork(buses, (Line(1, 2, 0, -5), Line(2, 3, 0, -5)))
    assert net.slack == 1
    assert net.buses[1].kind is BusKind.SLACK


def test_two_slacks_rejected():
    with pytest.raises(GridError):
        GridNetwork((Bus(1, BusKind.SLACK), Bus(2, BusKind.SLACK)), (Line(1, 2, 0, -5),))


def test_bus_validation():
    with pytest.raises(GridError):
        Bus(1, BusKind.LOAD, p_set=0.5)
    with pytest.raises(GridError):
        Bus(1, BusKind.LOAD, v_set=0.0)
    with pytest.raises(GridError):
        Line(1, 1, 0, -5)


def test_state_validation():
    with pytest.raises(ValueError):
        PowerFlowState([1.0, -1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        PowerFlowState([1.0], [0.0, 0.0])
    s = PowerFlowState([1.0, 1.0], [0.0, 0.1])
    with pytest.raises(ValueError):
        s.v[0] = 2.0


# ---------------------------------------------------------------- injections


def test_flat_state_lossless_has_no_injections(rng):
    net = random_network(8, rng, lossless=True)
    p, q = injections(net, PowerFlowState.flat(8))
    np.testing.assert_array_equal(p, np.zeros(8))
    np.testing.assert_allclose(q, 0.0, atol=1e-12)


def test_two_bus_injection_hand_value():
    net = two_bus()
    p, q = injections(net, PowerFlowState([1.0, 1.0], [0.0, -0.1]))
    assert p[0] == pytest.approx(10 * np.sin(0.1), abs=1e-14)
    assert p[0] == pytest.approx(0.99833, abs=1e-5)
    assert p[1] == pytest.approx(-p[0], abs=1e-14)


def test_injections_match_complex_power(rng):
    for _ in range(20):
        net = random_network(12, rng)
        s = random_state(12, rng)
        p, q = injections(net, s)
        p_ref, q_ref = complex_power(net, s)
        np.testing.assert_allclose(p, p_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(q, q_ref, rtol=0, atol=1e-12)


def test_total_injection_equals_ohmic_loss(rng):
    net = random_network(5, rng)
    s = random_state(5, rng)
    V = s.v * np.exp(1j * s.theta)
    loss = 0.0
    for ln in net.lines:
        i, j = net.bus_index(ln.from_bus), net.bus_index(ln.to_bus)
        loss += ln.g * abs(V[i] - V[j]) ** 2
    p, _ = injections(net, s)
    assert p.sum() == pytest.approx(loss, rel=1e-12)
    assert loss > 0


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 15), seed=st.integers(0, 2**32 - 1))
def test_lossless_balance(n, seed):
    rng = np.random.default_rng(seed)
    net = random_network(n, rng, lossless=True)
    p, _ = injections(net, random_state(n, rng, spread=1.0))
    assert abs(p.sum()) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 15), seed=st.integers(0, 2**32 - 1), shift=st.floats(-3.0, 3.0))
def test_gauge_invariance(n, seed, shift):
    rng = np.random.default_rng(seed)
    net = random_network(n, rng)
    s = random_state(n, rng)
    shifted = PowerFlowState(s.v, s.theta + shift)
    for a, b in zip(injections(net, s) + line_flows(net, s), injections(net, shifted) + line_flows(net, shifted)):
        scale = max(1.0, np.abs(a).max())
        assert np.abs(a - b).max() <= 1e-12 * scale


def test_injection_dimension_mismatch():
    with pytest.raises(ValueError):
        injections(two_bus(), PowerFlowState.flat(3))


# ---------------------------------------------------------------- line flows


def test_flow_zero_without_angle_difference():
    net = two_bus()
    p, q = line_flow(net, PowerFlowState([1.0, 1.0], [0.2, 0.2]), (1, 2))
    assert p == 0.0


def test_two_bus_flow_equals_injection():
    net = two_bus()
    s = PowerFlowState([1.0, 1.0], [0.0, -0.1])
    p12, _ = line_flow(net, s, net.lines[0])
    assert p12 == pytest.approx(0.99833, abs=1e-5)
    assert p12 == pytest.approx(injections(net, s)[0][0], abs=1e-15)
    p21, _ = line_flow(net, s, (2, 1))
    assert p21 == pytest.approx(-p12, abs=1e-15)


def test_flows_sum_to_injection_minus_self_term(rng):
    net = random_network(10, rng)
    s = random_state(10, rng)
    p, q = injections(net, s)
    pf = np.zeros(10)
    qf = np.zeros(10)
    for ln in net.lines:
        i, j = net.bus_index(ln.from_bus), net.bus_index(ln.to_bus)
        a = line_flow(net, s, (ln.from_bus, ln.to_bus))
        b = line_flow(net, s, (ln.to_bus, ln.from_bus))
        pf[i] += a[0]
        qf[i] += a[1]
        pf[j] += b[0]
        qf[j] += b[1]
    v2 = s.v**2
    np.testing.assert_allclose(pf + np.diag(net.G) * v2, p, atol=1e-12)
    np.testing.assert_allclose(qf - np.diag(net.B) * v2, q, atol=1e-12)


def test_flows_sum_to_injection_lossless(rng):
    net = random_network(10, rng, lossless=True)
    s = random_state(10, rng)
    pl, _ = line_flows(net, s)
    per_bus = np.bincount(net.from_idx, pl, 10) - np.bincount(net.to_idx, pl, 10)
    np.testing.assert_allclose(per_bus, injections(net, s)[0], atol=1e-12)


def test_vectorized_flows_match_single(rng):
    net = random_network(7, rng)
    s = random_state(7, rng)
    p, q = line_flows(net, s)
    for k, ln in enumerate(net.lines):
        assert (p[k], q[k]) == line_flow(net, s, k)


def test_unknown_line():
    net = two_bus()
    with pytest.raises(GridError):
        line_flow(net, PowerFlowState.flat(2), (1, 3))
    with pytest.raises(GridError):
        line_flow(net, PowerFlowState.flat(2), 5)


def test_terminal_apparent_power_oracle(rng):
    net = random_network(6, rng)
    s = random_state(6, rng)
    V = s.v * np.exp(1j * s.theta)
    got = terminal_apparent_power(net, s)
    for k, ln in enumerate(net.lines):
        i, j = net.bus_index(ln.from_bus), net.bus_index(ln.to_bus)
        y = ln.g + 1j * ln.b
        s_ij = V[i] * np.conj(y * (V[i] - V[j]))
        s_ji = V[j] * np.conj(y * (V[j] - V[i]))
        assert got[k] == pytest.approx(max(abs(s_ij), abs(s_ji)), rel=1e-12)


# ---------------------------------------------------------------- linearization


def test_zero_and_uniform_deviation(rng):
    net = random_network(8, rng)
    s = random_state(8, rng)
    assert np.all(linearized_flow_deviation(net, s, np.zeros(8)).line == 0)
    d = linearized_flow_deviation(net, s, np.full(8, 0.37))
    assert np.all(d.line == 0)


def test_linearization_matches_finite_difference(rng):
    net = random_network(10, rng, lossless=True)
    s = random_state(10, rng)
    dth = rng.uniform(-1, 1, 10) * 1e-4
    lin = linearized_flow_deviation(net, s, dth).line
    exact = line_flows(net, PowerFlowState(s.v, s.theta + dth))[0] - line_flows(net, s)[0]
    assert np.abs(lin - exact).max() < 1e-6
    assert np.abs(exact).max() > 1e-5


def test_conductance_term_gives_exact_first_order(rng):
    net = random_network(10, rng)
    s = random_state(10, rng)
    errs = []
    for eps in (1e-3, 1e-4):
        dth = rng.uniform(-1, 1, 10) * eps
        lin = linearized_flow_deviation(net, s, dth, include_conductance=True).line
        exact = line_flows(net, PowerFlowState(s.v, s.theta + dth))[0] - line_flows(net, s)[0]
        errs.append(np.abs(lin - exact).max() / eps**2)
    # error / eps^2 bounded: second-order remainder
    assert errs[1] < 5 * errs[0] + 1e-6


def test_fluctuation_split(rng):
    net = random_network(12, rng)
    s = random_state(12, rng)
    d = linearized_flow_deviation(net, s, rng.normal(size=12) * 1e-3)
    sums = np.bincount(d.edge_bus, weights=d.edge_fluct, minlength=12)
    assert np.abs(sums).max() <= 1e-12
    np.testing.assert_allclose(d.bus, d.mean * net.connectivity, atol=1e-15)
    # half-edges reproduce the per-line value with flipped sign on the reverse end
    np.testing.assert_array_equal(d.edge_dp[: net.n_line], d.line)
    np.testing.assert_allclose(d.edge_dp[net.n_line :], -d.line, atol=1e-15)


def test_deviation_shape_checked(rng):
    net = random_network(4, rng)
    with pytest.raises(ValueError):
        linearized_flow_deviation(net, PowerFlowState.flat(4), np.zeros(3))


# ---------------------------------------------------------------- files


def test_network_round_trip(tmp_path, rng):
    net = random_network(6, rng)
    path = tmp_path / "net.json"
    save_network(net, path)
    back = load_network(path)
    assert back == net
    np.testing.assert_array_equal(back.B, net.B)
    assert network_to_dict(back) == json.loads(path.read_text())


def test_builtin_networks():
    net = load_network("builtin:case9")
    assert net.n_bus == 9 and net.n_line == 9
    assert net.buses[net.slack].id == 1
    ref = load_reference_solution("builtin:case9")
    assert ref.theta[net.slack] == 0.0
    synth = load_network("builtin:synth9")
    assert sorted(b.label for b in synth.buses if b.label) == ["G:1", "G:2"] + [f"L:{k}" for k in range(1, 7)]


@pytest.mark.parametrize(
    "doc",
    [
        {"buses": [{"id": 1}], "lines": []},
        {"buses": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "nonsense"}], "lines": []},
        {"buses": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "load"}], "lines": [{"from": 1, "to": 2}]},
    ],
)
def test_malformed_documents(doc):
    with pytest.raises(GridError):
        network_from_dict(doc)


def test_unreadable_network_file(tmp_path):
    with pytest.raises(GridError):
        load_network(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(GridError):
        load_network(bad)
    with pytest.raises(GridError):
        load_network("builtin:nope")
