"""Acceptance suite: one test (or group of tests) per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import two_bus
from gridinfer.dataset import GenMode, LeaveOutSpec, SynthConfig, TargetKind, subsample_count
from gridinfer.grid import PowerFlowState, line_flows, linearized_flow_deviation, load_network, load_reference_solution, random_network
from gridinfer.harness import (
    ExperimentConfig,
    PowerFlowConfig,
    desk_config,
    run_analyze_weights,
    run_flow_reconstruction,
    run_generator_experiment,
    run_m_sweep,
    run_synthesize,
    run_top_m_experiment,
    run_train_size_sweep,
)
from gridinfer.powerflow import BusRole, PowerFlowSpec, flow_metrics, solve
from gridinfer.regressor import analyze_weights, ridge_weights

criterion = pytest.mark.criterion


def complex_power(net, state):
    V = state.v * np.exp(1j * state.theta)
    S = V * np.conj((net.G + 1j * net.B) @ V)
    return S.real, S.imag


# ---------------------------------------------------------------- 1


@criterion(1, "ridge SVD path matches normal equations")
def test_ridge_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        f = int(rng.integers(1, 51))
        n = int(rng.integers(2 * (f + 1), 201))
        t = int(rng.integers(1, 6))
        X = np.hstack([rng.normal(size=(n, f)), np.ones((n, 1))])
        Y = rng.normal(size=(n, t))
        for alpha in (1e-5, 1.0, 1e4):
            W = ridge_weights(X, Y, alpha)
            ref = np.linalg.solve(X.T @ X + alpha * np.eye(f + 1), X.T @ Y)
            worst = max(worst, np.linalg.norm(W - ref) / np.linalg.norm(ref))
    elapsed = time.perf_counter() - start
    print(f"criterion 1: worst relative error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-8
    assert elapsed < 10.0


# ---------------------------------------------------------------- 2


@criterion(2, "power flow: closed form, 9-bus reference, certificates")
def test_two_bus_closed_form():
    spec = PowerFlowSpec(two_bus(), (BusRole.SLACK, BusRole.PV), [0.0, -0.5], [0.0, 0.0], [1.0, 1.0])
    res = solve(spec)
    assert abs(res.state.theta[1] - (-math.asin(0.05))) <= 1e-10


@criterion(2, "power flow: closed form, 9-bus reference, certificates")
def test_case9_reference_solution():
    net = load_network("builtin:case9")
    ref = load_reference_solution("builtin:case9")
    res = solve(PowerFlowSpec.from_network(net))
    assert np.abs(res.state.v - ref.v).max() <= 1e-4
    assert np.abs(res.state.theta - ref.theta).max() <= 1e-4


@criterion(2, "power flow: closed form, 9-bus reference, certificates")
def test_certificates_on_random_20_bus_cases():
    rng = np.random.default_rng(7)
    for _ in range(50):
        net = random_network(20, rng)
        # set-points read off a random operating point, so the case is feasible
        v = rng.uniform(0.95, 1.05, 20)
        th = rng.uniform(-0.15, 0.15, 20)
        th -= th[net.slack]
        p, q = complex_power(net, PowerFlowState(v, th))
        roles = [BusRole.PQ] * 20
        roles[net.slack] = BusRole.SLACK
        spec = PowerFlowSpec(net, tuple(roles), p, q, v)
        res = solve(spec)
        pc, qc = complex_power(net, res.state)
        pvpq, pq = spec.index_sets()
        assert np.abs(pc[pvpq] - p[pvpq]).max() <= 1e-8
        assert np.abs(qc[pq] - q[pq]).max() <= 1e-8


# ---------------------------------------------------------------- 3


@criterion(3, "linearized flow deviations are second-order accurate")
def test_linearization_error_ratio():
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(20):
        n = int(rng.integers(5, 30))
        net = random_network(n, rng, lossless=True)
        s = PowerFlowState(rng.uniform(0.9, 1.1, n), rng.uniform(-0.3, 0.3, n))
        direction = rng.uniform(-1, 1, n)
        base = line_flows(net, s)[0]
        errs = []
        for eps in (1e-3, 1e-4):
            dth = eps * direction
            lin = linearized_flow_deviation(net, s, dth).line
            exact = line_flows(net, PowerFlowState(s.v, s.theta + dth))[0] - base
            errs.append(np.abs(lin - exact).max())
        ratios.append(errs[0] / errs[1])
    print(f"criterion 3: error ratios {min(ratios):.1f} .. {max(ratios):.1f}")
    assert all(80.0 <= r <= 125.0 for r in ratios)


# ---------------------------------------------------------------- 4


def double_loop(p, ph):
    n, n_lines = p.shape
    ratios = []
    for l in range(n_lines):
        mean = sum(p[t, l] for t in range(n)) / n
        s2 = sum((p[t, l] - mean) ** 2 for t in range(n)) / n
        d2 = sum((p[t, l] - ph[t, l]) ** 2 for t in range(n)) / n
        ratios.append(d2 / s2)
    return sum(math.sqrt(r) for r in ratios) / n_lines, math.sqrt(sum(ratios) / n_lines)


@criterion(4, "flow metrics match brute force; M2 >= M1")
def test_metrics_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n, lines = int(rng.integers(2, 60)), int(rng.integers(1, 12))
        p = rng.normal(size=(n, lines)) * rng.uniform(0.1, 5, lines) + rng.normal(size=lines)
        ph = p + rng.normal(size=(n, lines)) * rng.uniform(0, 1, lines)
        m = flow_metrics(p, ph)
        m1, m2 = double_loop(p, ph)
        assert abs(m.m1 - m1) <= 1e-12 and abs(m.m2 - m2) <= 1e-12


@criterion(4, "flow metrics match brute force; M2 >= M1")
def test_power_mean_ordering():
    rng = np.random.default_rng(44)
    for _ in range(1000):
        n, lines = int(rng.integers(2, 40)), int(rng.integers(1, 10))
        p = rng.normal(size=(n, lines)) * rng.uniform(0.1, 10, lines)
        ph = p + rng.normal(size=(n, lines)) * rng.uniform(0, 2, lines)
        m = flow_metrics(p, ph)
        assert m.m2 >= m.m1 * (1 - 1e-12)


# ---------------------------------------------------------------- 5


@criterion(5, "desk-scale leave-out-top-5 inference")
def test_desk_scale_top5(tmp_path):
    cfg = desk_config(leave_out=LeaveOutSpec(m_top=5), alpha=1e-5, out_dir=str(tmp_path / "fit"))
    assert (cfg.synthesize.n_loads, cfg.synthesize.n_samples, cfg.synthesize.rho) == (163, 17_472, 0.95)
    start = time.perf_counter()
    res = run_top_m_experiment(cfg)
    elapsed = time.perf_counter() - start
    rep = res.data["cell"].report
    print(f"criterion 5: test NRMSE {np.round(rep.nrmse_test, 4)}, train {np.round(rep.nrmse_train, 4)}, {elapsed:.1f} s")
    assert np.all(rep.nrmse_test < 0.1)
    assert np.all(rep.nrmse_test / rep.nrmse_train < 2.0)
    assert elapsed < 60.0


# ---------------------------------------------------------------- 6


@criterion(6, "test NRMSE grows with the number of hidden buses")
def test_m_trend(tmp_path):
    cfg = desk_config(m_values=(1, 2, 5, 10, 20, 50), out_dir=str(tmp_path / "sweep"))
    res = run_m_sweep(cfg)
    means = [c.report.nrmse_test.mean() for c in res.data["cells"]]
    rho = spearmanr([1, 2, 5, 10, 20, 50], means).statistic
    print(f"criterion 6: mean test NRMSE {np.round(means, 4)}, Spearman {rho:.3f}")
    assert rho >= 0.9


# ---------------------------------------------------------------- 7


@criterion(7, "training-size trend, nesting and row counts")
def test_train_size_trend(tmp_path):
    cfg = desk_config(m_values=(1,), train_fractions=(0.01, 0.1, 1.0), out_dir=str(tmp_path / "size"))
    res = run_train_size_sweep(cfg)
    small, mid, full = res.data["cells"]
    print(
        "criterion 7: test NRMSE "
        f"{small.report.nrmse_test[0]:.4f} (1%), {mid.report.nrmse_test[0]:.4f} (10%), {full.report.nrmse_test[0]:.4f} (100%)"
    )
    assert full.report.nrmse_test[0] <= small.report.nrmse_test[0]
    rows = [set(c.problem.split.train) for c in (small, mid, full)]
    assert rows[0] <= rows[1] <= rows[2]
    n_full = len(rows[2])
    assert len(rows[0]) == subsample_count(0.01, n_full) == math.ceil(0.01 * n_full)
    assert subsample_count(0.01, 139_776) == 1398


# ---------------------------------------------------------------- 8


@criterion(8, "weight-histogram family recovery")
def test_family_recovery():
    hits = 0
    widths_ok = 0
    for trial in range(100):
        rng = np.random.default_rng(800 + trial)
        width = float(rng.uniform(0.05, 2.0))
        if trial % 2 == 0:
            family = "gaussian"
            # exp(-x^2 / sigma^2) is a normal density with std sigma / sqrt(2)
            w = rng.normal(0.0, width / math.sqrt(2), 100_000)
        else:
            family = "lorentzian"
            w = width * rng.standard_cauchy(100_000)
        fit = analyze_weights(w)
        hits += fit.selected.family == family
        widths_ok += abs(getattr(fit, family).width / width - 1.0) <= 0.05
    print(f"criterion 8: family recovered {hits}/100, width within 5% {widths_ok}/100")
    assert hits >= 95
    assert widths_ok >= 95


# ---------------------------------------------------------------- 9


@criterion(9, "loads predicted well, step-dispatch generators not")
def test_generator_asymmetry(tmp_path):
    synth = SynthConfig(gen_mode=GenMode.STEP)
    gens = run_generator_experiment(
        desk_config(synthesize=synth, leave_out=LeaveOutSpec(TargetKind.GENERATORS, m_top=5), out_dir=str(tmp_path / "g"))
    )
    loads = run_top_m_experiment(desk_config(synthesize=synth, leave_out=LeaveOutSpec(m_top=5), out_dir=str(tmp_path / "l")))
    g = gens.data["cell"].report.nrmse_test
    ld = loads.data["cell"].report.nrmse_test
    print(f"criterion 9: generator NRMSE {np.round(g, 3)}, load NRMSE {np.round(ld, 4)}")
    assert np.all(g >= 0.5)
    assert np.all(ld < 0.1)


# ---------------------------------------------------------------- 10

SYNTH9 = {
    "n_loads": 6,
    "n_gens": 2,
    "gen_mode": "load_following",
    "n_samples": 2000,
    "rho": 0.99,
    "noise_scale": 0.003,
    "load_scales": [0.5, 1.25, 0.9, 0.4, 1.0, 0.6],
    "gen_shares": [0.4, 0.25],
}


def synth9_config(out_dir, **pf):
    return ExperimentConfig(
        synthesize=SynthConfig.from_dict(SYNTH9),
        leave_out=LeaveOutSpec(m_top=1),
        network="builtin:synth9",
        powerflow=PowerFlowConfig(**pf),
        out_dir=str(out_dir),
    )


@criterion(10, "end-to-end flow reconstruction")
def test_oracle_flows_are_exact(tmp_path):
    res = run_flow_reconstruction(synth9_config(tmp_path / "oracle", oracle_injections=True))
    rep = res.data["flows"]
    assert rep.m1 == 0.0 and rep.m2 == 0.0
    assert rep.metrics.excluded == ()


@criterion(10, "end-to-end flow reconstruction")
def test_inferred_flows(tmp_path):
    res = run_flow_reconstruction(synth9_config(tmp_path / "inferred"))
    summary = json.loads((res.out_dir / "flow_summary.json").read_text())
    load_nrmse = max(summary["load_nrmse_test"].values())
    print(
        f"criterion 10: load NRMSE {load_nrmse:.4f}, M1 {summary['m1']:.4f}, M2 {summary['m2']:.4f}, "
        f"within 10% {summary['within_10pct']:.4f}"
    )
    assert math.isfinite(summary["m1"]) and math.isfinite(summary["m2"])
    assert summary["excluded_lines"] == []
    assert load_nrmse < 0.05
    assert summary["within_10pct"] >= 0.9


# ---------------------------------------------------------------- 11


def report_bytes(out):
    return {
        p.relative_to(out).as_posix(): p.read_bytes()
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }


SMALL = SynthConfig(n_loads=30, n_gens=6, n_samples=1500)
DETERMINISM_RUNS = {
    "synthesize": (run_synthesize, {}),
    "fit": (run_top_m_experiment, {}),
    "sweep-m": (run_m_sweep, {"m_values": (1, 2, 5), "workers": 2}),
    "sweep-train-size": (run_train_size_sweep, {"m_values": (1, 2), "train_fractions": (0.01, 0.1, 1.0)}),
    "gens": (run_generator_experiment, {}),
    "analyze-weights": (run_analyze_weights, {}),
}


@criterion(11, "byte-identical reports across repeated runs")
@pytest.mark.parametrize("command", sorted(DETERMINISM_RUNS) + ["flows"])
def test_determinism(tmp_path, command):
    outs = []
    for name in ("a", "b"):
        if command == "flows":
            cfg = synth9_config(tmp_path / name, max_timestamps=50)
            outs.append(run_flow_reconstruction(cfg).out_dir)
            continue
        fn, extra = DETERMINISM_RUNS[command]
        cfg = ExperimentConfig(
            synthesize=SMALL,
            leave_out=LeaveOutSpec(m_top=3),
            seed=11,
            out_dir=str(tmp_path / name),
            **extra,
        )
        outs.append(fn(cfg).out_dir)
    a, b = (report_bytes(o) for o in outs)
    assert a and a == b


@criterion(11, "byte-identical reports across repeated runs")
def test_binary_cache_determinism(tmp_path):
    outs = [
        run_synthesize(ExperimentConfig(synthesize=SMALL, out_dir=str(tmp_path / n)), binary=True).out_dir
        for n in ("a", "b")
    ]
    assert report_bytes(outs[0]) == report_bytes(outs[1])
