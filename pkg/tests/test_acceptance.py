"""Acceptance criteria, one test each.

Every test records a single ``criterion N: PASS|FAIL ...`` line; the lines
are printed together at the end of the pytest run, or directly when this
file is executed as a script.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from oupm.cli import main as cli_main
from oupm.core import ModelParams, fit_preprocess, transform_forward, transform_inverse
from oupm.metrics import coverage, cumulative_inside, ks_statistic, pit_values
from oupm.ou_process import euler_maruyama_oracle, transition
from oupm.sampler import sample_paths
from oupm.synthetic import SynthSpec, generate, surrogate, surrogate_truth, verify_recovery
from oupm.trainer import TrainConfig, TransitionSet, build_transitions, fit, nll_gradient, nll_loss, \
    split_validation

from conftest import random_params

SEEDS = range(10)
RESULTS: dict[int, str] = {}
README = Path(__file__).resolve().parents[1] / "README.md"


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)


@pytest.fixture(scope="module")
def recovery_runs():
    started = time.perf_counter()
    runs = [verify_recovery(SynthSpec(seed=s), TrainConfig(seed=s)) for s in SEEDS]
    return runs, time.perf_counter() - started


def test_criterion_1_parameter_recovery(recovery_runs):
    runs, elapsed = recovery_runs
    limits = {"a": 2.0, "b": 15.0, "sigma": 10.0, "lambda": 25.0}
    med = {k: float(np.median([r.pct_errors()[k] for r in runs])) for k in limits}
    ok = all(med[k] <= limits[k] for k in limits) and elapsed <= 60.0
    detail = ", ".join(f"{k} {med[k]:.2f}% (<= {limits[k]:g}%)" for k in limits)
    record(1, ok, f"median abs % error over 10 seeds: {detail}; fits took {elapsed:.1f} s (<= 60 s)")
    assert ok


def test_criterion_2_synthetic_calibration(recovery_runs):
    runs, _ = recovery_runs
    ks, cov = [], []
    for seed, run in zip(SEEDS, runs):
        inputs, obs = generate(run.spec)
        ens = sample_paths(run.report.best_params, run.stats, inputs, M=10_000, seed=seed)
        ks.append(ks_statistic(pit_values(ens, obs)))
        cov.append(coverage(ens, obs, 0.95))
    ks, cov = np.array(ks), np.array(cov)
    n_ks = int(np.sum(ks <= 0.15))
    pooled = float(cov.mean())
    per_seed = int(np.sum((cov >= 0.91) & (cov <= 0.99)))
    ok = n_ks >= 8 and 0.91 <= pooled <= 0.99
    record(2, ok, f"KS <= 0.15 in {n_ks}/10 seeds (KS {ks.min():.3f}..{ks.max():.3f}, median "
                  f"{np.median(ks):.3f}); 95% coverage pooled over seeds {pooled:.3f} in [0.91, 0.99] "
                  f"(per seed {cov.min():.3f}..{cov.max():.3f}, {per_seed}/10 inside the window)")
    assert ok


def test_criterion_3_transition_matches_euler_maruyama():
    rng = np.random.default_rng(3)
    started = time.perf_counter()
    worst_mean_se, worst_var_rel, ok = 0.0, 0.0, True
    for draw in range(20):
        d = int(rng.integers(1, 4))
        p = random_params(rng, d)
        dt = float(rng.uniform(0.01, 0.5))
        x0 = float(rng.normal(0, 2))
        u = rng.normal(size=(2, d))
        means, variances = euler_maruyama_oracle(p, x0, u, dt, dt / 1000, 10_000, seed=draw)
        ts = transition(p, x0, u[0], dt)
        se = math.sqrt(variances[1] / 10_000)
        z = abs(means[1] - ts.m) / se
        rel = abs(variances[1] - ts.V) / ts.V
        worst_mean_se, worst_var_rel = max(worst_mean_se, z), max(worst_var_rel, rel)
        ok &= z <= 3.0 and rel <= 0.05
    elapsed = time.perf_counter() - started
    ok &= elapsed <= 120.0
    record(3, ok, f"20 draws, fine_dt = dt/1000, 1e4 reps: worst mean gap {worst_mean_se:.2f} SE (<= 3), "
                  f"worst variance gap {100 * worst_var_rel:.2f}% (<= 5%); {elapsed:.1f} s (<= 120 s)")
    assert ok


def _fd_gradient(params, batch, rel=1e-6):
    theta = params.to_vector()
    grad = np.empty_like(theta)
    for j in range(theta.size):
        h = rel * max(abs(theta[j]), 1.0)
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (nll_loss(ModelParams.from_vector(up), batch)
                   - nll_loss(ModelParams.from_vector(dn), batch)) / (2 * h)
    return grad


def test_criterion_4_gradient_finite_differences():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(5, 80))
        p = random_params(rng, d)
        batch = TransitionSet(rng.normal(size=(n, d)), rng.normal(0, 1.5, n), rng.normal(0, 1.5, n),
                              rng.uniform(0.005, 0.5, n))
        g, g_fd = nll_gradient(p, batch), _fd_gradient(p, batch)
        rel = np.abs(g - g_fd) / np.maximum(np.abs(g), np.abs(g_fd))
        worst = max(worst, float(rel.max()))
    ok = worst <= 1e-5
    record(4, ok, f"10 random (params, batch) pairs: worst coordinate relative error {worst:.2e} (<= 1e-5)")
    assert ok


def test_criterion_5_chapman_kolmogorov():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        p = random_params(rng, d)
        u = rng.normal(size=d)
        dt = float(rng.uniform(1e-3, 2.0))
        x = float(rng.normal(0, 3))
        full = transition(p, x, u, dt)
        half = transition(p, x, u, dt / 2)
        second = transition(p, half.m, u, dt / 2)
        w = math.exp(-p.lam * dt / 2)
        m2, v2 = second.m, w * w * half.V + second.V
        worst = max(worst, abs(m2 - full.m), abs(v2 - full.V))
    ok = worst <= 1e-10
    record(5, ok, f"100 random configurations: worst |two half steps - one full step| {worst:.2e} (<= 1e-10)")
    assert ok


def test_criterion_6_transform_round_trip():
    z = np.logspace(-6, 3, 4001)
    err_zy = np.max(np.abs(transform_inverse(transform_forward(z)) - z))
    y = transform_forward(z)
    err_yz = np.max(np.abs(transform_forward(transform_inverse(y)) - y))
    worst = float(max(err_zy, err_yz))
    ok = worst <= 1e-12
    record(6, ok, f"4001 log-spaced points on [1e-6, 1e3]: worst round-trip error {worst:.2e} (<= 1e-12)")
    assert ok


def test_criterion_7_reproducibility(tmp_path):
    def run(out: Path, workers: int):
        assert cli_main(["synth", "--out", str(out), "--seed", "7", "--quiet"]) == 0
        cfg = str(out / "config.yaml")
        common = ["--config", cfg, "--out", str(out), "--quiet"]
        assert cli_main(["fit", *common]) == 0
        assert cli_main(["predict", *common, "--workers", str(workers)]) == 0
        assert cli_main(["evaluate", *common, "--workers", str(workers)]) == 0

    for name, workers in (("serial_a", 1), ("serial_b", 1), ("parallel", 4)):
        run(tmp_path / name, workers)
    files = ["synth_data.csv", "model.oupm", "predict_summary.csv", "predict_cumulative.csv",
             "eval_summary.csv", "eval_cumulative.csv", "pit.csv", "eval_report.json"]
    same = {f: all((tmp_path / o / f).read_bytes() == (tmp_path / "serial_a" / f).read_bytes()
                   for o in ("serial_b", "parallel")) for f in files}
    ok = all(same.values())
    bad = [f for f, s in same.items() if not s]
    record(7, ok, f"{len(files)} output files bit-identical across two serial runs and a 4-thread run"
                  + (f"; differing: {bad}" if bad else ""))
    assert ok


def test_criterion_8_sixteen_channel_surrogate():
    truth = surrogate_truth(16, seed=0)
    inputs, obs = surrogate(truth, 100_001, seed=1000)
    stats = fit_preprocess(obs.y_raw, inputs.u, target_scale=truth.target_scale)
    train, val = split_validation(build_transitions(inputs, obs, stats), 0.15)
    started = time.perf_counter()
    report = fit(train, val, TrainConfig(epochs=1000, seed=0))
    elapsed = time.perf_counter() - started
    h_in, h_obs = surrogate(truth, 5001, seed=2000)
    ens = sample_paths(report.best_params, stats, h_in, M=10_000, seed=0)
    ks = ks_statistic(pit_values(ens, h_obs))
    inside = cumulative_inside(ens, h_obs, 3)
    ok = elapsed <= 300.0 and ks <= 0.1 and bool(inside.all())
    record(8, ok, f"1e5 transitions, 1000 epochs in {elapsed:.1f} s (<= 300 s); held-out KS {ks:.4f} "
                  f"(<= 0.1); cumulative sum inside +/-3 sd at {inside.sum()}/{inside.size} steps")
    assert ok


def test_criterion_9_engine_tables_documented():
    text = README.read_text() if README.exists() else ""
    ok = "not reproducible" in text.lower()
    record(9, ok, "engine test-cycle tables need proprietary data; README states they are not reproducible "
                  "and criteria 1-8 stand in for them")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
