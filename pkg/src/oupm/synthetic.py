"""Synthetic datasets simulated with the exact transition law.

Data are generated directly in transformed units (the OU state ``X``); the
raw target is ``transform_inverse(X) * target_scale`` so that the usual
preprocessing with the same fixed scale recovers ``X`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ENGINE_CHANNELS, InputSeries, ModelParams, ObservationSeries, PreprocessStats, \
    fit_preprocess, softplus_inverse, transform_inverse
from .ou_process import decay_terms, mu_at, sigma_at
from .trainer import FitReport, TrainConfig, build_transitions, fit

# (start time in seconds, control level); the last step lands after the 7 s training window
DEFAULT_SCHEDULE = (
    (0.0, 1.0),
    (1.0, 2.5),
    (2.5, 1.5),
    (4.0, 3.5),
    (5.5, 2.0),
    (7.2, 6.0),
    (8.2, 2.5),
)


def simulate_exact(mu, sigma, lam: float, dt: float, x0: float, rng: np.random.Generator) -> np.ndarray:
    """Step the OU state through its Gaussian transitions (interval ``k`` uses ``mu[k]``, ``sigma[k]``)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    decay, one_minus, gain = decay_terms(lam, dt)
    sd = sigma * np.sqrt(gain)
    eta = rng.standard_normal(mu.size - 1)
    x = np.empty(mu.size)
    x[0] = x0
    for k in range(mu.size - 1):
        x[k + 1] = x[k] * decay + mu[k] * one_minus + sd[k] * eta[k]
    return x


def piecewise_constant(schedule, times) -> np.ndarray:
    """Evaluate a ``[(start, level), ...]`` schedule on a time grid (levels may be vectors)."""
    starts = np.array([s for s, _ in schedule], dtype=float)
    levels = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for _, v in schedule])
    if starts.size == 0 or np.any(np.diff(starts) <= 0):
        raise ValueError("schedule start times must be strictly increasing")
    if times[0] < starts[0] - 1e-12:
        raise ValueError("schedule must start at or before the first sample")
    # small tolerance so a switch at exactly t=k*dt lands on sample k
    idx = np.searchsorted(starts, np.asarray(times) + 1e-9, side="right") - 1
    return levels[idx]


@dataclass(frozen=True)
class SynthSpec:
    true_lambda: float = 10.0
    true_a: float | tuple[float, ...] = 2.0
    true_b: float = 1.0
    true_sigma: float = 0.5
    dt: float = 0.01
    n: int = 1001
    schedule: tuple = DEFAULT_SCHEDULE
    seed: int = 0
    train_points: int = 701
    target_scale: float = 1.0
    x0: float | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.true_lambda > 0 and self.true_sigma >= 0 and self.target_scale > 0):
            raise ValueError("dt, lambda and target_scale must be positive; sigma non-negative")
        if not 2 <= self.train_points <= self.n:
            raise ValueError("train_points must lie in [2, n]")
        a = np.atleast_1d(np.asarray(self.true_a, dtype=float))
        for _, level in self.schedule:
            if np.atleast_1d(level).size != a.size:
                raise ValueError(f"schedule level {level!r} does not match {a.size} channel(s)")

    @property
    def d(self) -> int:
        return np.atleast_1d(self.true_a).size

    @property
    def channel_names(self) -> tuple[str, ...]:
        return ("u",) if self.d == 1 else tuple(f"u{i + 1}" for i in range(self.d))


def generate(spec: SynthSpec = SynthSpec()) -> tuple[InputSeries, ObservationSeries]:
    times = np.arange(spec.n) * spec.dt
    u = piecewise_constant(spec.schedule, times)
    a = np.atleast_1d(np.asarray(spec.true_a, dtype=float))
    mu = u @ a + spec.true_b
    x0 = mu[0] if spec.x0 is None else spec.x0
    x = simulate_exact(mu, spec.true_sigma, spec.true_lambda, spec.dt, x0,
                       np.random.default_rng(spec.seed))
    inputs = InputSeries(0.0, spec.dt, u, spec.channel_names)
    obs = ObservationSeries(0.0, spec.dt, transform_inverse(x) * spec.target_scale, x)
    return inputs, obs


def true_params(spec: SynthSpec, stats: PreprocessStats) -> ModelParams:
    """Ground truth re-expressed in standardized-input coordinates."""
    a = np.atleast_1d(np.asarray(spec.true_a, dtype=float))
    a_std = a * stats.input_stds
    b_std = spec.true_b + float(a @ stats.input_means)
    sigma_pre = softplus_inverse(spec.true_sigma) if spec.true_sigma > 0 else -750.0
    return ModelParams(a_std, b_std, np.zeros_like(a), sigma_pre, softplus_inverse(spec.true_lambda))


@dataclass
class RecoveryResult:
    rows: list[dict]
    report: FitReport
    stats: PreprocessStats
    spec: SynthSpec

    def pct_errors(self) -> dict[str, float]:
        return {r["parameter"]: r["pct_error"] for r in self.rows}

    def table(self) -> str:
        lines = [f"{'parameter':<10}{'true':>10}{'estimated':>12}{'% error':>10}"]
        for r in self.rows:
            lines.append(f"{r['parameter']:<10}{r['true']:>10.3f}{r['estimated']:>12.3f}"
                         f"{r['pct_error']:>10.2f}")
        return "\n".join(lines)


def verify_recovery(spec: SynthSpec = SynthSpec(), config: TrainConfig = TrainConfig()) -> RecoveryResult:
    """Fit on the training window and tabulate % errors against the true parameters.

    The whole training window doubles as the validation set, so the kept
    parameters are the in-sample likelihood optimum over epochs.
    """
    inputs, obs = generate(spec)
    tr_in, tr_obs = inputs.slice(0, spec.train_points), obs.slice(0, spec.train_points)
    stats = fit_preprocess(tr_obs.y_raw, tr_in.u, target_scale=spec.target_scale)
    ts = build_transitions(tr_in, tr_obs, stats)
    report = fit(ts, ts, config)

    p = report.best_params
    a_raw, b_raw, _, _ = p.in_raw_input_units(stats)
    sigma_hat = float(np.mean(sigma_at(p, tr_in.standardized(stats))))
    true_a = np.atleast_1d(np.asarray(spec.true_a, dtype=float))
    rows = [("lambda", spec.true_lambda, p.lam)]
    if true_a.size == 1:
        rows.append(("a", float(true_a[0]), float(a_raw[0])))
    else:
        rows += [(f"a{i + 1}", float(t), float(e)) for i, (t, e) in enumerate(zip(true_a, a_raw))]
    rows += [("b", spec.true_b, b_raw), ("sigma", spec.true_sigma, sigma_hat)]
    table = [{"parameter": name, "true": t, "estimated": e, "pct_error": 100.0 * abs(e - t) / abs(t)}
             for name, t, e in rows]
    return RecoveryResult(table, report, stats, spec)


# --- d-channel surrogate ----------------------------------------------------


@dataclass(frozen=True)
class SurrogateTruth:
    """Known linear mean / softplus volatility model against raw (unstandardized) inputs."""

    params: ModelParams
    offsets: np.ndarray = field(repr=False)
    scales: np.ndarray = field(repr=False)
    dt: float = 0.1
    target_scale: float = 1.0
    mean_segment: float = 25.0


def surrogate_truth(d: int = 16, seed: int = 0, lam: float = 2.0, dt: float = 0.1) -> SurrogateTruth:
    """Random ground truth with channels on wildly different raw scales."""
    rng = np.random.default_rng([seed, 0x5EED])
    offsets = rng.uniform(-5.0, 50.0, d)
    scales = 10.0 ** rng.uniform(-1.0, 2.0, d)
    a_z = rng.normal(0.0, 1.0 / np.sqrt(d), d)
    c_z = rng.normal(0.0, 0.6 / np.sqrt(d), d)
    b_z, d_z = 0.5, softplus_inverse(0.5)
    a, c = a_z / scales, c_z / scales
    params = ModelParams(a, b_z - float(a @ offsets), c, d_z - float(c @ offsets), softplus_inverse(lam))
    return SurrogateTruth(params, offsets, scales, dt)


def surrogate(truth: SurrogateTruth, n: int, seed: int) -> tuple[InputSeries, ObservationSeries]:
    """Random piecewise-constant inputs driving the known model; starts at ``mu_0``."""
    rng = np.random.default_rng([seed, 1])
    d = truth.params.d
    switches = rng.random(n) < 1.0 / truth.mean_segment
    switches[0] = True
    seg = np.cumsum(switches) - 1
    z = rng.standard_normal((int(seg[-1]) + 1, d))
    u = truth.offsets + truth.scales * z[seg]
    mu = mu_at(truth.params, u)
    sigma = sigma_at(truth.params, u)
    x = simulate_exact(mu, sigma, truth.params.lam, truth.dt, float(mu[0]), rng)
    names = ENGINE_CHANNELS if d == len(ENGINE_CHANNELS) else tuple(f"u{i + 1}" for i in range(d))
    inputs = InputSeries(0.0, truth.dt, u, names)
    obs = ObservationSeries(0.0, truth.dt, transform_inverse(x) * truth.target_scale, x)
    return inputs, obs


__all__ = [
    "DEFAULT_SCHEDULE", "SynthSpec", "generate", "true_params", "verify_recovery", "RecoveryResult",
    "simulate_exact", "piecewise_constant", "SurrogateTruth", "surrogate_truth", "surrogate",
]
