"""Predictive path ensembles from inputs alone.

Every path starts at the mean level of the first input sample and then
draws one unit normal per step from its own counter-based stream (Philox
keyed by ``(seed, path index)``). Paths are therefore identical whatever
the chunking, window length or number of worker threads.

By default only per-timestep summaries are kept; the paths are streamed
through in time windows so memory stays ``O(M * window)``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import InputSeries, ModelParams, PreprocessStats
from .ou_process import decay_terms, mu_at, sigma_at

DEFAULT_QUANTILES = (0.005, 0.025, 0.05, 0.25, 0.75, 0.95, 0.975, 0.995)
DEFAULT_M = 10_000
_WINDOW_BUDGET = 1 << 22  # doubles per (window x paths) block


@dataclass(eq=False)
class Summary:
    """Per-timestep statistics across paths (population std, type-7 quantiles)."""

    mean: np.ndarray
    std: np.ndarray
    median: np.ndarray
    quantiles: dict[float, np.ndarray]

    def band(self, level: float) -> tuple[np.ndarray, np.ndarray]:
        """Central ``level`` quantile band."""
        lo, hi = _band_levels(level)
        try:
            return self.quantiles[lo], self.quantiles[hi]
        except KeyError:
            raise KeyError(f"quantiles {lo} and {hi} were not stored for a {level} band") from None


@dataclass(eq=False)
class CumulativeBands:
    """Running sums per path in raw units: mean and std across paths at each step."""

    mean: np.ndarray
    std: np.ndarray

    def lower(self, k: int) -> np.ndarray:
        return self.mean - k * self.std

    def upper(self, k: int) -> np.ndarray:
        return self.mean + k * self.std


@dataclass(eq=False)
class PathEnsemble:
    M: int
    t0: float
    dt: float
    summary: Summary
    raw_summary: Summary
    cumulative: CumulativeBands
    stats: PreprocessStats
    quantile_levels: tuple[float, ...]
    paths: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.summary.mean.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @classmethod
    def from_paths(cls, paths, stats: PreprocessStats, t0: float = 0.0, dt: float = 1.0,
                   quantiles=DEFAULT_QUANTILES) -> PathEnsemble:
        """Summarize a full ``(M, N)`` matrix of transformed-unit paths."""
        paths = np.atleast_2d(np.asarray(paths, dtype=float))
        qs = _quantile_levels(quantiles)
        block = paths.T
        raw = stats.unscale_target(block)
        cum = np.cumsum(raw[1:], axis=0)
        cum = np.vstack([np.zeros((1, paths.shape[0])), cum])
        summary, raw_summary = _summarize(block, qs), _summarize(raw, qs)
        return cls(paths.shape[0], t0, dt, summary, raw_summary,
                   CumulativeBands(cum.mean(axis=1), cum.std(axis=1)), stats, qs, paths)


def _band_levels(level: float) -> tuple[float, float]:
    if not 0 < level < 1:
        raise ValueError(f"band level must be in (0, 1), got {level}")
    lo = round((1.0 - level) / 2.0, 12)
    return lo, round(1.0 - lo, 12)


def _quantile_levels(quantiles) -> tuple[float, ...]:
    qs = sorted({round(float(q), 12) for q in quantiles} | {0.5})
    if qs[0] <= 0 or qs[-1] >= 1:
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    return tuple(qs)


def _summarize(block: np.ndarray, qs: tuple[float, ...]) -> Summary:
    """Statistics along axis 1 of a ``(steps, paths)`` block."""
    qv = np.quantile(block, qs, axis=1)
    quantiles = {q: qv[i] for i, q in enumerate(qs) if q != 0.5}
    return Summary(block.mean(axis=1), block.std(axis=1), qv[qs.index(0.5)], quantiles)


def _concat_summaries(parts: list[Summary]) -> Summary:
    return Summary(
        np.concatenate([p.mean for p in parts]),
        np.concatenate([p.std for p in parts]),
        np.concatenate([p.median for p in parts]),
        {q: np.concatenate([p.quantiles[q] for p in parts]) for q in parts[0].quantiles},
    )


def initial_condition(params: ModelParams, stats: PreprocessStats, u_std_0) -> float:
    """Deterministic start: the mean level at the first input sample."""
    return float(mu_at(params, np.asarray(u_std_0, dtype=float)))


def path_stream(seed: int, path: int) -> np.random.Generator:
    """The normal stream of one path; depends only on ``(seed, path)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(path,))))


def sample_paths(params: ModelParams, stats: PreprocessStats, inputs: InputSeries, M: int = DEFAULT_M,
                 seed: int = 0, quantiles=DEFAULT_QUANTILES, keep_paths: bool = False,
                 workers: int = 1, window: int | None = None) -> PathEnsemble:
    """Simulate ``M`` paths over the input horizon and summarize them.

    ``workers > 1`` fills path chunks in a thread pool; output is identical
    to the serial run.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if params.d != inputs.d:
        raise ValueError(f"model has {params.d} channels, inputs have {inputs.d}")
    qs = _quantile_levels(quantiles)
    u_std = inputs.standardized(stats)
    mu = np.asarray(mu_at(params, u_std), dtype=float)
    sigma = np.asarray(sigma_at(params, u_std), dtype=float)
    decay, one_minus, gain = decay_terms(params.lam, inputs.dt)
    sd = np.ascontiguousarray(sigma * np.sqrt(gain))
    mu = np.ascontiguousarray(mu)
    n = inputs.n

    x0 = initial_condition(params, stats, u_std[0])
    x = np.full(M, x0)
    cum = np.zeros(M)
    streams = [path_stream(seed, j) for j in range(M)]
    paths = np.empty((M, n)) if keep_paths else None
    if paths is not None:
        paths[:, 0] = x0
    if window is None:
        window = max(1, _WINDOW_BUDGET // M)

    workers = max(1, int(workers))
    bounds = np.linspace(0, M, min(workers, M) + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    first = np.full((1, M), x0)
    first_raw = stats.unscale_target(first)
    parts = [_summarize(first, qs)]
    raw_parts = [_summarize(first_raw, qs)]
    cum_mean, cum_std = [np.zeros(1)], [np.zeros(1)]

    def advance(j0, j1, s, w, block):
        noise = np.empty((j1 - j0, w))
        for j in range(j0, j1):
            streams[j].standard_normal(out=noise[j - j0])
        out = np.empty((w, j1 - j0))
        kernels.ou_recursion(x[j0:j1], decay, one_minus, mu[s - 1:s - 1 + w], sd[s - 1:s - 1 + w],
                             np.ascontiguousarray(noise.T), out)
        block[:, j0:j1] = out

    pool = ThreadPoolExecutor(len(chunks)) if len(chunks) > 1 else None
    try:
        for s in range(1, n, window):
            w = min(window, n - s)
            block = np.empty((w, M))
            if pool is None:
                advance(0, M, s, w, block)
            else:
                list(pool.map(lambda c: advance(c[0], c[1], s, w, block), chunks))
            raw = stats.unscale_target(block)
            running = cum + np.cumsum(raw, axis=0)
            cum = running[-1].copy()
            parts.append(_summarize(block, qs))
            raw_parts.append(_summarize(raw, qs))
            cum_mean.append(running.mean(axis=1))
            cum_std.append(running.std(axis=1))
            if paths is not None:
                paths[:, s:s + w] = block.T
    finally:
        if pool is not None:
            pool.shutdown()

    return PathEnsemble(
        M=M, t0=inputs.t0, dt=inputs.dt,
        summary=_concat_summaries(parts),
        raw_summary=_concat_summaries(raw_parts),
        cumulative=CumulativeBands(np.concatenate(cum_mean), np.concatenate(cum_std)),
        stats=stats, quantile_levels=qs, paths=paths,
    )


def cumulative_stats(ensemble: PathEnsemble) -> CumulativeBands:
    """Cumulative raw-unit output per path, ``sum_{i=1..k}``, with mean and std across paths.

    Recomputed from the stored paths when available; otherwise the bands
    accumulated while streaming are returned.
    """
    if ensemble.paths is None:
        return ensemble.cumulative
    raw = ensemble.stats.unscale_target(ensemble.paths)
    cum = np.zeros_like(raw)
    np.cumsum(raw[:, 1:], axis=1, out=cum[:, 1:])
    return CumulativeBands(cum.mean(axis=0), cum.std(axis=0))
