"""Calibration and accuracy metrics for path ensembles, in transformed units by default."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .sampler import PathEnsemble


def _obs_vector(obs, n: int) -> np.ndarray:
    y = np.asarray(getattr(obs, "y", obs), dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"ensemble has {n} timesteps but observations have {y.shape[0]}")
    return y


def pit_values(ensemble: PathEnsemble, obs, method: str = "gaussian", skip_initial: bool = True) -> np.ndarray:
    """Probability integral transform of each observation under the ensemble.

    ``gaussian`` pushes the standardized error through the standard normal
    CDF; ``empirical`` uses the fraction of paths below the observation (needs
    stored paths). The deterministic initial step carries no spread and is
    dropped when ``skip_initial`` is set.
    """
    start = 1 if skip_initial and ensemble.n > 1 else 0
    y = _obs_vector(obs, ensemble.n)[start:]
    if method == "gaussian":
        s = ensemble.summary.std[start:]
        if np.any(~(s > 0)):
            raise ValueError(f"degenerate ensemble: zero spread at step {start + int(np.argmax(~(s > 0)))}")
        return ndtr((y - ensemble.summary.mean[start:]) / s)
    if method == "empirical":
        if ensemble.paths is None:
            raise ValueError("empirical PIT needs the ensemble paths (keep_paths=True)")
        return np.mean(ensemble.paths[:, start:] <= y, axis=0)
    raise ValueError(f"unknown PIT method {method!r}")


def ks_statistic(pit) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF of ``pit`` and Uniform(0, 1)."""
    u = np.sort(np.asarray(pit, dtype=float).reshape(-1))
    n = u.size
    if n == 0:
        raise ValueError("empty PIT vector")
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise ValueError("PIT values must lie in [0, 1]")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def qq_points(pit) -> np.ndarray:
    """``(theoretical, empirical)`` pairs: plotting positions ``(i - 0.5)/n`` against sorted PIT."""
    u = np.sort(np.asarray(pit, dtype=float).reshape(-1))
    if u.size == 0:
        raise ValueError("empty PIT vector")
    theo = (np.arange(1, u.size + 1) - 0.5) / u.size
    return np.column_stack([theo, u])


def pit_histogram(pit, bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Density-normalized histogram counts (1.0 everywhere when perfectly calibrated)."""
    counts, edges = np.histogram(np.asarray(pit, dtype=float), bins=bins, range=(0.0, 1.0))
    return counts * bins / max(counts.sum(), 1), edges


def nrmse(ensemble: PathEnsemble, obs) -> float:
    """RMSE of the ensemble median against observations, divided by the observed range."""
    y = _obs_vector(obs, ensemble.n)
    span = float(y.max() - y.min())
    if not span > 0:
        raise ValueError("observed range is zero; NRMSE undefined")
    return float(np.sqrt(np.mean((ensemble.summary.median - y) ** 2)) / span)


def coverage(ensemble: PathEnsemble, obs, level: float = 0.95, skip_initial: bool = True) -> float:
    """Fraction of steps whose observation lies inside the central ``level`` band (inclusive)."""
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    y = _obs_vector(obs, ensemble.n)
    if ensemble.paths is not None:
        lo, hi = np.quantile(ensemble.paths, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0)
    else:
        lo, hi = ensemble.summary.band(level)
    start = 1 if skip_initial and ensemble.n > 1 else 0
    return float(np.mean((y[start:] >= lo[start:]) & (y[start:] <= hi[start:])))


def cumulative_inside(ensemble: PathEnsemble, obs_raw, k: int = 3) -> np.ndarray:
    """Per-step flag: measured raw cumulative sum within ``mean +/- k std`` of the ensemble's."""
    y = np.asarray(getattr(obs_raw, "y_raw", obs_raw), dtype=float).reshape(-1)
    if y.shape[0] != ensemble.n:
        raise ValueError(f"ensemble has {ensemble.n} timesteps but observations have {y.shape[0]}")
    measured = np.concatenate([[0.0], np.cumsum(y[1:])])
    cb = ensemble.cumulative
    return (measured >= cb.lower(k)) & (measured <= cb.upper(k))


@dataclass(eq=False)
class EvalReport:
    pit: np.ndarray
    ks: float
    qq_points: np.ndarray
    nrmse: float
    coverage_95: float
    standardized_errors: np.ndarray
    cumulative_inside_3sigma: float

    def to_dict(self) -> dict:
        return {
            "ks": self.ks,
            "nrmse": self.nrmse,
            "coverage_95": self.coverage_95,
            "cumulative_inside_3sigma": self.cumulative_inside_3sigma,
            "n_pit": int(self.pit.size),
        }


def evaluate(ensemble: PathEnsemble, obs) -> EvalReport:
    """All metrics for one ensemble/observation pair; ``obs`` is an ObservationSeries."""
    pit = pit_values(ensemble, obs)
    errs = np.full(ensemble.n, np.nan)
    s = ensemble.summary.std
    ok = s > 0
    errs[ok] = (np.asarray(obs.y)[ok] - ensemble.summary.mean[ok]) / s[ok]
    return EvalReport(
        pit=pit,
        ks=ks_statistic(pit),
        qq_points=qq_points(pit),
        nrmse=nrmse(ensemble, obs),
        coverage_95=coverage(ensemble, obs, 0.95),
        standardized_errors=errs,
        cumulative_inside_3sigma=float(np.mean(cumulative_inside(ensemble, obs, 3))),
    )
