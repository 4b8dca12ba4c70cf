"""Exogenously driven OU process: coefficient maps, exact transitions, EM oracle.

The state obeys ``dX = lam * (mu_t - X) dt + sigma_t dW`` with

    mu_t    = a . u_t + b
    sigma_t = softplus(c . u_t + d_off)
    lam     = softplus(lambda_raw)

and ``u_t`` held at its value from the start of each sampling interval.
Over one interval of length ``dt`` the transition is Gaussian with

    m = x_prev * exp(-lam dt) + mu * (1 - exp(-lam dt))
    V = sigma^2 / (2 lam) * (1 - exp(-2 lam dt))

``V`` is a variance (not a standard deviation) everywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams, softplus

VAR_FLOOR = 1e-12
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TransitionStats:
    m: float
    V: float


def _check_inputs(params: ModelParams, u_std) -> np.ndarray:
    u = np.asarray(u_std, dtype=float)
    if u.shape[-1] != params.d:
        raise ValueError(f"input has {u.shape[-1]} channels, parameters expect {params.d}")
    return u


def mu_at(params: ModelParams, u_std):
    """Mean level for one input vector (or a stack of them)."""
    u = _check_inputs(params, u_std)
    out = u @ params.a + params.b
    return float(out) if np.ndim(out) == 0 else out


def sigma_at(params: ModelParams, u_std):
    u = _check_inputs(params, u_std)
    return softplus(u @ params.c + params.d_off)


def decay_terms(lam: float, dt):
    """``(exp(-lam dt), 1 - exp(-lam dt), (1 - exp(-2 lam dt)) / (2 lam))``.

    The last term tends to ``dt`` as ``lam -> 0``; expm1 keeps all three
    accurate when ``lam * dt`` is tiny.
    """
    dt = np.asarray(dt, dtype=float)
    x = lam * dt
    decay = np.exp(-x)
    one_minus = -np.expm1(-x)
    with np.errstate(invalid="ignore", divide="ignore"):
        var_gain = np.where(x > 0, -np.expm1(-2.0 * x) / (2.0 * np.where(x > 0, lam, 1.0)), dt)
    if var_gain.ndim == 0:
        return float(decay), float(one_minus), float(var_gain)
    return decay, one_minus, var_gain


def transition_moments(x_prev, mu, sigma, lam: float, dt):
    """Vectorized transition mean and (unfloored) variance."""
    decay, one_minus, var_gain = decay_terms(lam, dt)
    m = x_prev * decay + mu * one_minus
    V = sigma * sigma * var_gain
    return m, V


def transition(params: ModelParams, x_prev: float, u_std, dt: float) -> TransitionStats:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    m, V = transition_moments(x_prev, mu_at(params, u_std), sigma_at(params, u_std), params.lam, dt)
    return TransitionStats(float(m), float(V))


def gaussian_logpdf(x, m, V, var_floor: float = VAR_FLOOR):
    V = np.maximum(V, var_floor)
    r = np.asarray(x) - m
    return -0.5 * (_LOG_2PI + np.log(V) + r * r / V)


def transition_logpdf(params: ModelParams, x_prev: float, x_next: float, u_std, dt: float,
                      var_floor: float = VAR_FLOOR) -> float:
    ts = transition(params, x_prev, u_std, dt)
    return float(gaussian_logpdf(x_next, ts.m, ts.V, var_floor))


def euler_maruyama_oracle(params: ModelParams, x0: float, u_std, dt: float, fine_dt: float,
                          n_reps: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo mean/variance of the SDE on the coarse grid by fine-step Euler-Maruyama.

    ``u_std`` is an ``(N, d)`` path of standardized inputs; interval ``k``
    uses row ``k``. Returns arrays of length ``N`` (index 0 is ``x0``, with
    zero variance). Variances are population variances over replicates.
    """
    u = _check_inputs(params, u_std)
    if u.ndim == 1:
        u = u[None, :]
    if n_reps < 1000:
        raise ValueError("the oracle needs at least 1000 replicates")
    n_fine = int(round(dt / fine_dt))
    if n_fine < 1 or abs(n_fine * fine_dt - dt) > 1e-9 * dt:
        raise ValueError(f"fine_dt={fine_dt} does not divide dt={dt}")
    h = dt / n_fine
    sqrt_h = np.sqrt(h)
    mu = np.atleast_1d(mu_at(params, u))
    sigma = np.atleast_1d(sigma_at(params, u))
    lam = params.lam

    rng = np.random.default_rng(seed)
    n_coarse = u.shape[0]
    x = np.full(n_reps, float(x0))
    noise = np.empty(n_reps)
    means = np.empty(n_coarse)
    variances = np.empty(n_coarse)
    means[0], variances[0] = x0, 0.0
    for k in range(n_coarse - 1):
        drift_gain = lam * h
        mu_k, vol_k = mu[k], sigma[k] * sqrt_h
        for _ in range(n_fine):
            rng.standard_normal(out=noise)
            x += drift_gain * (mu_k - x)
            x += vol_k * noise
        means[k + 1] = x.mean()
        variances[k + 1] = x.var()
    return means, variances


def mean_path(params: ModelParams, u_std, dt: float, x0: float | None = None) -> np.ndarray:
    """Deterministic mean recursion (the noiseless trajectory), starting at ``mu_0`` by default."""
    mu = np.atleast_1d(mu_at(params, np.atleast_2d(u_std)))
    decay, one_minus, _ = decay_terms(params.lam, dt)
    out = np.empty_like(mu)
    out[0] = mu[0] if x0 is None else x0
    for k in range(mu.size - 1):
        out[k + 1] = out[k] * decay + mu[k] * one_minus
    return out


def marginal_moments(params: ModelParams, u_std, dt: float, x0: float | None = None):
    """Exact marginal mean and variance at every grid point given only inputs.

    Iterates the transition law: ``M' = E M + (1-E) mu``, ``S' = E^2 S + V``.
    """
    u = np.atleast_2d(u_std)
    mu = np.atleast_1d(mu_at(params, u))
    sigma = np.atleast_1d(sigma_at(params, u))
    decay, one_minus, var_gain = decay_terms(params.lam, dt)
    mean = np.empty_like(mu)
    var = np.empty_like(mu)
    mean[0] = mu[0] if x0 is None else x0
    var[0] = 0.0
    for k in range(mu.size - 1):
        mean[k + 1] = mean[k] * decay + mu[k] * one_minus
        var[k + 1] = decay * decay * var[k] + sigma[k] ** 2 * var_gain
    return mean, var
