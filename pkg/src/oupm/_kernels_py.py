"""Pure-numpy implementations of the hot kernels.

Same signatures as the compiled ``_kernels`` extension. Parameter vectors use
the flat layout ``[a(d), b, c(d), d_off, lambda_raw]``.
"""

import numpy as np

BACKEND = "python"

# below this lam*dt the closed-form derivative of the variance gain cancels badly
_SERIES_CUTOFF = 1e-3


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _forward(theta, U, yp, yn, dt, var_floor):
    d = U.shape[1]
    a, b = theta[:d], theta[d]
    c, d_off, lam_raw = theta[d + 1:2 * d + 1], theta[2 * d + 1], theta[2 * d + 2]
    lam = float(_softplus(np.float64(lam_raw)))

    mu = U @ a + b
    pre_s = U @ c + d_off
    sigma = _softplus(pre_s)
    x = lam * dt
    decay = np.exp(-x)
    one_minus = -np.expm1(-x)
    safe_x = np.where(x > 0, x, 1.0)
    h = np.where(x > 0, -np.expm1(-2.0 * safe_x) / (2.0 * safe_x), 1.0)
    gain = dt * h
    m = yp * decay + mu * one_minus
    V = sigma * sigma * gain
    floored = V < var_floor
    V = np.where(floored, var_floor, V)
    r = yn - m
    terms = np.log(V) + r * r / V
    return terms, (lam, lam_raw, mu, pre_s, sigma, x, decay, one_minus, h, gain, V, floored, r)


# non-finite results are reported by the callers, as in the compiled version
@np.errstate(over="ignore", invalid="ignore", divide="ignore")
def nll_terms(theta, U, yp, yn, dt, var_floor):
    """Per-example ``log V + (y - m)^2 / V``."""
    return _forward(np.asarray(theta, dtype=float), U, yp, yn, dt, var_floor)[0]


@np.errstate(over="ignore", invalid="ignore", divide="ignore")
def nll_loss_grad(theta, U, yp, yn, dt, var_floor):
    """Summed loss and its gradient with respect to the flat parameter vector."""
    theta = np.asarray(theta, dtype=float)
    terms, cache = _forward(theta, U, yp, yn, dt, var_floor)
    lam, lam_raw, mu, pre_s, sigma, x, decay, one_minus, h, gain, V, floored, r = cache

    inv_v = 1.0 / V
    dl_dm = -2.0 * r * inv_v
    dl_dv = np.where(floored, 0.0, inv_v - r * r * inv_v * inv_v)

    dl_dmu = dl_dm * one_minus
    dl_dpre = dl_dv * 2.0 * sigma * gain * _sigmoid(pre_s)

    series = -1.0 + x * (4.0 / 3.0 + x * (-1.0 + x * (8.0 / 15.0)))
    safe_x = np.where(x > _SERIES_CUTOFF, x, 1.0)
    closed = (np.exp(-2.0 * safe_x) - h) / safe_x
    dh_dx = np.where(x > _SERIES_CUTOFF, closed, series)
    dl_dlam = dl_dm * (-(yp - mu) * dt * decay) + dl_dv * sigma * sigma * dt * dt * dh_dx

    d = U.shape[1]
    grad = np.empty_like(theta)
    grad[:d] = U.T @ dl_dmu
    grad[d] = dl_dmu.sum()
    grad[d + 1:2 * d + 1] = U.T @ dl_dpre
    grad[2 * d + 1] = dl_dpre.sum()
    grad[2 * d + 2] = dl_dlam.sum() * float(_sigmoid(np.float64(lam_raw)))
    return float(terms.sum()), grad


def adam_epoch(theta, m1, m2, step, U, yp, yn, dt, perm, batch_size, lr, beta1, beta2, eps,
               var_floor):
    """One shuffled pass of minibatch Adam; updates ``theta``, ``m1``, ``m2`` in place.

    Returns ``(step, loss_sum, bad_batch)`` where ``bad_batch`` is the index
    of the first batch with a non-finite loss or gradient (``-1`` if none).
    The offending batch is not applied.
    """
    n = perm.shape[0]
    total = 0.0
    for bi, start in enumerate(range(0, n, batch_size)):
        idx = perm[start:start + batch_size]
        loss, grad = nll_loss_grad(theta, U[idx], yp[idx], yn[idx], dt[idx], var_floor)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            return step, total, bi
        total += loss
        step += 1
        m1 *= beta1
        m1 += (1.0 - beta1) * grad
        m2 *= beta2
        m2 += (1.0 - beta2) * (grad * grad)
        bc1 = 1.0 - beta1 ** step
        bc2 = 1.0 - beta2 ** step
        theta -= lr * (m1 / bc1) / (np.sqrt(m2 / bc2) + eps)
    return step, total, -1


def ou_recursion(x, decay, one_minus, mu, sd, eta, out):
    """Advance paths through ``W`` steps.

    ``x``: current states (M,), modified in place. ``mu``/``sd``: per-step
    mean level and transition std (W,). ``eta``: unit normals (W, M).
    ``out[k]`` receives the states after step ``k``.
    """
    for k in range(eta.shape[0]):
        x *= decay
        x += mu[k] * one_minus
        x += sd[k] * eta[k]
        out[k] = x
    return out
