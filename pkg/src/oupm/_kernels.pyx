# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; mirrors ``_kernels_py`` signature for signature."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, log1p, fabs, sqrt, isfinite

cnp.import_array()

BACKEND = "cython"

cdef double _SERIES_CUTOFF = 1e-3


cdef inline double _softplus(double x) noexcept nogil:
    return (x if x > 0.0 else 0.0) + log1p(exp(-fabs(x)))


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e = exp(-fabs(x))
    if x >= 0.0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


cdef double _loss_grad(const double[::1] theta, const double[:, ::1] U, const double[::1] yp,
                       const double[::1] yn, const double[::1] dt, const cnp.intp_t[::1] idx,
                       Py_ssize_t n, double var_floor, double[::1] grad, bint want_grad,
                       double[::1] terms) noexcept nogil:
    cdef Py_ssize_t d = U.shape[1]
    cdef Py_ssize_t i, j, row
    cdef double lam_raw = theta[2 * d + 2]
    cdef double lam = _softplus(lam_raw)
    cdef double b = theta[d], d_off = theta[2 * d + 1]
    cdef double mu, pre_s, sigma, x, decay, one_minus, h, gain, m, V, r, total = 0.0
    cdef double inv_v, dl_dm, dl_dv, dl_dmu, dl_dpre, dh_dx, dl_dlam_sum = 0.0, t
    cdef bint floored

    if want_grad:
        for j in range(2 * d + 3):
            grad[j] = 0.0

    for i in range(n):
        row = idx[i] if idx is not None else i
        mu = b
        pre_s = d_off
        for j in range(d):
            mu += U[row, j] * theta[j]
            pre_s += U[row, j] * theta[d + 1 + j]
        sigma = _softplus(pre_s)
        x = lam * dt[row]
        decay = exp(-x)
        one_minus = -expm1(-x)
        if x > 0.0:
            h = -expm1(-2.0 * x) / (2.0 * x)
        else:
            h = 1.0
        gain = dt[row] * h
        m = yp[row] * decay + mu * one_minus
        V = sigma * sigma * gain
        floored = V < var_floor
        if floored:
            V = var_floor
        r = yn[row] - m
        t = log(V) + r * r / V
        total += t
        if terms is not None:
            terms[i] = t
        if not want_grad:
            continue

        inv_v = 1.0 / V
        dl_dm = -2.0 * r * inv_v
        dl_dv = 0.0 if floored else inv_v - r * r * inv_v * inv_v
        dl_dmu = dl_dm * one_minus
        dl_dpre = dl_dv * 2.0 * sigma * gain * _sigmoid(pre_s)
        if x > _SERIES_CUTOFF:
            dh_dx = (exp(-2.0 * x) - h) / x
        else:
            dh_dx = -1.0 + x * (4.0 / 3.0 + x * (-1.0 + x * (8.0 / 15.0)))
        dl_dlam_sum += dl_dm * (-(yp[row] - mu) * dt[row] * decay) \
            + dl_dv * sigma * sigma * dt[row] * dt[row] * dh_dx
        for j in range(d):
            grad[j] += U[row, j] * dl_dmu
            grad[d + 1 + j] += U[row, j] * dl_dpre
        grad[d] += dl_dmu
        grad[2 * d + 1] += dl_dpre

    if want_grad:
        grad[2 * d + 2] = dl_dlam_sum * _sigmoid(lam_raw)
    return total


def _prep(U, yp, yn, dt):
    return (np.ascontiguousarray(U, dtype=np.float64), np.ascontiguousarray(yp, dtype=np.float64),
            np.ascontiguousarray(yn, dtype=np.float64), np.ascontiguousarray(dt, dtype=np.float64))


def nll_terms(theta, U, yp, yn, dt, double var_floor):
    U, yp, yn, dt = _prep(U, yp, yn, dt)
    th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t n = yp.shape[0]
    out = np.empty(n)
    grad = np.empty(th.shape[0])
    _loss_grad(th, U, yp, yn, dt, None, n, var_floor, grad, False, out)
    return out


def nll_loss_grad(theta, U, yp, yn, dt, double var_floor):
    U, yp, yn, dt = _prep(U, yp, yn, dt)
    th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t n = yp.shape[0]
    grad = np.empty(th.shape[0])
    cdef double loss
    loss = _loss_grad(th, U, yp, yn, dt, None, n, var_floor, grad, True, None)
    return loss, grad


def adam_epoch(double[::1] theta, double[::1] m1, double[::1] m2, long step, U, yp, yn, dt,
               perm, Py_ssize_t batch_size, double lr, double beta1, double beta2, double eps,
               double var_floor):
    U, yp, yn, dt = _prep(U, yp, yn, dt)
    cdef const double[:, ::1] Uv = U
    cdef const double[::1] ypv = yp, ynv = yn, dtv = dt
    cdef const cnp.intp_t[::1] pv = np.ascontiguousarray(perm, dtype=np.intp)
    cdef Py_ssize_t n = pv.shape[0], p = theta.shape[0]
    cdef Py_ssize_t start, stop, j, bi = 0
    cdef double[::1] grad = np.empty(p)
    cdef double loss, total = 0.0, bc1, bc2, g
    cdef bint ok

    with nogil:
        start = 0
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            loss = _loss_grad(theta, Uv, ypv, ynv, dtv, pv[start:stop], stop - start, var_floor,
                              grad, True, None)
            ok = isfinite(loss)
            for j in range(p):
                if not isfinite(grad[j]):
                    ok = False
            if not ok:
                with gil:
                    return step, total, bi
            total += loss
            step += 1
            bc1 = 1.0 - beta1 ** step
            bc2 = 1.0 - beta2 ** step
            for j in range(p):
                g = grad[j]
                m1[j] = m1[j] * beta1 + (1.0 - beta1) * g
                m2[j] = m2[j] * beta2 + (1.0 - beta2) * (g * g)
                theta[j] -= lr * (m1[j] / bc1) / (sqrt(m2[j] / bc2) + eps)
            start = stop
            bi += 1
    return step, total, -1


def ou_recursion(double[::1] x, double decay, double one_minus, const double[::1] mu,
                 const double[::1] sd, const double[:, ::1] eta, double[:, ::1] out):
    cdef Py_ssize_t W = eta.shape[0], M = eta.shape[1], k, j
    cdef double mk, sk, v
    with nogil:
        for k in range(W):
            mk = mu[k] * one_minus
            sk = sd[k]
            for j in range(M):
                v = x[j] * decay
                v = v + mk
                v = v + sk * eta[k, j]
                x[j] = v
                out[k, j] = v
    return np.asarray(out)
