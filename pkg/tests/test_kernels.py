import os
import subprocess
import sys

import numpy as np
import pytest

from oupm import _backend
from oupm._backend import compiled_kernels, python_kernels

from conftest import random_params

needs_compiled = pytest.mark.skipif(compiled_kernels is None, reason="compiled extension not built")


def problem(rng, d=4, n=700, per_example_dt=False):
    theta = random_params(rng, d).to_vector()
    U = rng.normal(size=(n, d))
    yp, yn = rng.normal(size=n), rng.normal(size=n)
    dt = rng.uniform(0.01, 0.3, n) if per_example_dt else np.full(n, 0.05)
    return theta, U, yp, yn, dt


@pytest.mark.parametrize("per_example_dt", [False, True])
@needs_compiled
def test_loss_and_gradient_agree(rng, per_example_dt):
    theta, U, yp, yn, dt = problem(rng, per_example_dt=per_example_dt)
    lc, gc = compiled_kernels.nll_loss_grad(theta, U, yp, yn, dt, 1e-12)
    lp, gp = python_kernels.nll_loss_grad(theta, U, yp, yn, dt, 1e-12)
    assert lc == pytest.approx(lp, rel=1e-12)
    np.testing.assert_allclose(gc, gp, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(compiled_kernels.nll_terms(theta, U, yp, yn, dt, 1e-12),
                               python_kernels.nll_terms(theta, U, yp, yn, dt, 1e-12), rtol=1e-12)


@needs_compiled
def test_adam_epoch_agrees(rng):
    theta, U, yp, yn, dt = problem(rng, n=1300)
    perm = rng.permutation(1300)
    states = []
    for k in (compiled_kernels, python_kernels):
        th, m1, m2 = theta.copy(), np.zeros_like(theta), np.zeros_like(theta)
        step = 0
        for _ in range(3):
            step, total, bad = k.adam_epoch(th, m1, m2, step, U, yp, yn, dt, perm, 512, 1e-2,
                                            0.9, 0.999, 1e-8, 1e-12)
            assert bad == -1
        states.append((th, m1, m2, step, total))
    (tc, m1c, m2c, sc, lc), (tp, m1p, m2p, sp, lp) = states
    assert sc == sp == 9
    np.testing.assert_allclose(tc, tp, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(m2c, m2p, rtol=1e-8)
    assert lc == pytest.approx(lp, rel=1e-10)


@needs_compiled
def test_recursion_bit_identical(rng):
    W, M = 37, 53
    mu, sd = rng.normal(size=W), rng.uniform(0.1, 1, W)
    eta = rng.standard_normal((W, M))
    x0 = rng.normal(size=M)
    outs = []
    for k in (compiled_kernels, python_kernels):
        x, out = x0.copy(), np.empty((W, M))
        k.ou_recursion(x, 0.9, 0.1, mu, sd, eta, out)
        assert np.array_equal(x, out[-1])
        outs.append(out)
    assert np.array_equal(outs[0], outs[1])


def test_bad_batch_reported(rng):
    theta, U, yp, yn, dt = problem(rng, n=10)
    yn[7] = 1e200
    k = compiled_kernels or python_kernels
    with np.errstate(all="ignore"):
        _, _, bad = k.adam_epoch(theta, np.zeros_like(theta), np.zeros_like(theta), 0, U, yp, yn, dt,
                                 np.arange(10), 4, 1e-2, 0.9, 0.999, 1e-8, 1e-12)
    assert bad == 1


def test_pure_python_switch():
    code = "from oupm._backend import BACKEND; print(BACKEND)"
    env = dict(os.environ, OUPM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == python_kernels.BACKEND
    assert _backend.BACKEND in (python_kernels.BACKEND, getattr(compiled_kernels, "BACKEND", None))
