import math

import numpy as np
import pytest

from delsarte.stencils import (cumulative_integral, difference_weights,
                               differentiate)


def test_centered_weights_first_derivative_order4():
    w = difference_weights((-2, -1, 0, 1, 2), 1)
    np.testing.assert_allclose(w, [1 / 12, -8 / 12, 0, 8 / 12, -1 / 12],
                               atol=1e-13)


def test_weights_exact_on_polynomials():
    offsets = (-3, -2, -1, 0, 1, 2, 3)
    for d in range(4):
        w = difference_weights(offsets, d)
        # rule applied to t^k at t=0 must reproduce the k-th derivative
        for k in range(len(offsets)):
            val = sum(wi * oi ** k for wi, oi in zip(w, offsets))
            expect = math.factorial(k) if k == d else 0.0
            assert abs(val - expect) < 1e-10 * max(1.0, math.factorial(k))


@pytest.mark.parametrize("periodic", [True, False])
@pytest.mark.parametrize("deriv,acc", [(1, 4), (2, 4), (1, 6), (3, 4)])
def test_differentiate_convergence(periodic, deriv, acc):
    errs = []
    for n in (64, 128):
        if periodic:
            x = np.linspace(0, 2 * np.pi, n, endpoint=False)
        else:
            x = np.linspace(0, 2 * np.pi, n + 1)
        h = x[1] - x[0]
        f = np.exp(np.sin(x))
        ref = {1: np.cos(x) * f,
               2: (np.cos(x) ** 2 - np.sin(x)) * f,
               3: (np.cos(x) ** 3 - 3 * np.sin(x) * np.cos(x) - np.cos(x)) * f}[deriv]
        out = differentiate(f.astype(complex), 0, deriv, h, periodic, acc)
        sl = slice(None) if periodic else slice(3 * acc, -3 * acc)
        errs.append(np.max(np.abs((out - ref)[sl])))
    order = np.log2(errs[0] / errs[1])
    assert order > acc - 0.7


def test_differentiate_along_second_axis():
    n = 64
    x = np.linspace(0, 2 * np.pi, n, endpoint=False)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.sin(X) * np.cos(2 * Y)
    h = x[1] - x[0]
    out = differentiate(f.astype(complex), 1, 1, h, True, 4)
    ref = -2 * np.sin(X) * np.sin(2 * Y)
    assert np.max(np.abs(out - ref)) < 1e-3


def test_cumulative_integral_matches_antiderivative():
    x = np.linspace(-2.0, 3.0, 801)
    h = x[1] - x[0]
    f = np.exp(1.3 * x) * np.cos(2 * x)
    # oracle: exact antiderivative of e^{ax} cos(bx)
    a, b = 1.3, 2.0
    F = np.exp(a * x) * (a * np.cos(b * x) + b * np.sin(b * x)) / (a**2 + b**2)
    out = cumulative_integral(f.astype(complex), h, acc=6)
    np.testing.assert_allclose(out, F - F[0], atol=1e-12 * np.max(np.abs(F)))


def test_cumulative_integral_order():
    errs = []
    for n in (200, 400):
        x = np.linspace(0.0, 4.0, n + 1)
        h = x[1] - x[0]
        f = np.exp(x)
        out = cumulative_integral(f.astype(complex), h, acc=4)
        errs.append(np.max(np.abs(out - (np.exp(x) - 1.0))))
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_cumulative_integral_axis_argument():
    x = np.linspace(0, 1, 101)
    h = x[1] - x[0]
    f = np.tile(x ** 2, (3, 1))
    out = cumulative_integral(f, h, acc=4, axis=1)
    np.testing.assert_allclose(out[1], x ** 3 / 3, atol=1e-12)
