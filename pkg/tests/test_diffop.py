import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delsarte.diffop import (DifferentialOperator, apply_operator,
                             commutator_residual, compose, formal_adjoint,
                             load_operator, locality_score, operator_action,
                             operator_from_dict, OperatorAction)
from delsarte.grids import Grid, GridFunction


def line(n=256, a=0.0, b=2 * np.pi, periodic=True):
    return Grid.line(a, b, n, periodic)


def test_apply_first_derivative_of_sine():
    g = line(256)
    op = DifferentialOperator(1, 1, {(1,): 1.0})
    f = GridFunction.from_callable(g, np.sin)
    out = apply_operator(op, f)
    h = g.spacing[0]
    assert np.max(np.abs(out.scalar() - np.cos(g.axis(0)))) < 10 * h ** 4


def test_apply_identity_is_exact():
    g = line(64)
    op = DifferentialOperator(1, 1, {(0,): 1.0})
    f = GridFunction.from_callable(g, lambda x: np.exp(1j * x) + x)
    out = apply_operator(op, f)
    np.testing.assert_array_equal(out.values, f.values)


def test_apply_sech_null_function():
    # -psi'' - 2 sech^2 psi + psi = 0 for psi = sech (since sech'' = sech - 2 sech^3)
    g = Grid.line(-20.0, 20.0, 4096)
    op = DifferentialOperator(1, 1, {
        (2,): -1.0, (0,): lambda x: -2.0 / np.cosh(x) ** 2 + 1.0})
    f = GridFunction.from_callable(g, lambda x: 1.0 / np.cosh(x))
    out = apply_operator(op, f)
    assert out.norm_max(band=24) < 1e-6


def test_apply_zero_operator():
    g = line(64)
    op = DifferentialOperator(1, 1, {})
    f = GridFunction.from_callable(g, np.cos)
    assert apply_operator(op, f).norm_max() == 0.0


def test_apply_dimension_mismatch():
    g = line(64)
    op = DifferentialOperator(2, 1, {(1, 0): 1.0})
    f = GridFunction.from_callable(g, np.sin)
    with pytest.raises(ValueError):
        apply_operator(op, f)


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False))
def test_apply_is_linear(a, b):
    g = line(64)
    op = DifferentialOperator(1, 1, {(2,): -1.0, (1,): lambda x: np.sin(x)})
    f = GridFunction.from_callable(g, np.sin)
    h = GridFunction.from_callable(g, lambda x: np.exp(1j * x))
    lhs = apply_operator(op, a * f + b * h)
    rhs = a * apply_operator(op, f) + b * apply_operator(op, h)
    scale = max(abs(a), abs(b), 1.0)
    assert (lhs - rhs).norm_max() < 1e-10 * scale


# -- formal adjoint ---------------------------------------------------------

def test_adjoint_of_first_derivative():
    op = DifferentialOperator(1, 1, {(1,): 1.0})
    adj = formal_adjoint(op)
    g = line(64)
    coef = {a: c.sample(g)[0, 0, 0] for a, c in adj.terms.items()}
    assert abs(coef[(1,)] + 1.0) < 1e-14
    assert abs(coef.get((0,), 0.0)) < 1e-14


def test_adjoint_of_zero_order_matrix():
    m = np.array([[1.0, 2.0 + 1j], [0.5j, -3.0]])
    op = DifferentialOperator(1, 2, {(0,): m})
    adj = formal_adjoint(op)
    g = line(64)
    got = adj.terms[(0,)].sample(g)[0]
    np.testing.assert_allclose(got, np.conj(m).T, atol=1e-14)


def test_sturm_liouville_formally_self_adjoint():
    op = DifferentialOperator(1, 1, {(2,): -1.0,
                                     (0,): lambda x: 1.0 / np.cosh(x) ** 2})
    adj = formal_adjoint(op)
    g = Grid.line(-5, 5, 256)
    f = GridFunction.from_callable(g, lambda x: np.sin(x) * np.exp(-x ** 2 / 8))
    d = apply_operator(op, f) - apply_operator(adj, f)
    assert d.norm_max(band=12) < 1e-9


def test_adjoint_involution_constant_coefficients():
    A = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    B = np.array([[1.0, 0.5j], [-0.5j, 2.0]], dtype=complex)
    op = DifferentialOperator(1, 2, {(1,): A, (0,): B})
    opss = formal_adjoint(formal_adjoint(op))
    g = line(64)
    for alpha in op.terms:
        np.testing.assert_allclose(opss.terms[alpha].sample(g),
                                   op.terms[alpha].sample(g), atol=1e-13)


def test_adjoint_pairing_periodic():
    # |<L* g, f> - <g, L f>| small under the discrete inner product
    g = line(256)
    op = DifferentialOperator(1, 1, {(2,): -1.0, (1,): lambda x: np.sin(x)})
    adj = formal_adjoint(op)
    f = GridFunction.from_callable(g, lambda x: np.exp(1j * x) + np.cos(2 * x))
    w = GridFunction.from_callable(g, lambda x: np.sin(3 * x) + 0.5)
    lhs = apply_operator(adj, w).inner(f)
    rhs = w.inner(apply_operator(op, f))
    assert abs(lhs - rhs) < 1e-6 * (f.norm_l2() + w.norm_l2())


# -- composition ------------------------------------------------------------

def test_compose_derivative_with_multiplication():
    # d/dx (x .) = x d/dx + 1
    op_d = DifferentialOperator(1, 1, {(1,): 1.0})
    op_x = DifferentialOperator(1, 1, {(0,): lambda x: x}, fd_order=4)
    prod = compose(op_d, op_x)
    g = Grid.line(-3, 3, 256)
    f = GridFunction.from_callable(g, lambda x: np.sin(2 * x))
    direct = apply_operator(op_d, apply_operator(op_x, f))
    via = apply_operator(prod, f)
    # both routes carry their own O(h^4) truncation; they agree to C h^4
    assert (direct - via).norm_max(band=12) < 1e-5


def test_compose_two_derivatives():
    op_d = DifferentialOperator(1, 1, {(1,): 1.0})
    prod = compose(op_d, op_d)
    assert prod.order == 2
    g = line(256)
    f = GridFunction.from_callable(g, np.sin)
    out = apply_operator(prod, f)
    assert np.max(np.abs(out.scalar() + np.sin(g.axis(0)))) < 1e-6


def test_compose_leibniz_against_symbolic_oracle():
    # -d2 o (sech^2 .) = -sech^2 d2 - 2 (sech^2)' d - (sech^2)''
    # oracle coefficients differentiated analytically:
    s2 = lambda x: 1.0 / np.cosh(x) ** 2
    ds2 = lambda x: -2.0 * np.tanh(x) / np.cosh(x) ** 2
    d2s2 = lambda x: (4.0 * np.tanh(x) ** 2 - 2.0 / np.cosh(x) ** 2) / np.cosh(x) ** 2
    a = DifferentialOperator(1, 1, {(2,): -1.0})
    b = DifferentialOperator(1, 1, {(0,): s2})
    prod = compose(a, b)
    oracle = DifferentialOperator(1, 1, {
        (2,): lambda x: -s2(x), (1,): lambda x: -2 * ds2(x),
        (0,): lambda x: -d2s2(x)})
    g = Grid.line(-6, 6, 512)
    f = GridFunction.from_callable(g, lambda x: np.cos(1.3 * x))
    d = apply_operator(prod, f) - apply_operator(oracle, f)
    assert d.norm_max(band=16) < 1e-6


def test_compose_consistency_with_sequential_apply():
    g = line(256)
    a = DifferentialOperator(1, 1, {(2,): -1.0, (0,): lambda x: np.cos(x)})
    b = DifferentialOperator(1, 1, {(1,): lambda x: 1.0 + 0.3 * np.sin(x)})
    f = GridFunction.from_callable(g, lambda x: np.exp(1j * 2 * x))
    d = apply_operator(compose(a, b), f) - apply_operator(a, apply_operator(b, f))
    assert d.norm_max() < 1e-5


# -- commutators and locality ------------------------------------------------

def test_partial_derivatives_commute():
    g = Grid.torus(128, dim=2)
    dx = DifferentialOperator(2, 1, {(1, 0): 1.0})
    dy = DifferentialOperator(2, 1, {(0, 1): 1.0})
    probes = [GridFunction.from_callable(
        g, lambda x, y: np.exp(1j * x) * np.cos(y) + np.sin(x + 2 * y))]
    assert commutator_residual(dx, dy, probes) < 1e-10


def test_derivative_and_position_do_not_commute():
    g = Grid.line(-np.pi, np.pi, 256)
    d = DifferentialOperator(1, 1, {(1,): 1.0})
    x_mult = DifferentialOperator(1, 1, {(0,): lambda x: x})
    probes = [GridFunction.from_callable(g, np.sin)]
    # [d, x] = 1, so the normalized residual is ~ ||f|| / ||f|| = 1
    res = commutator_residual(d, x_mult, probes)
    assert 0.5 < res < 2.0


def test_operator_commutes_with_itself():
    g = Grid.line(-5, 5, 256)
    op = DifferentialOperator(1, 1, {(2,): -1.0,
                                     (0,): lambda x: 1 / np.cosh(x) ** 2})
    probes = [GridFunction.from_callable(g, lambda x: np.exp(-x ** 2 / 4))]
    assert commutator_residual(op, op, probes) == 0.0


def _bump(grid, center, width):
    x = grid.axis(0)
    t = (x - center) / width
    out = np.zeros_like(x)
    m = np.abs(t) < 1
    out[m] = np.exp(1 - 1 / (1 - t[m] ** 2))
    return GridFunction(grid, out[:, None])


def test_differential_operator_is_local():
    g = Grid.line(-6, 6, 1024)
    op = DifferentialOperator(1, 1, {(2,): -1.0})
    b = _bump(g, 0.0, 1.0)
    assert locality_score(operator_action(op), b, [(-1.0, 1.0)], halo=4) < 1e-12


def test_gaussian_convolution_is_not_local():
    g = Grid.line(-6, 6, 1024)
    x = g.axis(0)
    kern = np.exp(-0.5 * (x / 1.5) ** 2)
    kern /= np.sum(kern) * g.spacing[0]

    def conv(f):
        out = np.convolve(f.scalar().real, kern, mode="same") * g.spacing[0]
        return GridFunction(g, out.astype(complex)[:, None])

    b = _bump(g, 0.0, 1.0)
    assert locality_score(OperatorAction(conv, 1, 1), b, [(-1.0, 1.0)],
                          halo=4) >= 0.1


# -- operator files ----------------------------------------------------------

def test_operator_from_dict_expression():
    spec = {"m": 1, "N": 1, "order": 2,
            "terms": [{"alpha": [2], "coeff": "-1"},
                      {"alpha": [0], "coeff": "-2*sech(x)**2 + 1"}]}
    op = operator_from_dict(spec)
    g = Grid.line(-20, 20, 4096)
    f = GridFunction.from_callable(g, lambda x: 1.0 / np.cosh(x))
    assert apply_operator(op, f).norm_max(band=24) < 1e-6


def test_operator_from_dict_matrix_coefficients():
    spec = {"m": 2, "N": 2, "order": 1,
            "terms": [{"alpha": [1, 0], "coeff": [["1", "0"], ["0", "-1"]]},
                      {"alpha": [0, 1], "coeff": [["0", "1"], ["1", "0"]]}]}
    op = operator_from_dict(spec)
    g = Grid.torus(32, dim=2)
    f = GridFunction.from_callable(
        g, lambda x, y: np.stack([np.sin(x), np.cos(y)], axis=-1), channels=2)
    out = apply_operator(op, f)
    X, Y = g.mesh()
    ref0 = np.cos(X) - np.sin(Y)        # (A dx f + B dy f)_1
    assert np.max(np.abs(out.values[..., 0] - ref0)) < 1e-4


def test_operator_file_roundtrip(tmp_path):
    spec = {"m": 1, "N": 1, "order": 1,
            "terms": [{"alpha": [1], "coeff": "1"}]}
    p = tmp_path / "op.json"
    p.write_text(json.dumps(spec))
    op = load_operator(str(p))
    assert op.order == 1

    ptoml = tmp_path / "op.toml"
    ptoml.write_text('m = 1\nN = 1\norder = 1\n[[terms]]\nalpha = [1]\ncoeff = "1"\n')
    op2 = load_operator(str(ptoml))
    assert op2.order == 1


def test_operator_from_dict_order_mismatch():
    spec = {"m": 1, "N": 1, "order": 2,
            "terms": [{"alpha": [1], "coeff": "1"}]}
    with pytest.raises(ValueError):
        operator_from_dict(spec)


def test_locality_score_rejects_support_at_boundary():
    g = Grid.line(-6, 6, 1024)
    op = DifferentialOperator(1, 1, {(2,): -1.0})
    b = _bump(g, 0.0, 1.0)
    with pytest.raises(ValueError):
        locality_score(operator_action(op), b, [(-5.98, 5.98)], halo=4)


@settings(max_examples=15, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False),
       st.complex_numbers(max_magnitude=5, allow_nan=False))
def test_operator_action_linearity_invariant(a, b):
    g = line(128)
    op = DifferentialOperator(1, 1, {(2,): -1.0, (0,): lambda x: np.cos(x)})
    action = operator_action(op)
    f = GridFunction.from_callable(g, np.sin)
    h = GridFunction.from_callable(g, lambda x: np.exp(1j * x))
    lhs = action(a * f + b * h)
    rhs = a * action(f) + b * action(h)
    assert (lhs - rhs).norm_max() < 1e-9 * max(abs(a), abs(b), 1.0)


def test_operator_samples_coefficient(tmp_path):
    import json as _json
    g = Grid.line(-2.0, 2.0, 64)
    samples = np.cos(g.axis(0))
    np.save(tmp_path / "coef.npy", samples)
    spec = {"m": 1, "N": 1, "order": 0,
            "grid": {"lo": [-2.0], "hi": [2.0], "cells": [64]},
            "terms": [{"alpha": [0], "coeff": {"samples": str(tmp_path / "coef.npy")}}]}
    op = operator_from_dict(spec)
    f = GridFunction.from_callable(g, lambda x: np.ones_like(x))
    out = op.apply(f)
    np.testing.assert_allclose(out.scalar(), samples, atol=1e-14)
