import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delsarte.concomitant import (ClosednessError, build_concomitant,
                                  conjugate_transpose_spec,
                                  evaluate_concomitant, potential_form,
                                  verify_lagrangian_identity)
from delsarte.diffop import DifferentialOperator
from delsarte.grids import Grid, GridFunction

D1 = DifferentialOperator(1, 1, {(1,): 1.0})
MINUS_D2 = DifferentialOperator(1, 1, {(2,): -1.0})


def test_first_derivative_single_term():
    # one integration by parts: Z_1 = -phibar psi in our orientation; the
    # divergence identity below is the convention-free contract
    spec = build_concomitant(D1)
    assert len(spec.terms) == 1
    t = spec.terms[0]
    assert (t.direction, t.beta, t.gamma) == (0, (0,), (0,))
    g = Grid.line(0, 1, 64)
    one = GridFunction.from_callable(g, lambda x: np.ones_like(x))
    z = evaluate_concomitant(spec, one, one)
    np.testing.assert_allclose(z[0], -1.0, atol=1e-14)


def test_second_order_wronskian_terms():
    spec = build_concomitant(MINUS_D2)
    got = {(t.direction, t.beta, t.gamma): t.sign for t in spec.terms}
    # Z_1 = phibar psi' - phibar' psi
    assert got == {(0, (0,), (1,)): 1, (0, (1,), (0,)): -1}


def test_wronskian_on_exponentials():
    # Z_1[e^{ax}, e^{bx}] = (b - a) e^{(a+b)x} for real rates
    spec = build_concomitant(MINUS_D2)
    g = Grid.line(-2, 2, 512)
    a, b = 0.3, 0.7
    phi = GridFunction.from_callable(g, lambda x: np.exp(a * x))
    psi = GridFunction.from_callable(g, lambda x: np.exp(b * x))
    z = evaluate_concomitant(spec, phi, psi)
    expect = (b - a) * np.exp((a + b) * g.axis(0))
    assert np.max(np.abs(z[0] - expect)[8:-8]) < 1e-8


def test_wronskian_antisymmetry_real_equal_pair():
    spec = build_concomitant(MINUS_D2)
    g = Grid.line(-3, 3, 256)
    f = GridFunction.from_callable(g, np.cosh)
    z = evaluate_concomitant(spec, f, f)
    assert np.max(np.abs(z[0][8:-8])) < 1e-9


def test_dirac_pair_term_structure():
    A = np.array([[1, 0], [0, -1]], dtype=complex)
    B = np.array([[0, 1], [1, 0]], dtype=complex)
    op = DifferentialOperator(2, 2, {(1, 0): A, (0, 1): B})
    spec = build_concomitant(op)
    g = Grid.torus(16, dim=2)
    by_dir = spec.directions()
    assert len(by_dir[0]) == 1 and len(by_dir[1]) == 1
    # Z_1 = -phibar^T A psi, Z_2 = +phibar^T B psi in our orientation
    c1 = by_dir[0][0].sign * by_dir[0][0].coeff.sample(g)[0, 0]
    c2 = by_dir[1][0].sign * by_dir[1][0].coeff.sample(g)[0, 0]
    np.testing.assert_allclose(c1, -A, atol=1e-14)
    np.testing.assert_allclose(c2, B, atol=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False))
def test_semilinearity(c):
    spec = build_concomitant(MINUS_D2)
    g = Grid.line(-2, 2, 128)
    phi = GridFunction.from_callable(g, lambda x: np.exp(1j * x))
    psi = GridFunction.from_callable(g, lambda x: np.cos(2 * x))
    z_base = evaluate_concomitant(spec, phi, psi)[0]
    z_phi = evaluate_concomitant(spec, c * phi, psi)[0]
    z_psi = evaluate_concomitant(spec, phi, c * psi)[0]
    scale = max(abs(c), 1.0)
    assert np.max(np.abs(z_phi - np.conj(c) * z_base)) < 1e-12 * scale
    assert np.max(np.abs(z_psi - c * z_base)) < 1e-12 * scale


# -- the divergence identity ---------------------------------------------------

def test_identity_first_order_1d():
    # continuous identity is exact; discrete residual is pure truncation,
    # so order-6 stencils put n = 256 below 1e-8
    op = DifferentialOperator(1, 1, {(1,): 1.0}, fd_order=6)
    g = Grid.line(-4, 4, 256)
    spec = build_concomitant(op)
    phi = GridFunction.from_callable(g, lambda x: np.sin(x) + 0.5)
    psi = GridFunction.from_callable(g, lambda x: np.exp(1j * 0.7 * x))
    assert verify_lagrangian_identity(op, spec, phi, psi) < 1e-8


def test_identity_sech_potential_convergence():
    op = DifferentialOperator(1, 1, {(2,): -1.0,
                                     (0,): lambda x: 1 / np.cosh(x) ** 2})
    spec = build_concomitant(op)
    res = []
    for n in (256, 512, 1024):
        g = Grid.line(-6, 6, n)
        phi = GridFunction.from_callable(g, lambda x: np.sin(0.8 * x))
        psi = GridFunction.from_callable(g, lambda x: np.cos(0.9 * x + 0.2))
        res.append(verify_lagrangian_identity(op, spec, phi, psi))
    assert res[-1] < 1e-8
    order = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.mean(order) > 3.5


def test_identity_dirac_2d():
    A = np.array([[1, 0], [0, -1]], dtype=complex)
    B = np.array([[0, 1], [1, 0]], dtype=complex)
    op = DifferentialOperator(2, 2, {(1, 0): A, (0, 1): B}, fd_order=6)
    spec = build_concomitant(op)
    g = Grid.torus(64, dim=2)
    X, Y = g.mesh()
    phi = GridFunction(g, 0.5 * np.stack(
        [np.exp(1j * X) * np.cos(Y), np.sin(X) * np.exp(1j * Y)], axis=-1))
    psi = GridFunction(g, 0.5 * np.stack(
        [np.cos(X) * np.exp(1j * Y), np.exp(1j * (X - Y))], axis=-1))
    assert verify_lagrangian_identity(op, spec, phi, psi) < 5e-7


def test_identity_third_order_and_mixed_terms():
    # exercise the peeling on |alpha| = 3 and a mixed 2D index
    op3 = DifferentialOperator(1, 1, {(3,): 1.0, (1,): lambda x: np.sin(x)})
    spec3 = build_concomitant(op3)
    g = Grid.line(-4, 4, 1024)
    phi = GridFunction.from_callable(g, lambda x: np.exp(-x ** 2 / 6))
    psi = GridFunction.from_callable(g, lambda x: np.sin(x))
    assert verify_lagrangian_identity(op3, spec3, phi, psi) < 1e-7

    opm = DifferentialOperator(2, 1, {(1, 1): 1.0, (0, 0): 0.5})
    specm = build_concomitant(opm)
    gt = Grid.torus(96, dim=2)
    X, Y = gt.mesh()
    phi2 = GridFunction(gt, (np.cos(X + Y))[..., None])
    psi2 = GridFunction(gt, (np.exp(1j * X) * np.cos(Y))[..., None])
    assert verify_lagrangian_identity(opm, specm, phi2, psi2) < 5e-5


# -- starred spec ---------------------------------------------------------------

def test_conjugate_transposed_spec_swaps_arguments():
    op = DifferentialOperator(1, 2, {
        (2,): np.array([[-1.0, 0.2j], [-0.2j, -1.0]]),
        (1,): np.array([[0.0, 1.0], [1.0, 0.0]])})
    spec = build_concomitant(op)
    star = conjugate_transpose_spec(spec)
    g = Grid.line(-2, 2, 256)
    phi = GridFunction.from_callable(
        g, lambda x: np.stack([np.exp(1j * x), np.cos(x)], axis=-1), channels=2)
    psi = GridFunction.from_callable(
        g, lambda x: np.stack([np.sin(x), np.exp(0.2 * x)], axis=-1), channels=2)
    z_star = evaluate_concomitant(star, phi, psi)[0]
    z_swap = evaluate_concomitant(spec, psi, phi)[0]
    assert np.max(np.abs(z_star - np.conj(z_swap))[8:-8]) < 1e-10


# -- potential forms -------------------------------------------------------------

def test_potential_form_degenerates_in_1d():
    spec = build_concomitant(MINUS_D2)
    g = Grid.line(-2, 2, 128)
    phi = GridFunction.from_callable(g, lambda x: np.exp(0.3 * x))
    psi = GridFunction.from_callable(g, lambda x: np.exp(0.5 * x))
    pot = potential_form(spec, phi, psi)
    z = evaluate_concomitant(spec, phi, psi)[0]
    np.testing.assert_allclose(pot.values.scalar(), z, atol=1e-14)
    assert pot.loop_residual == 0.0


def _transport_setup(a=2.0):
    # L = dx + dy: null pair phi = 1, psi = e^{ia(x-y)}
    op = DifferentialOperator(2, 1, {(1, 0): 1.0, (0, 1): 1.0})
    spec = build_concomitant(op)
    g = Grid.box((0, 0), (1, 1), (96, 96))
    X, Y = g.mesh()
    phi = GridFunction(g, np.ones_like(X)[..., None])
    return op, spec, g, X, Y, phi


def test_potential_form_closed_pair_analytic_oracle():
    a = 2.0
    op, spec, g, X, Y, phi = _transport_setup(a)
    psi = GridFunction(g, np.exp(1j * a * (X - Y))[..., None])
    pot = potential_form(spec, phi, psi, basepoint=(0, 0))
    # oracle: Z-form = -psi dy + psi dx has potential e^{ia(x-y)}/(ia)
    F = np.exp(1j * a * (X - Y)) / (1j * a)
    expect = F - F[0, 0]
    assert pot.loop_residual < 1e-8
    assert np.max(np.abs(pot.values.scalar() - expect)) < 1e-7


def test_potential_form_rejects_non_null_pair():
    a = 2.0
    op, spec, g, X, Y, phi = _transport_setup(a)
    bad = GridFunction(g, np.exp(1j * a * (X + 0.5 * Y))[..., None])
    with pytest.raises(ClosednessError) as err:
        potential_form(spec, phi, bad, basepoint=(0, 0))
    assert err.value.residual > 1e-2


def test_potential_form_path_independence_scales_with_h():
    a = 2.0
    loops = []
    for n in (48, 96):
        op = DifferentialOperator(2, 1, {(1, 0): 1.0, (0, 1): 1.0})
        spec = build_concomitant(op)
        g = Grid.box((0, 0), (1, 1), (n, n))
        X, Y = g.mesh()
        phi = GridFunction(g, np.ones_like(X)[..., None])
        psi = GridFunction(g, np.exp(1j * a * (X - Y))[..., None])
        pot = potential_form(spec, phi, psi, basepoint=(0, 0))
        loops.append(pot.loop_residual)
    assert loops[1] < loops[0]


def test_spec_serialization_is_deterministic():
    spec = build_concomitant(MINUS_D2)
    assert spec.to_json() == build_concomitant(MINUS_D2).to_json()
    assert '"i": 1' in spec.to_json()


def test_spec_serialization_golden_files():
    import pathlib
    fixtures = pathlib.Path(__file__).parent / "fixtures"
    spec = build_concomitant(MINUS_D2)
    assert spec.to_json() + "\n" == (fixtures / "wronskian_form.json").read_text()
    A = np.array([[1, 0], [0, -1]], dtype=complex)
    B = np.array([[0, 1], [1, 0]], dtype=complex)
    op = DifferentialOperator(2, 2, {(1, 0): A, (0, 1): B})
    assert build_concomitant(op).to_json() + "\n" == \
        (fixtures / "dirac_form.json").read_text()
