"""Spectral families, kernel matrices and Delsarte transmutation operators.

The 1D realization rests on the pairing kernel

    K(x)[i, j] = C[i, j] + int_{x0}^{x} <phi_i(t), psi_j(t)> dt,

where phi_i are adjoint null functions (L* phi = conj(s_i) phi after the
per-label eigenvalue shift) and psi_j direct ones.  With the transformed
family  psi~ = psi K^{-1} C  the operator

    (Omega f)(x) = f(x) - sum_ij psi~_i(x) [C^{-1}]_ij int_{x0}^x <phi_j, f> dt

is an invertible Volterra-type map anchored at the base point x0; its
inverse has the same shape with the roles of the two families swapped, the
transformed base kernel being -C, and the transformed kernels satisfying
the invariance relation  K~ (x) = -C K(x)^{-1} C.

A second, point-evaluation kernel (the Wronskian-type concomitant value
Z_1[phi_i, psi_j](x)) is exposed for diagnostics; it is constant in x
whenever both families are genuine null functions of the same operator, so
it cannot drive a nontrivial transmutation and is not used by the operator.
In 2D, kernels are potential-form evaluations anchored at the base point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .concomitant import ConcomitantSpec, evaluate_concomitant, potential_form
from .diffop import DifferentialOperator, OperatorAction, apply_operator
from .grids import Grid, GridFunction
from .stencils import cumulative_integral, differentiate

__all__ = [
    "SpectralLabel",
    "SpectralFamily",
    "FamilyResidualError",
    "KernelDegenerateError",
    "make_family",
    "soliton_family",
    "multi_soliton_family",
    "oscillatory_family",
    "random_family",
    "KernelMatrix",
    "kernel_matrix",
    "DelsarteOperator",
    "delsarte_apply_spectral",
    "conjugate_operator",
    "CoefficientProbeReport",
    "intertwining_residual",
    "crum_transform",
    "WronskianZeroError",
    "kernel_invariance_check",
    "KernelInvarianceReport",
]


class FamilyResidualError(ValueError):
    """Candidate family members fail the shifted null-function residual check."""


class KernelDegenerateError(ValueError):
    """Kernel matrix is singular or beyond the configured condition cap."""


class WronskianZeroError(ValueError):
    """Seed Wronskian crosses zero on the grid interior."""


@dataclass(frozen=True)
class SpectralLabel:
    """One spectral point: its value, eigenvalue shift, and quadrature weight."""

    value: complex
    shift: complex = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("spectral weights must be strictly positive")


@dataclass(frozen=True)
class SpectralFamily:
    """A finite spectral set with its null-function grids.

    psi[i] solves (L - shift_i) psi = 0 and phi[i] solves the formally
    adjoint equation (L - shift_i)* phi = 0; residuals are checked against
    the family tolerance at construction via ``validate``.  For 1D
    families, ``pair_primitive`` optionally holds analytic antiderivatives
    P[i, j] with dP/dx = <phi_i, psi_j>; quadrature is used otherwise.
    """

    grid: Grid
    labels: tuple[SpectralLabel, ...]
    psi: np.ndarray = field(repr=False)    # (nlab, *shape, N)
    phi: np.ndarray = field(repr=False)
    boundary_tag: str = "unspecified"
    pair_primitive: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("a spectral family needs at least one label")
        psi = np.asarray(self.psi, dtype=complex)
        phi = np.asarray(self.phi, dtype=complex)
        if psi.ndim == self.grid.dim + 1:
            psi = psi[..., None]
        if phi.ndim == self.grid.dim + 1:
            phi = phi[..., None]
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "phi", phi)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def channels(self) -> int:
        return self.psi.shape[-1]

    @property
    def weights(self) -> np.ndarray:
        return np.array([l.weight for l in self.labels])

    @property
    def shifts(self) -> np.ndarray:
        return np.array([l.shift for l in self.labels], dtype=complex)

    def member(self, i: int, side: str = "psi") -> GridFunction:
        vals = self.psi[i] if side == "psi" else self.phi[i]
        return GridFunction(self.grid, vals)

    def residuals(self, op: DifferentialOperator, band: int | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
        """Interior residual norms of (L - s_i) psi_i and (L - s_i)* phi_i."""
        from .diffop import formal_adjoint
        if band is None:
            band = 3 * op.halo()
        rp, rq = [], []
        for i, lab in enumerate(self.labels):
            shifted = op.shifted(lab.shift)
            res = apply_operator(shifted, self.member(i, "psi"))
            rp.append(res.norm_max(band) / max(self.member(i).norm_max(band), 1e-300))
            adj = formal_adjoint(shifted)
            res = apply_operator(adj, self.member(i, "phi"))
            rq.append(res.norm_max(band)
                      / max(self.member(i, "phi").norm_max(band), 1e-300))
        return np.array(rp), np.array(rq)

    def validate(self, op: DifferentialOperator, tol: float = 1e-8,
                 band: int | None = None) -> "SpectralFamily":
        rp, rq = self.residuals(op, band)
        bad = [i for i in range(self.size) if rp[i] > tol or rq[i] > tol]
        if bad:
            worst = max(max(rp[i], rq[i]) for i in bad)
            raise FamilyResidualError(
                f"labels {bad} fail the null-function residual check "
                f"(worst {worst:.3e} > tol {tol:.1e})")
        return self


# ---------------------------------------------------------------------------
# family recipes
# ---------------------------------------------------------------------------

def soliton_family(grid: Grid, kappa: float) -> SpectralFamily:
    """Single-label family for L = -d2 + kappa^2: phi = psi = sqrt(kappa) e^(kappa x).

    The pairing kernel is e^(2 kappa x)/2 up to its base constant, whose
    determinant is proportional to cosh(kappa x): the cosh-seed data of the
    classical one-soliton Darboux transform.
    """
    x = grid.axis(0)
    e = np.sqrt(kappa) * np.exp(kappa * x)
    prim = (np.exp(2 * kappa * x) / 2.0)[None, None, :]
    return SpectralFamily(grid, (SpectralLabel(kappa, 0.0),), e[None, :], e[None, :],
                          boundary_tag=f"decaying-left kappa={kappa}",
                          pair_primitive=prim)


def multi_soliton_family(grid: Grid, kappas: Sequence[float]) -> SpectralFamily:
    """Reflectionless family phi_i = psi_i = sqrt(k_i) e^(k_i x).

    Relative to the operator L = -d2 + kappa_0^2 with kappa_0 = kappas[0],
    label i carries the eigenvalue shift kappa_0^2 - k_i^2, so every member
    is a null function of its shifted operator.  The pairing kernel is the
    classical Cauchy-type multi-soliton kernel.
    """
    x = grid.axis(0)
    k = np.asarray(kappas, dtype=float)
    base = k[0] ** 2
    funcs = np.sqrt(k)[:, None] * np.exp(k[:, None] * x[None, :])
    ksum = k[:, None] + k[None, :]
    prim = (np.sqrt(np.outer(k, k))[:, :, None]
            * np.exp(ksum[:, :, None] * x[None, None, :]) / ksum[:, :, None])
    labels = tuple(SpectralLabel(ki, base - ki ** 2) for ki in k)
    return SpectralFamily(grid, labels, funcs, funcs,
                          boundary_tag="decaying-left multi-kappa",
                          pair_primitive=prim)


def oscillatory_family(grid: Grid, nus: Sequence[float], base_shift: float = 0.0,
                       weights: Sequence[float] | None = None) -> SpectralFamily:
    """Bounded plane-wave labels phi_i = psi_i = e^(i nu_i x).

    Each label carries the eigenvalue shift base_shift + nu^2, which makes
    the wave a null function of the shifted operator when L = -d2 + v0 and
    base_shift = v0.
    """
    x = grid.axis(0)
    nus = np.asarray(nus, dtype=float)
    funcs = np.exp(1j * nus[:, None] * x[None, :])
    n = len(nus)
    prim = np.zeros((n, n, len(x)), dtype=complex)
    for i in range(n):
        for j in range(n):
            d = nus[j] - nus[i]
            prim[i, j] = x if d == 0 else np.exp(1j * d * x) / (1j * d)
    if weights is None:
        weights = [1.0] * n
    labels = tuple(SpectralLabel(nu, base_shift + nu ** 2, w)
                   for nu, w in zip(nus, weights))
    return SpectralFamily(grid, labels, funcs, funcs,
                          boundary_tag="oscillatory", pair_primitive=prim)


def random_family(grid: Grid, size: int, rng: np.random.Generator,
                  scale: float = 1.0) -> SpectralFamily:
    """Smooth random functions that are NOT null functions: negative control."""
    x = grid.axis(0)
    span = grid.hi[0] - grid.lo[0]
    funcs = np.zeros((size, len(x)), dtype=complex)
    for i in range(size):
        for _ in range(3):
            om = rng.uniform(0.5, 2.0) * 2 * np.pi / span * 4
            funcs[i] += (rng.normal() * np.cos(om * x)
                         + 1j * rng.normal() * np.sin(om * x))
        funcs[i] *= scale
    labels = tuple(SpectralLabel(i, 0.0) for i in range(size))
    return SpectralFamily(grid, labels, funcs, np.conj(funcs),
                          boundary_tag="random-non-null")


def _ode_null_function(op: DifferentialOperator, grid: Grid, shift: complex,
                       init: tuple[complex, complex], adjoint: bool) -> np.ndarray:
    """Numerically integrate (L - shift) u = 0 for a 1D scalar order-2 operator
    of the form -u'' + v(x) u = shift u (self-adjoint leading part assumed)."""
    from scipy.integrate import solve_ivp

    from .diffop import formal_adjoint
    target = formal_adjoint(op.shifted(shift)) if adjoint else op.shifted(shift)
    zero = (0,) * op.dim
    v = target.terms.get(zero)
    vv = v.sample(grid)[..., 0, 0] if v is not None else np.zeros(grid.shape)
    x = grid.axis(0)
    vfun = lambda t: np.interp(t, x, vv.real) + 1j * np.interp(t, x, vv.imag)

    def rhs(t, y):
        return [y[1], vfun(t) * y[0]]

    sol = solve_ivp(rhs, (x[0], x[-1]), [complex(c) for c in init], t_eval=x,
                    rtol=1e-12, atol=1e-12, method="DOP853")
    if not sol.success:
        raise FamilyResidualError(f"ODE integration failed: {sol.message}")
    return sol.y[0]


def make_family(op: DifferentialOperator, recipe: dict, grid: Grid,
                tol: float = 1e-7) -> SpectralFamily:
    """Build and validate a spectral family from a recipe dictionary.

    Recipes: {"kind": "soliton", "kappa": k}
             {"kind": "multi-soliton", "kappas": [...]}
             {"kind": "oscillatory", "nus": [...], "base_shift": v0}
             {"kind": "plane-wave", "k": k}             (unshifted; rejected)
             {"kind": "ode", "shifts": [...], "inits": [[u, u'], ...]}
             {"kind": "exponential-2d", "labels": [[a, b], ...]}  (Dirac-type)
    """
    kind = recipe["kind"]
    if kind == "soliton":
        fam = soliton_family(grid, recipe["kappa"])
    elif kind == "multi-soliton":
        fam = multi_soliton_family(grid, recipe["kappas"])
    elif kind == "oscillatory":
        fam = oscillatory_family(grid, recipe["nus"], recipe.get("base_shift", 0.0),
                                 recipe.get("weights"))
    elif kind == "plane-wave":
        x = grid.axis(0)
        k = recipe["k"]
        f = np.exp(1j * k * x)[None, :]
        fam = SpectralFamily(grid, (SpectralLabel(k, 0.0),), f, f,
                             boundary_tag="plane-wave unshifted")
    elif kind == "ode":
        shifts = recipe["shifts"]
        inits = recipe["inits"]
        psi = np.stack([_ode_null_function(op, grid, s, tuple(i0), False)
                        for s, i0 in zip(shifts, inits)])
        phi = np.stack([_ode_null_function(op, grid, s, tuple(i0), True)
                        for s, i0 in zip(shifts, inits)])
        labels = tuple(SpectralLabel(s, s) for s in shifts)
        fam = SpectralFamily(grid, labels, psi, phi, boundary_tag="ode")
    elif kind == "exponential-2d":
        fam = _dirac_family(op, grid, recipe["labels"])
    else:
        raise ValueError(f"unknown family recipe kind {kind!r}")
    return fam.validate(op, tol)


def _dirac_family(op: DifferentialOperator, grid: Grid,
                  labels: Sequence[Sequence[complex]]) -> SpectralFamily:
    """Null functions  w exp(i a x + i b y)  of a constant first-order system
    A dx + B dy: w spans the null space of i a A + i b B (a 2x2 computation
    per label)."""
    A = op.terms[(1, 0)].sample(grid)[(0,) * grid.dim]
    B = op.terms[(0, 1)].sample(grid)[(0,) * grid.dim]
    X, Y = grid.mesh()
    psi, phi, labs = [], [], []
    for a, b in labels:
        M = 1j * complex(a) * A + 1j * complex(b) * B
        _, sv, vh = np.linalg.svd(M)
        if sv[-1] > 1e-10 * sv[0]:
            raise FamilyResidualError(
                f"label ({a}, {b}) is not characteristic: min singular value "
                f"{sv[-1]:.3e}")
        w = np.conj(vh[-1])
        wave = np.exp(1j * (complex(a) * X + complex(b) * Y))
        psi.append(wave[..., None] * w)
        # adjoint side: null vector of the conjugate-transposed symbol
        _, sv2, vh2 = np.linalg.svd(M.conj().T)
        wstar = np.conj(vh2[-1])
        phi.append(np.exp(-1j * (np.conj(complex(a)) * X
                                 + np.conj(complex(b)) * Y))[..., None] * wstar)
        labs.append(SpectralLabel(complex(a), 0.0))
    return SpectralFamily(grid, tuple(labs), np.stack(psi), np.stack(phi),
                          boundary_tag="dirac-plane-wave")


# ---------------------------------------------------------------------------
# kernel matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelMatrix:
    """|Sigma| x |Sigma| kernel values at one anchor point."""

    values: np.ndarray = field(repr=False)
    point: tuple[float, ...]
    side: str = "plain"           # "plain" or "star"
    kind: str = "pairing"         # "pairing" or "wronskian"
    cond: float = field(default=0.0)
    cond_cap: float = 1e12

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", v)
        c = float(np.linalg.cond(v))
        object.__setattr__(self, "cond", c)
        if not np.isfinite(c) or c > self.cond_cap:
            raise KernelDegenerateError(
                f"kernel at {self.point} is degenerate: cond = {c:.3e}")

    def conjugate_transpose(self) -> "KernelMatrix":
        return KernelMatrix(np.conj(self.values).T, self.point,
                            "star" if self.side == "plain" else "plain",
                            self.kind, cond_cap=self.cond_cap)


def _weighted(values: np.ndarray, fam: SpectralFamily) -> np.ndarray:
    # Nystrom convention: the integration-variable weight folds into columns
    return values * fam.weights[None, :]


def _pair_density(fam: SpectralFamily) -> np.ndarray:
    """<phi_i, psi_j>(x): shape (n, n, *grid)."""
    return np.einsum("i...c,j...c->ij...", np.conj(fam.phi), fam.psi)


def pairing_kernels(fam: SpectralFamily, x0_index: int,
                    base: np.ndarray | None = None,
                    quad_order: int = 6) -> np.ndarray:
    """K(x) = C + P(x) - P(x0) over the whole grid; shape (*grid, n, n)."""
    n = fam.size
    if fam.grid.dim != 1:
        raise ValueError("pairing kernels over the full grid are 1D only")
    if fam.pair_primitive is not None:
        P = fam.pair_primitive
    else:
        dens = _pair_density(fam)
        h = fam.grid.spacing[0]
        P = cumulative_integral(dens, h, quad_order, axis=-1)
    if base is None:
        base = np.eye(n, dtype=complex)
    K = np.moveaxis(P - P[:, :, x0_index][:, :, None], -1, 0) + base
    return K


def kernel_matrix(fam: SpectralFamily, x_index, x0_index=0, *,
                  base: np.ndarray | None = None, spec: ConcomitantSpec | None = None,
                  kind: str = "pairing", side: str = "plain",
                  cond_cap: float = 1e12, quad_order: int = 6) -> KernelMatrix:
    """Kernel matrix of the family at a grid point.

    kind = "pairing":   C + int_{x0}^{x} <phi_i, psi_j> dt      (1D)
                        potential-form evaluation anchored at x0 (2D)
    kind = "wronskian": point evaluation of the concomitant Z_1[phi_i, psi_j]
                        (1D diagnostics; requires ``spec``)
    side = "star":      conjugate-transposed kernel per the starred pairing.
    """
    n = fam.size
    grid = fam.grid
    if grid.dim == 1 and isinstance(x_index, (int, np.integer)):
        x_index = int(x_index)
    if kind == "wronskian":
        if spec is None:
            raise ValueError("wronskian kernels need the concomitant spec")
        vals = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                z = evaluate_concomitant(spec, fam.member(i, "phi"),
                                         fam.member(j, "psi"))
                vals[i, j] = z[0][x_index] if grid.dim == 1 else z[0][tuple(x_index)]
    elif kind == "pairing":
        if grid.dim == 1:
            K = pairing_kernels(fam, x0_index, base, quad_order)
            vals = K[x_index]
        else:
            if spec is None:
                raise ValueError("2D pairing kernels need the concomitant spec")
            vals = np.zeros((n, n), dtype=complex)
            for i in range(n):
                for j in range(n):
                    pot = potential_form(spec, fam.member(i, "phi"),
                                         fam.member(j, "psi"), tuple(x0_index))
                    vals[i, j] = pot.values.scalar()[tuple(x_index)]
            if base is not None:
                vals = vals + base
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    vals = _weighted(vals, fam)
    point = grid.point(x_index if isinstance(x_index, tuple) else (x_index,))
    km = KernelMatrix(vals, point, "plain", kind, cond_cap=cond_cap)
    return km.conjugate_transpose() if side == "star" else km


def delsarte_apply_spectral(fam: SpectralFamily, kernel_x: KernelMatrix,
                            kernel_x0: KernelMatrix) -> np.ndarray:
    """Transformed family values at the kernel point: psi~ = psi K(x)^-1 K(x0).

    Exact matrix algebra; at x = x0 this is the identity on the family.
    """
    grid = fam.grid
    idx = tuple(int(np.argmin(np.abs(grid.axis(j) - kernel_x.point[j])))
                for j in range(grid.dim))
    vals = fam.psi[(slice(None),) + idx]
    M = np.linalg.solve(kernel_x.values, kernel_x0.values)
    return np.einsum("ic,ij->jc", vals, M)


# ---------------------------------------------------------------------------
# the Delsarte operator
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DelsarteOperator:
    """Volterra-type transmutation operator assembled from a spectral family.

    Immutable after construction.  ``base_kernel`` is the constant kernel
    C = K(x0), the identity by default.  Singular points of det K(x) are
    detected at assembly and reported; they are physical (poles of Darboux
    transforms) and make the operator unusable on the affected grid.
    """

    fam: SpectralFamily
    x0_index: int = 0
    base_kernel: np.ndarray | None = None
    quad_order: int = 6
    cond_cap: float = 1e12
    det_floor: float = 1e-10

    def __post_init__(self):
        fam = self.fam
        grid = fam.grid
        if grid.dim != 1:
            raise ValueError("DelsarteOperator is realized on 1D grids")
        n = fam.size
        if self.base_kernel is None:
            C = np.eye(n, dtype=complex)
        else:
            C = np.asarray(self.base_kernel, dtype=complex)
        # spectral-measure weights cancel identically in the operator algebra
        # (they conjugate every kernel product diagonally), so the assembled
        # operator works with plain pairing values
        self.C = C
        K = pairing_kernels(fam, self.x0_index, C, self.quad_order)
        self.K = K
        dets = np.linalg.det(K)
        scale = np.max(np.abs(K), axis=(1, 2)) ** n
        tiny = np.abs(dets) < self.det_floor * scale
        # an essentially-real determinant changing sign between nodes has a
        # zero crossing even when no node lands on it
        realish = np.abs(dets.imag) <= 1e-8 * np.abs(dets)
        cross = np.zeros(len(dets), dtype=bool)
        cross[:-1] = (realish[:-1] & realish[1:]
                      & (dets.real[:-1] * dets.real[1:] < 0))
        self.singular = np.where(tiny | cross)[0]
        if len(self.singular):
            raise KernelDegenerateError(
                f"kernel determinant vanishes at grid indices "
                f"{self.singular[:8].tolist()} (poles of the transform)")
        cond0 = np.linalg.cond(self.C)
        if cond0 > self.cond_cap:
            raise KernelDegenerateError(f"base kernel cond = {cond0:.3e}")
        self.Kinv = np.linalg.inv(K)
        self.Cinv = np.linalg.inv(self.C)
        # transformed families: psi~ = psi K^-1 C ; conj(phi~) = C K^-1 conj(phi)
        psi = fam.psi[..., 0]
        phi = fam.phi[..., 0]
        self.psit = np.einsum("ix,xij,jk->kx", psi, self.Kinv, self.C)
        self.phit_bar = np.einsum("ij,xjk,kx->ix", self.C, self.Kinv, np.conj(phi))
        self.Ctil = -self.C

    # -- actions ---------------------------------------------------------

    @property
    def grid(self) -> Grid:
        return self.fam.grid

    @property
    def x0(self) -> float:
        return self.grid.axis(0)[self.x0_index]

    def _cum(self, dens: np.ndarray) -> np.ndarray:
        h = self.grid.spacing[0]
        c = cumulative_integral(dens, h, self.quad_order, axis=-1)
        return c - c[..., self.x0_index][..., None]

    def apply(self, f: GridFunction | np.ndarray) -> GridFunction | np.ndarray:
        """Omega f = f - sum psi~_i [C^-1]_ij int_{x0}^x <phi_j, f>."""
        vals = f.scalar() if isinstance(f, GridFunction) else np.asarray(f, complex)
        r = self._cum(np.conj(self.fam.phi[..., 0]) * vals[None, :])
        out = vals - np.einsum("kx,kj,jx->x", self.psit, self.Cinv, r)
        if isinstance(f, GridFunction):
            return GridFunction(f.grid, out[..., None])
        return out

    def apply_inverse(self, g: GridFunction | np.ndarray) -> GridFunction | np.ndarray:
        """Mirrored form with swapped families and base kernel -C (exact inverse)."""
        vals = g.scalar() if isinstance(g, GridFunction) else np.asarray(g, complex)
        r = self._cum(self.phit_bar * vals[None, :])
        out = vals + np.einsum("kx,kj,jx->x", self.fam.psi[..., 0], self.Cinv, r)
        if isinstance(g, GridFunction):
            return GridFunction(g.grid, out[..., None])
        return out

    def action(self) -> OperatorAction:
        return OperatorAction(self.apply, 1, 1, "delsarte transmutation")

    def inverse_action(self) -> OperatorAction:
        return OperatorAction(self.apply_inverse, 1, 1, "inverse transmutation")

    # -- kernels and transformed data -------------------------------------

    def kernel_at(self, x_index: int) -> KernelMatrix:
        return KernelMatrix(self.K[x_index], self.grid.point((x_index,)),
                            cond_cap=self.cond_cap)

    def transformed_kernel(self, x_index: int) -> np.ndarray:
        """K~(x) = -C K(x)^-1 C (kernel invariance relation)."""
        return -self.C @ self.Kinv[x_index] @ self.C

    def transformed_family(self) -> SpectralFamily:
        """Family (psi~, phi~) with its own pairing primitive K~ - C~."""
        Ktil = -np.einsum("ij,xjk,kl->ilx", self.C, self.Kinv, self.C)
        return SpectralFamily(
            self.fam.grid, self.fam.labels, self.psit, np.conj(self.phit_bar),
            boundary_tag=f"transformed({self.fam.boundary_tag})",
            pair_primitive=Ktil)

    def potential_update(self) -> np.ndarray:
        """The conjugation acts on -d2 + v as v -> v - 2 d/dx (psi~ C^-1 phibar)."""
        h = self.grid.spacing[0]
        diag = np.einsum("kx,kj,jx->x", self.psit, self.Cinv,
                         np.conj(self.fam.phi[..., 0]))
        return -2.0 * differentiate(diag, 0, 1, h, False, 6)


def conjugate_operator(op: DifferentialOperator, delsarte: DelsarteOperator,
                       probe_count: int | None = None,
                       window_margin: float = 0.12) -> tuple[OperatorAction,
                                                             "CoefficientProbeReport"]:
    """The conjugated operator L~ = Omega L Omega^-1 as an opaque action,
    plus local coefficients fitted from windowed monomial probes."""

    def act(f: GridFunction) -> GridFunction:
        return delsarte.apply(apply_operator(op, delsarte.apply_inverse(f)))

    action = OperatorAction(act, op.dim, op.channels, "conjugated operator")
    report = probe_coefficients(action, op, delsarte.grid, probe_count,
                                window_margin)
    return action, report


@dataclass(frozen=True)
class CoefficientProbeReport:
    """Pointwise least-squares fit of local coefficients c_d(x) from probes."""

    grid: Grid
    coefficients: np.ndarray = field(repr=False)   # (order+1, npts)
    fit_mask: np.ndarray = field(repr=False)

    def coefficient(self, d: int) -> np.ndarray:
        return self.coefficients[d]


def _flat_window(grid: Grid, margin: float) -> np.ndarray:
    """C-infinity window: exactly 1 on the bulk, 0 near the open edges."""
    x = grid.axis(0)
    a, b = grid.lo[0], grid.hi[0]
    d = margin * (b - a)

    def cutoff(t):
        out = np.zeros_like(t)
        rising = (t > 0) & (t < 1)
        left = np.exp(-1.0 / np.clip(t[rising], 1e-300, None))
        right = np.exp(-1.0 / np.clip(1 - t[rising], 1e-300, None))
        out[rising] = left / (left + right)
        out[t >= 1] = 1.0
        return out

    return cutoff((x - a) / d) * cutoff((b - x) / d)


def probe_coefficients(action: OperatorAction, op: DifferentialOperator,
                       grid: Grid, probe_count: int | None = None,
                       window_margin: float = 0.12) -> CoefficientProbeReport:
    order = max(op.order, 1)
    nprobe = probe_count or (order + 3)
    x = grid.axis(0)
    w = _flat_window(grid, window_margin)
    span = grid.hi[0] - grid.lo[0]
    xc = 0.5 * (grid.lo[0] + grid.hi[0])
    probes = [w * ((x - xc) / span * 4) ** d for d in range(order + 1)]
    for k in range(nprobe - len(probes)):
        om = 2 * np.pi * (k + 1) / span
        probes.append(w * np.cos(om * (x - xc)))
    h = grid.spacing[0]
    rows = []
    outs = []
    for pvals in probes:
        derivs = [pvals.astype(complex)]
        for d in range(1, order + 1):
            derivs.append(differentiate(pvals.astype(complex), 0, d, h, False, 6))
        rows.append(np.stack(derivs, axis=-1))          # (npts, order+1)
        outs.append(action(GridFunction(grid, pvals[:, None])).scalar())
    A = np.stack(rows, axis=1)                           # (npts, nprobe, order+1)
    bvec = np.stack(outs, axis=1)                        # (npts, nprobe)
    fit_mask = w > 1 - 1e-12
    coeffs = np.zeros((order + 1, len(x)), dtype=complex)
    idx = np.where(fit_mask)[0]
    for i in idx:
        sol, *_ = np.linalg.lstsq(A[i], bvec[i], rcond=None)
        coeffs[:, i] = sol
    return CoefficientProbeReport(grid, coeffs, fit_mask)


def intertwining_residual(op: DifferentialOperator,
                          conjugated: OperatorAction | DifferentialOperator,
                          delsarte: DelsarteOperator,
                          probes: Sequence[GridFunction],
                          band: int | None = None) -> float:
    """max over probes of || Lt(Omega f) - Omega(L f) ||_2 / ||f||_2."""
    if isinstance(conjugated, DifferentialOperator):
        tilde = lambda f: apply_operator(conjugated, f)
    else:
        tilde = conjugated
    if band is None:
        band = 3 * op.halo()
    worst = 0.0
    for f in probes:
        lhs = tilde(delsarte.apply(f))
        rhs = delsarte.apply(apply_operator(op, f))
        worst = max(worst, (lhs - rhs).norm_l2(band) / f.norm_l2(band))
    return worst


# ---------------------------------------------------------------------------
# classical Darboux/Crum cross-check
# ---------------------------------------------------------------------------

def crum_transform(v: GridFunction | np.ndarray, seeds: Sequence[np.ndarray],
                   grid: Grid | None = None, fd_order: int = 6,
                   wronskian_floor: float = 1e-12) -> np.ndarray:
    """Crum formula: v~ = v - 2 (d2/dx2) log W(f_1, ..., f_K).

    The Wronskian is differentiated without taking logs:
    (log W)'' = (W'' W - W'^2) / W^2.  Raises WronskianZeroError when W
    crosses zero on the interior (the transform has a pole there).
    """
    if isinstance(v, GridFunction):
        grid = v.grid
        vv = v.scalar()
    else:
        vv = np.asarray(v, dtype=complex)
        if grid is None:
            raise ValueError("grid required when v is a bare array")
    h = grid.spacing[0]
    K = len(seeds)
    rows = []
    for s in seeds:
        s = np.asarray(s, dtype=complex)
        drow = [s]
        for d in range(1, K):
            drow.append(differentiate(s, 0, d, h, grid.periodic, fd_order))
        rows.append(np.stack(drow))
    M = np.stack(rows)                       # (K, K, npts): M[i, d] = D^d f_i
    W = np.linalg.det(np.moveaxis(M, -1, 0)) if K > 1 else rows[0][0]
    band = 3 * fd_order
    interior = slice(band, len(W) - band)
    if np.min(np.abs(W[interior])) < wronskian_floor * np.max(np.abs(W[interior])):
        raise WronskianZeroError("seed Wronskian vanishes on the grid interior")
    W1 = differentiate(W, 0, 1, h, grid.periodic, fd_order)
    W2 = differentiate(W, 0, 2, h, grid.periodic, fd_order)
    return vv - 2.0 * (W2 * W - W1 ** 2) / W ** 2


# ---------------------------------------------------------------------------
# kernel invariance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelInvarianceReport:
    sample_indices: tuple[int, ...]
    residuals: np.ndarray
    sign_residual: float

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))


def kernel_invariance_check(delsarte: DelsarteOperator,
                            sample_indices: Sequence[int]) -> KernelInvarianceReport:
    """Compare K~(x) computed from the transformed family by quadrature with
    the matrix-algebra invariance relation  K~ = -C K(x)^-1 C , and check the
    sign relation K~(x0) = -C."""
    # density of the transformed pairing: <phi~_i, psi~_j> = conj(phi~) psi~
    dens = np.einsum("ix,jx->ijx", delsarte.phit_bar, delsarte.psit)
    h = delsarte.grid.spacing[0]
    P = cumulative_integral(dens, h, delsarte.quad_order, axis=-1)
    P = P - P[:, :, delsarte.x0_index][:, :, None]
    normC = np.linalg.norm(delsarte.C)
    res = []
    for ix in sample_indices:
        quad = delsarte.Ctil + P[:, :, ix]
        alg = delsarte.transformed_kernel(ix)
        res.append(np.linalg.norm(quad - alg) / normC)
    sign = float(np.linalg.norm(delsarte.Ctil + delsarte.C) / normC)
    return KernelInvarianceReport(tuple(int(i) for i in sample_indices),
                                  np.array(res), sign)
