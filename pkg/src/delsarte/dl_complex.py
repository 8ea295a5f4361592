"""Discrete generalized de Rham complex for commuting operator families.

Forms of degree k carry one grid function per increasing index subset; the
generalized differential is  d_L beta = sum_j dx_j wedge L_j beta  with the
standard alternating wedge signs.  The Hodge star is the flat Euclidean one
on the periodic grid, the codifferential is the exact matrix adjoint of the
assembled d_L, and the Laplace-Hodge operator, harmonic spaces and Hodge
decomposition follow from plain dense linear algebra at desk scale.

Periodic tori stand in for compactified space throughout: their Betti
numbers are known exactly, which is what the harmonic-dimension checks
compare against.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .diffop import DifferentialOperator, apply_operator, commutator_residual
from .grids import Grid, GridFunction

__all__ = [
    "DiscreteForm",
    "ComplexOperatorFamily",
    "standard_family",
    "d_l",
    "d_l_adjoint_action",
    "laplace_action",
    "d_l_squared_residual",
    "hodge_star",
    "inner_product",
    "AssembledComplex",
    "assemble_complex",
    "laplace_hodge",
    "HarmonicReport",
    "harmonic_report",
    "hodge_decomposition_check",
    "DecompositionReport",
    "chain_pairing",
    "coordinate_loop",
    "random_form",
]


def index_sets(m: int, k: int) -> list[tuple[int, ...]]:
    return list(combinations(range(m), k))


@dataclass(frozen=True)
class DiscreteForm:
    """Degree-k form: one C^N-valued grid function per index subset."""

    grid: Grid
    degree: int
    comps: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        m = self.grid.dim
        if not 0 <= self.degree <= m:
            raise ValueError(f"degree {self.degree} out of range for dim {m}")
        want = len(index_sets(m, self.degree))
        comps = tuple(np.asarray(c, dtype=complex) for c in self.comps)
        if len(comps) != want:
            raise ValueError(f"degree {self.degree} needs {want} components")
        fixed = []
        for c in comps:
            if c.shape == self.grid.shape:
                c = c[..., None]
            if c.shape[:-1] != self.grid.shape:
                raise ValueError("component shape does not match grid")
            fixed.append(c)
        if len({c.shape[-1] for c in fixed} or {1}) > 1:
            raise ValueError("components disagree on channel count")
        object.__setattr__(self, "comps", tuple(fixed))

    @property
    def channels(self) -> int:
        return self.comps[0].shape[-1] if self.comps else 1

    @staticmethod
    def zeros(grid: Grid, degree: int, channels: int = 1) -> "DiscreteForm":
        n = len(index_sets(grid.dim, degree))
        return DiscreteForm(grid, degree, tuple(
            np.zeros(grid.shape + (channels,), complex) for _ in range(n)))

    @staticmethod
    def from_scalar(f: GridFunction) -> "DiscreteForm":
        return DiscreteForm(f.grid, 0, (f.values,))

    def flat(self) -> np.ndarray:
        return np.concatenate([c.ravel() for c in self.comps])

    @staticmethod
    def unflat(grid: Grid, degree: int, channels: int, vec: np.ndarray) -> "DiscreteForm":
        n = len(index_sets(grid.dim, degree))
        block = np.prod(grid.shape) * channels
        comps = [vec[i * block:(i + 1) * block].reshape(grid.shape + (channels,))
                 for i in range(n)]
        return DiscreteForm(grid, degree, tuple(comps))

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(np.abs(c) ** 2) for c in self.comps)
                             * self.grid.cell_volume))

    def __add__(self, o): return DiscreteForm(
        self.grid, self.degree, tuple(a + b for a, b in zip(self.comps, o.comps)))

    def __sub__(self, o): return DiscreteForm(
        self.grid, self.degree, tuple(a - b for a, b in zip(self.comps, o.comps)))

    def __mul__(self, c): return DiscreteForm(
        self.grid, self.degree, tuple(a * c for a in self.comps))

    __rmul__ = __mul__


@dataclass(frozen=True)
class ComplexOperatorFamily:
    """Operators L_1..L_m with verified pairwise commutator residuals."""

    grid: Grid
    ops: tuple[DifferentialOperator, ...]
    commutator_residuals: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def channels(self) -> int:
        return self.ops[0].channels

    @staticmethod
    def verified(grid: Grid, ops: Sequence[DifferentialOperator],
                 probes: Sequence[GridFunction] | None = None,
                 tol: float = 1e-6, rng: np.random.Generator | None = None
                 ) -> "ComplexOperatorFamily":
        if len(ops) != grid.dim:
            raise ValueError("need one operator per axis")
        if probes is None:
            rng = rng or np.random.default_rng(0)
            probes = [_smooth_probe(grid, ops[0].channels, rng) for _ in range(3)]
        m = grid.dim
        res = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                res[i, j] = res[j, i] = commutator_residual(ops[i], ops[j], probes)
        if np.max(res) > tol:
            raise ValueError(
                f"operators do not commute: residual {np.max(res):.3e} > {tol:.1e}")
        return ComplexOperatorFamily(grid, tuple(ops), res)


def _smooth_probe(grid: Grid, channels: int, rng: np.random.Generator) -> GridFunction:
    mesh = grid.mesh()
    vals = np.zeros(grid.shape + (channels,), dtype=complex)
    for c in range(channels):
        acc = np.zeros(grid.shape, dtype=complex)
        for _ in range(3):
            ks = [rng.integers(-2, 3) for _ in range(grid.dim)]
            phase = sum(2 * np.pi * k * (m - grid.lo[j]) / (grid.hi[j] - grid.lo[j])
                        for j, (k, m) in enumerate(zip(ks, mesh)))
            acc += (rng.normal() + 1j * rng.normal()) * np.exp(1j * phase)
        vals[..., c] = acc
    return GridFunction(grid, vals)


def random_form(grid: Grid, degree: int, channels: int,
                rng: np.random.Generator) -> DiscreteForm:
    n = len(index_sets(grid.dim, degree))
    comps = tuple(_smooth_probe(grid, channels, rng).values for _ in range(n))
    return DiscreteForm(grid, degree, comps)


def standard_family(grid: Grid, channels: int = 1) -> ComplexOperatorFamily:
    """L_j = d/dx_j (tensored with the channel identity): the classical complex."""
    ops = []
    for j in range(grid.dim):
        alpha = tuple(1 if i == j else 0 for i in range(grid.dim))
        ops.append(DifferentialOperator(grid.dim, channels,
                                        {alpha: np.eye(channels)}))
    return ComplexOperatorFamily.verified(grid, ops, tol=1e-10)


# ---------------------------------------------------------------------------
# the generalized differential and the flat Hodge star
# ---------------------------------------------------------------------------

def d_l(fam: ComplexOperatorFamily, beta: DiscreteForm) -> DiscreteForm:
    """d_L beta = sum_j dx_j wedge L_j beta with alternating wedge signs."""
    m = fam.dim
    k = beta.degree
    if k >= m:
        raise ValueError(f"d_L undefined on top-degree forms (degree {k}, dim {m})")
    sets_k = index_sets(m, k)
    sets_k1 = index_sets(m, k + 1)
    pos = {s: i for i, s in enumerate(sets_k1)}
    out = [np.zeros(beta.grid.shape + (beta.channels,), complex) for _ in sets_k1]
    for ci, I in enumerate(sets_k):
        comp = GridFunction(beta.grid, beta.comps[ci])
        for j in range(m):
            if j in I:
                continue
            J = tuple(sorted(I + (j,)))
            sign = (-1) ** sum(1 for i in I if i < j)
            out[pos[J]] += sign * apply_operator(fam.ops[j], comp).values
    return DiscreteForm(beta.grid, k + 1, tuple(out))


def d_l_squared_residual(fam: ComplexOperatorFamily,
                         probes: Sequence[DiscreteForm] | None = None,
                         rng: np.random.Generator | None = None) -> float:
    """max normalized || d_L(d_L beta) || over probe forms of degree <= m-2."""
    rng = rng or np.random.default_rng(1)
    if probes is None:
        probes = []
        for k in range(fam.dim - 1):
            probes += [random_form(fam.grid, k, fam.channels, rng) for _ in range(2)]
    worst = 0.0
    for beta in probes:
        dd = d_l(fam, d_l(fam, beta))
        worst = max(worst, dd.norm() / max(beta.norm(), 1e-300))
    return worst


_STAR_TABLE = {
    # dim -> degree -> list of (source component, target component, sign)
    1: {0: [(0, 0, 1.0)], 1: [(0, 0, 1.0)]},
    2: {0: [(0, 0, 1.0)],
        1: [(0, 1, 1.0), (1, 0, -1.0)],    # *dx = dy, *dy = -dx
        2: [(0, 0, 1.0)]},
}


def hodge_star(beta: DiscreteForm) -> DiscreteForm:
    """Euclidean Hodge star on the uniform grid (a signed permutation)."""
    m = beta.grid.dim
    k = beta.degree
    table = _STAR_TABLE[m][k]
    nout = len(index_sets(m, m - k))
    out = [None] * nout
    for src, dst, sign in table:
        out[dst] = sign * beta.comps[src]
    return DiscreteForm(beta.grid, m - k, tuple(out))


def inner_product(beta: DiscreteForm, gamma: DiscreteForm) -> complex:
    """<beta, gamma> = integral of conj(beta)^T wedge *gamma: for the flat
    star this is the weighted componentwise sum."""
    if beta.degree != gamma.degree:
        raise ValueError("inner product needs forms of equal degree")
    s = sum(np.sum(np.conj(b) * g) for b, g in zip(beta.comps, gamma.comps))
    return complex(s * beta.grid.cell_volume)


# ---------------------------------------------------------------------------
# matrix-free adjoint and Laplacian (for grids beyond the assembly cap)
# ---------------------------------------------------------------------------

def _discrete_adjoint_apply(op: DifferentialOperator, g: GridFunction) -> GridFunction:
    """Exact adjoint of the discrete apply on periodic grids.

    Centered stencils are real and transpose to (-1)^|alpha| times
    themselves, so L^H g = sum_alpha (-1)^|alpha| D^alpha (conj(a_alpha)^T g)
    holds to machine precision (derivatives applied after multiplication)."""
    from .stencils import differentiate
    if not g.grid.periodic:
        raise ValueError("the matrix-free discrete adjoint needs periodic grids")
    grid = g.grid
    out = np.zeros_like(g.values)
    for alpha, coeff in op.terms.items():
        c = coeff.sample(grid)
        term = np.einsum("...ji,...j->...i", np.conj(c), g.values)
        for axis, k in enumerate(alpha):
            if k:
                term = differentiate(term, axis, k, grid.spacing[axis],
                                     True, op.fd_order)
        sign = (-1) ** sum(alpha)
        out += sign * term
    return GridFunction(grid, out)


def d_l_adjoint_action(fam: ComplexOperatorFamily, gamma: DiscreteForm) -> DiscreteForm:
    """Matrix-free d'_L: the exact adjoint of d_l on periodic grids."""
    m = fam.dim
    k = gamma.degree
    if k == 0:
        raise ValueError("d'_L is undefined on 0-forms")
    sets_k1 = index_sets(m, k - 1)
    sets_k = index_sets(m, k)
    pos = {s: i for i, s in enumerate(sets_k)}
    out = [np.zeros(gamma.grid.shape + (gamma.channels,), complex)
           for _ in sets_k1]
    for ci, I in enumerate(sets_k1):
        for j in range(m):
            if j in I:
                continue
            J = tuple(sorted(I + (j,)))
            sign = (-1) ** sum(1 for i in I if i < j)
            comp = GridFunction(gamma.grid, gamma.comps[pos[J]])
            out[ci] += sign * _discrete_adjoint_apply(fam.ops[j], comp).values
    return DiscreteForm(gamma.grid, k - 1, tuple(out))


def laplace_action(fam: ComplexOperatorFamily, beta: DiscreteForm) -> DiscreteForm:
    """Matrix-free Delta_L = d'_L d_L + d_L d'_L for grids beyond the cap."""
    m = fam.dim
    k = beta.degree
    out = DiscreteForm.zeros(beta.grid, k, beta.channels)
    if k < m:
        out = out + d_l_adjoint_action(fam, d_l(fam, beta))
    if k > 0:
        out = out + d_l(fam, d_l_adjoint_action(fam, beta))
    return out


# ---------------------------------------------------------------------------
# assembled complex, Laplacians, harmonic spaces
# ---------------------------------------------------------------------------

_ASSEMBLY_CAP = 32 * 32


@dataclass(frozen=True)
class AssembledComplex:
    """Dense matrices of d_L per degree plus star/adjoint/Laplacian algebra.

    d[k] maps flattened degree-k forms to degree-(k+1); the adjoint with
    respect to the (uniform-weight) inner product is the conjugate
    transpose, so adjointness holds to machine precision by construction.
    """

    fam: ComplexOperatorFamily
    d: tuple[np.ndarray, ...] = field(repr=False)
    dims: tuple[int, ...]

    @property
    def degrees(self) -> int:
        return self.fam.dim + 1

    def d_matrix(self, k: int) -> np.ndarray:
        return self.d[k]

    def adjoint_matrix(self, k: int) -> np.ndarray:
        """d'_L on degree k+1: exact adjoint of d[k]."""
        return np.conj(self.d[k]).T

    def laplacian(self, k: int) -> np.ndarray:
        n = self.dims[k]
        out = np.zeros((n, n), dtype=complex)
        if k < self.fam.dim:
            out += np.conj(self.d[k]).T @ self.d[k]
        if k > 0:
            out += self.d[k - 1] @ np.conj(self.d[k - 1]).T
        return out

    def star_matrix(self, k: int) -> np.ndarray:
        grid = self.fam.grid
        ch = self.fam.channels
        n = self.dims[k]
        cols = []
        for i in range(n):
            e = np.zeros(n, complex)
            e[i] = 1.0
            cols.append(hodge_star(DiscreteForm.unflat(grid, k, ch, e)).flat())
        return np.stack(cols, axis=1)

    def anti_differential(self, k: int) -> np.ndarray:
        """d*_L = star d'_L star^(-1), mapping degree k to k+1."""
        m = self.fam.dim
        # star^(-1): degree k -> m-k is (-1)^(k(m-k)) times star on degree k
        s_inv = (-1) ** (k * (m - k)) * self.star_matrix(k)
        s_out = self.star_matrix(m - k - 1)     # degree m-k-1 -> k+1
        dprime = np.conj(self.d[m - k - 1]).T   # degree m-k -> m-k-1
        return s_out @ dprime @ s_inv


def assemble_complex(fam: ComplexOperatorFamily) -> AssembledComplex:
    grid = fam.grid
    if grid.npoints > _ASSEMBLY_CAP:
        raise ValueError(
            f"assembled mode capped at {_ASSEMBLY_CAP} grid points; "
            f"use the matrix-free d_l on {grid.npoints}")
    ch = fam.channels
    ds = []
    dims = [len(index_sets(grid.dim, k)) * grid.npoints * ch
            for k in range(grid.dim + 1)]
    for k in range(grid.dim):
        cols = []
        for i in range(dims[k]):
            e = np.zeros(dims[k], complex)
            e[i] = 1.0
            cols.append(d_l(fam, DiscreteForm.unflat(grid, k, ch, e)).flat())
        ds.append(np.stack(cols, axis=1))
    return AssembledComplex(fam, tuple(ds), tuple(dims))


def laplace_hodge(assembled: AssembledComplex, degree: int) -> np.ndarray:
    """Delta_L = d'_L d_L + d_L d'_L on degree-k forms (dense)."""
    return assembled.laplacian(degree)


@dataclass(frozen=True)
class HarmonicReport:
    """Numerical harmonic-space dimensions with their singular-value gaps."""

    dims: tuple[int, ...]
    sigma_zero: tuple[float, ...]       # largest singular value counted as zero
    sigma_next: tuple[float, ...]       # smallest singular value above the gap
    bases: tuple[np.ndarray, ...] = field(repr=False)

    def gap(self, k: int) -> float:
        if self.sigma_zero[k] == 0.0:
            return np.inf
        return self.sigma_next[k] / self.sigma_zero[k]

    def to_json(self) -> str:
        return json.dumps([
            {"degree": k, "dim": d, "sigma_gap": (None if not np.isfinite(self.gap(k))
                                                  else self.gap(k))}
            for k, d in enumerate(self.dims)], indent=1)


def harmonic_report(assembled: AssembledComplex, gap: float = 1e-8) -> HarmonicReport:
    dims, szero, snext, bases = [], [], [], []
    for k in range(assembled.degrees):
        lap = assembled.laplacian(k)
        u, s, vh = np.linalg.svd(lap)
        smax = s[0] if len(s) else 1.0
        null = s < gap * smax
        r = int(np.sum(null))
        dims.append(r)
        szero.append(float(np.max(s[null])) if r else 0.0)
        snext.append(float(np.min(s[~null])) if r < len(s) else 0.0)
        bases.append(np.conj(vh[len(s) - r:]).T)
    return HarmonicReport(tuple(dims), tuple(szero), tuple(snext), tuple(bases))


@dataclass(frozen=True)
class DecompositionReport:
    reconstruction: float
    orthogonality: float
    harmonic_part: float
    exact_part: float
    coexact_part: float


def hodge_decomposition_check(assembled: AssembledComplex, beta: DiscreteForm,
                              report: HarmonicReport | None = None
                              ) -> DecompositionReport:
    """Split beta into harmonic + d_L-image + d'_L-image parts by least
    squares and report reconstruction and pairwise-orthogonality residuals."""
    k = beta.degree
    m = assembled.fam.dim
    if report is None:
        report = harmonic_report(assembled)
    vec = beta.flat()
    H = report.bases[k]
    parts = []
    if H.shape[1]:
        parts.append(H @ (np.conj(H).T @ vec))
    else:
        parts.append(np.zeros_like(vec))
    if k > 0:
        D = assembled.d[k - 1]
        sol, *_ = np.linalg.lstsq(D, vec, rcond=None)
        parts.append(D @ sol)
    else:
        parts.append(np.zeros_like(vec))
    if k < m:
        Dt = np.conj(assembled.d[k]).T
        sol, *_ = np.linalg.lstsq(Dt, vec, rcond=None)
        parts.append(Dt @ sol)
    else:
        parts.append(np.zeros_like(vec))
    total = parts[0] + parts[1] + parts[2]
    nb = max(np.linalg.norm(vec), 1e-300)
    rec = float(np.linalg.norm(vec - total) / nb)
    orth = 0.0
    for a in range(3):
        for b in range(a + 1, 3):
            na, nbb = np.linalg.norm(parts[a]), np.linalg.norm(parts[b])
            if na > 1e-14 * nb and nbb > 1e-14 * nb:
                orth = max(orth, abs(np.vdot(parts[a], parts[b])) / (na * nbb))
    return DecompositionReport(rec, orth,
                               float(np.linalg.norm(parts[0]) / nb),
                               float(np.linalg.norm(parts[1]) / nb),
                               float(np.linalg.norm(parts[2]) / nb))


# ---------------------------------------------------------------------------
# chain pairings at low degree
# ---------------------------------------------------------------------------

def coordinate_loop(grid: Grid, axis: int, fixed: int = 0) -> list[tuple]:
    """The fundamental cycle of a torus along one axis as a grid-point path."""
    if not grid.periodic:
        raise ValueError("fundamental loops need a periodic grid")
    n = grid.shape[axis]
    pts = []
    for i in range(n + 1):
        idx = [fixed] * grid.dim
        idx[axis] = i % n
        pts.append(tuple(idx))
    return pts


def chain_pairing(phi: GridFunction, psi: DiscreteForm,
                  chain: Sequence) -> complex:
    """Pairing B(psi) of a d*-closed 0-form phi with a degree-k form over a
    k-chain, k in {0, 1}.

    Degree 0: the chain is a list of (point index, coefficient) pairs and
    the pairing is the weighted sum of pointwise values <phi, psi>(p).
    Degree 1: the chain is a path of grid points along axes; each edge
    contributes the trapezoid of the matching 1-form component of
    <phi, psi_I>.  On exact forms, closed loops pair to zero (Stokes);
    on closed forms the loop pairing detects the cohomology class.
    """
    grid = psi.grid
    if psi.degree == 0:
        total = 0.0 + 0.0j
        for point, coeff in chain:
            val = np.sum(np.conj(phi.values[tuple(point)]) * psi.comps[0][tuple(point)])
            total += coeff * val
        return complex(total)
    if psi.degree != 1:
        raise NotImplementedError("chain pairings are implemented for k <= 1")
    pair = [np.einsum("...c,...c->...", np.conj(phi.values), comp)
            for comp in psi.comps]
    total = 0.0 + 0.0j
    for a, b in zip(chain[:-1], chain[1:]):
        diffs = [(bj - aj) for aj, bj in zip(a, b)]
        axes = [j for j, d in enumerate(diffs) if d != 0]
        if len(axes) != 1:
            raise ValueError(f"chain step {a} -> {b} is not a single grid edge")
        j = axes[0]
        step = diffs[j]
        n = grid.shape[j]
        if grid.periodic and abs(step) == n - 1:
            step = -np.sign(step)          # wrap-around edge
        if abs(step) != 1:
            raise ValueError(f"chain step {a} -> {b} skips grid points")
        h = grid.spacing[j]
        total += step * h * 0.5 * (pair[j][tuple(a)] + pair[j][tuple(b)])
    return complex(total)
