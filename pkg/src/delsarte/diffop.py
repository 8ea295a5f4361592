"""Variable-coefficient matrix differential operators on uniform grids.

An operator is a finite sum  L = sum_alpha a_alpha(x) D^alpha  with N x N
matrix coefficients.  Coefficient fields are analytic closures (optionally
with analytic partial derivatives), constants, or grid samples; derived
coefficients produced by Leibniz expansions stay symbolic until sampled on
a grid, so operators themselves are grid-free.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np

from .grids import Grid, GridFunction
from .stencils import differentiate, stencil_halo

__all__ = [
    "MultiIndex",
    "Coefficient",
    "ConstantCoefficient",
    "CallableCoefficient",
    "SampledCoefficient",
    "DifferentialOperator",
    "OperatorAction",
    "apply_operator",
    "formal_adjoint",
    "compose",
    "commutator_residual",
    "locality_score",
    "operator_action",
    "load_operator",
    "operator_from_dict",
]


# ---------------------------------------------------------------------------
# multi-indices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiIndex:
    """Non-negative integer exponents, one per axis."""

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if any(e < 0 for e in entries):
            raise ValueError(f"negative multi-index entry in {entries}")
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def _as_tuple(alpha) -> tuple[int, ...]:
    if isinstance(alpha, MultiIndex):
        return alpha.entries
    if isinstance(alpha, (int, np.integer)):
        return (int(alpha),)
    return tuple(int(a) for a in alpha)


def mi_order(alpha) -> int:
    return sum(_as_tuple(alpha))


def mi_add(a, b) -> tuple[int, ...]:
    return tuple(x + y for x, y in zip(_as_tuple(a), _as_tuple(b)))


def mi_sub(a, b) -> tuple[int, ...]:
    out = tuple(x - y for x, y in zip(_as_tuple(a), _as_tuple(b)))
    if any(x < 0 for x in out):
        raise ValueError(f"{b} is not a sub-index of {a}")
    return out


def mi_binom(a, b) -> int:
    return int(np.prod([math.comb(x, y) for x, y in zip(_as_tuple(a), _as_tuple(b))]))


def mi_subindices(alpha):
    """All multi-indices delta <= alpha, componentwise."""
    ranges = [range(a + 1) for a in _as_tuple(alpha)]
    return (tuple(d) for d in product(*ranges))


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------

class Coefficient:
    """Base class: an N x N matrix field with a symbolic derivative algebra."""

    channels: int

    def sample(self, grid: Grid) -> np.ndarray:
        """Values of shape (*grid.shape, N, N)."""
        raise NotImplementedError

    def derivative(self, alpha) -> "Coefficient":
        alpha = _as_tuple(alpha)
        if mi_order(alpha) == 0:
            return self
        return _FDCoefficient(self, alpha)

    def conj_transpose(self) -> "Coefficient":
        return _ConjTransposeCoefficient(self)

    def scaled(self, c: complex) -> "Coefficient":
        if c == 1:
            return self
        return _ScaledCoefficient(self, c)

    def matmul(self, other: "Coefficient") -> "Coefficient":
        return _ProductCoefficient(self, other)


def _to_matrix(value, channels: int) -> np.ndarray:
    m = np.asarray(value, dtype=complex)
    if m.ndim == 0:
        return m * np.eye(channels, dtype=complex)
    if m.shape != (channels, channels):
        raise ValueError(f"expected ({channels},{channels}) matrix, got {m.shape}")
    return m


@dataclass(frozen=True)
class ConstantCoefficient(Coefficient):
    matrix: np.ndarray = field(repr=False)
    channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "matrix", _to_matrix(self.matrix, self.channels))

    def sample(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(self.matrix, grid.shape + self.matrix.shape).copy()

    def derivative(self, alpha) -> Coefficient:
        if mi_order(alpha) == 0:
            return self
        return ConstantCoefficient(np.zeros_like(self.matrix), self.channels)

    def conj_transpose(self) -> Coefficient:
        return ConstantCoefficient(np.conj(self.matrix).T, self.channels)

    def scaled(self, c: complex) -> Coefficient:
        return ConstantCoefficient(self.matrix * c, self.channels)


@dataclass(frozen=True)
class CallableCoefficient(Coefficient):
    """Analytic closure; ``derivs`` maps multi-indices to closures when known."""

    func: Callable = field(repr=False)
    channels: int = 1
    derivs: Mapping[tuple[int, ...], Callable] = field(default_factory=dict, repr=False)

    def sample(self, grid: Grid) -> np.ndarray:
        return _normalize_field(self.func(*grid.mesh()), grid, self.channels)

    def derivative(self, alpha) -> Coefficient:
        alpha = _as_tuple(alpha)
        if mi_order(alpha) == 0:
            return self
        if alpha in self.derivs:
            return CallableCoefficient(self.derivs[alpha], self.channels)
        return _FDCoefficient(self, alpha)


@dataclass(frozen=True)
class SampledCoefficient(Coefficient):
    grid: Grid
    values: np.ndarray = field(repr=False)
    channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values",
                           _normalize_field(self.values, self.grid, self.channels))

    def sample(self, grid: Grid) -> np.ndarray:
        if grid.shape != self.grid.shape:
            raise ValueError("sampled coefficient bound to a different grid")
        return self.values


def _normalize_field(raw, grid: Grid, channels: int) -> np.ndarray:
    a = np.asarray(raw, dtype=complex)
    eye = np.eye(channels, dtype=complex)
    if a.ndim == 0:
        a = np.full(grid.shape, complex(a))
    if a.shape == grid.shape:
        return a[..., None, None] * eye
    if a.shape == grid.shape + (channels, channels):
        return a
    if a.shape == (channels, channels):
        return np.broadcast_to(a, grid.shape + a.shape).copy()
    raise ValueError(f"cannot interpret coefficient field of shape {a.shape}")


@dataclass(frozen=True)
class _FDCoefficient(Coefficient):
    base: Coefficient
    alpha: tuple[int, ...]
    acc: int = 4

    @property
    def channels(self) -> int:
        return self.base.channels

    def sample(self, grid: Grid) -> np.ndarray:
        out = self.base.sample(grid)
        for axis, d in enumerate(self.alpha):
            if d:
                out = differentiate(out, axis, d, grid.spacing[axis],
                                    grid.periodic, self.acc)
        return out

    def derivative(self, alpha) -> Coefficient:
        return _FDCoefficient(self.base, mi_add(self.alpha, alpha), self.acc)


@dataclass(frozen=True)
class _ScaledCoefficient(Coefficient):
    base: Coefficient
    factor: complex

    @property
    def channels(self) -> int:
        return self.base.channels

    def sample(self, grid: Grid) -> np.ndarray:
        return self.factor * self.base.sample(grid)

    def derivative(self, alpha) -> Coefficient:
        return self.base.derivative(alpha).scaled(self.factor)

    def scaled(self, c: complex) -> Coefficient:
        return _ScaledCoefficient(self.base, self.factor * c)

    def conj_transpose(self) -> Coefficient:
        return self.base.conj_transpose().scaled(np.conj(self.factor))


@dataclass(frozen=True)
class _SumCoefficient(Coefficient):
    parts: tuple[Coefficient, ...]

    @property
    def channels(self) -> int:
        return self.parts[0].channels

    def sample(self, grid: Grid) -> np.ndarray:
        return sum(p.sample(grid) for p in self.parts)

    def derivative(self, alpha) -> Coefficient:
        return _SumCoefficient(tuple(p.derivative(alpha) for p in self.parts))

    def conj_transpose(self) -> Coefficient:
        return _SumCoefficient(tuple(p.conj_transpose() for p in self.parts))

    def scaled(self, c: complex) -> Coefficient:
        return _SumCoefficient(tuple(p.scaled(c) for p in self.parts))


@dataclass(frozen=True)
class _ProductCoefficient(Coefficient):
    left: Coefficient
    right: Coefficient

    @property
    def channels(self) -> int:
        return self.left.channels

    def sample(self, grid: Grid) -> np.ndarray:
        return np.einsum("...ij,...jk->...ik", self.left.sample(grid),
                         self.right.sample(grid))


@dataclass(frozen=True)
class _ConjTransposeCoefficient(Coefficient):
    base: Coefficient

    @property
    def channels(self) -> int:
        return self.base.channels

    def sample(self, grid: Grid) -> np.ndarray:
        return np.conj(np.swapaxes(self.base.sample(grid), -1, -2))

    def derivative(self, alpha) -> Coefficient:
        return self.base.derivative(alpha).conj_transpose()

    def conj_transpose(self) -> Coefficient:
        return self.base


def coeff_sum(parts: Sequence[Coefficient]) -> Coefficient:
    consts = [p for p in parts if isinstance(p, ConstantCoefficient)]
    rest = [p for p in parts if not isinstance(p, ConstantCoefficient)]
    out = list(rest)
    if consts:
        total = sum(c.matrix for c in consts)
        out.append(ConstantCoefficient(total, consts[0].channels))
    if len(out) == 1:
        return out[0]
    return _SumCoefficient(tuple(out))


def as_coefficient(value, channels: int = 1) -> Coefficient:
    if isinstance(value, Coefficient):
        return value
    if callable(value):
        return CallableCoefficient(value, channels)
    return ConstantCoefficient(value, channels)


# ---------------------------------------------------------------------------
# the operator itself
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DifferentialOperator:
    """L = sum over multi-indices alpha of  a_alpha(x) D^alpha."""

    dim: int
    channels: int
    terms: dict = field(repr=False)
    fd_order: int = 4

    def __post_init__(self):
        norm = {}
        for alpha, coeff in dict(self.terms).items():
            key = _as_tuple(alpha)
            if len(key) != self.dim:
                raise ValueError(f"multi-index {key} has wrong length for dim {self.dim}")
            norm[key] = as_coefficient(coeff, self.channels)
        object.__setattr__(self, "terms", norm)
        if self.fd_order not in (2, 4, 6):
            raise ValueError("fd_order must be 2, 4 or 6")

    @property
    def order(self) -> int:
        # empty term map is the zero operator, order 0 by convention
        return max((mi_order(a) for a in self.terms), default=0)

    def shifted(self, s: complex) -> "DifferentialOperator":
        """L - s (shift of the zero-order term; used for eigenvalue bookkeeping)."""
        zero = (0,) * self.dim
        terms = dict(self.terms)
        shift = ConstantCoefficient(-s * np.eye(self.channels), self.channels)
        if zero in terms:
            terms[zero] = coeff_sum([terms[zero], shift])
        else:
            terms[zero] = shift
        return DifferentialOperator(self.dim, self.channels, terms, self.fd_order)

    def apply(self, f: GridFunction, fd_order: int | None = None) -> GridFunction:
        return apply_operator(self, f, fd_order)

    def halo(self, fd_order: int | None = None) -> int:
        p = fd_order or self.fd_order
        return stencil_halo(max(self.order, 1), p)


def apply_operator(op: DifferentialOperator, f: GridFunction,
                   fd_order: int | None = None) -> GridFunction:
    """Evaluate sum_alpha a_alpha(x) D^alpha f with centered stencils."""
    if op.dim != f.grid.dim or op.channels != f.channels:
        raise ValueError(
            f"operator ({op.dim}D, {op.channels} ch) does not match "
            f"function ({f.grid.dim}D, {f.channels} ch)")
    p = fd_order or op.fd_order
    grid = f.grid
    out = np.zeros_like(f.values)
    derivs: dict[tuple[int, ...], np.ndarray] = {}
    for alpha, coeff in op.terms.items():
        if alpha not in derivs:
            d = f.values
            for axis, k in enumerate(alpha):
                if k:
                    d = differentiate(d, axis, k, grid.spacing[axis], grid.periodic, p)
            derivs[alpha] = d
        c = coeff.sample(grid)
        out += np.einsum("...ij,...j->...i", c, derivs[alpha])
    return GridFunction(grid, out)


def formal_adjoint(op: DifferentialOperator) -> DifferentialOperator:
    """Leibniz expansion of  sum_alpha (-1)^|alpha| D^alpha (conj(a_alpha)^T . )."""
    collected: dict[tuple[int, ...], list[Coefficient]] = {}
    for alpha, coeff in op.terms.items():
        at = coeff.conj_transpose()
        sign = (-1) ** mi_order(alpha)
        for delta in mi_subindices(alpha):
            c = at.derivative(mi_sub(alpha, delta)).scaled(sign * mi_binom(alpha, delta))
            collected.setdefault(delta, []).append(c)
    terms = {a: coeff_sum(parts) for a, parts in collected.items()}
    return DifferentialOperator(op.dim, op.channels, terms, op.fd_order)


def compose(a: DifferentialOperator, b: DifferentialOperator) -> DifferentialOperator:
    """Operator product a ∘ b via Leibniz expansion; order adds."""
    if (a.dim, a.channels) != (b.dim, b.channels):
        raise ValueError("operator dimension/channel mismatch in compose")
    collected: dict[tuple[int, ...], list[Coefficient]] = {}
    for alpha, ca in a.terms.items():
        for beta, cb in b.terms.items():
            # D^alpha (b_beta f) = sum_{delta<=alpha} C(alpha,delta) D^{alpha-delta} b_beta . D^delta f
            for delta in mi_subindices(alpha):
                c = ca.matmul(cb.derivative(mi_sub(alpha, delta)))
                c = c.scaled(mi_binom(alpha, delta))
                key = mi_add(delta, beta)
                collected.setdefault(key, []).append(c)
    terms = {k: coeff_sum(parts) for k, parts in collected.items()}
    return DifferentialOperator(a.dim, a.channels, terms, a.fd_order)


def commutator_residual(a: DifferentialOperator, b: DifferentialOperator,
                        probes: Sequence[GridFunction],
                        band: int | None = None) -> float:
    """max over probes of ||a(b f) - b(a f)||_2 / ||f||_2 on the interior."""
    worst = 0.0
    for f in probes:
        if band is None:
            band_f = 2 * (a.halo() + b.halo())
        else:
            band_f = band
        ab = a.apply(b.apply(f))
        ba = b.apply(a.apply(f))
        nf = f.norm_l2(band_f)
        worst = max(worst, (ab - ba).norm_l2(band_f) / nf)
    return worst


# ---------------------------------------------------------------------------
# opaque actions and the locality probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorAction:
    """An opaque linear map on grid functions (e.g. a conjugated operator)."""

    func: Callable = field(repr=False)
    dim: int = 1
    channels: int = 1
    description: str = ""

    def __call__(self, f: GridFunction) -> GridFunction:
        return self.func(f)


def operator_action(op: DifferentialOperator, description: str = "") -> OperatorAction:
    return OperatorAction(lambda f: op.apply(f), op.dim, op.channels,
                          description or "differential operator")


def locality_score(action: OperatorAction | Callable, bump: GridFunction,
                   support: Sequence[tuple[float, float]],
                   halo: int) -> float:
    """Mass of action(bump) leaking outside the halo-inflated support box.

    Small scores certify locality at grid scale; genuinely nonlocal maps
    (e.g. convolutions) score O(1).
    """
    grid = bump.grid
    if isinstance(support[0], (int, float)):
        support = [tuple(support)]
    edge_pts = max(halo, 4)
    for j, (a, b) in enumerate(support):
        pad = (halo + edge_pts) * grid.spacing[j]
        if not grid.periodic and (a - pad <= grid.lo[j] or b + pad >= grid.hi[j]):
            raise ValueError(
                f"support [{a}, {b}] plus halo touches the boundary band on "
                f"axis {j}; the leak measurement would be meaningless")
    out = action(bump)
    inflated = np.ones(grid.shape, dtype=bool)
    for j, (a, b) in enumerate(support):
        ax = grid.axis(j)
        pad = halo * grid.spacing[j]
        inside = (ax >= a - pad) & (ax <= b + pad)
        shape = [1] * grid.dim
        shape[j] = len(ax)
        inflated &= inside.reshape(shape)
    edge = grid.interior_mask(edge_pts)
    outside = (~inflated) & edge
    total = np.sqrt(np.sum(np.abs(out.values) ** 2))
    if total == 0.0:
        raise ValueError("action annihilated the bump; locality score undefined")
    leak = np.sqrt(np.sum(np.abs(out.values[outside]) ** 2))
    return float(leak / total)


# ---------------------------------------------------------------------------
# operator specification files (JSON / TOML)
# ---------------------------------------------------------------------------

_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "sech": lambda t: 1.0 / np.cosh(t), "sqrt": np.sqrt, "log": np.log,
    "abs": np.abs, "pi": np.pi, "e": np.e, "j": 1j, "I": 1j,
}


def _expr_coefficient(expr: str, dim: int, channels: int) -> Coefficient:
    code = compile(expr, "<coeff>", "eval")

    def func(*coords):
        env = dict(_EXPR_NAMES)
        env["x"] = coords[0]
        if dim > 1:
            env["y"] = coords[1]
        return eval(code, {"__builtins__": {}}, env)

    return CallableCoefficient(func, channels)


def operator_from_dict(spec: Mapping) -> DifferentialOperator:
    """Build an operator from the file schema:

    { "m": 1, "N": 1, "order": 2,
      "terms": [ {"alpha": [2], "coeff": "-1"},
                 {"alpha": [0], "coeff": "-2*sech(x)**2 + 1"} ] }

    A coefficient is an expression string (scalar, times identity), a nested
    N x N list of expression strings, or {"samples": "file.npy"}.
    """
    dim = int(spec["m"])
    channels = int(spec.get("N", 1))
    terms = {}
    for t in spec["terms"]:
        alpha = tuple(int(a) for a in t["alpha"])
        coeff = t["coeff"]
        if isinstance(coeff, str):
            c = _expr_coefficient(coeff, dim, channels)
        elif isinstance(coeff, Mapping) and "samples" in coeff:
            data = np.load(coeff["samples"])
            grid = Grid.box(spec["grid"]["lo"], spec["grid"]["hi"],
                            spec["grid"]["cells"], spec["grid"].get("periodic", False))
            c = SampledCoefficient(grid, data, channels)
        elif isinstance(coeff, (list, tuple)) and coeff and isinstance(coeff[0], (list, tuple)):
            rows = [[_expr_coefficient(e, dim, channels) if isinstance(e, str) else e
                     for e in row] for row in coeff]

            def func(*coords, rows=rows):
                blocks = [[np.asarray(c.func(*coords) if isinstance(c, CallableCoefficient)
                                      else c, dtype=complex) for c in row] for row in rows]
                shape = np.broadcast(*[b for row in blocks for b in row]).shape
                out = np.zeros(shape + (channels, channels), dtype=complex)
                for i, row in enumerate(blocks):
                    for k, b in enumerate(row):
                        out[..., i, k] = b
                return out

            c = CallableCoefficient(func, channels)
        else:
            c = as_coefficient(complex(coeff), channels)
        if alpha in terms:
            c = coeff_sum([terms[alpha], c])
        terms[alpha] = c
    op = DifferentialOperator(dim, channels, terms, int(spec.get("fd_order", 4)))
    declared = spec.get("order")
    if declared is not None and op.order != int(declared):
        raise ValueError(f"declared order {declared} != actual order {op.order}")
    return op


def load_operator(path: str) -> DifferentialOperator:
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        spec = tomllib.loads(text.decode())
    else:
        spec = json.loads(text)
    return operator_from_dict(spec)
