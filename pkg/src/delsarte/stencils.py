"""Finite-difference stencils and high-order cumulative quadrature.

All rules are interpolatory on uniform nodes: weights come from solving the
small Vandermonde system that makes the rule exact on polynomials.  Centered
stencils are used in the interior; near open boundaries the stencil window
is clamped into the domain, which keeps the formal order but degrades the
constant (the boundary band is excluded from residual norms anyway).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "difference_weights",
    "differentiate",
    "cumulative_integral",
]


@lru_cache(maxsize=None)
def difference_weights(offsets: tuple[int, ...], deriv: int) -> np.ndarray:
    """Weights w with sum_k w[k] f(x + offsets[k] h) = h^deriv f^(deriv)(x) + O(h^p)."""
    nodes = np.array(offsets, dtype=float)
    V = np.vander(nodes, increasing=True).T
    rhs = np.zeros(len(nodes))
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(V, rhs)


@lru_cache(maxsize=None)
def _centered_offsets(deriv: int, acc: int) -> tuple[int, ...]:
    half = (deriv - 1) // 2 + (acc + 1) // 2
    return tuple(range(-half, half + 1))


def stencil_halo(deriv: int, acc: int) -> int:
    """Half-width of the centered stencil for a given derivative and order."""
    return (deriv - 1) // 2 + (acc + 1) // 2


def differentiate(values: np.ndarray, axis: int, deriv: int, h: float,
                  periodic: bool, acc: int = 4) -> np.ndarray:
    """Apply d^deriv/dx^deriv along ``axis`` with accuracy order ``acc``."""
    if deriv == 0:
        return np.array(values, dtype=complex)
    offsets = _centered_offsets(deriv, acc)
    w = difference_weights(offsets, deriv)
    out = np.zeros(values.shape, dtype=complex)
    if periodic:
        for wi, oi in zip(w, offsets):
            out += wi * np.roll(values, -oi, axis=axis)
        return out / h**deriv

    n = values.shape[axis]
    npts = len(offsets)
    if npts > n:
        raise ValueError(f"stencil of {npts} points exceeds axis of {n} points")
    moved = np.moveaxis(values, axis, 0)
    res = np.zeros(moved.shape, dtype=complex)
    half = -offsets[0]
    # interior: centered rule
    for wi, oi in zip(w, offsets):
        res[half:n - half] += wi * moved[half + oi:n - half + oi]
    # boundary bands: clamp the window, recompute weights for shifted nodes
    for i in list(range(half)) + list(range(n - half, n)):
        s = min(max(i - half, 0), n - npts)
        local = tuple(range(s - i, s - i + npts))
        wl = difference_weights(local, deriv)
        res[i] = np.tensordot(wl, moved[s:s + npts], axes=(0, 0))
    return np.moveaxis(res, 0, axis) / h**deriv


@lru_cache(maxsize=None)
def _interval_weights(start_offset: int, npts: int) -> np.ndarray:
    """Weights for int_{x_j}^{x_{j+1}} f using nodes x_{j+start_offset}..(+npts)."""
    nodes = np.arange(start_offset, start_offset + npts, dtype=float)
    V = np.vander(nodes, increasing=True).T
    moments = 1.0 / np.arange(1, npts + 1)  # integrals of t^k over [0, 1]
    return np.linalg.solve(V, moments)


def cumulative_integral(values: np.ndarray, h: float, acc: int = 4,
                        axis: int = 0) -> np.ndarray:
    """Cumulative integral from the first node along ``axis``.

    Per-interval interpolatory rule on ``acc + 2`` nodes, clamped at the
    ends; global accuracy O(h^acc) or better on smooth integrands.
    """
    f = np.moveaxis(np.asarray(values, dtype=complex), axis, 0)
    n = f.shape[0]
    npts = min(acc + 2, n)
    lo = -(npts // 2 - 1)
    seg = np.zeros((n - 1,) + f.shape[1:], dtype=complex)
    j = np.arange(n - 1)
    start = np.clip(j + lo, 0, n - npts)
    off = start - j
    for o in np.unique(off):
        w = _interval_weights(int(o), npts)
        jj = j[off == o]
        acc_ = np.zeros((len(jj),) + f.shape[1:], dtype=complex)
        for k in range(npts):
            acc_ += w[k] * f[jj + int(o) + k]
        seg[jj] = acc_
    out = np.zeros(f.shape, dtype=complex)
    np.cumsum(seg, axis=0, out=out[1:])
    out *= h
    return np.moveaxis(out, 0, axis)
