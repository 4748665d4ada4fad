"""Hat-function embedding of grid functions and error metrics.

The hat ``psi_k`` is the tensor product of 1D hats of half-width ``r_i h``
centred at the knot ``x_k``.  Embedded functions are continuous and
multilinear on every cell of the subgrid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import GridFunction, GridSpec, forward_diff

__all__ = [
    "HatBasis",
    "EmbeddedFunction",
    "hat_1d",
    "hat_integral_1d",
    "embed",
    "fourier_coefficients",
    "cell_quadrature",
    "l2_inner",
    "grad_sq_stiffness",
    "grad_sq_difference",
    "relative_errors",
    "ErrorReport",
]

MASS_1D = np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])


def hat_1d(z: np.ndarray) -> np.ndarray:
    """Unit hat ``max(0, 1 - |z|)``."""
    return np.maximum(0.0, 1.0 - np.abs(z))


def _hat_cdf(z: np.ndarray) -> np.ndarray:
    z = np.clip(z, -1.0, 1.0)
    return np.where(z <= 0, 0.5 * (1 + z) ** 2, 1.0 - 0.5 * (1 - z) ** 2)


def hat_integral_1d(center: np.ndarray, width: float, a: float, b: float) -> np.ndarray:
    """``int_a^b hat((y - center) / width) dy`` in closed form."""
    center = np.asarray(center, dtype=float)
    return width * (_hat_cdf((b - center) / width) - _hat_cdf((a - center) / width))


@dataclass(frozen=True)
class HatBasis:
    spec: GridSpec

    @property
    def widths(self) -> np.ndarray:
        """Per-axis hat half-widths ``r_i h``."""
        return np.asarray(self.spec.r) * self.spec.h

    @property
    def norm1(self) -> float:
        """``||psi_k||_1 = h^d vol(R)``."""
        return self.spec.h**self.spec.dim * self.spec.vol

    def cell_of(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Lower-left subgrid index of the containing cell and local coordinates in ``[0, 1]``."""
        s = self.spec
        z = (np.atleast_2d(x) * s.inv_h - np.asarray(s.r0)) / np.asarray(s.r)
        k = np.floor(z).astype(np.int64)
        return k, z - k

    def evaluate(self, k: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``psi_k(x)`` for paired rows of ``k`` and ``x``."""
        xk = self.spec.coords(k)
        return np.prod(hat_1d((np.atleast_2d(x) - xk) / self.widths), axis=-1)


@dataclass
class EmbeddedFunction:
    coefficients: GridFunction
    basis: HatBasis

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate ``sum_k u_k psi_k(x)`` at points ``(N, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k, t = self.basis.cell_of(x)
        d = self.basis.spec.dim
        out = np.zeros(len(x))
        for corner in np.ndindex(*(2,) * d):
            c = np.asarray(corner)
            w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
            out += w * self.coefficients.read(k + c)
        return out

    def knot_values(self) -> GridFunction:
        """Inverse embedding: evaluation at the knots."""
        return self.coefficients


def embed(u: GridFunction) -> EmbeddedFunction:
    """``Phi_n(R) u``."""
    return EmbeddedFunction(u, HatBasis(u.spec))


def cell_quadrature(order: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    z, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (z + 1.0), 0.5 * w


def _cell_points(spec: GridSpec, lo: np.ndarray, hi: np.ndarray, order: int):
    """Quadrature points over all cells with lower-left index in ``[lo, hi]``.

    Returns lower-left cell indices ``(C, d)``, local coordinates ``(Q, d)``,
    weights ``(Q,)`` (for the unit cell) and physical points ``(C, Q, d)``.
    """
    d = spec.dim
    z, w = cell_quadrature(order)
    loc = np.stack(np.meshgrid(*[z] * d, indexing="ij"), axis=-1).reshape(-1, d)
    wts = np.prod(np.stack(np.meshgrid(*[w] * d, indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    cells = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1).astype(np.int64)
    x0 = spec.coords(cells)
    size = np.asarray(spec.r) * spec.h
    pts = x0[:, None, :] + loc[None, :, :] * size
    return cells, loc, wts, pts


def fourier_coefficients(
    f: Callable[[np.ndarray], np.ndarray],
    basis: HatBasis,
    lo: Sequence[int],
    hi: Sequence[int],
    order: int = 3,
) -> GridFunction:
    """``hat u_k = <psi_k | f> / ||psi_k||_1`` for knots in ``[lo, hi]``.

    Integration is per-cell tensor Gauss quadrature, exact when ``f`` is a
    polynomial of degree ``<= 2 order - 2`` on every cell.
    """
    spec = basis.spec
    lo, hi = np.asarray(lo), np.asarray(hi)
    d = spec.dim
    cells, loc, wts, pts = _cell_points(spec, lo - 1, hi, order)
    fv = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(len(cells), -1)
    vol_cell = np.prod(np.asarray(spec.r) * spec.h)
    out = GridFunction.zeros(spec, lo, hi)
    for corner in np.ndindex(*(2,) * d):
        c = np.asarray(corner)
        phi = np.prod(np.where(c == 1, loc, 1.0 - loc), axis=1)
        contrib = (fv * (phi * wts)).sum(axis=1) * vol_cell
        k = cells + c
        inside = np.all((k >= lo) & (k <= hi), axis=1)
        np.add.at(out.values, tuple((k[inside] - lo).T), contrib[inside])
    out.values /= basis.norm1
    return out


def _apply_1d(values: np.ndarray, axis: int, stencil: np.ndarray) -> np.ndarray:
    """Apply a symmetric 3-point stencil along ``axis`` with zero padding (output grows by 1 each side)."""
    pad = [(0, 0)] * values.ndim
    pad[axis] = (2, 2)
    p = np.pad(values, pad)
    n = p.shape[axis]
    return sum(stencil[m] * np.take(p, np.arange(m, n - 2 + m), axis=axis) for m in range(3))


def _common_box(u: GridFunction, v: GridFunction):
    if u.spec != v.spec:
        raise ValueError("basis mismatch: grid functions live on different grids")
    lo = np.minimum(u.origin, v.origin)
    hi = np.maximum(u.upper, v.upper)
    return u.embed_in(lo, hi).values, v.embed_in(lo, hi).values


def l2_inner(u: GridFunction, v: GridFunction) -> float:
    """Exact ``(Phi u | Phi v)`` via the tensor-product mass matrix."""
    a, b = _common_box(u, v)
    mu = a
    for ax in range(a.ndim):
        mu = _apply_1d(mu, ax, MASS_1D)
    b_pad = np.pad(b, [(1, 1)] * b.ndim)
    spec = u.spec
    return float(spec.h**spec.dim * spec.vol * np.sum(mu * b_pad))


def grad_sq_stiffness(u: GridFunction, axis: int) -> float:
    """``||d_i Phi u||_2^2`` from the 1D stiffness matrix tensored with 1D masses."""
    spec = u.spec
    w = u.values
    for ax in range(w.ndim):
        st = np.array([-1.0, 2.0, -1.0]) if ax == axis else MASS_1D
        w = _apply_1d(w, ax, st)
    u_pad = np.pad(u.values, [(1, 1)] * w.ndim)
    ri = spec.r[axis] * spec.h
    return float(spec.h**spec.dim * spec.vol / ri**2 * np.sum(w * u_pad))


def grad_sq_difference(u: GridFunction, axis: int) -> float:
    """``||d_i Phi u||_2^2`` from forward differences on the indicator profiles.

    ``d_i Phi u = sum_k (U_i u)_k chi_{k i +}`` and the ``chi_{k i +}`` are
    disjoint along axis ``i`` and hat-shaped in the other axes.
    """
    spec = u.spec
    g = forward_diff(u, axis)
    w = g.values
    for ax in range(w.ndim):
        if ax != axis:
            w = _apply_1d(w, ax, MASS_1D)
    pad = [(1, 1)] * w.ndim
    pad[axis] = (0, 0)
    g_pad = np.pad(g.values, pad)
    return float(spec.h**spec.dim * spec.vol * np.sum(w * g_pad))


@dataclass
class ErrorReport:
    eps1: float
    eps_inf: float
    argmax: tuple[int, ...]
    max_abs: float
    excluded: list[tuple[int, ...]]

    def to_dict(self) -> dict:
        return {
            "eps1": self.eps1,
            "epsInf": self.eps_inf,
            "argmax_knot": list(self.argmax),
            "max_abs_diff": self.max_abs,
            "excluded": [list(k) for k in self.excluded],
        }


def relative_errors(
    u_num: GridFunction,
    u_exact: Callable[[np.ndarray], np.ndarray],
    exclude: Sequence[Sequence[int]] = (),
) -> ErrorReport:
    """Relative ``l_1`` and ``l_inf`` errors over the stored knots minus ``exclude``."""
    idx = u_num.indices()
    keep = np.ones(len(idx), dtype=bool)
    excl = [tuple(int(v) for v in k) for k in exclude]
    for k in excl:
        keep &= ~np.all(idx == np.asarray(k), axis=1)
    if not keep.any():
        raise ValueError("no knots left after exclusion")
    idx = idx[keep]
    exact = np.asarray(u_exact(u_num.spec.coords(idx)), dtype=float)
    diff = np.abs(exact - u_num.values.ravel()[keep])
    m = int(np.argmax(diff))
    return ErrorReport(
        eps1=float(diff.sum() / np.abs(exact).sum()),
        eps_inf=float(diff.max() / np.abs(exact).max()),
        argmax=tuple(int(v) for v in idx[m]),
        max_abs=float(diff[m]),
        excluded=excl,
    )
