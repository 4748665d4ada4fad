"""Right-hand sides: measures, W^{-1} functionals and boundary lifting.

Every right-hand side is reduced to the normalised hat moments
``mu_k = <psi_k | mu> / ||psi_k||_1`` on the interior knots of ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coeff import CoefficientField
from .embed import HatBasis, _cell_points, fourier_coefficients, hat_1d, hat_integral_1d
from .grid import DomainBox, GridFunction, GridSpec, knot_box
from .scheme import SchemeMatrix

__all__ = [
    "DomainError",
    "Density",
    "PointDirac",
    "LineDirac",
    "MeasureSpec",
    "FunctionalSpec",
    "BoundaryData",
    "discretize_measure",
    "discretize_functional",
    "weak_form_rhs",
    "dirichlet_lift",
    "measure_integral",
]


class DomainError(ValueError):
    """A measure component is supported outside the closed domain."""


@dataclass
class Density:
    """Absolutely continuous part ``weight * f(x) dx`` restricted to ``box``.

    ``f`` is a constant or a vectorised callable.  Constant densities are
    integrated in closed form; callables use per-cell Gauss quadrature.
    """

    f: float | Callable[[np.ndarray], np.ndarray] = 1.0
    weight: float = 1.0
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None


@dataclass
class PointDirac:
    location: tuple[float, ...]
    weight: float = 1.0


@dataclass
class LineDirac:
    """Surface measure on ``{x_axis = level}`` over the transverse ``support`` box.

    ``support`` lists ``(lower, upper)`` for the remaining axes in order.
    """

    axis: int
    level: float
    support: tuple[tuple[float, ...], tuple[float, ...]]
    weight: float = 1.0


@dataclass
class MeasureSpec:
    components: list = field(default_factory=list)


@dataclass
class FunctionalSpec:
    """``mu = f_0 + sum_i d_i f_i`` with vectorised callables."""

    f0: Callable[[np.ndarray], np.ndarray] | None
    fi: Sequence[Callable[[np.ndarray], np.ndarray] | None]


@dataclass
class BoundaryData:
    g: Callable[[np.ndarray], np.ndarray]


def _in_closure(x: np.ndarray, domain: DomainBox) -> bool:
    return bool(np.all(x >= np.asarray(domain.lower)) and np.all(x <= np.asarray(domain.upper)))


def _moments(comp, spec: GridSpec, domain: DomainBox, out: GridFunction) -> None:
    """Add ``<psi_k | comp>`` for the knots of ``out``."""
    basis = HatBasis(spec)
    lo = np.asarray(out.origin)
    hi = np.asarray(out.upper)
    w = basis.widths
    if isinstance(comp, PointDirac):
        t = np.asarray(comp.location, dtype=float)
        if not _in_closure(t, domain):
            raise DomainError(f"point mass at {tuple(t)} lies outside the closed domain")
        k0, _ = basis.cell_of(t)
        for corner in np.ndindex(*(2,) * spec.dim):
            k = k0[0] + np.asarray(corner)
            if np.all((k >= lo) & (k <= hi)):
                out.values[tuple(k - lo)] += comp.weight * float(basis.evaluate(k[None], t[None])[0])
    elif isinstance(comp, LineDirac):
        i = comp.axis
        others = [m for m in range(spec.dim) if m != i]
        slo, shi = np.asarray(comp.support[0], dtype=float), np.asarray(comp.support[1], dtype=float)
        probe_lo = np.insert(slo, i, comp.level)
        probe_hi = np.insert(shi, i, comp.level)
        if not (_in_closure(probe_lo, domain) and _in_closure(probe_hi, domain)):
            raise DomainError("line measure support leaves the closed domain")
        x = spec.coords(out.indices())
        val = hat_1d((comp.level - x[:, i]) / w[i])
        for n, m in enumerate(others):
            val = val * hat_integral_1d(x[:, m], w[m], slo[n], shi[n])
        out.values += comp.weight * val.reshape(out.shape)
    elif isinstance(comp, Density):
        box = comp.box if comp.box is not None else (domain.lower, domain.upper)
        blo, bhi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
        if callable(comp.f):
            def g(p, f=comp.f, blo=blo, bhi=bhi):
                inside = np.all((p >= blo) & (p <= bhi), axis=1)
                return np.where(inside, f(p), 0.0)

            fc = fourier_coefficients(g, basis, lo, hi)
            out.values += comp.weight * fc.values * basis.norm1
        else:
            x = spec.coords(out.indices())
            val = np.full(len(x), float(comp.f))
            for m in range(spec.dim):
                val = val * hat_integral_1d(x[:, m], w[m], blo[m], bhi[m])
            out.values += comp.weight * val.reshape(out.shape)
    else:
        raise TypeError(f"unknown measure component {type(comp).__name__}")


def discretize_measure(mu: MeasureSpec, spec: GridSpec, domain: DomainBox) -> GridFunction:
    """``mu_k = <psi_k | mu> / (h^d vol(R))`` on the interior knots of ``D``."""
    lo, hi = knot_box(spec, domain, "interior")
    out = GridFunction.zeros(spec, lo, hi)
    for comp in mu.components:
        _moments(comp, spec, domain, out)
    out.values /= HatBasis(spec).norm1
    return out


def measure_integral(mu: MeasureSpec, f: Callable[[np.ndarray], np.ndarray], spec: GridSpec, domain: DomainBox) -> float:
    """``<f | mu>`` for ``f`` continuous and multilinear on the cells of ``spec``.

    Independent of the hat moments: point masses are evaluated directly,
    line measures and densities use per-cell Gauss quadrature (exact for
    multilinear ``f`` times piecewise-constant densities aligned with cells).
    """
    total = 0.0
    d = spec.dim
    for comp in mu.components:
        if isinstance(comp, PointDirac):
            total += comp.weight * float(f(np.asarray(comp.location, dtype=float)[None])[0])
        elif isinstance(comp, LineDirac):
            i = comp.axis
            others = [m for m in range(d) if m != i]
            z, wq = np.polynomial.legendre.leggauss(3)
            slo, shi = np.asarray(comp.support[0], dtype=float), np.asarray(comp.support[1], dtype=float)
            # break the support at grid lines so that f is polynomial on each piece
            nodes = []
            for n, m in enumerate(others):
                step = spec.r[m] * spec.h
                cuts = np.arange(np.ceil(slo[n] / step) * step, shi[n], step)
                nodes.append(np.unique(np.concatenate([[slo[n]], cuts[(cuts > slo[n]) & (cuts < shi[n])], [shi[n]]])))
            grids = []
            weights = []
            for e in nodes:
                a, b = e[:-1], e[1:]
                pts = (0.5 * (b - a))[:, None] * z[None] + (0.5 * (a + b))[:, None]
                grids.append(pts.ravel())
                weights.append(((0.5 * (b - a))[:, None] * wq[None]).ravel())
            mesh = np.meshgrid(*grids, indexing="ij")
            wmesh = np.prod(np.stack(np.meshgrid(*weights, indexing="ij")), axis=0)
            pts = np.zeros((mesh[0].size, d))
            for n, m in enumerate(others):
                pts[:, m] = mesh[n].ravel()
            pts[:, i] = comp.level
            total += comp.weight * float(np.sum(f(pts) * wmesh.ravel()))
        elif isinstance(comp, Density):
            box = comp.box if comp.box is not None else (domain.lower, domain.upper)
            blo, bhi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
            lo = np.floor((blo * spec.inv_h - np.asarray(spec.r0)) / np.asarray(spec.r)).astype(np.int64)
            hi = np.ceil((bhi * spec.inv_h - np.asarray(spec.r0)) / np.asarray(spec.r)).astype(np.int64) - 1
            cells, loc, wts, pts = _cell_points(spec, lo, hi, 3)
            p = pts.reshape(-1, d)
            dens = comp.f(p) if callable(comp.f) else np.full(len(p), float(comp.f))
            inside = np.all((p >= blo) & (p <= bhi), axis=1)
            vals = (f(p) * np.where(inside, dens, 0.0)).reshape(len(cells), -1)
            cell_vol = np.prod(np.asarray(spec.r) * spec.h)
            total += comp.weight * float(np.sum(vals * wts) * cell_vol)
        else:
            raise TypeError(f"unknown measure component {type(comp).__name__}")
    return total


def discretize_functional(F: FunctionalSpec, spec: GridSpec, domain: DomainBox) -> GridFunction:
    """``mu_k = [(psi_k | f_0) - sum_i (d_i psi_k | f_i)] / ||psi_k||_1``.

    ``d_i psi_k = (chi_{k i -} - chi_{k i +}) / (r_i h)``; the pairings are
    computed with per-cell Gauss quadrature of order 3.
    """
    basis = HatBasis(spec)
    lo, hi = knot_box(spec, domain, "interior")
    d = spec.dim
    out = GridFunction.zeros(spec, lo, hi)
    if F.f0 is not None:
        out.values += fourier_coefficients(F.f0, basis, lo, hi).values
    cells, loc, wts, pts = _cell_points(spec, lo - 1, hi, 3)
    size = np.asarray(spec.r) * spec.h
    cell_vol = float(np.prod(size))
    for i, fi in enumerate(F.fi):
        if fi is None:
            continue
        fv = np.asarray(fi(pts.reshape(-1, d)), dtype=float).reshape(len(cells), -1)
        for corner in np.ndindex(*(2,) * d):
            c = np.asarray(corner)
            # derivative of the corner's hat along axis i on this cell
            prof = np.prod(np.where(c == 1, loc, 1.0 - loc)[:, [m for m in range(d) if m != i]], axis=1)
            dpsi = (1.0 if c[i] == 1 else -1.0) / size[i] * prof
            contrib = (fv * (dpsi * wts)).sum(axis=1) * cell_vol
            k = cells + c
            inside = np.all((k >= lo) & (k <= hi), axis=1)
            np.add.at(out.values, tuple((k[inside] - lo).T), -contrib[inside] / basis.norm1)
    return out


def weak_form_rhs(
    field: CoefficientField,
    grad_u: Callable[[np.ndarray], np.ndarray],
    spec: GridSpec,
    domain: DomainBox,
    order: int = 3,
) -> GridFunction:
    """``mu_k = a(psi_k, u) / ||psi_k||_1`` for a known exact solution ``u``.

    ``grad_u`` maps points ``(N, d)`` to gradients ``(N, d)``.  The tensor is
    taken per cell at the cell midpoint, so the result is exact when the
    region interfaces lie on grid lines and ``u`` is polynomial of low degree.
    """
    basis = HatBasis(spec)
    lo, hi = knot_box(spec, domain, "interior")
    d = spec.dim
    out = GridFunction.zeros(spec, lo, hi)
    cells, loc, wts, pts = _cell_points(spec, lo - 1, hi, order)
    size = np.asarray(spec.r) * spec.h
    cell_vol = float(np.prod(size))
    mids = spec.coords(cells) + 0.5 * size
    a = field.evaluate(mids)
    g = np.asarray(grad_u(pts.reshape(-1, d)), dtype=float).reshape(len(cells), -1, d)
    flux = np.einsum("cij,cqj->cqi", a, g)
    for corner in np.ndindex(*(2,) * d):
        c = np.asarray(corner)
        dpsi = np.empty((len(loc), d))
        for i in range(d):
            prof = np.prod(np.where(c == 1, loc, 1.0 - loc)[:, [m for m in range(d) if m != i]], axis=1)
            dpsi[:, i] = (1.0 if c[i] == 1 else -1.0) / size[i] * prof
        contrib = np.einsum("cqi,qi,q->c", flux, dpsi, wts) * cell_vol
        k = cells + c
        inside = np.all((k >= lo) & (k <= hi), axis=1)
        np.add.at(out.values, tuple((k[inside] - lo).T), contrib[inside])
    out.values /= basis.norm1
    return out


def dirichlet_lift(A: SchemeMatrix, g: BoundaryData) -> GridFunction:
    """Correction ``c_k = -sum_l A_kl g(x_l)`` over knots ``l`` outside the interior.

    ``A`` is a restricted matrix produced by ``restrict_dirichlet``; the sum
    runs over every non-interior knot coupled to an interior row.
    """
    if A.coupling is None:
        raise ValueError("the matrix carries no boundary couplings; restrict it first")
    gv = np.asarray(g.g(A.spec.coords(A.coupled_knots)), dtype=float)
    c = -(A.coupling @ gv)
    return A.to_grid(c)
