"""Piecewise-continuous diffusion tensors and admissibility checks.

A coefficient field is a list of regions, each a union of closed
axis-aligned boxes carrying a constant tensor or a tensor-valued function.
Point lookup returns the first region (in declaration order) whose closure
contains the point, so overlapping declarations act as priority layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "RegionError",
    "ConfigurationError",
    "Region",
    "CoefficientField",
    "AdmissibilityReport",
    "auxiliary_tensor",
    "check_aux_posdef",
    "omega",
    "admissibility",
    "identity_field",
    "constant_field",
    "example71",
    "example72",
]

TensorFn = Callable[[np.ndarray], np.ndarray]
Box = tuple[tuple[float, ...], tuple[float, ...]]


class RegionError(ValueError):
    """A point could not be attributed to any region."""


class ConfigurationError(ValueError):
    """Inconsistent or incomplete field or scheme configuration."""


def _sign_label(values: np.ndarray) -> str:
    if np.all(values == 0):
        return "zero"
    if np.all(values <= 0):
        return "nonpositive"
    if np.all(values >= 0):
        return "nonnegative"
    return "mixed"


@dataclass
class Region:
    """Region ``D_l`` of the partition.

    Parameters
    ----------
    id : str
        Label.
    boxes : list of (lower, upper)
        Closed boxes whose union is the region.  Infinite bounds allowed.
    tensor : ndarray or callable
        Constant ``(d, d)`` tensor, or a function mapping points ``(N, d)`` to
        tensors ``(N, d, d)``.
    stride : tuple of int, optional
        Scheme parameters ``p(l)`` or ``r(l)``, one per axis.
    lower_order : dict, optional
        Reserved slots for first- and zeroth-order coefficients.  Assembly
        rejects fields that set them.
    """

    id: str
    boxes: list[Box]
    tensor: np.ndarray | TensorFn
    stride: tuple[int, ...] | None = None
    lower_order: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.boxes = [
            (tuple(float(v) for v in lo), tuple(float(v) for v in hi)) for lo, hi in self.boxes
        ]
        if not callable(self.tensor):
            t = np.asarray(self.tensor, dtype=float)
            if t.ndim != 2 or t.shape[0] != t.shape[1]:
                raise ConfigurationError(f"region {self.id}: tensor must be square")
            if not np.allclose(t, t.T, rtol=0, atol=0):
                raise ConfigurationError(f"region {self.id}: tensor must be symmetric")
            self.tensor = t
        if self.stride is not None:
            self.stride = tuple(int(s) for s in self.stride)
            if any(s < 1 for s in self.stride):
                raise ConfigurationError(f"region {self.id}: strides must be >= 1")

    @property
    def is_constant(self) -> bool:
        return not callable(self.tensor)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points ``(N, d)`` in the closed region."""
        x = np.atleast_2d(x)
        mask = np.zeros(len(x), dtype=bool)
        for lo, hi in self.boxes:
            mask |= np.all((x >= np.asarray(lo)) & (x <= np.asarray(hi)), axis=1)
        return mask

    def nearest(self, x: np.ndarray) -> np.ndarray:
        """Nearest point of the closed region, for constant extension."""
        x = np.atleast_2d(x)
        best = None
        dist = np.full(len(x), np.inf)
        for lo, hi in self.boxes:
            y = np.clip(x, lo, hi)
            d = np.sum((y - x) ** 2, axis=1)
            if best is None:
                best = y
            else:
                best = np.where((d < dist)[:, None], y, best)
            dist = np.minimum(dist, d)
        return best

    def values(self, x: np.ndarray) -> np.ndarray:
        """Tensor at points ``(N, d)``, extended by the nearest-point rule."""
        x = np.atleast_2d(x)
        if self.is_constant:
            return np.broadcast_to(self.tensor, (len(x),) + self.tensor.shape).copy()
        return np.asarray(self.tensor(self.nearest(x)), dtype=float)


@dataclass
class CoefficientField:
    """Diffusion tensor over a region partition.

    ``bounds`` holds the ellipticity constants ``(M_lower, M_upper)``; when
    omitted they are estimated from the region sampling sets.
    """

    dim: int
    regions: list[Region]
    bounds: tuple[float, float] | None = None
    name: str = "custom"

    def __post_init__(self) -> None:
        if not self.regions:
            raise ConfigurationError("a field needs at least one region")
        ids = [r.id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("region ids must be unique")
        for r in self.regions:
            if r.is_constant and r.tensor.shape != (self.dim, self.dim):
                raise ConfigurationError(f"region {r.id}: tensor shape must be ({self.dim}, {self.dim})")
            if r.stride is not None and len(r.stride) != self.dim:
                raise ConfigurationError(f"region {r.id}: stride must have {self.dim} entries")
        if self.bounds is None:
            self.bounds = self._estimate_bounds()

    def index_of(self, region_id: str) -> int:
        for i, r in enumerate(self.regions):
            if r.id == region_id:
                return i
        raise RegionError(f"unknown region {region_id!r}")

    def locate(self, x: np.ndarray, strict: bool = True) -> np.ndarray:
        """Index of the first region containing each point; ``-1`` if none."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), -1, dtype=np.int64)
        for i, r in enumerate(self.regions):
            free = out < 0
            if not free.any():
                break
            hit = r.contains(x[free])
            idx = np.flatnonzero(free)[hit]
            out[idx] = i
        if strict and np.any(out < 0):
            bad = x[np.argmax(out < 0)]
            raise RegionError(f"point {tuple(bad)} lies outside every region")
        return out

    def evaluate(self, x: np.ndarray, region_hint=None) -> np.ndarray:
        """Tensor ``a(x)``.

        Parameters
        ----------
        x : array_like
            A point ``(d,)`` or points ``(N, d)``.
        region_hint : str, int or array of int, optional
            Region to evaluate (with constant extension outside its closure).
            Without a hint the first containing region is used.

        Returns
        -------
        ndarray
            ``(d, d)`` for a single point, else ``(N, d, d)``.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if region_hint is None:
            hint = self.locate(pts)
        elif isinstance(region_hint, str):
            hint = np.full(len(pts), self.index_of(region_hint))
        else:
            hint = np.broadcast_to(np.asarray(region_hint, dtype=np.int64), (len(pts),))
        out = np.empty((len(pts), self.dim, self.dim))
        for i in np.unique(hint):
            if i < 0 or i >= len(self.regions):
                raise RegionError(f"invalid region index {i}")
            sel = hint == i
            out[sel] = self.regions[i].values(pts[sel])
        return out[0] if single else out

    def sample_points(self, region: Region, domain=None, per_axis: int = 9) -> np.ndarray:
        """Sampling set of a region: a lattice on each box, clipped to ``domain``."""
        pts = []
        lo_d = np.full(self.dim, -np.inf) if domain is None else np.asarray(domain.lower)
        hi_d = np.full(self.dim, np.inf) if domain is None else np.asarray(domain.upper)
        for lo, hi in region.boxes:
            lo = np.maximum(np.asarray(lo), lo_d)
            hi = np.minimum(np.asarray(hi), hi_d)
            lo = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - 1.0, -0.5))
            hi = np.where(np.isfinite(hi), hi, lo + 1.0)
            if np.any(hi < lo):
                continue
            axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
            grids = np.meshgrid(*axes, indexing="ij")
            pts.append(np.stack([g.ravel() for g in grids], axis=-1))
        return np.concatenate(pts) if pts else np.zeros((0, self.dim))

    def region_tensors(self, region: Region, domain=None, probes=None) -> np.ndarray:
        """Tensors over a region's sampling set (one tensor if constant)."""
        if region.is_constant:
            return region.tensor[None]
        pts = self.sample_points(region, domain)
        if probes is not None:
            probes = np.atleast_2d(probes)
            pts = np.concatenate([pts, probes[region.contains(probes)]])
        return region.values(pts)

    def sign(self, region: Region, i: int = 0, j: int = 1, domain=None) -> str:
        """Sign label of ``a_ij`` on a region; ``'mixed'`` violates the partition contract."""
        return _sign_label(self.region_tensors(region, domain)[:, i, j])

    def _estimate_bounds(self) -> tuple[float, float]:
        lo, hi = np.inf, 0.0
        for r in self.regions:
            ev = np.linalg.eigvalsh(self.region_tensors(r))
            lo, hi = min(lo, float(ev.min())), max(hi, float(ev.max()))
        return lo, hi

    def check_ellipticity(self, rng: np.random.Generator, n_points: int = 64, domain=None) -> bool:
        """Spot-check symmetry and ``M_lower|z|^2 <= z.a.z <= M_upper|z|^2``."""
        m_lo, m_hi = self.bounds
        for r in self.regions:
            pts = self.sample_points(r, domain, per_axis=3)
            pts = pts[rng.choice(len(pts), size=min(n_points, len(pts)), replace=False)]
            a = r.values(pts)
            if not np.allclose(a, np.swapaxes(a, 1, 2)):
                return False
            z = rng.standard_normal((len(pts), self.dim))
            q = np.einsum("ni,nij,nj->n", z, a, z)
            zz = np.sum(z * z, axis=1)
            tol = 1e-12 * m_hi * zz
            if np.any(q < m_lo * zz - tol) or np.any(q > m_hi * zz + tol):
                return False
        return True

    def scaled(self, c: float) -> "CoefficientField":
        """The field ``c * a`` with the same partition and strides."""
        regions = []
        for r in self.regions:
            t = r.tensor * c if r.is_constant else (lambda x, f=r.tensor: c * f(x))
            regions.append(Region(r.id, list(r.boxes), t, r.stride, dict(r.lower_order)))
        lo, hi = self.bounds
        return CoefficientField(self.dim, regions, (c * lo, c * hi), self.name)

    def with_strides(self, strides: dict[str, Sequence[int]]) -> "CoefficientField":
        """Copy with scheme parameters replaced for the named regions."""
        regions = [
            Region(r.id, list(r.boxes), r.tensor, tuple(strides.get(r.id, r.stride) or ()) or None, dict(r.lower_order))
            for r in self.regions
        ]
        return CoefficientField(self.dim, regions, self.bounds, self.name)


def auxiliary_tensor(a: np.ndarray) -> np.ndarray:
    """``a_hat`` with ``a_hat_ii = a_ii`` and ``a_hat_ij = -|a_ij|``; works on stacks."""
    a = np.asarray(a, dtype=float)
    out = -np.abs(a)
    d = a.shape[-1]
    idx = np.arange(d)
    out[..., idx, idx] = a[..., idx, idx]
    return out


def check_aux_posdef(
    field: CoefficientField, probes: np.ndarray | None = None, domain=None
) -> dict[str, tuple[bool, np.ndarray | None]]:
    """Positive definiteness of ``a_hat`` per region.

    Returns ``{region_id: (ok, witness)}`` where ``witness`` is a sample point
    (or the constant tensor) at which the smallest eigenvalue is not positive.
    """
    out = {}
    for r in field.regions:
        if r.is_constant:
            ok = bool(np.linalg.eigvalsh(auxiliary_tensor(r.tensor)).min() > 0)
            out[r.id] = (ok, None if ok else r.tensor.copy())
            continue
        pts = field.sample_points(r, domain)
        if probes is not None:
            p = np.atleast_2d(probes)
            pts = np.concatenate([pts, p[r.contains(p)]])
        ev = np.linalg.eigvalsh(auxiliary_tensor(r.values(pts)))[:, 0]
        ok = bool(np.all(ev > 0))
        out[r.id] = (ok, None if ok else pts[int(np.argmin(ev))])
    return out


def _region_margins(field: CoefficientField, region: Region, domain=None) -> np.ndarray:
    """Per-axis ``(1/p_i) inf a_ii - sum_{m != i} (1/p_m) sup |a_im|``."""
    if region.stride is None:
        raise ConfigurationError(f"region {region.id} has no scheme parameters")
    a = field.region_tensors(region, domain)
    p = np.asarray(region.stride, dtype=float)
    diag_inf = np.min(np.diagonal(a, axis1=1, axis2=2), axis=0)
    off_sup = np.max(np.abs(a), axis=0)
    np.fill_diagonal(off_sup, 0.0)
    return diag_inf / p - off_sup @ (1.0 / p)


def omega(field: CoefficientField, domain=None) -> float:
    """Admissibility margin ``omega(a)``; admissible iff positive."""
    return float(min(_region_margins(field, r, domain).min() for r in field.regions))


@dataclass
class AdmissibilityReport:
    """Outcome of the admissibility checks."""

    omega: float
    aux_posdef: dict[str, bool]
    violations: list[tuple[str, int, float]]

    @property
    def admissible(self) -> bool:
        return self.omega > 0 and all(self.aux_posdef.values())

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "aux_posdef": dict(self.aux_posdef),
            "violations": [{"region": r, "axis": i, "margin": m} for r, i, m in self.violations],
            "admissible": self.admissible,
        }


def admissibility(field: CoefficientField, domain=None) -> AdmissibilityReport:
    """Run ``omega`` and ``check_aux_posdef`` and collect the failing axes."""
    violations = []
    om = np.inf
    for r in field.regions:
        m = _region_margins(field, r, domain)
        om = min(om, float(m.min()))
        violations += [(r.id, int(i), float(m[i])) for i in np.flatnonzero(m <= 0)]
    aux = {k: v[0] for k, v in check_aux_posdef(field, domain=domain).items()}
    return AdmissibilityReport(float(om), aux, violations)



def identity_field(dim: int = 2, stride: Sequence[int] | None = None) -> CoefficientField:
    stride = tuple(stride) if stride is not None else (1,) * dim
    box = ((-np.inf,) * dim, (np.inf,) * dim)
    return CoefficientField(dim, [Region("all", [box], np.eye(dim), stride)], (1.0, 1.0), "identity")


def constant_field(a: np.ndarray, stride: Sequence[int] | None = None) -> CoefficientField:
    a = np.asarray(a, dtype=float)
    dim = a.shape[0]
    stride = tuple(stride) if stride is not None else (1,) * dim
    box = ((-np.inf,) * dim, (np.inf,) * dim)
    return CoefficientField(dim, [Region("all", [box], a, stride)], name="constant")


def example71(sigma2: float = 10.0) -> CoefficientField:
    """Identity for ``x_1 < 1/2`` and ``diag(sigma2, 1)`` for ``x_1 >= 1/2``."""
    right = Region("right", [((0.5, -np.inf), (np.inf, np.inf))], np.diag([sigma2, 1.0]), (1, 1))
    left = Region("left", [((-np.inf, -np.inf), (0.5, np.inf))], np.eye(2), (1, 1))
    return CoefficientField(2, [right, left], (1.0, max(1.0, sigma2)), "example71")


def example72(
    sigma2: float = 10.0, rho: float = 2.0, stride: Sequence[int] = (3, 1)
) -> CoefficientField:
    """``[[sigma2, rho], [rho, 1]]`` on ``D_0 = [1/4, 3/4]^2`` and ``diag(sigma2, 1)`` elsewhere."""
    inner = Region("D0", [((0.25, 0.25), (0.75, 0.75))], [[sigma2, rho], [rho, 1.0]], tuple(stride))
    outer = Region("outer", [((-np.inf, -np.inf), (np.inf, np.inf))], np.diag([sigma2, 1.0]), (1, 1))
    return CoefficientField(2, [inner, outer], name="example72")
