"""Dyadic grids, index algebra, difference operators and discrete norms.

Grid functions live on a homogeneous subgrid ``G_n(r0, r)`` of the dyadic
lattice with step ``h``.  Indices are integer multi-indices ``k`` and the
knot coordinate is ``(r0 + k * r) * h``.  Storage is a dense block over the
bounding index box of the support; reads outside the block return zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Literal, Mapping, Sequence

import numpy as np

__all__ = [
    "AlignmentError",
    "GridSpec",
    "GridFunction",
    "DomainBox",
    "knots",
    "knot_box",
    "shift",
    "forward_diff",
    "backward_diff",
    "lp_norm",
    "sobolev_seminorm_sq",
    "sobolev_norm_sq",
]


class AlignmentError(ValueError):
    """Raised when a domain corner does not lie on the grid."""


def _as_int_tuple(values: Iterable[int], name: str) -> tuple[int, ...]:
    out = tuple(int(v) for v in values)
    for v, w in zip(out, values):
        if v != w:
            raise ValueError(f"{name} must be integer, got {w!r}")
    return out


@dataclass(frozen=True)
class GridSpec:
    """Subgrid ``G_n(r0, r)`` of the lattice with step ``h``.

    Parameters
    ----------
    n : int
        Refinement level; the step is ``2**-n`` unless ``inv_h`` is given.
    dim : int
        Spatial dimension.
    r0 : tuple of int, optional
        Offset knot in units of ``h``; reduced modulo ``r`` per axis.
    r : tuple of int, optional
        Per-axis stride.  All ones gives the full grid.
    inv_h : int, optional
        Number of cells per unit length.  Allows steps such as 1/400 that
        are not powers of two.
    """

    n: int
    dim: int = 2
    r0: tuple[int, ...] | None = None
    r: tuple[int, ...] | None = None
    inv_h: int | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n < 1 and self.inv_h is None:
            raise ValueError("n must be >= 1")
        r = (1,) * self.dim if self.r is None else _as_int_tuple(self.r, "r")
        r0 = (0,) * self.dim if self.r0 is None else _as_int_tuple(self.r0, "r0")
        if len(r) != self.dim or len(r0) != self.dim:
            raise ValueError("r and r0 must have length dim")
        if any(ri < 1 for ri in r):
            raise ValueError("all strides r_i must be >= 1")
        inv_h = 2**self.n if self.inv_h is None else int(self.inv_h)
        if inv_h < 1:
            raise ValueError("inv_h must be >= 1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "r0", tuple(a % b for a, b in zip(r0, r)))
        object.__setattr__(self, "inv_h", inv_h)

    @classmethod
    def from_step(cls, inv_h: int, dim: int = 2, **kwargs) -> "GridSpec":
        """Grid with step ``1 / inv_h``; ``n`` is set to ``ceil(log2 inv_h)``."""
        n = max(1, int(np.ceil(np.log2(inv_h))))
        return cls(n=n, dim=dim, inv_h=inv_h, **kwargs)

    @property
    def h(self) -> float:
        return 1.0 / self.inv_h

    @property
    def vol(self) -> int:
        return int(np.prod(self.r))

    @property
    def is_full(self) -> bool:
        return all(ri == 1 for ri in self.r)

    def full(self) -> "GridSpec":
        """The full grid ``G_n`` with the same step."""
        return GridSpec(n=self.n, dim=self.dim, inv_h=self.inv_h)

    def lattice_index(self, k: np.ndarray) -> np.ndarray:
        """Map subgrid indices to indices on the full grid ``G_n``."""
        k = np.asarray(k, dtype=np.int64)
        return np.asarray(self.r0) + k * np.asarray(self.r)

    def coords(self, k: np.ndarray) -> np.ndarray:
        """Real coordinates of subgrid multi-indices, shape ``(..., dim)``."""
        return self.lattice_index(k) / self.inv_h


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned open box ``D``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("lower must be componentwise < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int = 2) -> "DomainBox":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def lattice_bounds(self, inv_h: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer lattice indices of the corners; raises if not on the grid."""
        out = []
        for corner in (self.lower, self.upper):
            idx = []
            for c in corner:
                q = Fraction(c).limit_denominator(10**9) * inv_h
                if q.denominator != 1:
                    raise AlignmentError(f"corner coordinate {c} is not on the grid with step 1/{inv_h}")
                idx.append(int(q))
            out.append(np.array(idx, dtype=np.int64))
        return out[0], out[1]


@dataclass
class GridFunction:
    """Grid function stored as a dense block over its bounding index box.

    ``values[j]`` is the value at subgrid index ``origin + j``.
    """

    spec: GridSpec
    origin: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.origin = _as_int_tuple(self.origin, "origin")
        if self.values.ndim != self.spec.dim or len(self.origin) != self.spec.dim:
            raise ValueError("values and origin must match the grid dimension")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @classmethod
    def zeros(cls, spec: GridSpec, lo: Sequence[int], hi: Sequence[int]) -> "GridFunction":
        """Zero function on the inclusive index box ``[lo, hi]``."""
        shape = tuple(b - a + 1 for a, b in zip(lo, hi))
        return cls(spec, tuple(lo), np.zeros(shape))

    @classmethod
    def from_dict(cls, spec: GridSpec, data: Mapping[tuple[int, ...], float]) -> "GridFunction":
        if not data:
            return cls(spec, (0,) * spec.dim, np.zeros((0,) * spec.dim))
        idx = np.array(list(data.keys()), dtype=np.int64)
        lo, hi = idx.min(axis=0), idx.max(axis=0)
        out = cls.zeros(spec, lo, hi)
        out.values[tuple((idx - lo).T)] = list(data.values())
        return out

    @classmethod
    def sample(
        cls,
        spec: GridSpec,
        f: Callable[[np.ndarray], np.ndarray],
        lo: Sequence[int],
        hi: Sequence[int],
    ) -> "GridFunction":
        """Sample ``f`` (vectorised over points of shape ``(N, dim)``) on ``[lo, hi]``."""
        out = cls.zeros(spec, lo, hi)
        idx = out.indices()
        out.values = np.asarray(f(spec.coords(idx)), dtype=float).reshape(out.shape)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def upper(self) -> tuple[int, ...]:
        """Inclusive upper corner of the stored block."""
        return tuple(o + s - 1 for o, s in zip(self.origin, self.shape))

    def indices(self) -> np.ndarray:
        """Multi-indices of the stored block in lexicographic order, ``(N, dim)``."""
        axes = [np.arange(o, o + s) for o, s in zip(self.origin, self.shape)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)

    def __getitem__(self, k: Sequence[int]) -> float:
        j = tuple(int(a) - o for a, o in zip(k, self.origin))
        if all(0 <= a < s for a, s in zip(j, self.shape)):
            return float(self.values[j])
        return 0.0

    def read(self, idx: np.ndarray) -> np.ndarray:
        """Vectorised read at multi-indices ``(N, dim)``; zero outside the block."""
        idx = np.asarray(idx, dtype=np.int64)
        j = idx - np.asarray(self.origin)
        inside = np.all((j >= 0) & (j < np.asarray(self.shape)), axis=-1)
        out = np.zeros(idx.shape[:-1])
        out[inside] = self.values[tuple(j[inside].T)]
        return out

    def embed_in(self, lo: Sequence[int], hi: Sequence[int]) -> "GridFunction":
        """Copy onto the (larger or smaller) inclusive box ``[lo, hi]``."""
        out = GridFunction.zeros(self.spec, lo, hi)
        out.values = self.read(out.indices()).reshape(out.shape)
        return out

    def _binary(self, other: "GridFunction", op) -> "GridFunction":
        if other.spec != self.spec:
            raise ValueError("grid functions live on different grids")
        lo = np.minimum(self.origin, other.origin)
        hi = np.maximum(self.upper, other.upper)
        a, b = self.embed_in(lo, hi), other.embed_in(lo, hi)
        return GridFunction(self.spec, tuple(lo), op(a.values, b.values))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self._binary(other, np.add)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self._binary(other, np.subtract)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.spec, self.origin, self.values * c)

    __rmul__ = __mul__


def knot_box(
    spec: GridSpec, domain: DomainBox, which: Literal["interior", "closure"] = "interior"
) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive subgrid index bounds of the knots in ``D`` or its closure."""
    if domain.dim != spec.dim:
        raise ValueError("domain and grid dimensions differ")
    lo_lat, hi_lat = domain.lattice_bounds(spec.inv_h)
    r0, r = np.asarray(spec.r0), np.asarray(spec.r)
    # smallest k with r0 + k r >= lo, largest with r0 + k r <= hi
    lo = -((r0 - lo_lat) // r)
    hi = (hi_lat - r0) // r
    if which == "interior":
        lo = np.where(r0 + lo * r == lo_lat, lo + 1, lo)
        hi = np.where(r0 + hi * r == hi_lat, hi - 1, hi)
    elif which != "closure":
        raise ValueError(f"unknown knot set {which!r}")
    return lo, hi


def _box_indices(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    if np.any(hi < lo):
        return np.zeros((0, len(lo)), dtype=np.int64)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)


def knots(
    spec: GridSpec,
    domain: DomainBox,
    which: Literal["interior", "closure", "boundary"] = "interior",
) -> np.ndarray:
    """Subgrid multi-indices of the knots of ``D``, lexicographically ordered.

    Returns an integer array of shape ``(N, dim)``.
    """
    if which == "boundary":
        clo = _box_indices(*knot_box(spec, domain, "closure"))
        ilo, ihi = knot_box(spec, domain, "interior")
        inner = np.all((clo >= ilo) & (clo <= ihi), axis=1)
        return clo[~inner]
    return _box_indices(*knot_box(spec, domain, which))


def shift(u: GridFunction, axis: int, steps: int) -> GridFunction:
    """``(Z u)_k = u_{k + steps e_axis}``."""
    origin = list(u.origin)
    origin[axis] -= steps
    return GridFunction(u.spec, tuple(origin), u.values.copy())


def _diff_steps(u: GridFunction, axis: int, stride: int | None) -> tuple[int, int]:
    ri = u.spec.r[axis]
    stride = ri if stride is None else int(stride)
    if stride == 0 or stride % ri:
        raise ValueError(f"stride {stride} must be a nonzero multiple of r_{axis} = {ri}")
    return stride, stride // ri


def forward_diff(u: GridFunction, axis: int, stride: int | None = None) -> GridFunction:
    """``U_i(r)``: ``(u_{k + s e_i} - u_k) / (r h)`` with ``s = r / r_i`` subgrid steps.

    A negative stride gives ``U_i(-r)``, which equals ``V_i(r)``.
    """
    stride, s = _diff_steps(u, axis, stride)
    if s < 0:
        return backward_diff(u, axis, -stride)
    pad = [(0, 0)] * u.spec.dim
    pad[axis] = (s, s)
    p = np.pad(u.values, pad)
    n = p.shape[axis]
    hi = np.take(p, np.arange(s, n), axis=axis)
    lo = np.take(p, np.arange(0, n - s), axis=axis)
    origin = list(u.origin)
    origin[axis] -= s
    return GridFunction(u.spec, tuple(origin), (hi - lo) / (stride * u.spec.h))


def backward_diff(u: GridFunction, axis: int, stride: int | None = None) -> GridFunction:
    """``V_i(r)``: ``(u_k - u_{k - s e_i}) / (r h)``."""
    stride, s = _diff_steps(u, axis, stride)
    if s < 0:
        return forward_diff(u, axis, -stride)
    pad = [(0, 0)] * u.spec.dim
    pad[axis] = (s, s)
    p = np.pad(u.values, pad)
    n = p.shape[axis]
    hi = np.take(p, np.arange(s, n), axis=axis)
    lo = np.take(p, np.arange(0, n - s), axis=axis)
    return GridFunction(u.spec, u.origin, (hi - lo) / (stride * u.spec.h))


def lp_norm(u: GridFunction, p: float = 2.0) -> float:
    """``|||u|||_{Rp} = [vol(R) sum |u_k|^p]^{1/p}``; the sup norm for ``p = inf``."""
    if p < 1:
        raise ValueError("p must satisfy 1 <= p <= inf")
    a = np.abs(u.values).ravel()
    if a.size == 0:
        return 0.0
    if np.isinf(p):
        return float(a.max())
    return float((u.spec.vol * np.sum(a**p)) ** (1.0 / p))


def sobolev_seminorm_sq(u: GridFunction) -> float:
    """``q_R(u) = vol(R) sum_i |||U_i(r_i) u|||_{R2}^2``."""
    return float(u.spec.vol * sum(lp_norm(forward_diff(u, i), 2) ** 2 for i in range(u.spec.dim)))


def sobolev_norm_sq(u: GridFunction) -> float:
    """``|||u|||_{R2}^2 + q_R(u)``."""
    return lp_norm(u, 2) ** 2 + sobolev_seminorm_sq(u)
