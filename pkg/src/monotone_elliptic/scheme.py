"""Assembly of compartmental difference schemes.

Every scheme is written as a sum of edge forms ``w (u_p - u_q)^2`` with
``w >= 0``.  An edge contributes ``+w`` to both diagonal entries and ``-w``
to the two couplings, so any such sum is symmetric with vanishing row and
column sums, and has nonpositive off-diagonal entries.

In a coordinate plane ``(i, j)`` each cell with lower-left knot ``v`` and
edge lengths ``s`` generates

* its left edge ``(v, v + s_j e_j)`` with conductance ``a_jj / s_j^2``;
* one horizontal edge with conductance ``a_ii / s_i^2``: the bottom edge if
  the cell belongs to the ``-`` class (``a_ij <= 0``), the top edge for the
  ``+`` class;
* for ``c = |a_ij| > 0`` the mixed-derivative terms at the corner of the
  same horizontal edge: a long edge of conductance ``c / (q_i q_j)`` along
  ``q_i e_i -/+ q_j e_j`` and the compensating reductions
  ``-(q_i / q_j) c / s_i^2`` and ``-(q_j / q_i) c / s_j^2`` on the two unit
  edges at that corner.

The basic scheme uses ``s = q = p`` (global stride), the extended scheme
``s = 1`` and ``q = r(l)`` taken from the cell's region.  All weights are
multiplied by ``1 / h^2``.  Horizontal edges claimed by no cell or by two
cells (at class interfaces) receive the mean of the adjacent cells' ``a_ii``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp

from .coeff import CoefficientField, ConfigurationError, admissibility
from .grid import DomainBox, GridFunction, GridSpec, knot_box

__all__ = [
    "AssemblyError",
    "SchemeKind",
    "SchemeMatrix",
    "SignClasses",
    "StencilCertificate",
    "classify_sign_regions",
    "assemble",
    "assemble_basic_2d",
    "assemble_extended_2d",
    "assemble_nd",
    "restrict_dirichlet",
    "verify_compartmental",
    "gershgorin_check",
    "quadratic_form",
]


class AssemblyError(ValueError):
    """The requested scheme would lose its compartmental structure."""


@dataclass(frozen=True)
class SchemeKind:
    """Scheme variant and optional stride override.

    ``stride`` is the global ``p`` of the basic scheme; for the extended
    scheme the per-region strides of the field are used.
    """

    variant: Literal["basic", "extended"] = "extended"
    stride: tuple[int, ...] | None = None
    mixed_sampling: Literal["pointwise", "region"] = "pointwise"

    def __post_init__(self) -> None:
        if self.variant not in ("basic", "extended"):
            raise ConfigurationError(f"unknown scheme variant {self.variant!r}")
        if self.mixed_sampling not in ("pointwise", "region"):
            raise ConfigurationError(f"unknown mixed-term sampling {self.mixed_sampling!r}")


@dataclass
class SchemeMatrix:
    """Sparse operator on a box of knots of the full grid ``G_n``.

    Knots are lattice multi-indices in ``[lo, hi]`` (inclusive), numbered
    lexicographically; row ``m`` belongs to ``knots()[m]``.
    """

    matrix: sp.csr_matrix
    lo: np.ndarray
    hi: np.ndarray
    spec: GridSpec
    restricted: bool = False
    coupling: sp.csr_matrix | None = None
    coupled_knots: np.ndarray | None = None

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(b - a + 1) for a, b in zip(self.lo, self.hi))

    def knots(self) -> np.ndarray:
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)

    def index_of(self, k: np.ndarray) -> np.ndarray:
        """Linear indices of multi-indices ``(N, d)``; ``-1`` outside the box."""
        k = np.atleast_2d(np.asarray(k, dtype=np.int64))
        j = k - self.lo
        shape = np.asarray(self.shape)
        inside = np.all((j >= 0) & (j < shape), axis=1)
        out = np.full(len(k), -1, dtype=np.int64)
        out[inside] = np.ravel_multi_index(tuple(j[inside].T), self.shape)
        return out

    def to_vector(self, u: GridFunction) -> np.ndarray:
        return u.read(self.knots())

    def to_grid(self, x: np.ndarray) -> GridFunction:
        return GridFunction(self.spec.full(), tuple(self.lo), np.asarray(x).reshape(self.shape))

    def rows(self) -> list[list[tuple[int, float]]]:
        """Per-row ``(column, value)`` lists sorted by column."""
        m = self.matrix
        return [
            list(zip(m.indices[m.indptr[i] : m.indptr[i + 1]].tolist(), m.data[m.indptr[i] : m.indptr[i + 1]].tolist()))
            for i in range(m.shape[0])
        ]


@dataclass
class SignClasses:
    """Cell classes of one coordinate plane.

    ``cell_class`` holds ``-1`` or ``+1`` per cell of the cell box (cells are
    indexed by their lower-left knot).  ``minus`` and ``plus`` are the
    generating knots of the two form families: lower-left vertices of ``-``
    cells and upper-left vertices of ``+`` cells.
    """

    lo: np.ndarray
    hi: np.ndarray
    cell_class: np.ndarray
    region: np.ndarray
    minus: np.ndarray = field(repr=False, default=None)
    plus: np.ndarray = field(repr=False, default=None)


@dataclass
class StencilCertificate:
    compartmental: bool
    conservative_rows: bool
    conservative_cols: bool
    offenders: list[tuple[tuple[int, ...], tuple[int, ...], float]]

    def to_dict(self) -> dict:
        return {
            "compartmental": self.compartmental,
            "conservative_rows": self.conservative_rows,
            "conservative_cols": self.conservative_cols,
            "offenders": [{"knot": list(k), "neighbor": list(n), "value": v} for k, n, v in self.offenders[:50]],
        }


def _box_points(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)


def _check_lower_order(field: CoefficientField) -> None:
    for r in field.regions:
        if any(v is not None for v in r.lower_order.values()):
            raise NotImplementedError(f"region {r.id}: lower-order terms are not assembled")


def _zero_class(field: CoefficientField, i: int, j: int, domain: DomainBox | None) -> int:
    """Class of cells with ``a_ij = 0``: ``+`` when only nonnegative regions occur."""
    labels = {field.sign(r, i, j, domain) for r in field.regions}
    if "mixed" in labels:
        bad = [r.id for r in field.regions if field.sign(r, i, j, domain) == "mixed"]
        raise AssemblyError(f"a_{i + 1}{j + 1} changes sign inside region(s) {bad}")
    return 1 if "nonnegative" in labels and "nonpositive" not in labels else -1


def _points(spec: GridSpec, idx_halves: np.ndarray, domain: DomainBox | None) -> np.ndarray:
    """Coordinates of half-integer lattice points given in units of ``h/2``."""
    x = idx_halves / (2.0 * spec.inv_h)
    if domain is not None:
        x = np.clip(x, domain.lower, domain.upper)
    return x


def _region_sign(field: CoefficientField, i: int, j: int, domain) -> np.ndarray:
    lab = [field.sign(r, i, j, domain) for r in field.regions]
    return np.array([{"zero": 0, "nonpositive": -1, "nonnegative": 1}.get(s, 0) for s in lab])


def classify_sign_regions(
    field: CoefficientField,
    spec: GridSpec,
    domain: DomainBox | None = None,
    stride: Sequence[int] | None = None,
    box: tuple[np.ndarray, np.ndarray] | None = None,
    axes: tuple[int, int] = (0, 1),
) -> SignClasses:
    """Partition the cells of a plane into the ``-`` and ``+`` classes.

    Parameters
    ----------
    stride : sequence of int, optional
        Cell edge lengths in grid steps (the basic scheme's ``p``); unit
        cells by default.
    box : (lo, hi), optional
        Inclusive lattice box of lower-left cell knots.  Defaults to the
        closure of ``domain``.

    Raises
    ------
    AssemblyError
        When ``a_ij`` takes both signs on one cell.
    """
    i, j = axes
    d = field.dim
    s = np.ones(d, dtype=np.int64)
    if stride is not None:
        s[[i, j]] = np.asarray(stride, dtype=np.int64)[[i, j]] if len(stride) == d else stride
    if box is None:
        if domain is None:
            raise ConfigurationError("either a domain or a cell box is required")
        box = knot_box(spec.full(), domain, "closure")
    lo, hi = np.asarray(box[0]), np.asarray(box[1])
    v = _box_points(lo, hi)
    zero_cls = _zero_class(field, i, j, domain)
    mid2 = 2 * v
    mid2[:, i] += s[i]
    mid2[:, j] += s[j]
    region = field.locate(_points(spec, mid2, domain))
    # sign probes at the quarter points of each cell
    signs = np.zeros(len(v), dtype=np.int64)
    for di, dj in ((1, 1), (1, 3), (3, 1), (3, 3), (2, 2)):
        p4 = 4 * v
        p4[:, i] += di * s[i]
        p4[:, j] += dj * s[j]
        x = p4 / (4.0 * spec.inv_h)
        if domain is not None:
            x = np.clip(x, domain.lower, domain.upper)
        a = field.evaluate(x)[:, i, j]
        sg = np.sign(a).astype(np.int64)
        clash = (signs * sg) < 0
        if clash.any():
            bad = v[np.argmax(clash)]
            raise AssemblyError(f"a_{i + 1}{j + 1} changes sign on the cell with lower-left knot {tuple(bad)}")
        signs = np.where(signs == 0, sg, signs)
    reg_sign = _region_sign(field, i, j, domain)[region]
    cls = np.where(reg_sign != 0, reg_sign, np.where(signs != 0, signs, zero_cls))
    shape = tuple(int(b - a + 1) for a, b in zip(lo, hi))
    plus_knots = v[cls > 0].copy()
    plus_knots[:, j] += s[j]
    return SignClasses(
        lo=lo,
        hi=hi,
        cell_class=cls.reshape(shape),
        region=region.reshape(shape),
        minus=v[cls < 0],
        plus=plus_knots,
    )


def _unit(d: int, axis: int) -> np.ndarray:
    e = np.zeros(d, dtype=np.int64)
    e[axis] = 1
    return e


def _plane_edges(
    field: CoefficientField,
    spec: GridSpec,
    domain: DomainBox | None,
    cell_lo: np.ndarray,
    cell_hi: np.ndarray,
    axes: tuple[int, int],
    variant: str,
    p: np.ndarray | None,
    scale: float,
    pair_strides: dict[int, tuple[int, int]] | None = None,
    sampling: str = "pointwise",
):
    """Edge list ``(from, to, weight)`` of one coordinate plane, weights in units of ``1/h^2``."""
    i, j = axes
    d = field.dim
    s = np.ones(d, dtype=np.int64)
    if variant == "basic":
        s[i], s[j] = p[i], p[j]
    classes = classify_sign_regions(field, spec, domain, tuple(s), (cell_lo, cell_hi), axes)
    v = _box_points(cell_lo, cell_hi)
    cls = classes.cell_class.ravel()
    region = classes.region.ravel()
    n_cells = len(v)

    mid2 = 2 * v
    mid2[:, i] += s[i]
    mid2[:, j] += s[j]
    a = field.evaluate(_points(spec, mid2, None), region_hint=region)
    aii = a[:, i, i] * scale
    ajj = a[:, j, j] * scale

    # mixed-term strides per cell
    q = np.empty((n_cells, 2), dtype=np.int64)
    if variant == "basic":
        q[:] = (s[i], s[j])
    else:
        for l, r in enumerate(field.regions):
            sel = region == l
            if not sel.any():
                continue
            if pair_strides is not None and l in pair_strides:
                q[sel] = pair_strides[l]
            elif r.stride is None:
                raise ConfigurationError(f"region {r.id} has no scheme parameters")
            else:
                q[sel] = (r.stride[i], r.stride[j])
    # corner knot of the mixed form: v for '-', v + s_j e_j for '+'
    corner = v.copy()
    corner[cls > 0, j] += s[j]
    c2 = 2 * corner
    c2[:, i] += q[:, 0]
    c2[:, j] -= cls * q[:, 1]
    if sampling == "region":
        c = np.abs(field.evaluate(_points(spec, c2, None), region_hint=region)[:, i, j])
    else:
        c2_pts = _points(spec, c2, domain)
        sampled = field.evaluate(c2_pts)[:, i, j]
        own = np.abs(field.evaluate(_points(spec, c2, None), region_hint=region)[:, i, j])
        # the sample must match the class of the cell and may not exceed the
        # cell's own region, whose margin bounds the reduction
        c = np.minimum(np.abs(sampled), own)
        c[np.sign(sampled) * cls < 0] = 0.0

    frm, to, w = [], [], []

    def add(p0, p1, wt):
        keep = wt != 0
        frm.append(p0[keep])
        to.append(p1[keep])
        w.append(wt[keep])

    # each cell spreads a_ii over the n_i unit edges of its i-path and the
    # matching share of the mixed-term reduction, so that its net weight per
    # edge is a_ii / q_i - |a_ij| / q_j >= 0 (the admissibility margin)
    ni, nj = q[:, 0] // s[i], q[:, 1] // s[j]
    qi, qj = q[:, 0], q[:, 1]
    # i-path starts at the corner; j-path runs up from it for '-', down for '+'
    i_start = corner
    j_start = corner.copy()
    j_start[cls > 0, j] -= qj[cls > 0]
    for axis, step, n, start, diag, red in (
        (i, s[i], ni, i_start, aii, c / (qj * s[i])),
        (j, s[j], nj, j_start, ajj, c / (qi * s[j])),
    ):
        e = np.zeros(d, dtype=np.int64)
        e[axis] = 1
        lo = np.min(np.minimum(start, v), axis=0)
        hi = np.max(np.maximum(start + (n * step)[:, None] * e, v + s[i] * _unit(d, i) + s[j] * _unit(d, j)), axis=0)
        shape = tuple(int(b - a_ + 1) for a_, b in zip(lo, hi))
        acc = {k: np.zeros(shape) for k in ("wn", "an", "dn", "wz", "az", "nb", "nbc")}
        mixed = c > 0
        for m in range(int(n.max())):
            sel = m < n
            at = tuple((start[sel] + (m * step) * e - lo).T)
            frac = 1.0 / n[sel]
            mx = mixed[sel]
            dv = diag[sel] * frac / step**2
            np.add.at(acc["wn"], at, np.where(mx, frac, 0.0))
            np.add.at(acc["dn"], at, np.where(mx, dv, 0.0))
            np.add.at(acc["an"], at, np.where(mx, dv - red[sel], 0.0))
            np.add.at(acc["wz"], at, np.where(mx, 0.0, frac))
            np.add.at(acc["az"], at, np.where(mx, 0.0, dv))
        # cells touching an edge, used to fill edges no path reaches
        for sh in (0, 1):
            nb = v.copy()
            other = j if axis == i else i
            nb[:, other] += sh * s[other]
            np.add.at(acc["nb"], tuple((nb - lo).T), diag / step**2)
            np.add.at(acc["nbc"], tuple((nb - lo).T), 1.0)
        wn, an, dn, wz, az = acc["wn"], acc["an"], acc["dn"], acc["wz"], acc["az"]
        with np.errstate(invalid="ignore", divide="ignore"):
            deficit = np.clip(1.0 - wn, 0.0, None)
            fill_z = az * np.where(wz > 0, deficit / wz, 0.0)
            mean_n = np.where(wn > 0, dn / wn, 0.0)
            mean_nb = acc["nb"] / np.maximum(acc["nbc"], 1.0)
            fill_n = np.where((wz == 0) & (wn > 0), deficit * mean_n, 0.0)
            fill_0 = np.where((wz == 0) & (wn == 0), mean_nb, 0.0)
        weight = an + fill_z + fill_n + fill_0
        ek = _box_points(lo, hi)
        add(ek, ek + step * e, weight.ravel())

    mx = c > 0
    if mx.any():
        cm, km, sg = c[mx], corner[mx], cls[mx]
        a_end = km + qi[mx][:, None] * _unit(d, i)
        b_end = km - (sg * qj[mx])[:, None] * _unit(d, j)
        add(a_end, b_end, cm / (qi[mx] * qj[mx]))
    return np.concatenate(frm), np.concatenate(to), np.concatenate(w)


def _stride_margin(field: CoefficientField, kind: SchemeKind) -> int:
    m = 1
    if kind.stride is not None:
        m = max(m, max(kind.stride))
    for r in field.regions:
        if r.stride is not None:
            m = max(m, max(r.stride))
    return m + 1


def _edges_to_matrix(
    frm: np.ndarray,
    to: np.ndarray,
    w: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    h: float,
    tol_scale: float,
    check: bool = True,
) -> sp.csr_matrix:
    shape = tuple(int(b - a + 1) for a, b in zip(lo, hi))
    # merge duplicate edges first so that the sign check sees net conductances
    a = np.ravel_multi_index(tuple((frm - lo).T), shape)
    b = np.ravel_multi_index(tuple((to - lo).T), shape)
    p, qq = np.minimum(a, b), np.maximum(a, b)
    n = int(np.prod(shape))
    e = sp.coo_matrix((w, (p, qq)), shape=(n, n)).tocsr()
    e.sum_duplicates()
    e.sort_indices()
    tol = 1e-12 * tol_scale
    data = e.data
    bad = data < -tol
    if check and bad.any():
        rows = np.repeat(np.arange(n), np.diff(e.indptr))
        k = int(np.flatnonzero(bad)[0])
        kp = np.array(np.unravel_index(rows[k], shape)) + lo
        kq = np.array(np.unravel_index(e.indices[k], shape)) + lo
        raise AssemblyError(
            f"negative conductance {data[k] / h**2:.6g} between knots {tuple(kp.tolist())} and {tuple(kq.tolist())}: "
            "the strides violate the admissibility margin"
        )
    data[np.abs(data) <= tol] = 0.0
    e.eliminate_zeros()
    rows = np.repeat(np.arange(n), np.diff(e.indptr))
    cols = e.indices
    vals = e.data / h**2
    diag = np.bincount(rows, vals, minlength=n) + np.bincount(cols, vals, minlength=n)
    off = sp.coo_matrix(
        (np.concatenate([-vals, -vals]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    )
    m = (off + sp.diags(diag)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def assemble(
    field: CoefficientField,
    spec: GridSpec,
    domain: DomainBox,
    kind: SchemeKind = SchemeKind(),
    pair_strides: dict[tuple[int, int], dict[str, tuple[int, int]]] | None = None,
    check: bool = True,
) -> SchemeMatrix:
    """Unrestricted matrix covering ``D`` plus a stencil-width margin.

    For ``d > 2`` the operator is the sum of plane schemes for the pairs
    ``(i, j)``, each using ``a_ii / (d - 1)``, ``a_jj / (d - 1)`` and ``a_ij``.

    Parameters
    ----------
    pair_strides : dict, optional
        Per-pair region strides ``{(i, j): {region_id: (r_i, r_j)}}``.  The
        stride of an axis must agree across all pairs containing it.
    check : bool
        Refuse extended-scheme strides with ``omega(a) <= 0`` and raise
        ``AssemblyError`` on a negative net conductance.  With
        ``check=False`` the matrix is built anyway so that
        ``verify_compartmental`` can report the offending entries.
    """
    _check_lower_order(field)
    d = field.dim
    if d < 2:
        raise ConfigurationError("schemes need dimension >= 2")
    if spec.dim != d or domain.dim != d:
        raise ConfigurationError("field, grid and domain dimensions differ")
    full = spec.full()
    if kind.variant == "basic":
        p = np.asarray(kind.stride if kind.stride is not None else _common_stride(field), dtype=np.int64)
        if len(p) != d:
            raise ConfigurationError("basic-scheme stride must have one entry per axis")
    else:
        p = None
    by_index = _pair_strides_by_index(field, pair_strides) if pair_strides else {}
    if check and kind.variant == "extended" and not by_index:
        rep = admissibility(field, domain)
        if rep.violations:
            rid, axis, margin = rep.violations[0]
            raise AssemblyError(f"region {rid}: axis {axis + 1} has margin {margin:.6g} <= 0 for its strides")
    m = _stride_margin(field, kind)
    if by_index:
        m = max(m, 1 + max(max(v) for pr in by_index.values() for v in pr.values()))
    ilo, ihi = knot_box(full, domain, "interior")
    cell_lo, cell_hi = ilo - m, ihi + m
    node_lo, node_hi = cell_lo - m, cell_hi + m
    scale = 1.0 / (d - 1)
    frm, to, w = [], [], []
    for i, j in itertools.combinations(range(d), 2):
        f_, t_, w_ = _plane_edges(
            field, full, domain, cell_lo, cell_hi, (i, j), kind.variant, p, scale, by_index.get((i, j)),
            kind.mixed_sampling,
        )
        frm.append(f_)
        to.append(t_)
        w.append(w_)
    frm, to, w = np.concatenate(frm), np.concatenate(to), np.concatenate(w)
    # edges away from the closure of D are only partly covered by cells
    clo, chi = knot_box(full, domain, "closure")
    near = np.all((frm >= clo) & (frm <= chi), axis=1) | np.all((to >= clo) & (to <= chi), axis=1)
    frm, to, w = frm[near], to[near], w[near]
    if np.any(frm < node_lo) or np.any(frm > node_hi) or np.any(to < node_lo) or np.any(to > node_hi):
        raise AssemblyError("stencil leaves the assembly box")
    tol_scale = float(np.max(np.abs(w))) if len(w) else 1.0
    mat = _edges_to_matrix(frm, to, w, node_lo, node_hi, full.h, tol_scale, check)
    return SchemeMatrix(mat, node_lo, node_hi, full)


def _common_stride(field: CoefficientField) -> tuple[int, ...]:
    strides = {r.stride for r in field.regions if r.stride is not None}
    if not strides:
        return (1,) * field.dim
    if len(strides) > 1:
        raise ConfigurationError(f"the basic scheme needs one global stride, regions declare {sorted(strides)}")
    return strides.pop()


def _pair_strides_by_index(field, pair_strides):
    """Validate the shared-axis constraint and key the table by region index."""
    seen: dict[tuple[str, int], tuple[tuple[int, int], int]] = {}
    out = {}
    for (i, j), table in pair_strides.items():
        i, j = sorted((int(i), int(j)))
        out[(i, j)] = {}
        for rid, (ri, rj) in table.items():
            for axis, val in ((i, ri), (j, rj)):
                prev = seen.get((rid, axis))
                if prev is not None and prev[1] != val:
                    raise ConfigurationError(
                        f"region {rid}: axis {axis} gets stride {prev[1]} from pair {prev[0]} "
                        f"and {val} from pair {(i, j)}"
                    )
                seen[(rid, axis)] = ((i, j), val)
            out[(i, j)][field.index_of(rid)] = (int(ri), int(rj))
    return out


def assemble_basic_2d(
    field: CoefficientField, spec: GridSpec, domain: DomainBox, stride: Sequence[int] | None = None
) -> SchemeMatrix:
    """Basic scheme with global stride ``p`` (defaults to the field's common stride)."""
    if field.dim != 2:
        raise ConfigurationError("assemble_basic_2d needs d = 2")
    return assemble(field, spec, domain, SchemeKind("basic", None if stride is None else tuple(stride)))


def assemble_extended_2d(field: CoefficientField, spec: GridSpec, domain: DomainBox) -> SchemeMatrix:
    """Extended scheme with the per-region strides ``r(l)`` of the field."""
    if field.dim != 2:
        raise ConfigurationError("assemble_extended_2d needs d = 2")
    return assemble(field, spec, domain, SchemeKind("extended"))


def assemble_nd(
    field: CoefficientField,
    spec: GridSpec,
    domain: DomainBox,
    kind: SchemeKind = SchemeKind(),
    pair_strides: dict[tuple[int, int], dict[str, tuple[int, int]]] | None = None,
    check: bool = True,
) -> SchemeMatrix:
    """Pairwise plane decomposition for any ``d >= 2``."""
    return assemble(field, spec, domain, kind, pair_strides, check)


def restrict_dirichlet(A: SchemeMatrix, domain: DomainBox) -> SchemeMatrix:
    """Principal submatrix on the interior knots of ``D``.

    The couplings from interior rows to all other knots are kept in
    ``coupling`` (columns indexed by ``coupled_knots``) for boundary lifting.
    """
    ilo, ihi = knot_box(A.spec, domain, "interior")
    if np.any(ilo < A.lo) or np.any(ihi > A.hi):
        raise ConfigurationError("domain interior is not covered by the matrix")
    interior = A.index_of(_box_points(ilo, ihi))
    mask = np.zeros(A.order, dtype=bool)
    mask[interior] = True
    rows = A.matrix[interior]
    sub = rows[:, interior].tocsr()
    others = np.flatnonzero(~mask)
    coup = rows[:, others].tocsr()
    used = np.unique(coup.indices)
    coup = coup[:, used].tocsr()
    knots_all = A.knots()
    for m in (sub, coup):
        m.sort_indices()
    return SchemeMatrix(sub, ilo, ihi, A.spec, True, coup, knots_all[others[used]])


def verify_compartmental(A: SchemeMatrix, restricted: bool | None = None, rtol: float = 1e-12) -> StencilCertificate:
    """Check signs and row/column sums of an assembled matrix.

    Knots with an empty row and column (padding of the assembly box) are
    ignored.  Tolerances are relative to the largest entry.
    """
    restricted = A.restricted if restricted is None else restricted
    m = A.matrix.tocoo()
    scale = float(np.max(np.abs(m.data))) if m.nnz else 1.0
    tol = rtol * scale
    knots = A.knots()
    offenders = []
    diag = A.matrix.diagonal()
    off = m.row != m.col
    pos = off & (m.data > 0)
    for r, c, val in zip(m.row[pos], m.col[pos], m.data[pos]):
        offenders.append((tuple(knots[r].tolist()), tuple(knots[c].tolist()), float(val)))
    # knots without any coupling are decoupled padding of the assembly box
    active = (np.diff(A.matrix.indptr) > 0) | (np.bincount(m.col, minlength=A.order) > 0)
    for r in np.flatnonzero((diag <= 0) & active):
        offenders.append((tuple(knots[r].tolist()), tuple(knots[r].tolist()), float(diag[r])))
    row_sum = np.asarray(A.matrix.sum(axis=1)).ravel()
    col_sum = np.asarray(A.matrix.sum(axis=0)).ravel()
    signs_ok = not offenders
    if restricted:
        cols_ok = bool(np.all(col_sum >= -tol))
        rows_ok = bool(np.all(row_sum >= -tol))
        comp = signs_ok and cols_ok
        return StencilCertificate(comp, rows_ok, cols_ok, offenders)
    rows_ok = bool(np.all(np.abs(row_sum) <= tol))
    cols_ok = bool(np.all(np.abs(col_sum) <= tol))
    return StencilCertificate(signs_ok and cols_ok, rows_ok, cols_ok, offenders)


def gershgorin_check(A: SchemeMatrix, rtol: float = 1e-12) -> bool:
    """Every Gershgorin column disc lies in ``Re z >= 0``."""
    m = A.matrix.tocsc()
    diag = m.diagonal()
    radius = np.asarray(abs(m).sum(axis=0)).ravel() - np.abs(diag)
    tol = rtol * (float(np.max(np.abs(m.data))) if m.nnz else 1.0)
    return bool(np.all(diag - radius >= -tol))


def quadratic_form(A: SchemeMatrix, u: GridFunction) -> float:
    """``<u | A u>_R = vol(R) sum_k u_k (A u)_k``."""
    x = A.to_vector(u)
    return float(u.spec.vol * x @ (A.matrix @ x))
