"""Stationary iterations for ``(lambda I + A) u = mu``.

Jacobi uses the splitting ``K = lambda I + diag(A)``, ``Q = diag(A) - A``
and iterates ``u <- K^{-1} (Q u + mu)`` from ``u = 0``.  Iteration stops at
the first ``r`` with ``|||u(r+1) - u(r)|||_1 < tol`` and reports ``r``; the
returned iterate is ``u(r+1)``.  Gauss-Seidel uses the same stopping rule
with lexicographic forward sweeps.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
from numba import njit, prange

from .grid import GridFunction
from .scheme import SchemeMatrix

__all__ = [
    "StructuralError",
    "SolveConfig",
    "SolveReport",
    "jacobi_solve",
    "gauss_seidel_solve",
    "solve",
    "residual",
    "set_threads",
]

log = logging.getLogger(__name__)

# an outdated system TBB makes numba fall back to another threading layer
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)


class StructuralError(ValueError):
    """The iteration matrix is undefined (nonpositive diagonal)."""


@dataclass(frozen=True)
class SolveConfig:
    method: str = "jacobi"
    lam: float = 0.0
    tol: float = 1e-9
    max_iters: int = 2_000_000

    def __post_init__(self) -> None:
        if self.method not in ("jacobi", "gauss_seidel"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


@dataclass
class SolveReport:
    iterations: int
    final_delta: float
    converged: bool
    residual_inf: float
    runtime: float
    method: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
            "residual_inf": self.residual_inf,
            "runtime_s": self.runtime,
        }


def set_threads(n: int | None) -> None:
    """Limit the threads used by the parallel Jacobi sweep."""
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True)
def _jacobi_serial(indptr, indices, data, kinv, mu, u, tol, vol, max_iters):
    n = len(mu)
    new = np.empty(n)
    delta = np.inf
    sweeps = 0
    while sweeps < max_iters:
        for i in range(n):
            s = mu[i]
            for p in range(indptr[i], indptr[i + 1]):
                s -= data[p] * u[indices[p]]
            new[i] = s * kinv[i]
        delta = 0.0
        for i in range(n):
            delta += abs(new[i] - u[i])
            u[i] = new[i]
        delta *= vol
        sweeps += 1
        if delta < tol:
            break
    return sweeps, delta


@njit(parallel=True, cache=True)
def _jacobi_sweep_parallel(indptr, indices, data, kinv, mu, u, new):
    for i in prange(len(mu)):
        s = mu[i]
        for p in range(indptr[i], indptr[i + 1]):
            s -= data[p] * u[indices[p]]
        new[i] = s * kinv[i]


@njit(cache=True)
def _swap_delta(u, new):
    delta = 0.0
    for i in range(len(u)):
        delta += abs(new[i] - u[i])
        u[i] = new[i]
    return delta


@njit(cache=True)
def _gauss_seidel(indptr, indices, data, kinv, mu, u, tol, vol, max_iters):
    n = len(mu)
    delta = np.inf
    sweeps = 0
    while sweeps < max_iters:
        delta = 0.0
        for i in range(n):
            s = mu[i]
            for p in range(indptr[i], indptr[i + 1]):
                s -= data[p] * u[indices[p]]
            v = s * kinv[i]
            delta += abs(v - u[i])
            u[i] = v
        delta *= vol
        sweeps += 1
        if delta < tol:
            break
    return sweeps, delta


def _split(A: sp.spmatrix, lam: float):
    m = sp.csr_matrix(A, dtype=float)
    m.sort_indices()
    diag = m.diagonal()
    if np.any(diag <= 0):
        i = int(np.flatnonzero(diag <= 0)[0])
        raise StructuralError(f"nonpositive diagonal entry {diag[i]} in row {i}")
    off = (m - sp.diags(diag)).tocsr()
    off.eliminate_zeros()
    off.sort_indices()
    kinv = 1.0 / (lam + diag)
    return off.indptr.astype(np.int64), off.indices.astype(np.int64), off.data.astype(float), kinv


def _unpack(A, mu):
    if isinstance(A, SchemeMatrix):
        vec = A.to_vector(mu) if isinstance(mu, GridFunction) else np.asarray(mu, dtype=float)
        return A.matrix, vec, A.spec.vol, A
    vec = mu.values.ravel() if isinstance(mu, GridFunction) else np.asarray(mu, dtype=float)
    return A, vec, 1, None


def _run(A, mu, cfg: SolveConfig, method: str, threads: int | None = None):
    mat, rhs, vol, holder = _unpack(A, mu)
    indptr, indices, data, kinv = _split(mat, cfg.lam)
    u = np.zeros(len(rhs))
    t0 = time.perf_counter()
    # max_iters caps the reported count r, which needs r + 1 sweeps
    cap = cfg.max_iters + 1
    if method == "gauss_seidel":
        sweeps, delta = _gauss_seidel(indptr, indices, data, kinv, rhs, u, cfg.tol, float(vol), cap)
    elif threads is not None and threads > 1:
        set_threads(threads)
        new = np.empty_like(u)
        sweeps, delta = 0, np.inf
        while sweeps < cap:
            _jacobi_sweep_parallel(indptr, indices, data, kinv, rhs, u, new)
            delta = vol * _swap_delta(u, new)
            sweeps += 1
            if delta < cfg.tol:
                break
    else:
        sweeps, delta = _jacobi_serial(indptr, indices, data, kinv, rhs, u, cfg.tol, float(vol), cap)
    runtime = time.perf_counter() - t0
    converged = bool(delta < cfg.tol)
    res = residual(mat, u, rhs, cfg.lam)
    report = SolveReport(int(sweeps) - 1, float(delta), converged, res, runtime, method)
    log.info("%s: %d iterations, delta %.3e, residual %.3e, %.2fs", method, report.iterations, delta, res, runtime)
    out = holder.to_grid(u) if holder is not None else u
    return out, report


def jacobi_solve(A, mu, cfg: SolveConfig = SolveConfig(), threads: int | None = None):
    """Jacobi iteration; returns ``(solution, SolveReport)``.

    ``A`` is a restricted ``SchemeMatrix`` (solution returned as a grid
    function on its knots) or a plain sparse matrix (solution as an array).
    The report's ``iterations`` is ``r`` and the solution is ``u(r + 1)``,
    also when the run stops at ``max_iters`` without converging.  Such a
    non-convergence is reported, not raised.
    """
    return _run(A, mu, cfg, "jacobi", threads)


def gauss_seidel_solve(A, mu, cfg: SolveConfig = SolveConfig()):
    """Forward Gauss-Seidel with the Jacobi stopping rule."""
    return _run(A, mu, cfg, "gauss_seidel")


def solve(A, mu, cfg: SolveConfig = SolveConfig(), threads: int | None = None):
    if cfg.method == "gauss_seidel":
        return gauss_seidel_solve(A, mu, cfg)
    return jacobi_solve(A, mu, cfg, threads)


def residual(A, u, mu, lam: float = 0.0) -> float:
    """``max |(lambda I + A) u - mu|``."""
    mat = A.matrix if isinstance(A, SchemeMatrix) else A
    uv = u.values.ravel() if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    mv = mu.values.ravel() if isinstance(mu, GridFunction) else np.asarray(mu, dtype=float)
    r = mat @ uv + lam * uv - mv
    return float(np.max(np.abs(r))) if r.size else 0.0
