"""Built-in boundary-value problems with closed-form solutions.

A ``Problem`` bundles a coefficient field, a right-hand side, Dirichlet
data and (optionally) the exact solution used for error reports.
``build_system`` turns it into the restricted matrix and load vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coeff import CoefficientField, example71, example72, identity_field
from .grid import DomainBox, GridFunction, GridSpec
from .rhs import (
    BoundaryData,
    Density,
    FunctionalSpec,
    MeasureSpec,
    PointDirac,
    dirichlet_lift,
    discretize_functional,
    discretize_measure,
    weak_form_rhs,
)
from .scheme import SchemeKind, SchemeMatrix, assemble, restrict_dirichlet

__all__ = [
    "ExactSolution",
    "Problem",
    "LinearSystem",
    "build_system",
    "example71_solution",
    "example72_solution",
    "sine_solution",
    "builtin_problem",
    "BUILTIN_PROBLEMS",
]

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with its gradient and singular points."""

    name: str
    u: Fn
    grad: Fn | None = None
    singular: tuple[tuple[float, ...], ...] = ()


def example71_solution(sigma2: float = 10.0, t: tuple[float, float] = (0.5, 0.5)) -> ExactSolution:
    """Fundamental solution of the two-material operator with the interface ``x_1 = t_1``."""
    sigma = np.sqrt(sigma2)
    c = 1.0 / (2.0 * np.pi * (1.0 + sigma))

    def u(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        y1, y2 = x[:, 0] - t[0], x[:, 1] - t[1]
        left = np.log(y1**2 + y2**2)
        right = np.log(y1**2 + sigma2 * y2**2) - np.log(sigma2)
        with np.errstate(divide="ignore"):
            return -c * np.where(x[:, 0] < t[0], left, right)

    return ExactSolution("example71", u, None, (tuple(t),))


def example72_solution() -> ExactSolution:
    return ExactSolution(
        "example72",
        lambda x: np.atleast_2d(x)[:, 0] * np.atleast_2d(x)[:, 1],
        lambda x: np.atleast_2d(x)[:, ::-1].copy(),
    )


def sine_solution() -> ExactSolution:
    """``sin(pi x_1) sin(pi x_2)``, zero on the boundary of the unit square."""

    def u(x):
        x = np.atleast_2d(x)
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def grad(x):
        x = np.atleast_2d(x)
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        return np.pi * np.stack([c[:, 0] * s[:, 1], s[:, 0] * c[:, 1]], axis=1)

    return ExactSolution("sine", u, grad)


@dataclass
class Problem:
    """Dirichlet problem ``A u = mu`` on ``domain`` with ``u = g`` on the boundary.

    ``rhs`` is a ``MeasureSpec``, a ``FunctionalSpec`` or the string
    ``"weak-form"`` (the load ``a(psi_k, u*)`` of the exact solution).
    ``boundary`` is ``None`` for zero data.
    """

    name: str
    field: CoefficientField
    domain: DomainBox
    rhs: MeasureSpec | FunctionalSpec | str
    boundary: Fn | None = None
    exact: ExactSolution | None = None
    kind: SchemeKind = field(default_factory=SchemeKind)

    def excluded_knots(self, spec: GridSpec) -> list[tuple[int, ...]]:
        """Knots that coincide with singular points of the exact solution."""
        out = []
        if self.exact is None:
            return out
        for p in self.exact.singular:
            z = np.asarray(p) * spec.inv_h
            k = np.rint(z)
            if np.allclose(z, k, atol=1e-9):
                out.append(tuple(int(v) for v in k))
        return out


@dataclass
class LinearSystem:
    full: SchemeMatrix
    restricted: SchemeMatrix
    load: np.ndarray

    @property
    def rhs_grid(self) -> GridFunction:
        return self.restricted.to_grid(self.load)


def build_system(problem: Problem, spec: GridSpec, check: bool = True) -> LinearSystem:
    """Assemble, restrict to the interior and form ``mu + lift``."""
    A = assemble(problem.field, spec, problem.domain, problem.kind, check=check)
    R = restrict_dirichlet(A, problem.domain)
    if isinstance(problem.rhs, str):
        if problem.rhs != "weak-form":
            raise ValueError(f"unknown right-hand side {problem.rhs!r}")
        if problem.exact is None or problem.exact.grad is None:
            raise ValueError("the weak-form load needs an exact solution with a gradient")
        mu = weak_form_rhs(problem.field, problem.exact.grad, spec, problem.domain)
    elif isinstance(problem.rhs, FunctionalSpec):
        mu = discretize_functional(problem.rhs, spec, problem.domain)
    else:
        mu = discretize_measure(problem.rhs, spec, problem.domain)
    load = R.to_vector(mu)
    if problem.boundary is not None:
        load = load + R.to_vector(dirichlet_lift(R, BoundaryData(problem.boundary)))
    return LinearSystem(A, R, load)


def _example71(**kw) -> Problem:
    sigma2 = float(kw.get("sigma2", 10.0))
    sol = example71_solution(sigma2)
    return Problem(
        "example71",
        example71(sigma2),
        DomainBox.unit(),
        MeasureSpec([PointDirac((0.5, 0.5))]),
        sol.u,
        sol,
    )


def _example72(**kw) -> Problem:
    sol = example72_solution()
    stride = tuple(kw.get("stride", (3, 1)))
    return Problem(
        "example72",
        example72(float(kw.get("sigma2", 10.0)), float(kw.get("rho", 2.0)), stride),
        DomainBox.unit(),
        "weak-form",
        sol.u,
        sol,
    )


def _sine(**kw) -> Problem:
    sol = sine_solution()
    f = lambda x: 2.0 * np.pi**2 * sol.u(x)  # noqa: E731
    return Problem("sine", identity_field(2), DomainBox.unit(), MeasureSpec([Density(f)]), None, sol)


BUILTIN_PROBLEMS: dict[str, Callable[..., Problem]] = {
    "example71": _example71,
    "example72": _example72,
    "sine": _sine,
}


def builtin_problem(name: str, **params) -> Problem:
    try:
        return BUILTIN_PROBLEMS[name](**params)
    except KeyError:
        raise ValueError(f"unknown built-in problem {name!r}; known: {sorted(BUILTIN_PROBLEMS)}") from None
