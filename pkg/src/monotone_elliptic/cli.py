"""Configuration-driven command line front end.

Commands: ``check``, ``solve``, ``convergence``, ``export-matrix`` and
``dump-config``.  Exit codes: 0 success, 1 admissibility or verification
failure, 2 configuration error, 3 non-convergence.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import click
import jsonschema
import numpy as np
import scipy.io

from .coeff import CoefficientField, ConfigurationError, Region, admissibility, example71, example72, identity_field
from .embed import relative_errors
from .grid import AlignmentError, DomainBox, GridSpec
from .problems import BUILTIN_PROBLEMS, Problem, build_system, example71_solution, example72_solution, sine_solution
from .rhs import Density, LineDirac, MeasureSpec, PointDirac
from .scheme import AssemblyError, SchemeKind, classify_sign_regions, verify_compartmental
from .solver import SolveConfig, set_threads, solve

__all__ = ["main", "ProblemConfig", "load_config", "normalize_config", "run_check", "run_solve", "run_convergence", "run_export"]

log = logging.getLogger("monotone_elliptic")

SCHEMA_VERSION = 1

EXIT_OK, EXIT_INADMISSIBLE, EXIT_PARSE, EXIT_NOT_CONVERGED = 0, 1, 2, 3

_VEC = {"type": "array", "items": {"type": ["number", "null"]}, "minItems": 1}
_MAT = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_INTS = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema_version"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "problem": {"enum": sorted(BUILTIN_PROBLEMS)},
        "params": {"type": "object"},
        "domain": {
            "type": "object",
            "required": ["lower", "upper"],
            "additionalProperties": False,
            "properties": {"lower": _VEC, "upper": _VEC},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"level": {"type": "integer", "minimum": 1}, "inv_h": {"type": "integer", "minimum": 2}},
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["basic", "extended"]},
                "stride": {"anyOf": [_INTS, {"type": "null"}]},
                "mixed_sampling": {"enum": ["pointwise", "region"]},
                "region_strides": {"type": "object", "additionalProperties": _INTS},
            },
        },
        "coefficients": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": ["identity", "example71", "example72"]},
                "params": {"type": "object"},
                "dim": {"type": "integer", "minimum": 2},
                "regions": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["id", "tensor"],
                        "additionalProperties": False,
                        "properties": {
                            "id": {"type": "string"},
                            "boxes": {"type": "array", "items": {"type": "array", "items": _VEC, "minItems": 2, "maxItems": 2}},
                            "tensor": _MAT,
                            "stride": _INTS,
                        },
                    },
                },
            },
        },
        "rhs": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["weak-form", "measure", "zero"]},
                "components": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind"],
                        "properties": {"kind": {"enum": ["point", "line", "density"]}},
                    },
                },
            },
        },
        "boundary": {"enum": ["zero", "exact"]},
        "exact": {"enum": [None, "example71", "example72", "sine"]},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["jacobi", "gauss_seidel"]},
                "lam": {"type": "number", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
            },
        },
        "outputs": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
}

# defaults filled in by built-in problems
_PROBLEM_DEFAULTS: dict[str, dict[str, Any]] = {
    "example71": {
        "coefficients": {"builtin": "example71", "params": {"sigma2": 10.0}},
        "rhs": {"type": "measure", "components": [{"kind": "point", "location": [0.5, 0.5], "weight": 1.0}]},
        "boundary": "exact",
        "exact": "example71",
        "grid": {"inv_h": 400},
    },
    "example72": {
        "coefficients": {"builtin": "example72", "params": {"sigma2": 10.0, "rho": 2.0, "stride": [3, 1]}},
        "rhs": {"type": "weak-form"},
        "boundary": "exact",
        "exact": "example72",
        "grid": {"inv_h": 400},
    },
    "sine": {
        "coefficients": {"builtin": "identity"},
        "rhs": {"type": "measure", "components": [{"kind": "density", "function": "sine_load"}]},
        "boundary": "zero",
        "exact": "sine",
        "grid": {"level": 5},
    },
}

_DEFAULTS: dict[str, Any] = {
    "domain": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
    "scheme": {"variant": "extended", "stride": None, "mixed_sampling": "pointwise"},
    "rhs": {"type": "zero"},
    "boundary": "zero",
    "exact": None,
    "solver": {"method": "jacobi", "lam": 0.0, "tol": 1e-9, "max_iters": 2_000_000},
    "outputs": {"dir": "out"},
}


class ConfigError(ValueError):
    """Invalid configuration; carries a location for diagnostics."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def normalize_config(raw: dict) -> dict:
    """Validate ``raw`` and fill in every default; the result re-parses to itself."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"field {where}: {e.message}") from None
    cfg = copy.deepcopy(_DEFAULTS)
    if "problem" in raw:
        cfg = _merge(cfg, _PROBLEM_DEFAULTS[raw["problem"]])
    cfg = _merge(cfg, {k: v for k, v in raw.items() if k != "grid"})
    grid = raw.get("grid", cfg.get("grid", {"level": 5}))
    if "level" in grid and "inv_h" in grid:
        raise ConfigError("field grid: give either level or inv_h, not both")
    cfg["grid"] = {"inv_h": int(grid["inv_h"])} if "inv_h" in grid else {"level": int(grid.get("level", 5))}
    cfg.setdefault("coefficients", {"builtin": "identity"})
    if cfg["boundary"] == "exact" and cfg["exact"] is None:
        raise ConfigError("field boundary: 'exact' needs an exact solution")
    if cfg["rhs"]["type"] == "weak-form" and cfg["exact"] in (None, "example71"):
        raise ConfigError("field rhs: the weak-form load needs a smooth exact solution")
    cfg.pop("params", None)
    return cfg


def _parse_json(text: str, source: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: the configuration must be a JSON object")
    return raw


def load_config(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{p}: {e.strerror}") from None
    return normalize_config(_parse_json(text, str(p)))


def _inf(v):
    return [np.inf if x is None else float(x) for x in v]


def _box(b):
    lo = [-np.inf if x is None else float(x) for x in b[0]]
    hi = [np.inf if x is None else float(x) for x in b[1]]
    return (tuple(lo), tuple(hi))


@dataclass
class ProblemConfig:
    """Parsed, normalised configuration."""

    raw: dict
    domain: DomainBox
    spec: GridSpec
    field: CoefficientField
    kind: SchemeKind
    rhs: Any
    boundary: Any
    exact: Any
    solver: SolveConfig
    out_dir: Path
    notes: dict = field(default_factory=dict)

    def problem(self) -> Problem:
        return Problem("config", self.field, self.domain, self.rhs, self.boundary, self.exact, self.kind)


def _build_field(c: dict, dim: int, region_strides: dict) -> CoefficientField:
    if "regions" in c:
        d = int(c.get("dim", dim))
        regions = []
        for r in c["regions"]:
            t = np.asarray(r["tensor"], dtype=float)
            if t.shape != (d, d):
                raise ConfigError(f"field coefficients/regions/{r['id']}/tensor: expected a {d}x{d} matrix")
            boxes = [_box(b) for b in r.get("boxes", [[[None] * d, [None] * d]])]
            regions.append(Region(r["id"], boxes, t, tuple(r.get("stride", (1,) * d))))
        f = CoefficientField(d, regions, name="inline")
    else:
        name = c.get("builtin", "identity")
        params = dict(c.get("params", {}))
        if name == "identity":
            f = identity_field(dim)
        elif name == "example71":
            f = example71(**params)
        else:
            if "stride" in params:
                params["stride"] = tuple(params["stride"])
            f = example72(**params)
    if region_strides:
        f = f.with_strides({k: tuple(v) for k, v in region_strides.items()})
    return f


def _build_rhs(r: dict, dim: int):
    if r["type"] == "weak-form":
        return "weak-form"
    comps = []
    for n, c in enumerate(r.get("components", [])):
        where = f"rhs/components/{n}"
        try:
            if c["kind"] == "point":
                comps.append(PointDirac(tuple(float(v) for v in c["location"]), float(c.get("weight", 1.0))))
            elif c["kind"] == "line":
                comps.append(
                    LineDirac(int(c["axis"]), float(c["level"]), (tuple(c["support"][0]), tuple(c["support"][1])), float(c.get("weight", 1.0)))
                )
            else:
                if c.get("function") == "sine_load":
                    u = sine_solution().u
                    fn = lambda x, u=u: 2.0 * np.pi**2 * u(x)  # noqa: E731
                else:
                    fn = float(c.get("value", 1.0))
                box = c.get("box")
                comps.append(Density(fn, float(c.get("weight", 1.0)), None if box is None else (tuple(box[0]), tuple(box[1]))))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"field {where}: malformed component ({e})") from None
    return MeasureSpec(comps)


_EXACT = {"example71": example71_solution, "example72": example72_solution, "sine": sine_solution}


def build_problem_config(cfg: dict, level: int | None = None) -> ProblemConfig:
    """Turn a normalised configuration into library objects."""
    cfg = copy.deepcopy(cfg)
    if level is not None:
        cfg["grid"] = {"level": int(level)}
    try:
        domain = DomainBox(tuple(_inf(cfg["domain"]["lower"])), tuple(_inf(cfg["domain"]["upper"])))
    except ValueError as e:
        raise ConfigError(f"field domain: {e}") from None
    dim = domain.dim
    g = cfg["grid"]
    spec = GridSpec.from_step(g["inv_h"], dim) if "inv_h" in g else GridSpec(g["level"], dim)
    sch = cfg["scheme"]
    kind = SchemeKind(sch["variant"], None if sch.get("stride") is None else tuple(sch["stride"]), sch["mixed_sampling"])
    try:
        fld = _build_field(cfg["coefficients"], dim, sch.get("region_strides", {}))
    except (ConfigurationError, TypeError) as e:
        raise ConfigError(f"field coefficients: {e}") from None
    exact = None
    if cfg["exact"] is not None:
        params = cfg["coefficients"].get("params", {}) if cfg["exact"] == "example71" else {}
        exact = _EXACT[cfg["exact"]](**({"sigma2": params["sigma2"]} if "sigma2" in params else {}))
    boundary = exact.u if cfg["boundary"] == "exact" else None
    s = cfg["solver"]
    solver = SolveConfig(s["method"], float(s["lam"]), float(s["tol"]), int(s["max_iters"]))
    return ProblemConfig(cfg, domain, spec, fld, kind, _build_rhs(cfg["rhs"], dim), boundary, exact, solver, Path(cfg["outputs"]["dir"]))


def matrix_hash(m) -> str:
    m = m.tocsr()
    m.sort_indices()
    h = hashlib.sha256()
    for a in (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.float64)):
        h.update(a.tobytes())
    h.update(np.asarray(m.shape, dtype=np.int64).tobytes())
    return h.hexdigest()


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_check(pc: ProblemConfig) -> tuple[int, dict]:
    rep = admissibility(pc.field, pc.domain)
    out = {"command": "check", **rep.to_dict()}
    try:
        for i in range(pc.field.dim):
            for j in range(i + 1, pc.field.dim):
                classify_sign_regions(pc.field, pc.spec, pc.domain, axes=(i, j))
        out["classification"] = "ok"
    except AssemblyError as e:
        out["classification"] = str(e)
    ok = rep.admissible and out["classification"] == "ok"
    return (EXIT_OK if ok else EXIT_INADMISSIBLE), out


def _solution_csv(u, path: Path) -> None:
    idx = u.indices()
    x = u.spec.coords(idx)
    vals = u.values.ravel()
    d = idx.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"k{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(d)] + ["value"])
        for k, xx, v in zip(idx.tolist(), x.tolist(), vals.tolist()):
            w.writerow(k + [repr(c) for c in xx] + [repr(v)])


def run_solve(pc: ProblemConfig, threads: int | None = None, write: bool = True) -> tuple[int, dict]:
    t0 = time.perf_counter()
    system = build_system(pc.problem(), pc.spec, check=False)
    cert = verify_compartmental(system.full)
    report: dict[str, Any] = {
        "command": "solve",
        "h": pc.spec.h,
        "unknowns": system.restricted.order,
        "certificate": cert.to_dict(),
        "matrix_sha256": matrix_hash(system.restricted.matrix),
        "assembly_runtime_s": time.perf_counter() - t0,
    }
    if not cert.compartmental:
        report["error"] = "assembled matrix is not compartmental"
        return EXIT_INADMISSIBLE, report
    if pc.kind.variant == "extended":
        adm = admissibility(pc.field, pc.domain)
        if adm.violations:
            report["admissibility"] = adm.to_dict()
            report["error"] = "region strides are inadmissible"
            return EXIT_INADMISSIBLE, report
    u, sr = solve(system.restricted, system.load, pc.solver, threads)
    report["solver"] = sr.to_dict()
    if pc.exact is not None:
        err = relative_errors(u, pc.exact.u, pc.problem().excluded_knots(pc.spec))
        report["errors"] = err.to_dict()
    if write:
        pc.out_dir.mkdir(parents=True, exist_ok=True)
        _solution_csv(u, pc.out_dir / "solution.csv")
        _write_json(pc.out_dir / "report.json", report)
    return (EXIT_OK if sr.converged else EXIT_NOT_CONVERGED), report


def run_convergence(cfg: dict, levels: list[int], threads: int | None = None) -> tuple[int, list[dict]]:
    rows = []
    for n in levels:
        row: dict[str, Any] = {"level": n}
        try:
            pc = build_problem_config(cfg, level=n)
            row["h"] = pc.spec.h
            code, rep = run_solve(pc, threads, write=False)
            row.update(
                eps1=rep.get("errors", {}).get("eps1"),
                epsInf=rep.get("errors", {}).get("epsInf"),
                iterations=rep.get("solver", {}).get("iterations"),
                runtime=rep.get("solver", {}).get("runtime_s"),
                status=code,
            )
        except (AssemblyError, AlignmentError, ConfigError, ValueError) as e:
            log.error("level %d failed: %s", n, e)
            row.update(error=str(e), status=EXIT_INADMISSIBLE)
        rows.append(row)
    return max((r["status"] for r in rows), default=EXIT_OK), rows


def convergence_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    cols = ["level", "h", "eps1", "epsInf", "iterations", "runtime", "status", "error"]
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r.get(c), float) else r[c]) for c in cols])
    return buf.getvalue()


def run_export(pc: ProblemConfig, out_dir: Path) -> dict:
    system = build_system(pc.problem(), pc.spec, check=True)
    R = system.restricted
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, R.matrix.tocoo(), symmetry="general", precision=17)
    (out_dir / "matrix.mtx").write_bytes(buf.getvalue())
    knots = R.knots()
    x = R.spec.coords(knots)
    d = knots.shape[1]
    with (out_dir / "index.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"k{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(d)])
        for r, (k, xx) in enumerate(zip(knots.tolist(), x.tolist()), start=1):
            w.writerow([r] + k + [repr(c) for c in xx])
    return {"command": "export-matrix", "order": R.order, "nnz": int(R.matrix.nnz), "matrix_sha256": matrix_hash(R.matrix)}


def _setup_logging() -> None:
    level = os.environ.get("MONOTONE_ELLIPTIC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _load(ctx_cfg: str) -> dict:
    try:
        return load_config(ctx_cfg)
    except ConfigError as e:
        click.echo(f"configuration error: {e}", err=True)
        sys.exit(EXIT_PARSE)


def _config_opts(f):
    f = click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized probes.")(f)
    f = click.option("--threads", type=int, default=None, help="Solver threads (default: all cores).")(f)
    f = click.option("--level", type=int, default=None, help="Override the grid level n (h = 2^-n).")(f)
    f = click.option("--config", "config", type=click.Path(dir_okay=False), required=True, help="JSON problem file.")(f)
    return f


def _prepare(config, level, out):
    cfg = _load(config)
    if out is not None:
        cfg["outputs"]["dir"] = out
    try:
        return build_problem_config(cfg, level)
    except (ConfigError, ConfigurationError, AlignmentError) as e:
        click.echo(f"configuration error: {e}", err=True)
        sys.exit(EXIT_PARSE)


@click.group()
def main() -> None:
    """Monotone discretisation of divergence-form elliptic operators."""
    _setup_logging()


@main.command()
@_config_opts
def check(config, level, threads, seed, out):
    """Admissibility of the configured coefficient field and strides."""
    pc = _prepare(config, level, out)
    code, rep = run_check(pc)
    rng = np.random.default_rng(seed)
    rep["ellipticity_probe"] = bool(pc.field.check_ellipticity(rng, domain=pc.domain))
    rep["seed"] = seed
    click.echo(json.dumps(rep, indent=2, sort_keys=True))
    if out is not None:
        _write_json(Path(out) / "check.json", rep)
    sys.exit(code)


@main.command(name="solve")
@_config_opts
def solve_cmd(config, level, threads, seed, out):
    """Assemble, verify, solve and write solution.csv and report.json."""
    pc = _prepare(config, level, out)
    set_threads(threads)
    try:
        code, rep = run_solve(pc, threads)
    except AssemblyError as e:
        click.echo(f"assembly failed: {e}", err=True)
        sys.exit(EXIT_INADMISSIBLE)
    if code == EXIT_INADMISSIBLE:
        _write_json(pc.out_dir / "report.json", rep)
    click.echo(json.dumps(rep, indent=2, sort_keys=True))
    sys.exit(code)


@main.command()
@_config_opts
@click.option("--levels", required=True, help="Comma-separated grid levels, e.g. 5,6,7.")
def convergence(config, level, threads, seed, out, levels):
    """Run the solve pipeline per level and write a CSV table."""
    cfg = _load(config)
    try:
        lv = [int(v) for v in levels.split(",") if v.strip()]
    except ValueError:
        click.echo("configuration error: --levels must be integers", err=True)
        sys.exit(EXIT_PARSE)
    set_threads(threads)
    code, rows = run_convergence(cfg, lv, threads)
    text = convergence_csv(rows)
    out_dir = Path(out if out is not None else cfg["outputs"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "convergence.csv").write_text(text, newline="")
    click.echo(text, nl=False)
    sys.exit(code)


@main.command(name="export-matrix")
@_config_opts
def export_matrix(config, level, threads, seed, out):
    """Write the restricted matrix (MatrixMarket) and its knot index map."""
    pc = _prepare(config, level, out)
    try:
        rep = run_export(pc, pc.out_dir)
    except AssemblyError as e:
        click.echo(f"assembly failed: {e}", err=True)
        sys.exit(EXIT_INADMISSIBLE)
    click.echo(json.dumps(rep, indent=2, sort_keys=True))
    sys.exit(EXIT_OK)


@main.command(name="dump-config")
@click.option("--config", "config", type=click.Path(dir_okay=False), required=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Write here instead of stdout.")
def dump_config(config, output):
    """Print the normalised configuration (re-parses to the same run)."""
    cfg = _load(config)
    text = json.dumps(cfg, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
