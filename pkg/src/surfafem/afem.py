"""
Adaptive driver: outer tolerance loop, greedy geometric refinement and the
solve-estimate-mark-refine inner loop.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .discrete_surface import interpolate_geometry
from .estimators import estimate, geometric_indicators
from .fem import ProblemData, build_space, assemble, lifted_h1_error, solve
from .mesh import SurfaceMesh, build_initial_mesh, refine, refine_uniform
from .problems import flat_quadratic, graph_unit_load, half_sphere_singular, sphere_manufactured

INDICATORS = ("lambda", "mu")
STRATEGIES = ("adaptive", "uniform")


class AfemError(RuntimeError):
    """Iteration cap exceeded; ``mesh`` holds the partial result."""

    def __init__(self, message, mesh=None):
        super().__init__(message)
        self.mesh = mesh


@dataclass
class AfemConfig:
    eps0: float = 1.0
    rho: float = 0.5
    omega: float = 1.0
    indicator: str = "mu"
    theta: float = 0.5
    r: int = 2
    k: int = 1
    final_eps: float = 1e-2
    max_outer: int = 40
    max_surf_loops: int = 500
    max_pde_loops: int = 500
    solver_tol: float = 1e-10
    m: int | None = None
    mprime: int | None = None
    strategy: str = "adaptive"
    levels: int = 4

    def validate(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.indicator not in INDICATORS:
            raise ValueError(f"indicator must be one of {INDICATORS}")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if int(self.r) < 1 or int(self.k) < 1:
            raise ValueError("degrees r and k must be >= 1")
        if not self.final_eps > 0:
            raise ValueError("final_eps must be positive")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if self.mprime is not None and self.mprime < 0:
            raise ValueError("mprime must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if int(self.levels) < 1:
            raise ValueError("levels must be >= 1")
        return self


RECORD_COLUMNS = (
    "iter", "eps", "dof", "eta", "osc", "lambda", "beta", "mu", "h1_error", "surf_loops", "pde_loops", "seconds",
)


@dataclass
class ConvergenceRecord:
    iter: int
    eps: float
    dof: int
    eta: float
    osc: float
    lam: float
    beta: float
    mu: float
    h1_error: float
    surf_loops: int
    pde_loops: int
    seconds: float

    def row(self):
        return [getattr(self, f.name) for f in fields(self)]


def write_records(path, records, timing=True):
    """CSV with the fixed column order; ``timing=False`` writes 0 seconds for byte-stable output."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for rec in records:
            row = rec.row()
            if not timing:
                row[-1] = 0.0
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def read_records(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in RECORD_COLUMNS}


# ---------------------------------------------------------------- geometric indicator cache


class GeometryIndicatorCache:
    """``(lambda_T, beta_T)`` memoized by the element's vertex set.

    Both quantities only depend on the element as a point set (and the
    chart), and vertex ids are stable under refinement.
    """

    def __init__(self, k: int):
        self.k = k
        self.keys = np.zeros(0, dtype=np.int64)
        self.vals = np.zeros((0, 2))

    @staticmethod
    def _codes(mesh):
        s = np.sort(mesh.elements, axis=1).astype(np.int64)
        code = np.zeros(len(s), dtype=np.int64)
        for j in range(s.shape[1]):
            code = code * np.int64(1 << 21) + s[:, j]
        return code

    def __call__(self, mesh: SurfaceMesh, ds=None):
        if mesh.n_vertices >= 1 << 21:
            ds = ds or interpolate_geometry(mesh, k=self.k)
            lam, beta, _ = geometric_indicators(mesh, mesh.surface, ds)
            return lam, beta
        codes = self._codes(mesh)
        pos = np.minimum(np.searchsorted(self.keys, codes), max(len(self.keys) - 1, 0))
        hit = (self.keys[pos] == codes) if len(self.keys) else np.zeros(len(codes), dtype=bool)
        out = np.empty((len(codes), 2))
        out[hit] = self.vals[pos[hit]]
        miss = np.nonzero(~hit)[0]
        if miss.size:
            if ds is None:
                # interpolate only the new elements; X_T is element-local
                sub = SurfaceMesh(mesh.surface, mesh.flat, mesh.points, mesh.elements[miss], mesh.macro[miss], mesh.level[miss])
                lam, beta, _ = geometric_indicators(sub, mesh.surface, interpolate_geometry(sub, k=self.k))
            else:
                lam, beta, _ = geometric_indicators(mesh, mesh.surface, ds, elements=miss)
            out[miss, 0], out[miss, 1] = lam, beta
            keys = np.concatenate([self.keys, codes[miss]])
            vals = np.concatenate([self.vals, out[miss]])
            keys, first = np.unique(keys, return_index=True)
            self.keys, self.vals = keys, vals[first]
        return out[:, 0], out[:, 1]


# ---------------------------------------------------------------- building blocks


def element_indicator(config: AfemConfig, lam, beta):
    return lam if config.indicator == "lambda" else beta + lam**2


def adapt_surf(mesh: SurfaceMesh, surface, config: AfemConfig, tol: float, cache: GeometryIndicatorCache | None = None):
    """Greedy geometric refinement until every indicator is ``<= tol``.

    Returns ``(mesh, loops)`` where ``loops`` counts REFINE calls.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    cache = cache or GeometryIndicatorCache(config.k)
    loops = 0
    while True:
        lam, beta = cache(mesh)
        ind = element_indicator(config, lam, beta)
        marked = np.nonzero(ind > tol)[0]
        if marked.size == 0:
            return mesh, loops
        if loops >= config.max_surf_loops:
            raise AfemError(f"ADAPTSURF exceeded {config.max_surf_loops} loops", mesh)
        mesh = refine(mesh, marked)
        loops += 1


def dorfler_mark(indicators, theta: float) -> np.ndarray:
    """Smallest set (largest indicators first) carrying a ``theta`` share of ``sum eta_T^2``."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    eta2 = np.asarray(indicators, dtype=float) ** 2
    total = eta2.sum()
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-eta2, kind="stable")
    cum = np.cumsum(eta2[order])
    goal = theta * total
    # guard the comparison against round-off in the running sum
    n = int(np.searchsorted(cum, goal * (1 - 1e-14), side="left")) + 1
    n = min(n, len(order))
    if theta == 1:
        n = int(np.count_nonzero(eta2))
    return np.sort(order[:n])


@dataclass
class PdeResult:
    solution: object
    mesh: SurfaceMesh
    ds: object
    eta: np.ndarray
    osc: np.ndarray
    loops: int


def _solve_estimate(mesh, data, config, mode):
    ds = interpolate_geometry(mesh, k=config.k)
    space = build_space(mesh, ds, config.r, mode)
    sol = solve(assemble(ds, space, data), config.solver_tol)
    eta, osc = estimate(sol, data, config.m, config.mprime)
    return ds, sol, eta, osc


def adapt_pde(mesh: SurfaceMesh, data: ProblemData, config: AfemConfig, tol: float, mode: str) -> PdeResult:
    """SOLVE -> ESTIMATE -> MARK -> REFINE until ``eta <= tol``; ``loops`` counts REFINE calls."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    loops = 0
    while True:
        ds, sol, eta, osc = _solve_estimate(mesh, data, config, mode)
        if np.sqrt(np.sum(eta**2)) <= tol:
            return PdeResult(sol, mesh, ds, eta, osc, loops)
        if loops >= config.max_pde_loops:
            raise AfemError(f"ADAPTPDE exceeded {config.max_pde_loops} loops", mesh)
        mesh = refine(mesh, dorfler_mark(eta, config.theta))
        loops += 1


# ---------------------------------------------------------------- experiments


@dataclass(frozen=True)
class Experiment:
    name: str
    surface: str
    surface_params: dict
    problem: Callable
    mode: str
    defaults: dict = field(default_factory=dict)


EXPERIMENTS = {
    "half_sphere": Experiment(
        "half_sphere", "half_sphere", {}, half_sphere_singular, "dirichlet",
        {"eps0": 3.0, "final_eps": 3.0 / 2**8, "r": 2, "k": 1},
    ),
    "c2alpha_graph": Experiment(
        "c2alpha_graph", "graph", {"alpha": 0.4}, graph_unit_load, "dirichlet",
        {"eps0": 1e-2, "final_eps": 5e-7, "r": 3, "k": 2},
    ),
    "sphere_manufactured": Experiment(
        "sphere_manufactured", "sphere", {}, sphere_manufactured, "mean_zero",
        {"eps0": 1.0, "final_eps": 0.02, "r": 1, "k": 1},
    ),
    "flat_reference": Experiment(
        "flat_reference", "flat_patch", {}, flat_quadratic, "dirichlet",
        {"eps0": 1.0, "final_eps": 0.1, "r": 2, "k": 1},
    ),
}


def experiment_config(name: str, **overrides) -> AfemConfig:
    exp = EXPERIMENTS[name]
    return AfemConfig(**{**exp.defaults, **overrides}).validate()


def _record(it, eps, res: PdeResult, data, lam, beta, surf_loops, pde_loops, seconds):
    err = float("nan")
    if data.grad_u is not None and res.ds.surface.has_distance:
        err = lifted_h1_error(res.solution, data)
    mu = beta + lam**2
    return ConvergenceRecord(
        it, eps, res.solution.space.N, float(np.sqrt(np.sum(res.eta**2))), float(np.sqrt(np.sum(res.osc**2))),
        float(lam.max()), float(beta.max()), float(mu.max()), err, surf_loops, pde_loops, seconds,
    )


def afem_run(config: AfemConfig, experiment: str, mesh: SurfaceMesh | None = None, callback=None):
    """Run an experiment; returns ``(records, final mesh)``.

    ``callback(record, result)`` is invoked after each outer iteration.
    """
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; expected one of {tuple(EXPERIMENTS)}")
    config.validate()
    exp = EXPERIMENTS[experiment]
    data = exp.problem()
    mesh = mesh or build_initial_mesh(exp.surface, exp.surface_params)
    if config.strategy == "uniform":
        return _uniform_run(config, exp, data, mesh, callback)
    cache = GeometryIndicatorCache(config.k)
    records = []
    eps = config.eps0
    it = 0
    while eps >= config.final_eps and it < config.max_outer:
        t0 = time.perf_counter()
        mesh, surf_loops = adapt_surf(mesh, mesh.surface, config, config.omega * eps, cache)
        res = adapt_pde(mesh, data, config, eps, exp.mode)
        mesh = res.mesh
        lam, beta = cache(mesh, res.ds)
        rec = _record(it, eps, res, data, lam, beta, surf_loops, res.loops, time.perf_counter() - t0)
        records.append(rec)
        if callback:
            callback(rec, res)
        eps = eps * config.rho
        it += 1
    return records, mesh


def _uniform_run(config, exp, data, mesh, callback):
    records = []
    for level in range(int(config.levels)):
        t0 = time.perf_counter()
        ds, sol, eta, osc = _solve_estimate(mesh, data, config, exp.mode)
        res = PdeResult(sol, mesh, ds, eta, osc, 0)
        lam, beta, _ = geometric_indicators(mesh, mesh.surface, ds)
        rec = _record(level, float("nan"), res, data, lam, beta, 0, 0, time.perf_counter() - t0)
        records.append(rec)
        if callback:
            callback(rec, res)
        if level + 1 < int(config.levels):
            mesh = refine_uniform(mesh)
    return records, mesh


def loglog_slope(dof, values, window: int | None = None) -> float:
    """Least-squares slope of ``log(values)`` against ``log(dof)`` over the last ``window`` points."""
    dof = np.asarray(dof, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is not None:
        dof, values = dof[-window:], values[-window:]
    if len(dof) < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(dof <= 0) or np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError("log-log slope needs positive finite values")
    if np.ptp(np.log(dof)) == 0:
        raise ValueError("log-log slope needs at least two distinct DOF counts")
    return float(np.polyfit(np.log(dof), np.log(values), 1)[0])


def config_dict(config: AfemConfig) -> dict:
    return asdict(config)


__all__ = [
    "AfemConfig", "AfemError", "ConvergenceRecord", "EXPERIMENTS", "adapt_pde", "adapt_surf", "afem_run",
    "dorfler_mark", "experiment_config", "loglog_slope", "read_records", "write_records",
]
