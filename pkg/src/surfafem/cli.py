"""Command-line front end: ``surfafem run|check|slope|export-mesh``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .afem import EXPERIMENTS, AfemConfig, afem_run, loglog_slope, read_records, write_records
from .discrete_surface import interpolate_geometry
from .estimators import IndicatorField, check_assumptions, geometric_indicators, write_assumptions_csv
from .fem import write_matrix_market
from .geometry import GeometryError
from .mesh import MeshError, build_initial_mesh, refine_uniform, write_vtk
from .plot import loglog_svg

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class EmitFlags:
    csv: bool = True
    vtk: bool = False
    svg: bool = True
    matrix: bool = False


@dataclass
class ExperimentConfig:
    experiment: str
    output_dir: str = "out"
    afem: AfemConfig = field(default_factory=AfemConfig)
    surface_params: dict = field(default_factory=dict)
    emit: EmitFlags = field(default_factory=EmitFlags)
    seed: int = 0
    timing: bool = True
    check_level: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _strict(cls, obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(obj) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return names


def _check_type(name, value, kind):
    ok = {
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "int": isinstance(value, int) and not isinstance(value, bool),
        "bool": isinstance(value, bool),
        "str": isinstance(value, str),
    }[kind]
    if not ok:
        raise ConfigError(f"{name} must be of type {kind}")


_AFEM_TYPES = {
    "eps0": "float", "rho": "float", "omega": "float", "indicator": "str", "theta": "float", "r": "int", "k": "int",
    "final_eps": "float", "max_outer": "int", "max_surf_loops": "int", "max_pde_loops": "int",
    "solver_tol": "float", "strategy": "str", "levels": "int",
}


def config_from_dict(obj: dict) -> ExperimentConfig:
    """Validate and build an ExperimentConfig; unset AfemConfig fields take the experiment defaults."""
    _strict(ExperimentConfig, obj, "config")
    if "experiment" not in obj:
        raise ConfigError("missing key: experiment")
    exp = obj["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; expected one of {sorted(EXPERIMENTS)}")
    afem_obj = obj.get("afem", {})
    _strict(AfemConfig, afem_obj, "afem")
    for key, val in afem_obj.items():
        if key in ("m", "mprime"):
            if val is not None:
                _check_type(f"afem.{key}", val, "int")
        else:
            _check_type(f"afem.{key}", val, _AFEM_TYPES[key])
    try:
        afem = AfemConfig(**{**EXPERIMENTS[exp].defaults, **afem_obj}).validate()
    except ValueError as exc:
        raise ConfigError(f"afem: {exc}") from None
    emit_obj = obj.get("emit", {})
    _strict(EmitFlags, emit_obj, "emit")
    for key, val in emit_obj.items():
        _check_type(f"emit.{key}", val, "bool")
    sp = obj.get("surface_params", {})
    if not isinstance(sp, dict):
        raise ConfigError("surface_params must be a JSON object")
    cfg = ExperimentConfig(
        experiment=exp, afem=afem, surface_params=dict(sp), emit=EmitFlags(**emit_obj),
        **{k: obj[k] for k in ("output_dir", "seed", "timing", "check_level") if k in obj},
    )
    _check_type("output_dir", cfg.output_dir, "str")
    _check_type("seed", cfg.seed, "int")
    _check_type("timing", cfg.timing, "bool")
    _check_type("check_level", cfg.check_level, "int")
    if cfg.check_level < 0:
        raise ConfigError("check_level must be >= 0")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_dict(obj)


def _initial_mesh(cfg: ExperimentConfig):
    exp = EXPERIMENTS[cfg.experiment]
    params = {**exp.surface_params, **cfg.surface_params}
    try:
        return build_initial_mesh(exp.surface, params)
    except (GeometryError, MeshError) as exc:
        raise ConfigError(f"surface_params: {exc}") from None


# ---------------------------------------------------------------- commands


def cmd_run(cfg: ExperimentConfig) -> int:
    mesh = _initial_mesh(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    last = {}

    def callback(rec, res):
        last["res"] = res
        if cfg.emit.vtk:
            lam, beta, _ = geometric_indicators(res.mesh, res.mesh.surface, res.ds)
            field_ = IndicatorField(res.mesh.sizes(), res.eta, res.osc, lam, beta)
            write_vtk(out / f"mesh_{rec.iter:04d}.vtk", res.mesh, field_.cell_data())

    records, _ = afem_run(cfg.afem, cfg.experiment, mesh=mesh, callback=callback)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    if cfg.emit.csv:
        write_records(out / "convergence.csv", records, timing=cfg.timing)
    if cfg.emit.svg:
        dof = [r.dof for r in records]
        series = {"eta": [r.eta for r in records], "mu": [r.mu for r in records], "lambda": [r.lam for r in records]}
        if any(np.isfinite(r.h1_error) for r in records):
            series["error"] = [r.h1_error for r in records]
        (out / "convergence.svg").write_text(loglog_svg(dof, series, title=f"{cfg.experiment} ({cfg.afem.indicator})"))
    if cfg.emit.matrix and "res" in last:
        write_matrix_market(out / "stiffness.mtx", last["res"].solution.system)
    for r in records:
        print(f"iter {r.iter:3d} eps {r.eps:.4g} dof {r.dof:7d} eta {r.eta:.3e} mu {r.mu:.3e} error {r.h1_error:.3e}")
    return EXIT_OK


def cmd_check(cfg: ExperimentConfig) -> int:
    mesh = _initial_mesh(cfg)
    if cfg.check_level:
        mesh = refine_uniform(mesh, cfg.check_level)
    ds = interpolate_geometry(mesh, k=cfg.afem.k)
    report = check_assumptions(mesh, mesh.surface, ds)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_assumptions_csv(out / "assumptions.csv", report)
    verdict = "PASS" if report.ok else "FAIL"
    print(f"GLOBAL {verdict} (tube margin {float(np.min(report.tube_margin)):.6g})")
    for line in report.failures():
        print("  " + line)
    return EXIT_OK


def cmd_slope(path, column, window) -> int:
    data = read_records(path)
    if column not in data:
        raise ConfigError(f"unknown column {column!r}")
    print(f"{loglog_slope(data['dof'], data[column], window):.6f}")
    return EXIT_OK


def cmd_export_mesh(cfg: ExperimentConfig, level: int) -> int:
    if level < 0:
        raise ConfigError("level must be >= 0")
    mesh = refine_uniform(_initial_mesh(cfg), level)
    ds = interpolate_geometry(mesh, k=cfg.afem.k)
    lam, beta, _ = geometric_indicators(mesh, mesh.surface, ds)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"mesh_{level:04d}.vtk"
    write_vtk(path, mesh, IndicatorField(mesh.sizes(), lam=lam, beta=beta).cell_data())
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfafem", description="Adaptive surface FEM for the Laplace-Beltrami problem")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("run", help="run an experiment from a JSON config")
    s.add_argument("config")
    s = sub.add_parser("check", help="evaluate the geometric resolution checks")
    s.add_argument("config")
    s = sub.add_parser("slope", help="log-log slope of a convergence.csv column")
    s.add_argument("csv")
    s.add_argument("column")
    s.add_argument("window", type=int)
    s = sub.add_parser("export-mesh", help="write a uniformly refined mesh as VTK")
    s.add_argument("config")
    s.add_argument("level", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "slope":
            return cmd_slope(args.csv, args.column, args.window)
        cfg = load_config(args.config)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "check":
            return cmd_check(cfg)
        return cmd_export_mesh(cfg, args.level)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
