"""Command-line driver: YAML config in, CSV/JSON artifacts plus a manifest out.

Usage::

    radialbcs tc run.yaml --out results/
    radialbcs gap run.yaml --set temperature=0.3 --set sectors.ell=0

Exit codes: 0 success, 2 no transition, 64 configuration error, 70 numeric
failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy import linalg

from . import __version__
from .analysis import (AnalysisError, PolarGrid, eigenvalue_curves, rotation_test,
                       scaling_fit, weak_coupling_sector)
from .checks import run_suite
from .discretization import GridError, build_grid, default_p_max
from .gap import GapError, construct_state, free_energy_relative, solve_gap
from .potentials import PotentialError, PotentialSpec, assemble_sector_kernels, load_table
from .spectral import (DispersionParams, NoTransitionError, SpectralError, critical_report,
                       critical_temperature_kernel, sector_ells)

log = logging.getLogger("radialbcs")

EXIT_OK = 0
EXIT_NO_TRANSITION = 2
EXIT_CONFIG = 64
EXIT_NUMERIC = 70

COMMANDS = ("tc", "curves", "gap", "sweep", "verify", "weakcoupling", "rotationtest")

DEFAULTS = {
    "command": None,
    "dimension": 2,
    "mu": 1.0,
    "temperature": None,
    "temperatures": None,
    "potential": {"kind": "gaussian", "strengths": [2.0], "ranges": [1.0], "table": None,
                  "radii": None, "values": None},
    "grid": {"n_points": 256, "p_max": None, "fermi_levels": 4},
    "solver": {"tol": 1e-9, "max_iter": 10000, "mixing": 0.5, "method": "newton"},
    "sectors": {"ell_max": 12, "ell": None},
    "sweep": {"k_min": 3, "k_max": 8},
    "weak_coupling": {"lambda_scale": 0.05},
    "rotation": {"n_phi": 64, "n_radial": 64, "anisotropy": 0.5, "harmonic": 2},
    "output": "out",
}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _apply_set(raw, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {part!r} is not a mapping")
    node[parts[-1]] = yaml.safe_load(text)


def _num(value, name, positive=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer")
    value = int(value) if integer else float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{name} must be positive")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (see ``DEFAULTS`` for the schema)."""

    raw: dict
    command: str
    dimension: int
    mu: float
    temperature: object
    t_mesh: object
    spec: PotentialSpec
    n_points: int
    p_max: float
    fermi_levels: int
    tol: float
    max_iter: int
    mixing: float
    method: str
    ell_max: int
    ell: object
    k_range: tuple
    lambda_scale: float
    rotation: dict
    output: Path

    def grid(self, n_points=None):
        return build_grid(self.p_max, n_points or self.n_points, self.mu, self.dimension,
                          self.fermi_levels)


def _t_mesh(value):
    if value is None:
        return None
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra:
            raise ConfigError(f"unknown temperatures keys {sorted(extra)}")
        try:
            start = _num(value["start"], "temperatures.start", positive=True)
            stop = _num(value["stop"], "temperatures.stop", positive=True)
            num = _num(value["num"], "temperatures.num", integer=True, positive=True)
        except KeyError as exc:
            raise ConfigError(f"temperatures needs {exc.args[0]!r}") from None
        mesh = np.linspace(start, stop, num)
    elif isinstance(value, list):
        mesh = np.array([_num(v, "temperatures[]", positive=True) for v in value])
    else:
        raise ConfigError("temperatures must be a list or {start, stop, num}")
    if mesh.size < 2 or np.any(np.diff(mesh) <= 0):
        raise ConfigError("temperatures must be strictly ascending with >= 2 points")
    return mesh


def _potential(block, dimension, base_dir):
    kind = block.get("kind")
    try:
        if kind in ("gaussian", "two-gaussian"):
            return PotentialSpec(kind, dimension, tuple(block["strengths"] or ()),
                                 tuple(block["ranges"] or ()))
        if kind == "tabulated":
            if block.get("table"):
                path = Path(block["table"])
                if not path.is_absolute():
                    path = base_dir / path
                r, v = load_table(path)
            elif block.get("radii") is not None:
                r, v = block["radii"], block["values"]
            else:
                raise ConfigError("tabulated potential needs 'table' or 'radii'/'values'")
            return PotentialSpec.from_table(r, v, dimension)
    except (PotentialError, TypeError, OSError) as exc:
        raise ConfigError(f"potential: {exc}") from None
    raise ConfigError(f"unknown potential kind {kind!r}")


def load_config(path, command=None, overrides=(), out=None):
    """Parse, merge with defaults, and validate a YAML run configuration."""
    path = Path(path)
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config root must be a mapping")
    for item in overrides:
        _apply_set(user, item)
    raw = _merge(DEFAULTS, user)
    if out is not None:
        raw["output"] = str(out)
    cmd = command or raw["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cmd!r}")
    raw["command"] = cmd
    dim = _num(raw["dimension"], "dimension", integer=True)
    if dim not in (2, 3):
        raise ConfigError("dimension must be 2 or 3")
    mu = _num(raw["mu"], "mu")
    temp = _num(raw["temperature"], "temperature", allow_none=True)
    if temp is not None and temp <= 0:
        raise ConfigError("temperature must be positive")
    g = raw["grid"]
    n_points = _num(g["n_points"], "grid.n_points", integer=True, positive=True)
    p_max = _num(g["p_max"], "grid.p_max", positive=True, allow_none=True) or default_p_max(mu)
    fermi_levels = _num(g["fermi_levels"], "grid.fermi_levels", integer=True)
    s = raw["solver"]
    tol = _num(s["tol"], "solver.tol", positive=True)
    max_iter = _num(s["max_iter"], "solver.max_iter", integer=True, positive=True)
    mixing = _num(s["mixing"], "solver.mixing", positive=True)
    if mixing > 1:
        raise ConfigError("solver.mixing must lie in (0, 1]")
    if s["method"] not in ("newton", "picard"):
        raise ConfigError("solver.method must be 'newton' or 'picard'")
    ell_max = _num(raw["sectors"]["ell_max"], "sectors.ell_max", integer=True)
    if ell_max < 0 or ell_max % 2:
        raise ConfigError("sectors.ell_max must be a non-negative even integer")
    ell = _num(raw["sectors"]["ell"], "sectors.ell", integer=True, allow_none=True)
    if ell is not None and ((dim == 2 and ell % 2) or (dim == 3 and ell != 0)):
        raise ConfigError("sectors.ell must be even in 2D and 0 in 3D")
    k_min = _num(raw["sweep"]["k_min"], "sweep.k_min", integer=True, positive=True)
    k_max = _num(raw["sweep"]["k_max"], "sweep.k_max", integer=True, positive=True)
    if k_max < k_min:
        raise ConfigError("sweep.k_max must be >= sweep.k_min")
    lam = _num(raw["weak_coupling"]["lambda_scale"], "weak_coupling.lambda_scale",
               positive=True)
    rot = raw["rotation"]
    rotation = {
        "n_phi": _num(rot["n_phi"], "rotation.n_phi", integer=True, positive=True),
        "n_radial": _num(rot["n_radial"], "rotation.n_radial", integer=True, positive=True),
        "anisotropy": _num(rot["anisotropy"], "rotation.anisotropy"),
        "harmonic": _num(rot["harmonic"], "rotation.harmonic", integer=True),
    }
    spec = _potential(raw["potential"], dim, path.parent)
    try:
        build_grid(p_max, n_points, mu, dim, fermi_levels)
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from None
    mesh = _t_mesh(raw["temperatures"])
    if cmd in ("gap", "rotationtest") and temp is None:
        raise ConfigError(f"'{cmd}' needs a temperature")
    if cmd == "curves" and mesh is None:
        raise ConfigError("'curves' needs a temperatures mesh")
    if cmd in ("weakcoupling", "rotationtest") and dim != 2:
        raise ConfigError(f"'{cmd}' is two-dimensional")
    if cmd == "weakcoupling" and mu <= 0:
        raise ConfigError("'weakcoupling' needs mu > 0")
    return RunConfig(raw, cmd, dim, mu, temp, mesh, spec, n_points, p_max, fermi_levels,
                     tol, max_iter, mixing, s["method"], ell_max, ell,
                     tuple(range(k_min, k_max + 1)), lam, rotation, Path(raw["output"]))


# -- output ----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode()


class ArtifactWriter:
    """Collects artifacts and writes each atomically (temp file + rename)."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.files = []

    def write(self, name, data):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / name
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files.append((name, hashlib.sha256(data).hexdigest()))

    def csv(self, name, header, rows):
        self.write(name, _csv_bytes(header, rows))

    def json(self, name, obj):
        self.write(name, _json_bytes(obj))

    def manifest(self, cfg, flags, started):
        for name, _ in self.files:
            if not (self.out_dir / name).exists():
                raise FileNotFoundError(name)
        self.json("manifest.json", {
            "config": cfg.raw,
            "artifacts": [{"path": n, "sha256": h} for n, h in self.files],
            "convergence": flags,
            "wall_clock_seconds": time.perf_counter() - started,
            "version": __version__,
        })


# -- commands --------------------------------------------------------------

def _kernels(cfg, grid, ells=None):
    ells = ells if ells is not None else sector_ells(cfg.dimension, cfg.ell_max)
    return assemble_sector_kernels(cfg.spec, ells, grid)


def cmd_tc(cfg, writer, threads=1):
    grid = cfg.grid()
    report = critical_report(cfg.spec, grid, cfg.mu, cfg.ell_max, _kernels(cfg, grid),
                             threads=threads)
    writer.csv("tc_by_sector.csv", ["ell", "tc_ell"], sorted(report.tc_by_sector.items()))
    writer.json("tc_report.json", report.to_dict())
    return {"tc_flags": list(report.flags)}


def cmd_curves(cfg, writer, threads=1):
    grid = cfg.grid()
    curves = eigenvalue_curves(cfg.spec, grid, cfg.mu, cfg.ell_max, cfg.t_mesh,
                               kernels_by_ell=_kernels(cfg, grid), threads=threads)
    rows = sorted(((t, ell, idx, v) for t, ell, idx, v in curves.rows()),
                  key=lambda r: (r[0], r[1], r[2]))
    writer.csv("curves.csv", ["T", "ell", "index", "eigenvalue"], rows)
    writer.csv("crossings.csv", ["T", "ell", "index"], curves.crossings)
    return {}


def _gap_sector(cfg, grid, kernels_by_ell, threads):
    if cfg.ell is not None:
        return cfg.ell
    return critical_report(cfg.spec, grid, cfg.mu, cfg.ell_max, kernels_by_ell,
                           threads=threads).ell0


def cmd_gap(cfg, writer, threads=1):
    grid = cfg.grid()
    ells = sector_ells(cfg.dimension, cfg.ell_max)
    if cfg.ell is not None and cfg.ell not in ells:
        ells = sorted(set(ells) | {cfg.ell})
    kernels_by_ell = _kernels(cfg, grid, ells)
    ell = _gap_sector(cfg, grid, kernels_by_ell, threads)
    kern = kernels_by_ell[ell]
    params = DispersionParams(cfg.mu, cfg.temperature)
    gap = solve_gap(cfg.spec, kern, params, mixing=cfg.mixing, tol=cfg.tol,
                    max_iter=cfg.max_iter, method=cfg.method)
    state = construct_state(gap, params)
    rows = zip(grid.nodes, gap.values.values, state.gamma.values, state.sigma.values)
    name = f"gap_T{cfg.temperature:.6g}_l{ell}.csv"
    writer.csv(name, ["p", "delta", "gamma", "sigma"], rows)
    writer.json("gap_report.json", {
        "ell": ell, "temperature": cfg.temperature, "converged": gap.converged,
        "iterations": gap.iterations, "residual": gap.residual, "sup_norm": gap.sup_norm(),
        "free_energy_relative": free_energy_relative(state, cfg.spec, kern, params),
        "tc_ell": critical_temperature_kernel(kern, cfg.mu),
    })
    return {"gap_converged": gap.converged}


def cmd_sweep(cfg, writer, threads=1):
    grid = cfg.grid()
    kernels_by_ell = _kernels(cfg, grid)
    ell = _gap_sector(cfg, grid, kernels_by_ell, threads)
    kern = kernels_by_ell[ell]
    tc = critical_temperature_kernel(kern, cfg.mu)
    if tc == 0:
        raise NoTransitionError(f"sector {ell} has no transition above T = 1e-10")
    gaps = []
    fit = scaling_fit(cfg.spec, kern, DispersionParams(cfg.mu, tc), cfg.k_range, tc=tc,
                      tol=cfg.tol, gaps_out=gaps)
    writer.csv("sweep.csv", ["k", "T", "sup_delta", "alpha_l2"],
               zip(fit.ks, fit.temperatures, fit.sup_norms, fit.alpha_norms))
    writer.json("sweep_report.json", dict(fit.to_dict(), ell=ell))
    return {"sweep_converged": [g.converged for g in gaps]}


def cmd_verify(cfg, writer, threads=1, seed=0):
    grid = cfg.grid()
    report, checks = run_suite(cfg.spec, grid, cfg.mu, cfg.ell_max, cfg.tol, seed, threads,
                               cfg.lambda_scale)
    # passed=None marks a check that could not be decided (recorded, not counted)
    ok = all(c["passed"] for c in checks if c["passed"] is not None)
    writer.json("verify_report.json", {
        "critical_report": report.to_dict(),
        "checks": checks,
        "all_passed": ok,
        "skipped": [c["name"] for c in checks if c["passed"] is None],
    })
    return {"verify_all_passed": ok}


def cmd_weakcoupling(cfg, writer, threads=1):
    grid = cfg.grid()
    pred = weak_coupling_sector(cfg.spec, cfg.mu, cfg.lambda_scale, cfg.ell_max)
    scaled = cfg.spec.scaled(cfg.lambda_scale)
    report = critical_report(scaled, grid, cfg.mu, cfg.ell_max, threads=threads)
    writer.json("weakcoupling.json", {
        "lambda_scale": cfg.lambda_scale,
        "prediction": pred.to_dict(),
        "solver": report.to_dict(),
        "agree": pred.predicted_ell0 == report.ell0 and report.tc > 0,
    })
    return {}


def cmd_rotationtest(cfg, writer, threads=1):
    r = cfg.rotation
    radial = build_grid(cfg.p_max, r["n_radial"], cfg.mu, 2, cfg.fermi_levels)
    polar = PolarGrid(radial, r["n_phi"])
    params = DispersionParams(cfg.mu, cfg.temperature)
    kern = assemble_sector_kernels(cfg.spec, [0], radial)[0]
    gap = solve_gap(cfg.spec, kern, params, tol=cfg.tol)
    d = gap.values.values
    if not np.any(d):
        # above T_c there is no radial gap to deform; use a smooth profile
        d = np.exp(-radial.nodes ** 2 / 2)
    delta = d[:, None] * (1 + r["anisotropy"] * np.cos(r["harmonic"] * polar.angles))[None, :]
    rep = rotation_test(delta, polar, params, cfg.spec)
    writer.csv("rotation.csv", ["angle", "value", "kinetic"],
               zip(rep.angles, rep.values, rep.kinetic_values))
    out = rep.to_dict()
    for key in ("angles", "values", "kinetic_values"):
        out.pop(key)
    writer.json("rotation_report.json", out)
    return {}


HANDLERS = {
    "tc": cmd_tc, "curves": cmd_curves, "gap": cmd_gap, "sweep": cmd_sweep,
    "verify": cmd_verify, "weakcoupling": cmd_weakcoupling, "rotationtest": cmd_rotationtest,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides config 'output')")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (dotted path)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="radialbcs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"radialbcs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("config", help="YAML run configuration")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        cfg = load_config(args.config, args.command, args.overrides, args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    writer = ArtifactWriter(cfg.output)
    handler = HANDLERS[cfg.command]
    try:
        if cfg.command == "verify":
            flags = handler(cfg, writer, args.threads, args.seed)
        else:
            flags = handler(cfg, writer, args.threads)
        writer.manifest(cfg, flags, started)
    except NoTransitionError as exc:
        print(f"no transition: {exc}", file=sys.stderr)
        return EXIT_NO_TRANSITION
    except (PotentialError, SpectralError, GridError, AnalysisError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GapError, FloatingPointError, linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {len(writer.files)} files to {cfg.output}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
