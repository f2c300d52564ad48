"""Benchmark drivers: plane source and external source (Marshak wave).

A run is described by an :class:`ExperimentConfig`, loaded from a flat
``key = value`` file (``#`` starts a comment) and optionally overridden with
``--set key=value`` pairs. :func:`simulate` advances the chosen solver and
collects diagnostics in memory; :func:`run_experiment` additionally writes

* ``diagnostics.csv``: step, t, energy, mass, rank, max_conservation_residual, min_B
* ``snapshot_t<t>.csv``: x, scalar_flux, temperature, B
* ``fxmu_t<t>.csv``: x, mu, f on 64 Gauss-Legendre directions
* PNG figures (skipped with a warning if matplotlib fails).

``max_conservation_residual`` is the per-step dimensionless residual from
:func:`diagnostics.relative_conservation_residual`.
"""

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .angular import AngularBasis
from .dlra import MODE_ALIASES, LowRankState, TruncationConfig, step_dlra
from .full import (MomentField, SolverConfig, SolverError, step_full_advection,
                   step_full_conservative)
from .mesh import SpatialMesh, build_stencils

log = logging.getLogger(__name__)

SOLVER_ALIASES = {
    "full": "full_conservative",
    "full_conservative": "full_conservative",
    "advection": "full_advection",
    "full_advection": "full_advection",
    "dlra": "dlra",
}
PROBLEMS = ("plane_source", "external_source", "custom")
N_MU_PLOT = 64


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class ExperimentConfig:
    problem: str = "plane_source"
    solver: str = "dlra"
    n_cells: int = 1000
    n_moments: int = 500
    initial_rank: int = 20
    cfl: float = 0.99
    sigma: float = 1.0
    theta: float = 0.1
    tolerance_mode: str = "relative"
    r_max: int = 0  # 0: min(Nx, Nmu) // 2
    conservative_truncation: bool = True
    t_end: float = 8.0
    x_left: float = -10.0
    x_right: float = 10.0
    B0_init: float = 1.0
    sigma_ic: float = 0.03
    ic_center: float = 1.0
    ic_floor: float = 1e-4
    radiation_constant: float = 1.0
    output_dir: str = "output"
    snapshot_times: tuple = ()
    rng_seed: int = 0
    plots: bool = True

    @classmethod
    def preset(cls, problem):
        if problem == "external_source":
            return cls(problem=problem, B0_init=50.0, theta=1e-3, t_end=3.16)
        if problem == "custom":
            return cls(problem=problem, n_cells=64, n_moments=16, initial_rank=8,
                       theta=1e-2, x_left=0.0, x_right=1.0, t_end=1.0)
        return cls(problem=problem)

    def validate(self):
        errors = []
        if self.problem not in PROBLEMS:
            errors.append(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.solver not in SOLVER_ALIASES:
            errors.append(f"solver must be one of {sorted(SOLVER_ALIASES)}, got {self.solver!r}")
        if self.n_cells < 3:
            errors.append("n_cells must be >= 3")
        if self.n_moments < 1:
            errors.append("n_moments must be >= 1")
        if not 1 <= self.initial_rank <= min(self.n_cells, self.n_moments):
            errors.append("initial_rank must lie in [1, min(n_cells, n_moments)]")
        if not 0 < self.cfl <= 1:
            errors.append("cfl must lie in (0, 1]")
        if self.sigma < 0:
            errors.append("sigma must be >= 0")
        if self.theta < 0:
            errors.append("theta must be >= 0")
        if self.tolerance_mode not in MODE_ALIASES:
            errors.append(f"tolerance_mode must be one of {sorted(MODE_ALIASES)}")
        if self.r_max < 0 or self.r_max > min(self.n_cells, self.n_moments):
            errors.append("r_max must lie in [0, min(n_cells, n_moments)]")
        if not self.t_end >= 0:
            errors.append("t_end must be >= 0")
        if not self.x_right > self.x_left:
            errors.append("x_right must exceed x_left")
        if not self.B0_init > 0:
            errors.append("B0_init must be > 0")
        if not self.sigma_ic > 0:
            errors.append("sigma_ic must be > 0")
        if not self.radiation_constant > 0:
            errors.append("radiation_constant must be > 0")
        if any(not 0 <= t <= self.t_end for t in self.snapshot_times):
            errors.append("snapshot_times must lie in [0, t_end]")
        if errors:
            raise ConfigError(errors)
        return self

    @property
    def solver_name(self):
        return SOLVER_ALIASES[self.solver]

    def truncation(self):
        return TruncationConfig(theta=self.theta, mode=self.tolerance_mode,
                                r_max=self.r_max or None,
                                conservative=self.conservative_truncation)


def _parse_value(name, raw, ftype):
    raw = raw.strip()
    if name == "snapshot_times":
        return tuple(float(t) for t in raw.replace(",", " ").split())
    if ftype is bool or ftype == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if ftype is int or ftype == "int":
        return int(raw)
    if ftype is float or ftype == "float":
        return float(raw)
    return raw


def parse_assignments(lines, source="<config>"):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out, errors = {}, []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected key=value, got {line!r}")
            continue
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    if errors:
        raise ConfigError(errors)
    return out


def build_config(assignments, base=None):
    """Apply raw string assignments on top of ``base`` (or the problem preset)."""
    if base is None:
        base = ExperimentConfig.preset(assignments.get("problem", "plane_source").strip())
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    updates, errors = {}, []
    for key, raw in assignments.items():
        if key not in fields:
            errors.append(f"unknown key {key!r}")
            continue
        try:
            updates[key] = _parse_value(key, raw, fields[key].type)
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
    cfg = dataclasses.replace(base, **updates)
    try:
        cfg.validate()
    except ConfigError as exc:
        errors.extend(exc.errors)
    except TypeError as exc:  # e.g. a comparison against an unparsed value
        errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path, overrides=()):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    assignments = parse_assignments(text.splitlines(), str(path))
    assignments.update(parse_assignments(overrides, "--set"))
    return build_config(assignments)


# -- initial data -----------------------------------------------------------

def cutoff_gaussian(x, center, width, floor):
    gauss = np.exp(-((x - center) ** 2) / (2 * width ** 2)) / math.sqrt(2 * math.pi * width ** 2)
    return np.maximum(floor, gauss)


def _isotropic_moments(g, n_moments):
    v = np.zeros((g.size, n_moments))
    v[:, 0] = math.sqrt(2.0) * g
    return v


def _wrap(cfg, v, B):
    if cfg.solver_name == "dlra":
        return LowRankState.from_moments(v, B, cfg.initial_rank)
    return MomentField(v, B)


def init_plane_source(cfg, mesh):
    """Isotropic cutoff Gaussian g = max(floor, N(x; center, sigma_ic)) / B0 with constant B0."""
    x = mesh.centers
    B = np.full(mesh.n_cells, float(cfg.B0_init))
    g = cutoff_gaussian(x, cfg.ic_center, cfg.sigma_ic, cfg.ic_floor) / cfg.B0_init
    return _wrap(cfg, _isotropic_moments(g, cfg.n_moments), B)


def source_profile(cfg, mesh):
    """Q_j = 1/a on the closed interval |x_j| <= 0.5, else 0."""
    return np.where(np.abs(mesh.centers) <= 0.5, 1.0 / cfg.radiation_constant, 0.0)


def init_external_source(cfg, mesh):
    return init_plane_source(cfg, mesh), source_profile(cfg, mesh)


def smooth_random_state(rng, mesh, n_moments, n_modes=3):
    """Random smooth positive B and smooth moments with decaying amplitudes."""
    x = (mesh.centers - mesh.x_left) / mesh.length

    def smooth(amp):
        out = np.zeros(mesh.n_cells)
        for k in range(1, n_modes + 1):
            out += amp * rng.normal() / k * np.sin(2 * np.pi * k * x + rng.uniform(0, 2 * np.pi))
        return out

    B = 1.2 + 0.5 * np.abs(smooth(0.5))
    v = np.column_stack([smooth(1.0 / (k + 1)) for k in range(n_moments)])
    v[:, 0] += 2.0 * math.sqrt(2.0)
    return v, B


def init_custom(cfg, mesh):
    v, B = smooth_random_state(np.random.default_rng(cfg.rng_seed), mesh, cfg.n_moments)
    return _wrap(cfg, v, B)


# -- time loop ---------------------------------------------------------------

@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    v: np.ndarray
    B: np.ndarray


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_state: object = None
    wall_time: float = 0.0
    peak_state_bytes: int = 0
    source: object = None

    @property
    def max_rank(self):
        return max(r.rank for r in self.records)

    @property
    def mass_drift(self):
        m0 = self.records[0].mass
        return abs(self.records[-1].mass - m0) / abs(m0)

    @property
    def max_residual(self):
        return max((r.max_conservation_residual for r in self.records[1:]), default=0.0)

    def summary(self):
        return {
            "problem": self.config.problem,
            "solver": self.config.solver_name,
            "steps": self.records[-1].step,
            "t_final": self.records[-1].t,
            "relative_mass_drift": self.mass_drift,
            "max_rank": self.max_rank,
            "final_rank": self.records[-1].rank,
            "max_conservation_residual": self.max_residual,
            "wall_time_s": self.wall_time,
            "peak_state_bytes": self.peak_state_bytes,
        }


def _stepper(name):
    if name == "dlra":
        return lambda st, cfg, tc, sten, bas: step_dlra(st, cfg, tc, sten, bas)
    fn = step_full_conservative if name == "full_conservative" else step_full_advection
    return lambda st, cfg, tc, sten, bas: fn(st, cfg, sten, bas)


def _record(step, t, state, prev, cfg_step, stencils, basis, mesh, source):
    residual = 0.0
    if prev is not None:
        residual = dg.relative_conservation_residual(prev, state, cfg_step.dt, stencils,
                                                     basis, source)
    return dg.DiagnosticsRecord(
        step=step, t=t, energy=dg.state_energy(state), mass=dg.state_mass(state, mesh.dx),
        rank=state.rank, max_conservation_residual=residual, min_B=float(np.min(state.B)))


class _FirstOccurrence(logging.Filter):
    """Let each distinct message template through once."""

    def __init__(self):
        super().__init__()
        self.seen = set()

    def filter(self, record):
        if record.msg in self.seen:
            return False
        self.seen.add(record.msg)
        return True


def simulate(cfg, on_step=None):
    """Run ``cfg`` in memory and return a :class:`RunResult`.

    ``on_step(step, t, state)`` is called after every step, if given. Repeated
    rank-clamp warnings are reported once per run.
    """
    once = _FirstOccurrence()
    dlra_log = logging.getLogger("suolson_dlra.dlra")
    dlra_log.addFilter(once)
    try:
        return _simulate(cfg, on_step)
    finally:
        dlra_log.removeFilter(once)


def _simulate(cfg, on_step):
    cfg.validate()
    mesh = SpatialMesh(cfg.n_cells, cfg.x_left, cfg.x_right)
    stencils = build_stencils(mesh)
    basis = AngularBasis.build(cfg.n_moments)
    source = None
    if cfg.problem == "external_source":
        state, source = init_external_source(cfg, mesh)
    elif cfg.problem == "custom":
        state = init_custom(cfg, mesh)
    else:
        state = init_plane_source(cfg, mesh)
    solver_cfg = SolverConfig.from_cfl(mesh, cfg.cfl, sigma=cfg.sigma, source=source)
    tc = cfg.truncation()
    advance = _stepper(cfg.solver_name)

    targets = sorted({t for t in cfg.snapshot_times if t > 0} | {cfg.t_end})
    want_snapshot = set(targets) | {0.0}
    result = RunResult(config=cfg, source=source)
    result.records.append(_record(0, 0.0, state, None, solver_cfg, stencils, basis, mesh, source))
    result.snapshots.append(_snapshot(0.0, mesh, state))
    peak = state.state_floats()

    start = time.perf_counter()
    t, step = 0.0, 0
    for target in targets:
        while t < target:
            dt = min(solver_cfg.dt, target - t)
            # absorb a roundoff-sized remainder into this step
            if target - (t + dt) < 1e-12 * max(1.0, target):
                dt = target - t
            cfg_step = dataclasses.replace(solver_cfg, dt=dt)
            try:
                new = advance(state, cfg_step, tc, stencils, basis)
            except SolverError as exc:
                exc.step = step + 1
                raise
            step += 1
            t = target if dt == target - t else t + dt
            if not (np.all(np.isfinite(new.B)) and math.isfinite(dg.state_energy(new))):
                raise SolverError(f"non-finite state at step {step}", stage="nan_check",
                                  step=step)
            result.records.append(_record(step, t, new, state, cfg_step, stencils, basis,
                                          mesh, source))
            peak = max(peak, new.state_floats())
            state = new
            if on_step is not None:
                on_step(step, t, state)
        if target in want_snapshot and target > 0:
            result.snapshots.append(_snapshot(target, mesh, state))
    result.wall_time = time.perf_counter() - start
    result.final_state = state
    result.peak_state_bytes = 8 * peak
    return result


def _snapshot(t, mesh, state):
    return Snapshot(t=t, x=mesh.centers, v=state.moments(), B=state.B.copy())


# -- output -------------------------------------------------------------------

def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def snapshot_label(t):
    return f"{t:.4f}"


def write_outputs(result, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["step", "t", "energy", "mass", "rank", "max_conservation_residual", "min_B"]
    _write_csv(out_dir / "diagnostics.csv", header,
               ([getattr(r, h) for h in header] for r in result.records))
    mu, _ = np.polynomial.legendre.leggauss(N_MU_PLOT)
    for snap in result.snapshots:
        label = snapshot_label(snap.t)
        phi = dg.scalar_flux(snap.v, snap.B)
        _write_csv(out_dir / f"snapshot_t{label}.csv", ["x", "scalar_flux", "temperature", "B"],
                   zip(snap.x, phi, dg.temperature(snap.B), snap.B))
        f = dg.evaluate_distribution(snap.v, snap.B, mu)
        _write_csv(out_dir / f"fxmu_t{label}.csv", ["x", "mu", "f"],
                   ((snap.x[j], mu[k], f[j, k]) for j in range(snap.x.size)
                    for k in range(mu.size)))
    (out_dir / "summary.json").write_text(json.dumps(result.summary(), indent=2) + "\n")


def write_plots(result, out_dir):
    """Render figures; any failure degrades to a logged warning."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        out_dir = Path(out_dir)
        mu, _ = np.polynomial.legendre.leggauss(N_MU_PLOT)
        for snap in result.snapshots:
            label = snapshot_label(snap.t)
            fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
            ax1.plot(snap.x, dg.scalar_flux(snap.v, snap.B))
            ax1.set_xlabel("x")
            ax1.set_ylabel("scalar flux")
            ax2.plot(snap.x, dg.temperature(snap.B))
            ax2.set_xlabel("x")
            ax2.set_ylabel("temperature")
            fig.suptitle(f"t = {label}")
            fig.tight_layout()
            fig.savefig(out_dir / f"profiles_t{label}.png", dpi=100)
            plt.close(fig)

            f = dg.evaluate_distribution(snap.v, snap.B, mu)
            fig, ax = plt.subplots(figsize=(6, 4))
            mesh_plot = ax.pcolormesh(snap.x, mu, f.T, shading="nearest")
            fig.colorbar(mesh_plot, ax=ax, label="f")
            ax.set_xlabel("x")
            ax.set_ylabel("mu")
            fig.tight_layout()
            fig.savefig(out_dir / f"fxmu_t{label}.png", dpi=100)
            plt.close(fig)

        t = [r.t for r in result.records]
        m0 = result.records[0].mass
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        ax1.plot(t, [r.rank for r in result.records])
        ax1.set_xlabel("t")
        ax1.set_ylabel("rank")
        ax2.semilogy(t, [abs(r.mass - m0) / abs(m0) + 1e-300 for r in result.records])
        ax2.set_xlabel("t")
        ax2.set_ylabel("relative mass error")
        fig.tight_layout()
        fig.savefig(out_dir / "history.png", dpi=100)
        plt.close(fig)
    except Exception as exc:  # plots are presentation only
        log.warning("plot rendering failed, CSV output only: %s", exc)


def run_experiment(cfg):
    """Simulate and write CSV/plot output to ``cfg.output_dir``; returns the result."""
    result = simulate(cfg)
    write_outputs(result, cfg.output_dir)
    if cfg.plots:
        write_plots(result, cfg.output_dir)
    return result
