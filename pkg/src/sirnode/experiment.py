"""Experiment runner: no-control baseline, lambda x cost sweeps, tables and figure data."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .adjoint import ObjectiveMode, evaluate_objective
from .cost import CostKind, CostSpec, base_cost, REFERENCE_WEIGHTS
from .errors import InvalidArgumentError
from .model import EpidemicParams, SirState, Trajectory, simulate
from .network import atomic_write_bytes, init_xavier, save_theta
from .theory import verify_solution, write_costate_csv
from .trainer import TrainConfig, TrainReport, train

log = logging.getLogger(__name__)

TABLE_DAYS = tuple(range(0, 120, 10))

@dataclass(frozen=True)
class ExperimentConfig:
    population: float = 1e7
    initial_infected: float = 200.0
    initial_removed: float = 0.0
    beta: float = 0.3
    gamma: float = 0.1
    horizon: float = 120.0
    lambdas: Tuple[float, ...] = (0.1, 0.05, 0.01, 1e-7)
    costs: Tuple[str, ...] = ("c1", "c2", "c3", "c4")
    steps: int = 1200
    seed: int = 0
    iterations: int = 1000
    learning_rate: float = 1e-3
    time_scale: Optional[float] = None
    clamp: bool = False
    mode: str = ObjectiveMode.NEW_INFECTIONS.value
    out: Optional[str] = None

    def __post_init__(self):
        if self.initial_infected < 0 or self.initial_removed < 0:
            raise InvalidArgumentError("initial counts must be nonnegative")
        if self.initial_infected + self.initial_removed > self.population:
            raise InvalidArgumentError("initial counts exceed the population")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "costs", tuple(CostKind(c).value for c in self.costs))
        object.__setattr__(self, "mode", ObjectiveMode(self.mode).value)
        self.params  # validates rates

    @property
    def params(self) -> EpidemicParams:
        return EpidemicParams(self.beta, self.gamma, self.population, self.horizon)

    @property
    def initial_state(self) -> SirState:
        return SirState.from_counts(self.initial_infected, self.population, self.initial_removed)

    @property
    def effective_time_scale(self) -> float:
        return self.horizon if self.time_scale is None else self.time_scale

    def train_config(self, checkpoint_dir=None) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, iterations=self.iterations,
                           seed=self.seed, steps=self.steps, clamp=self.clamp,
                           time_scale=self.effective_time_scale,
                           checkpoint_dir=None if checkpoint_dir is None else str(checkpoint_dir))

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif value is None:
                value = ""
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {
    "population": float, "initial_infected": float, "initial_removed": float,
    "beta": float, "gamma": float, "horizon": float, "steps": int, "seed": int,
    "iterations": int, "learning_rate": float, "mode": str, "out": str,
}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key=value`` lines into :class:`ExperimentConfig` keyword arguments."""
    values = {}
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in names:
            raise InvalidArgumentError(f"line {lineno}: unknown or malformed entry {raw!r}")
        if key == "lambdas":
            values[key] = tuple(float(v) for v in value.split(",") if v.strip())
        elif key == "costs":
            values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "clamp":
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key == "time_scale":
            values[key] = float(value) if value else None
        elif key == "out":
            values[key] = value or None
        else:
            values[key] = _FIELD_TYPES[key](value)
    return values


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig(**parse_config_text(Path(path).read_text()))


def person_tables(trajectory: Trajectory, population: float, days=TABLE_DAYS):
    """Rounded infected counts ``N I(t)`` and cumulative counts ``N (1 - S(t))`` per day."""
    days = [d for d in days if d <= trajectory.grid[-1] + 1e-9]
    idx = [trajectory.nearest_index(d) for d in days]
    infected = [int(round(population * trajectory.i[k])) for k in idx]
    cumulative = [int(round(population * (1.0 - trajectory.s[k]))) for k in idx]
    return list(days), infected, cumulative


@dataclass
class BaselineResult:
    trajectory: Trajectory
    days: List[int]
    infected: List[int]
    cumulative: List[int]


def run_baseline(config: ExperimentConfig) -> BaselineResult:
    """Integrate the uncontrolled model and tabulate it."""
    try:
        traj = simulate(config.params, config.initial_state, 0.0, config.steps)
    except ArithmeticError as exc:
        raise type(exc)(f"{exc} [config: {config.to_text().strip()!r}]") from exc
    days, infected, cumulative = person_tables(traj, config.population)
    return BaselineResult(traj, days, infected, cumulative)


@dataclass
class CellResult:
    lam: float
    cost: str
    ok: bool
    error: Optional[str] = None
    objective: Optional[float] = None
    train: Optional[TrainReport] = None
    theta: Optional[np.ndarray] = None
    trajectory: Optional[Trajectory] = None
    verification: Optional[dict] = None
    costate: Optional[object] = None
    days: List[int] = field(default_factory=list)
    infected: List[int] = field(default_factory=list)
    cumulative: List[int] = field(default_factory=list)

    def summary(self) -> dict:
        out = {"lambda": self.lam, "cost": self.cost, "ok": self.ok}
        if not self.ok:
            out["error"] = self.error
            return out
        out.update(objective=self.objective, train=self.train.to_dict(),
                   verification=self.verification,
                   table={"day": self.days, "infected": self.infected,
                          "cumulative": self.cumulative})
        return out


def run_cell(config: ExperimentConfig, lam: float, cost: str, checkpoint_dir=None) -> CellResult:
    """Train one (lambda, cost) pair from the configured seed and verify the result."""
    spec = CostSpec(cost, lam)
    params, x0 = config.params, config.initial_state
    mode = ObjectiveMode(config.mode)
    try:
        net = init_xavier(config.seed, config.effective_time_scale)
        report = train(net, spec, params, x0, mode, config.train_config(checkpoint_dir))
        best = net.with_theta(report.best_theta)
        verification, traj, costate = verify_solution(best, spec, params, x0, config.steps, mode, config.clamp)
        objective, _ = evaluate_objective(best, spec, params, x0, config.steps, mode, config.clamp)
    except Exception as exc:  # a failed cell must not stop the sweep
        log.warning("cell lambda=%g %s failed: %s", lam, cost, exc)
        return CellResult(lam, cost, False, error=f"{type(exc).__name__}: {exc}")
    days, infected, cumulative = person_tables(traj, config.population)
    return CellResult(lam, cost, True, objective=objective, train=report, theta=best.theta.copy(),
                      trajectory=traj, verification=verification.to_dict(), costate=costate,
                      days=days, infected=infected, cumulative=cumulative)


@dataclass
class SweepReport:
    config: ExperimentConfig
    baseline: BaselineResult
    cells: List[CellResult]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cells)

    def cell(self, lam: float, cost: str) -> CellResult:
        for c in self.cells:
            if math.isclose(c.lam, lam) and c.cost == CostKind(cost).value:
                return c
        raise KeyError((lam, cost))


def _cell_job(args):
    config, lam, cost, ckpt = args
    return run_cell(config, lam, cost, ckpt)


def run_sweep(config: ExperimentConfig, workers: int = 1) -> SweepReport:
    """Train every (lambda, cost) cell; write outputs when ``config.out`` is set.

    Cells are independent; with ``workers > 1`` they run in separate processes.
    Results keep the configured order either way.
    """
    baseline = run_baseline(config)
    out = Path(config.out) if config.out else None
    jobs = []
    for lam in config.lambdas:
        for cost in config.costs:
            ckpt = None if out is None else out / "cells" / _lam_tag(lam) / cost / "checkpoints"
            jobs.append((config, lam, cost, ckpt))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]
    report = SweepReport(config, baseline, cells)
    if out is not None:
        write_outputs(report, out)
    return report


def _lam_tag(lam: float) -> str:
    return f"lambda={lam:g}"


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().encode()


def _json_default(obj):
    if isinstance(obj, (np.generic, np.ndarray)):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _json_bytes(obj) -> bytes:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True, default=_json_default)
    return (text + "\n").encode()


def write_trajectory_csv(path, trajectory: Trajectory) -> None:
    rows = zip(trajectory.grid, trajectory.s, trajectory.i, trajectory.r, trajectory.controls)
    atomic_write_bytes(path, _csv_bytes(["t", "S", "I", "R", "u"], rows))


def write_baseline(result: BaselineResult, out: Path) -> None:
    write_trajectory_csv(out / "baseline" / "trajectory.csv", result.trajectory)
    rows = zip(result.days, result.infected, result.cumulative)
    atomic_write_bytes(out / "baseline" / "table.csv",
                       _csv_bytes(["day", "infected", "cumulative"], rows))


def write_tables(report: SweepReport, out: Path) -> List[Path]:
    """One infected and one cumulative table per lambda, baseline in the first column."""
    written = []
    base = report.baseline
    for lam in report.config.lambdas:
        cells = [report.cell(lam, c) for c in report.config.costs]
        for name, attr in (("infected", "infected"), ("cumulative", "cumulative")):
            header = ["day", "no_control"] + [c.cost for c in cells]
            rows = []
            for k, day in enumerate(base.days):
                rows.append([day, getattr(base, attr)[k]]
                            + [getattr(c, attr)[k] if c.ok else "" for c in cells])
            path = out / "tables" / f"{name}_{_lam_tag(lam)}.csv"
            atomic_write_bytes(path, _csv_bytes(header, rows))
            written.append(path)
    return written


def write_outputs(report: SweepReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out / "config.txt", report.config.to_text().encode())
    write_baseline(report.baseline, out)
    for cell in report.cells:
        cdir = out / "cells" / _lam_tag(cell.lam) / cell.cost
        atomic_write_bytes(cdir / "report.json", _json_bytes(cell.summary()))
        if not cell.ok:
            continue
        write_trajectory_csv(cdir / "trajectory.csv", cell.trajectory)
        write_costate_csv(cdir / "costate.csv", cell.trajectory, cell.costate)
        net = init_xavier(report.config.seed, report.config.effective_time_scale).with_theta(cell.theta)
        save_theta(cdir / "theta.bin", net, report.config.seed)
    write_tables(report, out)
    export_figure_data(report, out / "figures")
    summary = {
        "ok": report.ok,
        "baseline": {"day": report.baseline.days, "infected": report.baseline.infected,
                     "cumulative": report.baseline.cumulative},
        "cells": [{"lambda": c.lam, "cost": c.cost, "ok": c.ok, "objective": c.objective,
                   "error": c.error} for c in report.cells],
    }
    atomic_write_bytes(out / "summary.json", _json_bytes(summary))


def _write_panel(outdir: Path, name: str, header, rows, manifest, **meta) -> Path:
    path = outdir / name
    atomic_write_bytes(path, _csv_bytes(header, rows))
    manifest.append(dict(file=name, **meta))
    return path


def export_figure_data(report, outdir) -> List[Path]:
    """Plot-ready CSVs, one per panel, plus ``manifest.json``.

    ``report`` is a :class:`BaselineResult` or a :class:`SweepReport`.
    Returns the data files written (the manifest is not included).
    """
    outdir = Path(outdir)
    manifest: List[dict] = []
    files = []
    if isinstance(report, BaselineResult):
        tr = report.trajectory
        files.append(_write_panel(outdir, "baseline_states.csv", ["t", "S", "I", "R"],
                                  zip(tr.grid, tr.s, tr.i, tr.r), manifest,
                                  figure="baseline", panel="states"))
        files.append(_write_panel(outdir, "baseline_control.csv", ["t", "u"],
                                  zip(tr.grid, tr.controls), manifest,
                                  figure="baseline", panel="control"))
    else:
        for cell in report.cells:
            if not cell.ok:
                continue
            tr = cell.trajectory
            fig = _lam_tag(cell.lam)
            stem = f"{_lam_tag(cell.lam)}_{cell.cost}"
            files.append(_write_panel(outdir, f"{stem}_states.csv", ["t", "S", "I", "R"],
                                      zip(tr.grid, tr.s, tr.i, tr.r), manifest,
                                      figure=fig, panel="states", **{"lambda": cell.lam, "cost": cell.cost}))
            files.append(_write_panel(outdir, f"{stem}_control.csv", ["t", "u"],
                                      zip(tr.grid, tr.controls), manifest,
                                      figure=fig, panel="control", **{"lambda": cell.lam, "cost": cell.cost}))
    atomic_write_bytes(outdir / "manifest.json", _json_bytes(manifest))
    return files


def cost_curves(points: int = 100, upper: float = 0.99):
    """Weighted costs ``c1..c4`` on a uniform grid of ``[0, upper]``."""
    u = np.linspace(0.0, upper, points)
    return u, {k.value: REFERENCE_WEIGHTS[k] * base_cost(k)(u) for k in CostKind}


def export_cost_curves(path, points: int = 100, upper: float = 0.99) -> Path:
    u, curves = cost_curves(points, upper)
    names = list(curves)
    rows = zip(u, *(curves[n] for n in names))
    atomic_write_bytes(path, _csv_bytes(["u"] + names, rows))
    return Path(path)
