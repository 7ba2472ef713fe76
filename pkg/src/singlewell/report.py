"""Experiment runner: subcommand pipelines, CSV/figure outputs, manifest.

The ``report`` pipeline runs the full verification battery (decay-envelope
sandwich, limit-measure convergence, boundary traces, literal inequality
checks) and emits one verdict table plus plot-ready CSVs and rendered
figures.  All floats print with 17 significant digits so files round-trip
exactly; re-running a config byte-reproduces every CSV.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .agmon import agmon_profile
from .bounds import BoundsReport, bounds_report
from .config import ExperimentConfig
from .eigensolve import Grid, assemble, eigenpair, eigenvalues_in_window
from .measure import (
    MeasureReport,
    RegimeTarget,
    auto_grid_n,
    branch_balance,
    husimi,
    marginal_l1_distance,
    measure_convergence_report,
    select_energy,
    tube_mass_fraction,
)
from .potential import validate_single_well


def fmt(value) -> str:
    """Round-trip-exact cell formatting (17 significant digits for floats)."""
    if isinstance(value, bool):
        return "PASS" if value else "FAIL"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path: str, header, rows) -> str:
    """Comma-separated, header row, LF endings, no quoting."""
    lines = [",".join(header)]
    lines.extend(",".join(fmt(cell) for cell in row) for row in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def file_digest(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


@dataclass
class RunManifest:
    config: dict
    tool_version: str = __version__
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.verdicts.values())

    def register(self, *paths: str) -> None:
        for p in paths:
            self.outputs.append({"path": os.path.basename(p),
                                 "sha256": file_digest(p)})

    def write(self, path: str) -> str:
        payload = {
            "tool_version": self.tool_version,
            "config": self.config,
            "timings_s": {k: round(v, 4) for k, v in self.timings.items()},
            "outputs": self.outputs,
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


# ---------------------------------------------------------------------------
# pipeline pieces (pure computation, single writer at the end)
# ---------------------------------------------------------------------------

def _grid_for(cfg: ExperimentConfig, potential, eps: float, e_max: float) -> Grid:
    n = cfg.grid_n()
    if n is None:
        n = auto_grid_n(potential, eps, e_max)
    return Grid(n, potential.L)


def _regime_e_max(cfg, potential, target: RegimeTarget) -> float:
    if target.kind == "highenergy":
        return target.e_target
    if target.kind == "interior":
        return target.e_star
    return potential.E0


def compute_spectrum(cfg: ExperimentConfig, potential, perturbation,
                     eps: float, count: int = 10,
                     window: tuple | None = None):
    e_max = potential.v_max if window is None else window[1]
    grid = _grid_for(cfg, potential, eps, e_max)
    op = assemble(potential, perturbation, eps, grid)
    if window is not None:
        vals = eigenvalues_in_window(op, window=window)
    else:
        vals = eigenvalues_in_window(op, count=count)
    rows = []
    for E in vals:
        pair = eigenpair(op, float(E))
        rows.append((pair.index, pair.E, pair.residual_norm,
                     pair.dpsi0, pair.dpsiL))
    return rows


def spectrum_csv(path: str, rows) -> str:
    return write_csv(path, ("k", "E", "residual", "dpsi0", "dpsiL"), rows)


def eigen_csv(path: str, pair) -> str:
    return write_csv(path, ("x", "psi"),
                     list(zip(pair.x.tolist(), pair.psi.tolist())))


def agmon_csv(path: str, profile) -> str:
    rows = [(x, profile.requested_energy, d)
            for x, d in zip(profile.grid.tolist(), profile.values.tolist())]
    return write_csv(path, ("x", "E", "d_A"), rows)


def measure_csv(path: str, report: MeasureReport) -> str:
    trace_by_eps = {tr.eps: tr for tr in report.trace_rows}
    rows = []
    for r in report.rows:
        tr = trace_by_eps[r.eps]
        rows.append((r.eps, r.E, r.phi_name, r.empirical, r.predicted,
                     r.abs_err, tr.trace0_emp, tr.trace0_pred,
                     tr.traceL_emp, tr.traceL_pred))
    return write_csv(path, ("eps", "E", "phi_name", "empirical", "predicted",
                            "abs_err", "trace0_emp", "trace0_pred",
                            "traceL_emp", "traceL_pred"), rows)


def bounds_csv(path: str, report: BoundsReport, which_lower: str) -> str:
    rows = []
    for r in report.rows:
        lower = {"U": r.delta_lower_U, "0": r.delta_lower_0,
                 "L": r.delta_lower_L}[which_lower]
        rows.append((r.eps, r.E, r.delta_upper, lower, r.tunneling_margin,
                     r.gronwall_margin, r.tunneling_ok and r.gronwall_ok))
    return write_csv(path, ("eps", "E", "delta_upper", "delta_lower",
                            "tunneling_margin", "gronwall_margin", "verdict"),
                     rows)


def husimi_csv(path: str, field_) -> str:
    rows = []
    for i, x in enumerate(field_.x.tolist()):
        for j, xi in enumerate(field_.xi.tolist()):
            rows.append((x, xi, float(field_.H[i, j])))
    return write_csv(path, ("x", "xi", "H"), rows)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def decay_figure(path: str, pair, profile) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    amp = np.abs(pair.psi)
    peak = float(np.max(amp))
    env = peak * np.exp(-profile.values / pair.eps)
    ax.semilogy(pair.x, np.maximum(amp, 1e-300), lw=1.0,
                label=r"$|\psi|$")
    ax.semilogy(profile.grid, np.maximum(env, 1e-300), "--", lw=1.2,
                label=r"$\max|\psi|\, e^{-d_{A,E}/\varepsilon}$")
    ax.set_xlabel("x")
    ax.set_ylabel("amplitude")
    ax.set_ylim(bottom=max(1e-300, float(np.min(amp[amp > 0])) * 0.1))
    ax.set_title(f"decay envelope, eps={pair.eps:g}, E={pair.E:.6g}")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def measure_figure(path: str, report: MeasureReport) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    eps = report.schedule
    names = sorted({r.phi_name for r in report.rows})
    for name in names:
        errs = [max(e, 1e-16) for e in report.errors_for(name)]
        ax.loglog(eps, errs, "o-", ms=3, lw=1.0, label=name)
    for metric in ("trace0", "traceL"):
        errs = [max(e, 1e-16) for e in report.errors_for(metric)]
        ax.loglog(eps, errs, "s--", ms=3, lw=1.0, label=metric)
    ax.invert_xaxis()
    ax.set_xlabel("eps")
    ax.set_ylabel("|empirical - predicted|")
    ax.set_title(f"measure convergence ({report.target.kind})")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def bounds_figure(path: str, report: BoundsReport) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    eps = [r.eps for r in report.rows]
    for name in ("delta_upper", "delta_lower_U", "delta_lower_0"):
        vals = [max(getattr(r, name), 1e-12) for r in report.rows]
        ax.loglog(eps, vals, "o-", ms=3, lw=1.0, label=name)
    ax.invert_xaxis()
    ax.set_xlabel("eps")
    ax.set_ylabel("effective exponent")
    ax.set_title("decay-envelope exponents")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def run(cfg: ExperimentConfig, command: str, **kwargs) -> RunManifest:
    """Execute one subcommand pipeline; returns the manifest (also written
    to the output directory along with all CSVs/figures)."""
    out_dir = cfg.resolved_out_dir()
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(config=cfg.echo())
    t_start = time.perf_counter()
    potential = cfg.potential()
    perturbation = cfg.perturbation()
    manifest.timings["setup"] = time.perf_counter() - t_start

    path = lambda name: os.path.join(out_dir, name)  # noqa: E731
    t0 = time.perf_counter()

    if command == "spectrum":
        rows = compute_spectrum(cfg, potential, perturbation,
                                kwargs.get("eps") or min(cfg.schedule),
                                count=kwargs.get("count") or 10,
                                window=kwargs.get("window"))
        manifest.register(spectrum_csv(path("spectrum.csv"), rows))

    elif command == "eigen":
        eps = kwargs.get("eps") or min(cfg.schedule)
        k = kwargs.get("k", 0)
        grid = _grid_for(cfg, potential, eps, potential.v_max)
        op = assemble(potential, perturbation, eps, grid)
        E = float(eigenvalues_in_window(op, count=k + 1)[k])
        manifest.register(eigen_csv(path("eigen.csv"), eigenpair(op, E)))

    elif command == "agmon":
        E = kwargs.get("E")
        if E is None:
            E = cfg.e_star if cfg.e_star is not None else potential.E0
        n = kwargs.get("n") or 1024
        manifest.register(
            agmon_csv(path("agmon.csv"), agmon_profile(potential, E, n))
        )

    elif command == "measure":
        target = cfg.target(potential)
        rep = measure_convergence_report(
            potential, perturbation, target, cfg.schedule,
            grid_n=cfg.grid_n(), tolerances=cfg.tolerances,
            verdict_metrics=set(cfg.tolerances) or None,
        )
        manifest.register(measure_csv(path("measure.csv"), rep))
        manifest.register(measure_figure(path("measure_convergence.png"), rep))
        manifest.verdicts.update(
            {f"measure.{k}": v for k, v in rep.verdicts.items()})

    elif command == "husimi":
        eps = kwargs.get("eps") or min(cfg.schedule)
        target = cfg.target(potential)
        e_max = _regime_e_max(cfg, potential, target)
        grid = _grid_for(cfg, potential, eps, e_max)
        op = assemble(potential, perturbation, eps, grid)
        pair = eigenpair(op, select_energy(op, target))
        field_ = husimi(pair, potential)
        manifest.register(husimi_csv(path("husimi.csv"), field_))
        manifest.verdicts["husimi.tube"] = \
            tube_mass_fraction(field_, potential) >= 0.9
        manifest.verdicts["husimi.branch"] = \
            abs(branch_balance(field_) - 0.5) <= 0.05
        manifest.verdicts["husimi.marginal"] = \
            marginal_l1_distance(field_, pair) <= 0.1

    elif command == "bounds":
        run_bounds_pipeline(cfg, potential, perturbation, manifest, path)

    elif command == "report":
        _run_report_battery(cfg, potential, perturbation, manifest, path)

    else:
        raise ValueError(f"unknown command {command!r}")

    manifest.timings[command] = time.perf_counter() - t0
    manifest.write(path("run_manifest.json"))
    return manifest


def run_bounds_pipeline(cfg: ExperimentConfig, potential, perturbation,
                        manifest: RunManifest, path) -> BoundsReport:
    window = cfg.window if cfg.window[0] is not None else (None, None)
    if window[0] is None:
        # boundary-only run still needs a window for the report internals
        window = (0.8 * potential.L, potential.L)
    rep = bounds_report(potential, perturbation, cfg.schedule, window,
                        cfg.alpha, grid_n=cfg.grid_n())
    which = "U" if cfg.window[0] is not None else (
        "0" if (cfg.boundary or 0.0) == 0.0 else "L")
    manifest.register(bounds_csv(path("bounds.csv"), rep, which))
    manifest.register(bounds_figure(path("bounds_exponents.png"), rep))
    manifest.verdicts.update({f"bounds.{k}": v for k, v in rep.verdicts.items()})
    return rep


def _run_report_battery(cfg, potential, perturbation, manifest, path) -> None:
    """The full verification battery behind the ``report`` subcommand."""
    validate_single_well(potential)
    target = cfg.target(potential)
    eps_min = min(cfg.schedule)
    e_max = _regime_e_max(cfg, potential, target)

    def step_spectrum():
        return compute_spectrum(cfg, potential, perturbation, eps_min)

    def step_profile():
        e_repr = potential.E0 if target.kind == "ground" else (
            target.e_star if target.kind == "interior" else target.e_target)
        return agmon_profile(potential, e_repr, 1025)

    def step_measure():
        return measure_convergence_report(
            potential, perturbation, target, cfg.schedule,
            grid_n=cfg.grid_n(), tolerances=cfg.tolerances,
            verdict_metrics=set(cfg.tolerances) or None,
        )

    def step_bounds():
        window = cfg.window if cfg.window[0] is not None \
            else (0.8 * potential.L, potential.L)
        return bounds_report(potential, perturbation, cfg.schedule, window,
                             cfg.alpha, grid_n=cfg.grid_n())

    steps = {"spectrum": step_spectrum, "agmon": step_profile,
             "measure": step_measure, "bounds": step_bounds}
    results = {}
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {name: pool.submit(fn) for name, fn in steps.items()}
            for name in steps:  # deterministic collection order
                results[name] = futures[name].result()
    else:
        for name, fn in steps.items():
            t0 = time.perf_counter()
            results[name] = fn()
            manifest.timings[f"step.{name}"] = time.perf_counter() - t0

    manifest.register(spectrum_csv(path("spectrum.csv"), results["spectrum"]))
    manifest.register(agmon_csv(path("agmon_profile.csv"), results["agmon"]))
    rep_m = results["measure"]
    manifest.register(measure_csv(path("measure.csv"), rep_m))
    rep_b = results["bounds"]
    which = "U" if cfg.window[0] is not None else "0"
    manifest.register(bounds_csv(path("bounds.csv"), rep_b, which))

    manifest.verdicts.update({f"measure.{k}": v for k, v in rep_m.verdicts.items()})
    manifest.verdicts.update({f"bounds.{k}": v for k, v in rep_b.verdicts.items()})

    # single eigenpair at eps_min for the decay figure
    grid = _grid_for(cfg, potential, eps_min, e_max)
    op = assemble(potential, perturbation, eps_min, grid)
    pair = eigenpair(op, select_energy(op, target))
    profile = agmon_profile(potential, pair.E, grid.n_interior + 2)

    verdict_rows = [(name, ok, "") for name, ok in sorted(manifest.verdicts.items())]
    manifest.register(write_csv(path("verdicts.csv"),
                                ("check", "passed", "note"), verdict_rows))
    manifest.register(decay_figure(path("decay_envelope.png"), pair, profile))
    manifest.register(measure_figure(path("measure_convergence.png"), rep_m))
    manifest.register(bounds_figure(path("bounds_exponents.png"), rep_b))
