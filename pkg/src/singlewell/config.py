"""Experiment configuration: flat key=value text with bracketed sections.

Parsed with configparser (INI).  A config file fully describes a run:
potential, optional perturbation, eps-schedule, regime target, observation
window, grid policy, output directory, and verdict tolerances.  The seed is
echoed into the manifest and reserved for sampled diagnostics; the current
pipelines are fully deterministic without it.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .measure import RegimeTarget
from .potential import Perturbation, Potential

OUT_DIR_ENV = "SINGLEWELL_OUT"


@dataclass
class ExperimentConfig:
    potential_expr: str
    length: float
    schedule: list
    perturbation_expr: str | None = None
    regime: str = "ground"            # ground | interior | high
    e_star: float | None = None       # interior target
    e_target_factor: float = 50.0     # high-energy target = factor * max V
    window: tuple = (None, None)
    boundary: float | None = None
    alpha: float = 0.3
    grid: str | int = "auto"
    out_dir: str = "out"
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    workers: int = 1

    def potential(self) -> Potential:
        return Potential.from_expression(self.potential_expr, self.length)

    def perturbation(self) -> Perturbation | None:
        if self.perturbation_expr is None:
            return None
        return Perturbation.from_expression(self.perturbation_expr, self.length)

    def target(self, potential: Potential) -> RegimeTarget:
        if self.regime == "ground":
            return RegimeTarget.ground()
        if self.regime == "interior":
            if self.e_star is None:
                raise ConfigError("regime=interior requires e_star")
            return RegimeTarget.interior(self.e_star)
        if self.regime == "high":
            return RegimeTarget.highenergy(self.e_target_factor * potential.v_max)
        raise ConfigError(f"unknown regime {self.regime!r}")

    def grid_n(self) -> int | None:
        return None if self.grid == "auto" else int(self.grid)

    def resolved_out_dir(self) -> str:
        return os.environ.get(OUT_DIR_ENV, self.out_dir)

    def echo(self) -> dict:
        return {
            "potential": self.potential_expr,
            "length": self.length,
            "perturbation": self.perturbation_expr,
            "schedule": list(self.schedule),
            "regime": self.regime,
            "e_star": self.e_star,
            "e_target_factor": self.e_target_factor,
            "window": list(self.window),
            "boundary": self.boundary,
            "alpha": self.alpha,
            "grid": self.grid,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "tolerances": dict(self.tolerances),
            "workers": self.workers,
        }


def _parse_floats(text: str) -> list:
    return [float(tok) for tok in text.replace(",", " ").split()]


def parse_regime(text: str) -> tuple[str, float | None]:
    """Parse a --regime flag value: ground | interior=E | high."""
    if text == "ground":
        return "ground", None
    if text == "high":
        return "high", None
    if text.startswith("interior=") or text.startswith("interior:"):
        try:
            return "interior", float(text[len("interior") + 1:])
        except ValueError as exc:
            raise ConfigError(f"bad interior energy in {text!r}") from exc
    raise ConfigError(f"unknown regime {text!r} (ground | interior=E | high)")


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a config file; raises ConfigError with the section
    and key of the offending entry."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep keys case-sensitive
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")

    def need(section: str, *keys: str) -> str:
        if parser.has_section(section):
            for key in keys:
                if key in parser[section]:
                    return parser[section][key]
        raise ConfigError(f"missing [{section}] {keys[0]}")

    def get(section: str, key: str, default=None):
        return parser[section].get(key, default) if parser.has_section(section) \
            else default

    try:
        length = float(need("potential", "L", "length"))
    except ValueError as exc:
        raise ConfigError(f"[potential] length: {exc}") from exc
    cfg = ExperimentConfig(
        potential_expr=need("potential", "V", "v"),
        length=length,
        schedule=[],
    )
    cfg.perturbation_expr = get("perturbation", "q")

    sched_text = get("schedule", "eps")
    if sched_text is not None:
        cfg.schedule = _parse_floats(sched_text)
    else:
        try:
            eps_max = float(need("schedule", "eps_max"))
            ratio = float(need("schedule", "ratio"))
            count = int(need("schedule", "count"))
        except ValueError as exc:
            raise ConfigError(f"[schedule] geometric form: {exc}") from exc
        if not (0.0 < ratio < 1.0):
            raise ConfigError(f"[schedule] ratio must be in (0,1), got {ratio}")
        cfg.schedule = [eps_max * ratio**i for i in range(count)]

    if parser.has_section("run"):
        run = parser["run"]
        if "regime" in run:
            cfg.regime, e_star = parse_regime(run["regime"])
            if e_star is not None:
                cfg.e_star = e_star
        if "e_star" in run:
            cfg.e_star = float(run["e_star"])
        if "e_target_factor" in run:
            cfg.e_target_factor = float(run["e_target_factor"])
        if "window" in run:
            vals = _parse_floats(run["window"])
            if len(vals) != 2:
                raise ConfigError("[run] window must be two numbers a,b")
            cfg.window = (vals[0], vals[1])
        if "boundary" in run:
            cfg.boundary = float(run["boundary"])
        if "alpha" in run:
            cfg.alpha = float(run["alpha"])
        if "grid" in run:
            g = run["grid"]
            cfg.grid = "auto" if g == "auto" else int(g)
        if "out_dir" in run:
            cfg.out_dir = run["out_dir"]
        if "seed" in run:
            cfg.seed = int(run["seed"])
        if "workers" in run:
            cfg.workers = int(run["workers"])

    if parser.has_section("verdict"):
        for key, val in parser["verdict"].items():
            try:
                cfg.tolerances[key] = float(val)
            except ValueError as exc:
                raise ConfigError(f"[verdict] {key}: {exc}") from exc

    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if not cfg.schedule:
        raise ConfigError("[schedule] is empty")
    if any(e <= 0.0 or not math.isfinite(e) for e in cfg.schedule):
        raise ConfigError("[schedule] eps values must be positive and finite")
    if any(b >= a for a, b in zip(cfg.schedule[:-1], cfg.schedule[1:])):
        raise ConfigError("[schedule] eps values must be strictly decreasing")
    if cfg.regime == "interior" and cfg.e_star is None:
        raise ConfigError("[run] regime=interior requires e_star")
    if cfg.grid != "auto":
        n = int(cfg.grid)
        h = cfg.length / (n + 1)
        for eps in cfg.schedule:
            if h > eps / 2.0:
                raise ConfigError(
                    f"grid n={n} gives h={h:.4g} > eps/2 at eps={eps}; "
                    "refine the grid or trim the schedule"
                )
    if cfg.window[0] is not None:
        a, b = cfg.window
        if not (0.0 <= a < b <= cfg.length):
            raise ConfigError(f"[run] window {cfg.window} not inside [0, L]")
    if cfg.boundary is not None and cfg.boundary not in (0.0, cfg.length):
        raise ConfigError(f"[run] boundary must be 0 or L={cfg.length}")
