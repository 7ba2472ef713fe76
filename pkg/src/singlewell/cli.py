"""Command-line entry point.

Subcommands: spectrum | eigen | agmon | measure | husimi | bounds | report.
Flags describe a run inline; ``--config PATH`` loads a config file whose
values override the flags.  Exit codes: 0 all requested verdicts pass,
2 verdict failure, 1 operational error (with a structured error line).
"""

from __future__ import annotations

import argparse
import sys

from .config import (
    ExperimentConfig,
    load_config,
    parse_regime,
    validate_config,
)
from .errors import SingleWellError
from .report import run


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file; its values override flags")
    p.add_argument("--potential", default="(x-1)^2", help="V(x) expression")
    p.add_argument("--length", type=float, default=2.0, help="domain length L")
    p.add_argument("--perturbation", default=None,
                   help="q(eps, x) expression, e.g. 'eps*sin(5*x)'")
    p.add_argument("--schedule", default="0.1,0.05,0.025,0.0125",
                   help="decreasing eps list, comma separated")
    p.add_argument("--grid-n", default=None,
                   help="interior grid points (default: auto from eps)")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def _add_regime(p: argparse.ArgumentParser) -> None:
    p.add_argument("--regime", default="ground",
                   help="ground | interior=E | high")
    p.add_argument("--e-target-factor", type=float, default=50.0,
                   help="high-energy target = factor * max V")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singlewell",
        description="Eigenpairs of -eps^2 d2/dx2 + V on [0,L] with Dirichlet "
                    "conditions, and verification of decay envelopes, limit "
                    "measures, and boundary-trace limits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="eigenvalues with residuals and traces")
    _add_common(p)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--window", default=None, help="energy window lo,hi")

    p = sub.add_parser("eigen", help="dump one eigenfunction as x,psi")
    _add_common(p)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--k", type=int, default=0)

    p = sub.add_parser("agmon", help="Agmon distance profile as x,E,d_A")
    _add_common(p)
    p.add_argument("--energy", type=float, default=None)
    p.add_argument("--n", type=int, default=1024)

    p = sub.add_parser("measure", help="limit-measure convergence report")
    _add_common(p)
    _add_regime(p)

    p = sub.add_parser("husimi", help="Husimi phase-space density grid")
    _add_common(p)
    _add_regime(p)
    p.add_argument("--eps", type=float, default=None)

    p = sub.add_parser("bounds", help="decay exponents and inequality checks")
    _add_common(p)
    p.add_argument("--window", default=None, help="observation window a,b")
    p.add_argument("--boundary", type=float, default=None,
                   help="boundary observation point (0 or L)")
    p.add_argument("--alpha", type=float, default=0.3)

    p = sub.add_parser("report", help="full verification battery with figures")
    _add_common(p)
    _add_regime(p)
    p.add_argument("--window", default=None, help="observation window a,b")
    p.add_argument("--alpha", type=float, default=0.3)

    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(
        potential_expr=args.potential,
        length=args.length,
        schedule=[float(t) for t in str(args.schedule).replace(",", " ").split()],
        perturbation_expr=args.perturbation,
        out_dir=args.out_dir,
        seed=args.seed,
        workers=args.workers,
    )
    if args.grid_n is not None:
        cfg.grid = "auto" if args.grid_n == "auto" else int(args.grid_n)
    if hasattr(args, "regime"):
        cfg.regime, e_star = parse_regime(args.regime)
        if e_star is not None:
            cfg.e_star = e_star
        cfg.e_target_factor = args.e_target_factor
    if getattr(args, "alpha", None) is not None:
        cfg.alpha = args.alpha
    win = getattr(args, "window", None)
    if win and args.command in ("bounds", "report"):
        a, b = (float(t) for t in win.replace(",", " ").split())
        cfg.window = (a, b)
    if getattr(args, "boundary", None) is not None:
        cfg.boundary = args.boundary
    validate_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = config_from_args(args)

        kwargs = {}
        if args.command == "spectrum":
            kwargs = {"eps": args.eps, "count": args.count}
            if args.window:
                lo, hi = (float(t) for t in args.window.replace(",", " ").split())
                kwargs["window"] = (lo, hi)
        elif args.command == "eigen":
            kwargs = {"eps": args.eps, "k": args.k}
        elif args.command == "agmon":
            kwargs = {"E": args.energy, "n": args.n}
        elif args.command == "husimi":
            kwargs = {"eps": args.eps}

        manifest = run(cfg, args.command, **kwargs)
    except SingleWellError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    for name, ok in sorted(manifest.verdicts.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if manifest.verdicts and not manifest.all_passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
