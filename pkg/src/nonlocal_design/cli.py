"""Command line entry point.

Exit codes: 0 success, 1 invalid input, 2 solver did not converge, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import nullcontext

import numpy as np

from .config import COMMANDS, RunConfig, parse_config
from .design import DesignVector, exhaustive_oracle, optimize_hard, optimize_soft
from .eigensolver import solve_hard, solve_soft
from .errors import BudgetExceededError, ConfigurationError, ConvergenceError, NonlocalDesignError
from .geometry import build_grid
from .kernel import assemble_kernel
from .limits import bbm_pointwise_check, compute_K, gamma_limit_experiment, sigma_continuation
from .records import ExperimentRecord, design_checksum, emit_records, render

log = logging.getLogger("nonlocal_design")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3
DEFAULT_LADDER = (1.0, 10.0, 100.0, 1e3, 1e4)
DEFAULT_S_VALUES = (0.6, 0.8, 0.9, 0.95, 0.99)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is our non-convergence code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "jsonlines"))
    common.add_argument("--threads", type=int, default=1, help="BLAS and oracle worker threads")
    common.add_argument("--seed", type=int)
    common.add_argument("--s", type=float)
    common.add_argument("--s-values", type=_floats, help="comma-separated, for sweeps")
    common.add_argument("--p", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--sigma-values", type=_floats, help="comma-separated increasing ladder")
    common.add_argument("--cells", type=_ints, help="cells per axis, e.g. 48 or 16,16")
    common.add_argument("--quadrature", choices=("midpoint", "corrected"))
    common.add_argument("--obstacle", type=_ints, help="obstacle cell indices, e.g. 0,1,2")
    common.add_argument("--profile", choices=("cos", "linear", "constant"))
    common.add_argument("--budget", type=int, help="oracle enumeration budget")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="nonlocal-design", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "constant-k":
            p.add_argument("--n", type=int)
            p.add_argument("--method", choices=("gamma", "sphere", "both"))
    return parser


def _load(args) -> RunConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    else:
        cfg = RunConfig()
    return cfg.with_overrides(
        s=args.s, s_values=args.s_values, p=args.p, alpha=args.alpha, sigma=args.sigma,
        sigma_values=args.sigma_values, cells=args.cells, quadrature=args.quadrature,
        obstacle=args.obstacle, profile=args.profile, oracle_budget=args.budget,
        out=args.out, format=args.format, seed=args.seed,
        n=getattr(args, "n", None), method=getattr(args, "method", None),
    )


def _require(cfg: RunConfig, command: str, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) in (None, ())]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigurationError(f"{command} needs {flags} (flag or config key)")


def _record(command, cfg, grid, lam, breakdown, iterations, residual, design, t0,
            s=None, sigma=None) -> ExperimentRecord:
    return ExperimentRecord(
        command=command, s=s, p=cfg.p, alpha=cfg.alpha, sigma=sigma, N=grid.size,
        lambda_=float(lam), seminorm_term=float(breakdown.seminorm_term),
        penalty_term=float(breakdown.penalty_term), iterations=int(iterations),
        el_residual=float(residual), design_checksum=design_checksum(design),
        seed=cfg.solver.seed, wall_time_ms=(time.perf_counter() - t0) * 1e3,
    )


def _run(command: str, cfg: RunConfig, threads: int) -> list[ExperimentRecord]:
    t0 = time.perf_counter()
    grid = build_grid(cfg.domain, cfg.cells if len(cfg.cells) > 1 else cfg.cells[0])
    opts = cfg.solver

    if command in ("gamma-limit", "bbm-check"):
        s_values = cfg.s_values or DEFAULT_S_VALUES
        quad = cfg.quadrature or "corrected"
        if command == "bbm-check":
            rows = bbm_pointwise_check(cfg.profile, grid, cfg.p, s_values, quad)
            out = []
            for row in rows:
                log.info("s=%.4g scaled=%.10g target=%.10g ratio=%.10g",
                         row.s, row.scaled_energy, row.target, row.ratio)
                # lambda holds the ratio; seminorm_term holds (1 - s) [u]^p
                out.append(ExperimentRecord(
                    command, row.s, cfg.p, None, None, grid.size, float(row.ratio),
                    float(row.scaled_energy), 0.0, 0, 0.0, design_checksum(np.zeros(0)),
                    opts.seed, (time.perf_counter() - t0) * 1e3,
                ))
            return out
        _require(cfg, command, "alpha")
        recs, local = gamma_limit_experiment(cfg.domain, cfg.cells if len(cfg.cells) > 1 else cfg.cells[0],
                                             cfg.p, cfg.alpha, s_values, opts, quad)
        # the local problem is reported as s = 1
        out = [_record(command, cfg, grid, local.lam, local.extremal.breakdown, local.outer_iterations,
                       local.extremal.el_residual, local.design.values, t0, s=1.0)]
        for r in recs:
            res = r.result
            out.append(_record(command, cfg, grid, res.lam, res.extremal.breakdown, res.outer_iterations,
                               res.extremal.el_residual, res.design.values, t0, s=r.s))
            log.info("s=%g ratio=%.10g symmetric_difference=%d", r.s, r.ratio, r.symmetric_difference)
        return out

    _require(cfg, command, "s")
    model = assemble_kernel(grid, cfg.s, cfg.p, cfg.quadrature or "midpoint")

    if command == "solve-hard":
        _require(cfg, command, "obstacle")
        design = DesignVector.from_cells(cfg.obstacle, grid)
        ext = solve_hard(model, grid, design, opts)
        return [_record(command, cfg, grid, ext.lam, ext.breakdown, ext.iterations, ext.el_residual,
                        design.values, t0, s=cfg.s)]
    if command == "solve-soft":
        _require(cfg, command, "sigma")
        if cfg.potential is not None:
            phi = np.asarray(cfg.potential, dtype=float)
        elif cfg.obstacle is not None:
            phi = DesignVector.from_cells(cfg.obstacle, grid).values
        else:
            raise ConfigurationError("solve-soft needs a potential (config key) or --obstacle cells")
        ext = solve_soft(model, grid, phi, cfg.sigma, opts)
        return [_record(command, cfg, grid, ext.lam, ext.breakdown, ext.iterations, ext.el_residual,
                        phi, t0, s=cfg.s, sigma=cfg.sigma)]

    _require(cfg, command, "alpha")
    if command == "optimize-hard":
        res = optimize_hard(model, grid, cfg.alpha, opts)
        sigma = None
    elif command == "optimize-soft":
        _require(cfg, command, "sigma")
        res = optimize_soft(model, grid, cfg.alpha, cfg.sigma, opts)
        sigma = cfg.sigma
    elif command == "oracle":
        mode = "soft" if cfg.sigma else "hard"
        res = exhaustive_oracle(model, grid, cfg.alpha, mode, cfg.sigma, opts,
                                budget=cfg.oracle_budget, threads=threads)
        sigma = cfg.sigma or None
    elif command == "continuation":
        ladder = sigma_continuation(model, grid, cfg.alpha, cfg.sigma_values or DEFAULT_LADDER, opts)
        out = []
        for rec in ladder.records:
            res = rec.result
            out.append(_record(command, cfg, grid, rec.lam, res.extremal.breakdown, res.outer_iterations,
                               res.extremal.el_residual, rec.design.values, t0, s=cfg.s, sigma=rec.sigma))
            log.info("sigma=%g penalty_residual=%.6g bound=%s", rec.sigma, rec.penalty_residual,
                     rec.residual_bound_holds(ladder.hard_lambda))
        return out
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigurationError(f"unknown command {command!r}")
    if not res.converged:
        log.warning("%s stopped on a cycle of length %d", command, res.cycle_length)
    return [_record(command, cfg, grid, res.lam, res.extremal.breakdown, res.outer_iterations,
                    res.extremal.el_residual, res.design.values, t0, s=cfg.s, sigma=sigma)]


def _constant_k(cfg: RunConfig) -> None:
    if cfg.method == "both":
        g = compute_K(cfg.n, cfg.p, "gamma")
        sp = compute_K(cfg.n, cfg.p, "sphere")
        print(f"gamma {g:.17g}")
        print(f"sphere {sp:.17g}")
        print(f"difference {abs(g - sp):.3e}")
    else:
        print(f"{compute_K(cfg.n, cfg.p, cfg.method):.17g}")


def _thread_limit(threads: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ConfigurationError(f"--threads must be at least 1, got {args.threads}")
        cfg = _load(args)
        if cfg.command is not None and cfg.command != args.command:
            raise ConfigurationError(
                f"config is written for {cfg.command!r} but the subcommand is {args.command!r}"
            )
        if args.command == "constant-k":
            _constant_k(cfg)
            return EXIT_OK
        log.info("threads=%d seed=%d", args.threads, cfg.solver.seed)
        with _thread_limit(args.threads):
            records = _run(args.command, cfg, args.threads)
        if cfg.out:
            emit_records(records, cfg.out, cfg.format)
        else:
            sys.stdout.write(render(records, cfg.format))
        return EXIT_OK
    except BudgetExceededError as exc:
        print(f"error: {exc} (count={exc.count})", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"error: solver did not converge: {exc}; loosen tolerances or raise max_iterations",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonlocalDesignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
