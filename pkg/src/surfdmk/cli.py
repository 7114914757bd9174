"""Command-line driver: single runs, the four-level convergence sweep, exact-field export.

Exit statuses: 0 success, 1 invalid configuration or I/O failure,
2 a run stopped before ``var < tau_T`` (partial outputs are still written).

A configuration file holds ``key = value`` lines (``#`` starts a comment);
keys are the long option names with ``-`` or ``_``.  Command-line flags
override file values.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dmk import LOG_COLUMNS, DmkConfig, DmkResult, run
from .mesh import mesh_quality
from .metrics import RATE_COLUMNS, ErrorRecord, err_bp, err_w1, rates_for
from .sphere import (
    ConfigurationError,
    exact_potential_at,
    exact_tdens_at,
    exact_velocity_at,
    sphere_level_mesh,
    sphere_problem,
)
from .vtk import write_vtk

logger = logging.getLogger(__name__)

LEVELS = range(0, 4)
SUMMARY_COLUMNS = ("level", "h", "err_bp", "err_w1", "var_final", "steps", "wall_time", "converged")

#: Sweep values used when the user does not set them; see the README.
SWEEP_DEFAULTS = {"tau_T": 1e-5, "lin_tol": 1e-8, "k_max": 4000}

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    command: str = "run"
    level: int = 0
    n_r: int = 12
    n_phi: int = 16
    tau_T: Optional[float] = None
    eta: Optional[float] = None
    dt_max: Optional[float] = None
    k_max: Optional[int] = None
    lin_tol: Optional[float] = None
    lin_maxit: Optional[int] = None
    out: Path = Path("surfdmk_out")

    def validate(self) -> None:
        if self.level not in LEVELS:
            raise ConfigurationError(f"invalid level {self.level}: must be in 0..{LEVELS[-1]}")
        if self.n_r < 12 or self.n_r % 12:
            raise ConfigurationError(f"invalid n_r {self.n_r}: must be a positive multiple of 12")
        if self.n_phi < 4 or self.n_phi % 4:
            raise ConfigurationError(f"invalid n_phi {self.n_phi}: must be a positive multiple of 4")
        self.dmk_config()

    def dmk_config(self, defaults: Optional[dict] = None) -> DmkConfig:
        """DmkConfig from the explicitly set fields, falling back to ``defaults``."""
        values = dict(defaults or {})
        for name in ("tau_T", "eta", "dt_max", "k_max", "lin_tol", "lin_maxit"):
            value = getattr(self, name)
            if value is not None:
                values[name] = value
        return DmkConfig(**values)


_TYPES = {"level": int, "n_r": int, "n_phi": int, "tau_T": float, "eta": float, "dt_max": float,
          "k_max": int, "lin_tol": float, "lin_maxit": int, "out": Path}
_ALIASES = {"tau_t": "tau_T", "tau": "tau_T", "output_dir": "out"}


def _field_name(key: str) -> str:
    key = key.strip().replace("-", "_")
    key = _ALIASES.get(key.lower(), key)
    if key not in _TYPES:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    return key


def _convert(name: str, raw: str):
    try:
        return _TYPES[name](raw.strip())
    except ValueError:
        raise ConfigurationError(f"invalid value for {name}: {raw.strip()!r}") from None


def read_config_file(path: Path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, raw = line.split("=", 1)
        name = _field_name(key)
        values[name] = _convert(name, raw)
    return values


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2, which this tool reserves for non-convergence
    def error(self, message: str):
        raise ConfigurationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="surfdmk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "solve the sphere benchmark on one level"),
        ("convergence", "run levels 0-3 and fit convergence rates"),
        ("export-exact", "write the exact solution on one level"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--level", type=int)
        p.add_argument("--n-r", dest="n_r", type=int)
        p.add_argument("--n-phi", dest="n_phi", type=int)
        p.add_argument("--out", type=Path)
        if name != "export-exact":
            p.add_argument("--tau-t", dest="tau_T", type=float)
            p.add_argument("--eta", type=float)
            p.add_argument("--dt-max", dest="dt_max", type=float)
            p.add_argument("--k-max", dest="k_max", type=int)
            p.add_argument("--lin-tol", dest="lin_tol", type=float)
            p.add_argument("--lin-maxit", dest="lin_maxit", type=int)
    return parser


def parse_config(argv: Optional[Sequence[str]] = None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None and f.name != "command":
            values[f.name] = value
    config = RunConfig(command=args.command, **values)
    config.validate()
    return config, args.verbose


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _record(level: int, problem, result: DmkResult) -> ErrorRecord:
    return ErrorRecord(
        level=level,
        h=mesh_quality(problem.pair.coarse).h,
        err_bp=err_bp(problem.pair, result.v_star),
        err_w1=err_w1(result.w1_estimate),
        var_final=result.final_var,
        steps=result.steps,
        wall_time=result.wall_time,
    )


def solve_level(level: int, config: RunConfig, out: Path, defaults: Optional[dict] = None) -> tuple[ErrorRecord, bool]:
    """Run one level and write steps.csv, summary.csv and result.vtk into ``out``."""
    problem = sphere_problem(level, config.n_r, config.n_phi)
    logger.info("level %d: %d coarse cells, %d fine vertices", level,
                problem.pair.coarse.n_triangles, problem.pair.fine.n_vertices)
    result = run(problem.pair, problem.b, config.dmk_config(defaults))
    logger.info("level %d: %s after %d steps (%.1f s)", level, result.message, result.steps, result.wall_time)
    record = _record(level, problem, result)

    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "steps.csv", LOG_COLUMNS, (rec.row() for rec in result.logs))
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS,
               [(record.level, record.h, record.err_bp, record.err_w1, record.var_final,
                 record.steps, record.wall_time, int(result.converged))])
    parent = problem.pair.parent
    write_vtk(
        out / "result.vtk",
        problem.pair.fine,
        cell_data={
            "mu": result.mu_star[parent],
            "source": problem.source,
            "velocity": result.v_star[parent],
        },
        point_data={"potential": result.u_star},
        title=f"surfdmk level {level} result",
    )
    return record, result.converged


def cmd_run(config: RunConfig) -> int:
    _, converged = solve_level(config.level, config, config.out)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_convergence(config: RunConfig) -> int:
    records, all_converged = [], True
    for level in LEVELS:
        record, converged = solve_level(level, config, config.out / f"level_{level}", SWEEP_DEFAULTS)
        records.append(record)
        all_converged &= converged
    rows = [r.row() for r in records]
    if len(records) >= 2:
        bp, w1 = rates_for(records)
        rows.append(("slope", "", bp.slope, w1.slope, "", ""))
        logger.info("slopes: err_bp %.3f, err_w1 %.3f", bp.slope, w1.slope)
    _write_csv(config.out / "rates.csv", RATE_COLUMNS, rows)
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def cmd_export_exact(config: RunConfig) -> int:
    mesh = sphere_level_mesh(config.level, config.n_r, config.n_phi)
    bary = mesh.barycenters
    proj = bary / np.linalg.norm(bary, axis=1)[:, None]
    config.out.mkdir(parents=True, exist_ok=True)
    write_vtk(
        config.out / "exact.vtk",
        mesh,
        cell_data={"mu_star": exact_tdens_at(proj), "v_star": exact_velocity_at(proj)},
        point_data={"u_star": exact_potential_at(mesh.vertices)},
        title=f"surfdmk exact solution level {config.level}",
    )
    return EXIT_OK


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "export-exact": cmd_export_exact}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config, verbose = parse_config(argv)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"surfdmk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[config.command](config)
    except OSError as exc:
        print(f"surfdmk: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
