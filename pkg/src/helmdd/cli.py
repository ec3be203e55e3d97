"""Command line entry point: ``helmdd run | sweep | eig-dump --config FILE``."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .bench.config import (
    describe_schema,
    grid_from_config,
    load_config,
    problem_spec_from_config,
    settings_from_config,
)
from .bench.experiment import SPECTRAL, build_decomposition, run_case, run_experiment, CellResult, Infeasible, eig_request
from .bench.problems import build_problem
from .bench.tables import TableLayout, render_table
from .coarse import subdomain_spectrum
from .krylov import ConfigError, write_history


def _outdir(cfg) -> Path:
    out = Path(cfg.get("output.dir", "helmdd-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_outputs(rows: list[CellResult], cfg, out: Path, title):
    table = render_table(rows, TableLayout(title=title))
    (out / "table.md").write_text(table.markdown, encoding="utf-8")
    (out / "table.csv").write_text(table.csv, encoding="utf-8")
    for r in rows:
        if r.report is not None:
            write_history(r.report, out / "history" / f"{r.cell_id}.csv")
    return table


def _line(r: CellResult):
    extra = f"  [{r.message}]" if r.message else ""
    return f"{r.cell_id:<48} {r.entry:>8}  {r.status}{extra}"


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    spec = problem_spec_from_config(cfg)
    settings = settings_from_config(cfg)
    problem = build_problem(spec)
    key = {
        "method": settings.method, "overlap": settings.overlap, "n_ppwl": spec.n_ppwl,
        "axis": "f" if spec.frequency is not None else "k",
        "value": spec.frequency if spec.frequency is not None else spec.wave_number,
        "N": settings.N, "nu": settings.nu if settings.method in SPECTRAL else None,
    }
    print(f"problem: n = {problem.metadata['n']}, h = {problem.metadata['h']:.4g}, k_max = {problem.metadata['k_max']:.4g}")
    row, _ = run_case(problem, settings, key)
    out = _outdir(cfg)
    _write_outputs([row], cfg, out, cfg.get("output.title", "Single run"))
    print(_line(row))
    if row.relres is not None:
        print(f"true relative residual {row.relres:.3e}")
    return 1 if row.status == "error" else 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = grid_from_config(cfg)
    out = _outdir(cfg)
    rows = run_experiment(grid, progress=(lambda r: print(_line(r), flush=True)) if not args.quiet else None)
    _write_outputs(rows, cfg, out, cfg.get("output.title", "Iteration counts"))
    n_err = sum(r.status == "error" for r in rows)
    print(f"{len(rows)} cells, {n_err} errored; tables in {out}")
    return 1 if n_err else 0


def cmd_eig_dump(args) -> int:
    cfg = load_config(args.config)
    spec = problem_spec_from_config(cfg)
    settings = settings_from_config(cfg)
    if settings.method not in SPECTRAL:
        raise ConfigError(f"eig-dump needs a spectral coarse.method ({', '.join(SPECTRAL)})")
    problem = build_problem(spec)
    try:
        fine, _ = build_decomposition(problem, settings.N, settings.overlap, settings.partition_mode)
    except Infeasible as exc:
        print(f"cannot decompose: {exc}", file=sys.stderr)
        return 1
    if not 0 <= args.subdomain < fine.N:
        raise ConfigError(f"subdomain must lie in [0, {fine.N - 1}]")
    pairs = subdomain_spectrum(settings.method, problem.A, fine, args.subdomain, problem.k, eig_request(settings, settings.method))
    path = _outdir(cfg) / "spectra" / f"{settings.method}_sub{args.subdomain}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subdomain", "index", "re_lambda", "im_lambda", "residual"])
        for i, p in enumerate(pairs):
            w.writerow([args.subdomain, i, f"{p.value.real:.12e}", f"{p.value.imag:.12e}", f"{p.residual:.3e}"])
    print(f"{len(pairs)} eigenpairs written to {path}" + (" (fewer than requested)" if pairs.truncated else ""))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="helmdd", description=__doc__,
                                     epilog="config keys:\n" + describe_schema(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve a single problem")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("sweep", help="run an experiment grid and write tables")
    p.add_argument("--config", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("eig-dump", help="write one subdomain's coarse-space spectrum")
    p.add_argument("--config", required=True)
    p.add_argument("--subdomain", type=int, required=True)
    p.set_defaults(fn=cmd_eig_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
