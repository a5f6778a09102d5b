"""Command-line experiment runner.

Usage: rwre-lab SUBCOMMAND --config PATH [--seed N] [--reps N] [--out DIR]
[--workers N].  Reports embed the fully resolved configuration and seed;
identical (config, seed) runs produce byte-identical outputs for any
worker count.  Exit codes: 0 success (check failures are recorded as
data), 1 invalid configuration, 2 runtime failure, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, load_config, parse_config
from .errors import ConfigError, RwreError
from .parallel import worker_count


def _registry():
    from . import experiments as ex
    return {
        "velocity": ex.run_velocity,
        "regen": ex.run_regen,
        "glue": ex.run_glue,
        "couple": ex.run_couple,
        "transience": ex.run_transience,
        "decay": ex.run_decay,
        "overlap": ex.run_overlap,
        "intersect": ex.run_intersect,
        "certify": ex.run_certify,
    }


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode("utf-8")


def table_bytes(header: list[str], rows: list[list]) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _write_outputs(outcome, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_bytes(report_bytes(outcome.report))
    for name, (header, rows) in outcome.tables.items():
        (out_dir / f"{name}.csv").write_bytes(table_bytes(header, rows))


def _print_checks(checks: list[dict]) -> None:
    for c in checks:
        if c["passed"]:
            tag = "XPASS" if c.get("expected_fail") else "PASS"
        else:
            tag = "XFAIL" if c.get("expected_fail") else "FAIL"
        print(f"{tag} {c['name']} - {c['detail']}")


def _print_tables(outcome, max_rows: int = 24) -> None:
    """Aligned-column rendering of every table, for human consumption.

    Long tables are elided on the console; the CSV files hold every row.
    """
    for name, (header, rows) in outcome.tables.items():
        shown = rows if len(rows) <= max_rows else rows[: max_rows - 4] + rows[-4:]
        cells = [[str(h) for h in header]]
        for row in shown:
            cells.append([f"{v:.6g}" if isinstance(v, float) else str(v)
                          for v in row])
        widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
        print(f"[{name}]")
        for i, r in enumerate(cells):
            if len(rows) > max_rows and i == max_rows - 3:
                print("  ...")
            print("  " + "  ".join(v.rjust(w) for v, w in zip(r, widths)))


def determinism_check() -> tuple[bool, str]:
    """Two tiny pipelines, rerun and run across worker counts, must agree
    byte for byte."""
    from . import experiments as ex
    from . import laws

    vel_cfg = dict(law=laws.d1_drift(), master_seed=424242, horizon=400,
                   margin=50, reps=64, n_slabs=100,
                   options={"steps": 200})
    a = report_bytes(ex.run_velocity(RunConfig(**vel_cfg)).report)
    b = report_bytes(ex.run_velocity(RunConfig(**vel_cfg)).report)
    if a != b:
        return False, "velocity report changed between identical runs"

    coup_cfg = dict(law=laws.d2_random(), master_seed=424243, horizon=1200,
                    margin=150, n_slabs=60,
                    options={"worlds": 4, "sites": 1500})
    w1 = ex.run_couple(RunConfig(**coup_cfg), workers=1)
    w2 = ex.run_couple(RunConfig(**coup_cfg), workers=2)
    if report_bytes(w1.report) != report_bytes(w2.report):
        return False, "couple report differs between --workers 1 and 2"
    t1 = {k: table_bytes(*v) for k, v in w1.tables.items()}
    t2 = {k: table_bytes(*v) for k, v in w2.tables.items()}
    if t1 != t2:
        return False, "couple tables differ between --workers 1 and 2"
    return True, "velocity rerun and couple at workers 1 vs 2 byte-identical"


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rwre-lab",
        description="Monte Carlo laboratory for ballistic lattice walks in "
                    "i.i.d. random environments",
    )
    p.add_argument("subcommand",
                   choices=sorted(list(_registry()) + ["selftest"]))
    p.add_argument("--config", type=Path, default=None,
                   help="JSON run configuration (required except for selftest)")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--reps", type=int, default=None, help="override reps")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: RWRE_LAB_WORKERS or 1)")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    workers = worker_count(args.workers)

    if args.subcommand == "selftest":
        from .experiments import acceptance_suite
        checks = acceptance_suite(workers=workers)
        _print_checks(checks)
        hard_failures = [c for c in checks
                         if not c["passed"] and not c.get("expected_fail")]
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "report.json").write_bytes(report_bytes({
                "subcommand": "selftest",
                "checks": checks,
                "hard_failures": len(hard_failures),
            }))
        print(f"{len(checks) - len(hard_failures)}/{len(checks)} checks ok "
              f"({sum(1 for c in checks if c.get('expected_fail') and not c['passed'])}"
              " expected failures)")
        return 3 if hard_failures else 0

    try:
        if args.config is None:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.reps is not None:
            overrides["reps"] = args.reps
        if overrides:
            cfg = parse_config({**cfg.raw, **overrides})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out_dir = args.out if args.out is not None else (
        Path(cfg.out_dir) if cfg.out_dir else None)
    try:
        outcome = _registry()[args.subcommand](cfg, out_dir=out_dir,
                                               workers=workers)
    except RwreError as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    if out_dir is not None:
        _write_outputs(outcome, out_dir)
    _print_tables(outcome)
    _print_checks(outcome.checks)
    return 0


if __name__ == "__main__":
    sys.exit(main())
