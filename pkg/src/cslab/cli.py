"""Command-line front end.

Each subcommand writes one run directory holding ``config.json``,
``manifest.json`` (file hashes and wall-clock timings) and its CSV/JSON
results.  Exit codes: 0 all checks pass, 1 some check fails, 2 a
configuration or runtime error (reported as JSON on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import beta_estimate, cf_expand, convergents
from .circle_maps import dynamical_partition, gap_statistics
from .config import ExperimentConfig, load_config
from .errors import LabError
from .localization import decay_csv, decay_fit, dump_vectors, eigenpairs_by_index, pairs_csv
from .operators import BoxOperator, eigenvalue_curves
from .spectral import (
    ESTIMATE_HEADER,
    Model,
    dos_histogram,
    ids,
    ids_staircase_csv,
    ldt_sweep,
    lyapunov,
    thouless_check,
)
from .verify import CHECK_IDS, GROUPS, dumps_report, run_suite

SUBCOMMANDS = ("cf", "orbit", "curves", "lyapunov", "ids", "thouless", "ldt", "eigfunc", "verify")


class Run:
    """Collects the files of one run and writes the manifest."""

    def __init__(self, out: Path, cfg: ExperimentConfig, subcommand: str, threads: int):
        self.out = out
        self.cfg = cfg
        self.subcommand = subcommand
        self.threads = threads
        self.files: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        out.mkdir(parents=True, exist_ok=True)
        self.write("config.json", cfg.dumps())

    def write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def timed(self, label: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[label] = round(time.perf_counter() - t0, 3)

    def finish(self, status: int) -> int:
        manifest = {"subcommand": self.subcommand, "version": __version__, "threads": self.threads,
                    "status": status, "files": dict(sorted(self.files.items())),
                    "timings_seconds": self.timings}
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")
        return status


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# -- subcommands ---------------------------------------------------------------------

def cmd_cf(run: Run) -> int:
    cfg = run.cfg
    cf = cf_expand(cfg.alpha_spec(), cfg.depth)
    conv = convergents(cf)
    rows = [(k + 1, cf.digits[k], p, q) for k, (p, q) in enumerate(conv)]
    run.write("convergents.csv", _csv(["k", "a", "p", "q"], rows))
    beta = [(k, repr(beta_estimate(cf, k).proxy)) for k in range(1, cf.depth - 1)]
    run.write("beta.csv", _csv(["k_min", "beta_proxy"], beta))
    run.write("cf.json", json.dumps(cf.to_json(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_orbit(run: Run) -> int:
    cfg = run.cfg
    ok = True
    for i, (cmap, mc) in enumerate(zip(cfg.circle_maps(), cfg.maps)):
        tag = f"{i}_{mc.kind}"
        k = max(cfg.scales)
        q = cmap.continued_fraction(k).q(k)
        xs = cmap.orbit(0.0, q)
        run.write(f"orbit_{tag}.csv", _csv(["j", "x"], [(j, repr(float(v))) for j, v in enumerate(xs)]))
        run.write(f"partition_{tag}.csv", dynamical_partition(cmap, 0.0, k).to_csv())
        rows = []
        for kk in range(2, k + 1):
            g = gap_statistics(cmap, 0.0, kk, cfg.tolerances.gap_slack)
            ok = ok and g["bounds_ok"]
            rows.append((kk, g["q_k"], g["large_count"], g["small_count"], repr(g["large_mass"]),
                         repr(g["small_mass"]), int(g["bounds_ok"])))
        run.write(f"gaps_{tag}.csv", _csv(["k", "qk", "large_count", "small_count", "large_mass",
                                           "small_mass", "bounds_ok"], rows))
    return 0 if ok else 1


def cmd_curves(run: Run) -> int:
    cfg = run.cfg
    pot = cfg.potential_fn()
    for i, (cmap, mc) in enumerate(zip(cfg.circle_maps(), cfg.maps)):
        for k in cfg.scales:
            cur = run.timed(f"curves_{i}_k{k}", eigenvalue_curves, cfg.lam, cmap, pot, k,
                            cfg.phase_grid, threads=run.threads)
            run.write(f"curves_{i}_{mc.kind}_k{k}.csv", cur.to_csv())
            run.write(f"beta_{i}_{mc.kind}_k{k}.json", cur.beta_json() + "\n")
    return 0


def _model(cfg: ExperimentConfig) -> Model:
    return Model(cfg.lam, cfg.potential_fn(), cfg.circle_maps()[0])


def cmd_lyapunov(run: Run) -> int:
    cfg = run.cfg
    model = _model(cfg)
    rows = []
    for n in cfg.sizes:
        for E in cfg.energies:
            rows.append(lyapunov(model, E, n, cfg.samples, threads=run.threads).csv_row())
    run.write("lyapunov.csv", _csv(ESTIMATE_HEADER, rows))
    return 0


def cmd_ids(run: Run) -> int:
    cfg = run.cfg
    model = _model(cfg)
    lo, hi = model.spectrum_bounds()
    grid = [float(v) for v in np.linspace(lo, hi, 257)]
    for n in cfg.sizes:
        est = ids(model, grid, n, cfg.samples, threads=run.threads)
        run.write(f"ids_n{n}.csv", ids_staircase_csv(est))
    return 0


def cmd_thouless(run: Run) -> int:
    cfg = run.cfg
    model = _model(cfg)
    ok = True
    for n in cfg.sizes:
        hist = run.timed(f"histogram_n{n}", dos_histogram, model, n, cfg.samples, 4096, run.threads)
        rows = []
        for E in cfg.energies:
            r = thouless_check(model, E, n, cfg.samples, hist=hist, threads=run.threads)
            ok = ok and r.gap <= cfg.tolerances.thouless
            rows.append((repr(r.E), n, repr(r.lhs), repr(r.rhs), repr(r.gap)))
        run.write(f"thouless_n{n}.csv", _csv(["E", "n", "lhs", "rhs", "gap"], rows))
    return 0 if ok else 1


def cmd_ldt(run: Run) -> int:
    cfg = run.cfg
    model = _model(cfg)
    ok = True
    for i, E in enumerate(cfg.energies):
        L = lyapunov(model, E, 100_000, 8, threads=run.threads).value
        sw = run.timed(f"ldt_{i}", ldt_sweep, model, E, cfg.scales, L / 2, L)
        ok = ok and all(r.components_ok for r in sw.reports)
        run.write(f"ldt_{i}.csv", sw.to_csv())
        run.write(f"ldt_{i}.json", json.dumps({"E": E, "L_hat": L, "rate": sw.rate, "C0": sw.C0,
                                               "ratios": list(sw.ratios),
                                               "reports": [r.to_json() for r in sw.reports]},
                                              indent=2, sort_keys=True) + "\n")
    return 0 if ok else 1


def cmd_eigfunc(run: Run, dump: bool = False) -> int:
    cfg = run.cfg
    cmap = cfg.circle_maps()[0]
    n = cfg.sizes[0]
    box = BoxOperator(cfg.lam, cfg.potential_fn(), cmap, cmap.forward(0.0, -(n // 2)), n)
    half = cfg.eigfunc.pairs // 2
    pairs = run.timed("eigenpairs", eigenpairs_by_index, box, n // 2 - half,
                      n // 2 - half + cfg.eigfunc.pairs)
    q = cmap.continued_fraction(cfg.eigfunc.k).q(cfg.eigfunc.k)
    margin = -(-q // 5)
    pairs = [decay_fit(p, cfg.eigfunc.floor, margin) for p in pairs]
    run.write("pairs.csv", pairs_csv(pairs))
    run.write("decay.csv", decay_csv(pairs, cfg.eigfunc.floor))
    if dump:
        dump_vectors(pairs, run.out / "vectors")
        for name in ("vectors.bin", "vectors.json"):
            data = (run.out / name).read_bytes()
            run.files[name] = hashlib.sha256(data).hexdigest()
    return 0


def cmd_verify(run: Run, check: str | None) -> int:
    report = run_suite(run.cfg, run.threads, check,
                       progress=lambda g: print(f"[verify] {g}", file=sys.stderr))
    run.write("report.json", dumps_report(report))
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['id']} {json.dumps(c['params'], sort_keys=True)}")
    s = report["summary"]
    print(f"{'PASS' if s['passed'] else 'FAIL'} {s['records'] - s['failed_records']}/{s['records']} records")
    return 0 if s["passed"] else 1


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
    common.add_argument("--out", metavar="DIR", help="run directory")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads")
    common.add_argument("--seed", type=int, metavar="S", help="override the config seed")
    common.add_argument("--check", metavar="ID", help=f"run one verify check ({', '.join(GROUPS)} "
                                                      "or a check id)")
    common.add_argument("--dump-vectors", action="store_true", help="eigfunc: write psi as binary")
    parser = argparse.ArgumentParser(prog="cslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cslab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _fail(err: LabError) -> int:
    print(json.dumps(err.to_json(), sort_keys=True), file=sys.stderr)
    return 2


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, 0 for --help/--version
        if e.code:
            print(json.dumps({"error": "usage", "message": "invalid command line", "details": {}}),
                  file=sys.stderr)
        return int(e.code or 0)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        print(json.dumps({"error": "unknown-subcommand", "message": "no subcommand given"}), file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        if args.threads < 1:
            raise LabError("--threads must be >= 1")
        if args.check is not None and args.check not in CHECK_IDS and args.check not in GROUPS:
            raise LabError(f"unknown check id {args.check!r}")
        out = Path(args.out or cfg.output_dir or Path("cslab-runs") / args.subcommand)
        run = Run(out, cfg, args.subcommand, args.threads)
        fn = {
            "cf": cmd_cf, "orbit": cmd_orbit, "curves": cmd_curves, "lyapunov": cmd_lyapunov,
            "ids": cmd_ids, "thouless": cmd_thouless, "ldt": cmd_ldt,
        }.get(args.subcommand)
        if fn is not None:
            status = run.timed("total", fn, run)
        elif args.subcommand == "eigfunc":
            status = run.timed("total", cmd_eigfunc, run, args.dump_vectors)
        else:
            status = run.timed("total", cmd_verify, run, args.check)
        return run.finish(status)
    except LabError as e:
        return _fail(e)


if __name__ == "__main__":
    sys.exit(main())
