"""Command-line entry point: ``sweep``, ``single`` and ``selftest``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import harness


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.timing:
        over["timing"] = True
    if over:
        cfg = dataclasses.replace(cfg, **over)
    rows = harness.run_sweep(cfg, threads=args.threads)
    out = args.out or cfg.output
    harness.write_csv(rows, out)
    n = sum(r["row"] == "trial" for r in rows)
    print(f"wrote {n} trial rows to {out}")
    return 0


def _cmd_single(args) -> int:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    over = {k: v for k, v in (("seed", args.seed), ("n_users", args.users)) if v is not None}
    if over:
        cfg = dataclasses.replace(cfg, **over)
    point = (args.active if args.active is not None else cfg.n_active[0],
             args.symbols if args.symbols is not None else cfg.n_symbols[0],
             args.pilots if args.pilots is not None else cfg.n_pilots[0],
             args.snr if args.snr is not None else cfg.snr_db[0])
    if point[1] > cfg.n_users:
        print(f"infeasible: G={point[1]} > K={cfg.n_users}", file=sys.stderr)
        return 2
    rows = harness.run_trial(dataclasses.replace(cfg, algorithms=["oamp"]), point, args.trial,
                             trace_path=args.trace)
    for r in rows:
        print(f"K={cfg.n_users} K_a={point[0]} G={point[1]} P={point[2]} snr={point[3]} "
              f"detector={r['detector']} aud_error={r['aud_error']:.4f} "
              f"nmse_db={harness.fmt_value(r['nmse_db'])} noise_var_ratio={harness.fmt_value(r['noise_var_ratio'])} "
              f"{r['note']}".rstrip())
    return 0


def _cmd_selftest(args) -> int:
    from . import selftest

    return 0 if selftest.main(verbose=not args.quiet) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="panelaccess",
                                 description="Joint activity detection and channel estimation sweeps.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a Monte Carlo sweep from a config file")
    sw.add_argument("config")
    sw.add_argument("--out")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--threads", type=int, default=1)
    sw.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    sw.set_defaults(func=_cmd_sweep)

    si = sub.add_parser("single", help="run one trial and optionally dump the solver trace")
    si.add_argument("--config")
    si.add_argument("--users", type=int)
    si.add_argument("--active", type=int)
    si.add_argument("--symbols", type=int)
    si.add_argument("--pilots", type=int)
    si.add_argument("--snr", type=float)
    si.add_argument("--seed", type=int)
    si.add_argument("--trial", type=int, default=0)
    si.add_argument("--trace", help="CSV path for the per-iteration trace")
    si.set_defaults(func=_cmd_single)

    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("-q", "--quiet", action="store_true")
    st.set_defaults(func=_cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
