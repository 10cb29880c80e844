"""Command-line front end.

    hybrid-attitude simulate [CONFIG] --trials 100 --seed 0 --out results/
    hybrid-attitude table --table 2 --trials 100 --out results/
    hybrid-attitude figure --figure 4 --trials 1000 --out results/
    hybrid-attitude validate --suite all
    hybrid-attitude replay results/manifest

Exit codes: 0 success, 1 failed checks or every trial failed, 2 invalid input.
"""

import argparse
import csv
import datetime
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile

from . import __version__
from .checks import FAULTS, SUITES, run_suite
from .config import defaults_text, load_config
from .exceptions import ConfigurationError
from .simulation import (
    METHODS,
    METRICS,
    TABLE_SATS,
    TABLE_BS,
    figure_data,
    run_campaign,
    sweep_tables,
    table_config,
)

SCHEMA_LINE = "# hybrid-attitude csv schema 1"
log = logging.getLogger("hybrid_attitude")


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def _write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _write_atomic(path, buf.getvalue())


def aggregate_rows(agg):
    rows = [("all", "n_trials", agg.n_trials)]
    for name, s in agg.methods.items():
        rows.append((name, "n_failed", s.n_failed))
        rows.append((name, "n_bound_not_closed", s.n_bound_not_closed))
        if not math.isnan(s.success_rate):
            rows.append((name, "success_rate", s.success_rate))
        for m in METRICS:
            if not math.isnan(s.mean[m]):
                rows.append((name, f"{m}_mean", s.mean[m]))
                rows.append((name, f"{m}_rmse", s.rmse[m]))
    return rows


def trial_table(agg):
    names = [m for m in METHODS if m in agg.methods]
    header = ["seed"]
    for m in names:
        header += [f"{m}_{k}" for k in METRICS]
        header += [f"{m}_success", f"{m}_n_candidates", f"{m}_bound_closed", f"{m}_failed"]
    rows = []
    for t in agg.trials:
        row = [t.seed]
        for m in names:
            r = t.methods.get(m)
            if r is None:
                row += [math.nan] * len(METRICS) + [None, None, None, None]
                continue
            row += [r.metric(k) for k in METRICS]
            row += [r.success, r.n_candidates, r.bound_closed, r.failed]
        rows.append(row)
    return header, rows


def _config_digest(path):
    text = defaults_text() if path is None else open(path, encoding="utf-8").read()
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_manifest(out, argv, args, started, outputs):
    lines = {
        "tool": "hybrid-attitude",
        "version": __version__,
        "command": args.command,
        "argv": json.dumps(argv),
        "config": getattr(args, "config", None) or "<bundled defaults>",
        "config_sha256": _config_digest(getattr(args, "config", None)),
        "base_seed": getattr(args, "seed", ""),
        "n_trials": getattr(args, "trials", ""),
        "jobs": getattr(args, "jobs", ""),
        "started": started,
        "finished": _now(),
        "outputs": " ".join(outputs),
    }
    text = "".join(f"{k} = {v}\n" for k, v in lines.items())
    _write_atomic(os.path.join(out, "manifest"), text)


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def cmd_simulate(args):
    cfg = load_config(args.config)
    agg = run_campaign(cfg, args.trials, args.jobs, args.seed)
    write_csv(os.path.join(args.out, "aggregate.csv"), ["method", "metric", "value"],
              aggregate_rows(agg))
    header, rows = trial_table(agg)
    write_csv(os.path.join(args.out, "trials.csv"), header, rows)
    h = agg.methods["hybrid"]
    log.info("hybrid success rate %.3f, fixed attitude RMSE %.4g deg",
             h.success_rate, h.rmse["fixed_R_deg"])
    return (1 if h.n_failed == agg.n_trials else 0), ["aggregate.csv", "trials.csv"]


def _table_pair(table_id):
    first = table_id - (table_id % 2)
    return first, first + 1


def cmd_table(args):
    base = load_config(args.config)
    cfg = table_config(args.table, base)
    grid = sweep_tables(cfg, TABLE_SATS, TABLE_BS, args.trials, args.seed, args.jobs)
    s_id, e_id = _table_pair(args.table)
    header = ["n_sats"] + [f"L{L}" for L in grid.bs_range]
    names = [f"table{s_id}_success.csv", f"table{e_id}_error.csv"]
    for name, values in zip(names, (grid.success, grid.error_deg)):
        rows = [[n] + [float(v) for v in values[i]] for i, n in enumerate(grid.sat_range)]
        write_csv(os.path.join(args.out, name), header, rows)
    all_failed = bool((grid.n_failed == grid.n_trials).all())
    return (1 if all_failed else 0), names


def cmd_figure(args):
    base = load_config(args.config)
    rows = figure_data(f"fig{args.figure}", base, args.trials, args.seed, args.jobs)
    name = f"fig{args.figure}.csv"
    write_csv(os.path.join(args.out, name), ["setup", "method", "metric", "trial_or_L", "value"], rows)
    all_nan = all(math.isnan(r[-1]) for r in rows)
    return (1 if all_nan else 0), [name]


def cmd_validate(args):
    results = run_suite(args.suite, fault=args.inject_fault)
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return 1, []
    print(f"all {len(results)} checks passed")
    return 0, []


def read_manifest(path):
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if " = " in line:
                k, v = line.rstrip("\n").split(" = ", 1)
                entries[k] = v
    return entries


def cmd_replay(args):
    try:
        argv = json.loads(read_manifest(args.manifest)["argv"])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"unreadable manifest: {exc}", field="manifest") from None
    return main(argv), []


def build_parser():
    p = argparse.ArgumentParser(prog="hybrid-attitude", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def campaign_args(sp, trials):
        sp.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("simulate", help="Monte-Carlo campaign for one scenario")
    sp.add_argument("config", nargs="?", default=None, help="YAML scenario (default: bundled)")
    campaign_args(sp, 100)
    sp = sub.add_parser("table", help="success-rate and error grids of Tables 2-7")
    sp.add_argument("--table", type=int, required=True, choices=range(2, 8))
    sp.add_argument("--config", default=None)
    campaign_args(sp, 100)
    sp = sub.add_parser("figure", help="long-format data of Figures 2-4")
    sp.add_argument("--figure", type=int, required=True, choices=(2, 3, 4))
    sp.add_argument("--config", default=None)
    campaign_args(sp, None)
    sp = sub.add_parser("validate", help="run the self-check suites")
    sp.add_argument("--suite", choices=sorted(SUITES), default="all")
    sp.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)
    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    return p


COMMANDS = {
    "simulate": cmd_simulate, "table": cmd_table, "figure": cmd_figure,
    "validate": cmd_validate, "replay": cmd_replay,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "trials", None) is None and args.command == "figure":
        args.trials = 1000 if args.figure == 4 else 100
    if getattr(args, "trials", 1) < 1 or getattr(args, "jobs", 1) < 1:
        print("error: --trials and --jobs must be >= 1", file=sys.stderr)
        return 2
    out = getattr(args, "out", None)
    started = _now()
    try:
        if out is not None:
            os.makedirs(out, exist_ok=True)
        code, outputs = COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if out is not None:
        write_manifest(out, argv, args, started, outputs)
    return code


if __name__ == "__main__":
    sys.exit(main())
