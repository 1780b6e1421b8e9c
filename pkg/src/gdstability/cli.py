"""Command-line front end: gdstability {run,verify,rates,compare,selfcheck}.

Exit codes: 0 when every check holds, 2 when any bound or oracle check fails,
1 on configuration or runtime errors.
"""
import argparse
import configparser
import csv
import dataclasses
import math
import os
import re
import sys
from typing import List, Optional

from . import experiment_harness as eh
from . import selfcheck
from .errors import UsageError

CSV_HEADER = ["regime", "n", "T", "seed", "eps_gen_direct", "eps_gen_direct_se", "eps_gen_exch",
              "eps_gen_exch_se", "eps_stab", "eps_stab_se", "eps_opt", "eps_path", "eps_c",
              "excess_emp", "bound_gen", "bound_excess", "bound_mode", "bound_holds"]

_INT_KEYS = {"d", "reps", "seed", "population_m"}
_FLOAT_KEYS = {"schedule_c", "noise", "decay", "scale", "lam", "mu"}
_LIST_KEYS = {"n_grid", "indices"}
_SECTION = "experiment"

# acceptance windows for the log-log slopes
RATE_WINDOWS = {"convex": ("excess", -0.65, -0.35), "strongly-convex": ("gen", -1.2, -0.8)}


class ConfigError(UsageError):
    pass


def _convert(key, raw, lineno):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            return tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"line {lineno}: {key}: cannot parse {raw!r}") from None
    return raw


def parse_config_text(text: str) -> eh.ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"line {lineno - 1}: " if lineno else ""
        raise ConfigError(f"{where}{exc.message if hasattr(exc, 'message') else exc}") from None
    known = {f.name for f in dataclasses.fields(eh.ExperimentConfig)}
    lines = text.splitlines()
    values = {}
    for key, raw in parser.items(_SECTION):
        pat = re.compile(rf"\s*{re.escape(key)}\s*[=:]")
        lineno = next((k + 1 for k, ln in enumerate(lines) if pat.match(ln)), 0)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if raw == "":
            continue
        values[key] = _convert(key, raw, lineno)
    try:
        return eh.ExperimentConfig(**values)
    except UsageError as exc:
        raise ConfigError(f"semantic error: {exc}") from None


def parse_config(path) -> eh.ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def dump_config(cfg: eh.ExperimentConfig) -> str:
    out = []
    for key, val in cfg.as_dict().items():
        if val is None:
            continue
        if isinstance(val, tuple):
            val = ", ".join(str(v) for v in val)
        elif isinstance(val, float):
            val = repr(val)
        out.append(f"{key} = {val}")
    return "\n".join(out) + "\n"


def _num(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def row_fields(row: eh.ExperimentRow) -> List[str]:
    r = row.report
    return [row.regime, str(row.n), str(row.T), str(row.seed),
            _num(r.eps_gen_direct.mean), _num(r.eps_gen_direct.se),
            _num(r.eps_gen_exch.mean), _num(r.eps_gen_exch.se),
            _num(r.eps_stab.mean), _num(r.eps_stab.se), _num(r.eps_opt.mean),
            _num(r.eps_path.mean), _num(r.eps_c.mean), _num(r.excess.mean),
            _num(row.bound_gen), _num(row.bound_excess), row.bound_mode,
            "true" if row.bound_holds else "false"]


def write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row_fields(row))


def _agreement(row):
    r = row.report
    comb = math.hypot(r.eps_gen_direct.se, r.eps_gen_exch.se)
    return abs(r.eps_gen_direct.mean - r.eps_gen_exch.mean) <= eh.SIGMA * comb


def summary_lines(rows) -> List[str]:
    out = ["# bound checks: empirical <= bound + 4 sigma",
           "regime\tn\tT\tbound\tmode\tvalue\tempirical\tse\tverdict"]
    for row in rows:
        for c in row.checks:
            out.append(f"{row.regime}\t{row.n}\t{row.T}\t{c.name}\t{c.mode}\t{c.bound:.6g}\t"
                       f"{c.empirical:.6g}\t{c.se:.3g}\t{'holds' if c.holds else 'VIOLATED'}")
    out.append("")
    out.append("# generalization estimators (direct vs exchange), 4 combined sigma")
    for row in rows:
        r = row.report
        out.append(f"{row.regime}\tn={row.n}\tdirect={r.eps_gen_direct.mean:.6g}\t"
                   f"exchange={r.eps_gen_exch.mean:.6g}\t{'agree' if _agreement(row) else 'DISAGREE'}\t"
                   f"failed replicates={r.failures}")
    notes = sorted({note for row in rows for note in row.bounds.notes})
    if notes:
        out.append("")
        out.append("# notes")
        out.extend(notes)
    return out


def _finish(out_dir, rows, extra=()):
    os.makedirs(out_dir, exist_ok=True)
    write_rows(os.path.join(out_dir, "rows.csv"), rows)
    summ = eh.verify_bounds(rows)
    disagree = [r for r in rows if not _agreement(r)]
    lines = summary_lines(rows) + list(extra)
    lines += ["", f"# violations: {len(summ.violations)}"] + summ.violations
    lines.append(f"# estimator disagreements: {len(disagree)}")
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"{len(rows)} rows, {len(summ.violations)} violations, "
          f"{len(disagree)} estimator disagreements -> {out_dir}")
    return 0 if summ.ok and not disagree else 2


def _rate_lines(cfg, rows):
    quantity = eh.default_rate_quantity(cfg.regime)
    res = eh.rate_of(rows, quantity)
    lines = ["", f"# rate fit of {quantity} vs n: slope {res.slope:.4f}, intercept {res.intercept:.4f}, "
                 f"r2 {res.r2:.4f}, points used {res.used}, excluded (non-positive) {res.excluded}"]
    ok = True
    if cfg.regime in RATE_WINDOWS and RATE_WINDOWS[cfg.regime][0] == quantity:
        _, lo, hi = RATE_WINDOWS[cfg.regime]
        ok = lo <= res.slope <= hi
        lines.append(f"# expected window [{lo}, {hi}]: {'inside' if ok else 'OUTSIDE'}")
    if cfg.regime == "strongly-convex":
        lines.append("# the predicted rate carries a sqrt(log n) factor that the fit window absorbs")
    return lines, ok


def cmd_run(cfg, jobs):
    return _finish(cfg.out_dir, eh.run_regime(cfg, jobs))


def cmd_rates(cfg, jobs):
    rows = eh.run_regime(cfg, jobs)
    lines, ok = _rate_lines(cfg, rows)
    print(lines[1])
    status = _finish(cfg.out_dir, rows, lines)
    return status if ok else 2


def standard_sweep(cfg) -> List[eh.ExperimentConfig]:
    """The four acceptance regimes, sharing grid, reps, seed and population size with cfg."""
    shared = dict(n_grid=cfg.n_grid, reps=cfg.reps, seed=cfg.seed, population_m=cfg.population_m,
                  out_dir=cfg.out_dir, bound_mode=cfg.bound_mode)
    return [eh.ExperimentConfig(regime="convex", t_rule="sqrt-n", **shared),
            eh.ExperimentConfig(regime="convex", t_rule="linear-n", **shared),
            eh.ExperimentConfig(regime="strongly-convex", **shared),
            eh.ExperimentConfig(regime="nonconvex", **shared)]


def cmd_verify(cfg, jobs):
    rows, extra, rates_ok = [], [], True
    for sub in standard_sweep(cfg):
        sub_rows = eh.run_regime(sub, jobs)
        rows += sub_rows
        if sub.t_rule != "linear-n":
            lines, ok = _rate_lines(sub, sub_rows)
            extra += [f"# {sub.regime} ({sub.t_rule})"] + lines[1:]
            rates_ok &= ok
    status = _finish(cfg.out_dir, rows, extra)
    return status if rates_ok else 2


def cmd_compare(cfg, jobs):
    rows = eh.compare_gd_sgd(cfg, jobs)
    os.makedirs(cfg.out_dir, exist_ok=True)
    header = ["regime", "n", "T_gd", "T_sgd", "gd_excess", "gd_excess_se", "sgd_excess",
              "sgd_excess_se", "gd_bound", "gd_bound_holds"]
    with open(os.path.join(cfg.out_dir, "comparison.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([r.regime, r.n, r.T_gd, r.T_sgd, _num(r.gd_excess.mean), _num(r.gd_excess.se),
                        _num(r.sgd_excess.mean), _num(r.sgd_excess.se), _num(r.gd_bound),
                        "true" if r.gd_bound_holds else "false"])
    lines = ["regime\tn\tT_gd\tT_sgd\tgd_excess\tsgd_excess\tgd_bound\tverdict"]
    lines += [f"{r.regime}\t{r.n}\t{r.T_gd}\t{r.T_sgd}\t{r.gd_excess.mean:.6g}+-{r.gd_excess.se:.2g}\t"
              f"{r.sgd_excess.mean:.6g}+-{r.sgd_excess.se:.2g}\t{r.gd_bound:.6g}\t"
              f"{'holds' if r.gd_bound_holds else 'VIOLATED'}" for r in rows]
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if all(r.gd_bound_holds for r in rows) else 2


def cmd_selfcheck(out_dir):
    outcomes = selfcheck.run_all()
    lines = [f"{'PASS' if o.passed else 'FAIL'}\t{o.name}\t{o.detail}" for o in outcomes]
    print("\n".join(lines))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0 if all(o.passed for o in outcomes) else 2


def build_parser():
    p = argparse.ArgumentParser(prog="gdstability", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=["run", "verify", "rates", "compare", "selfcheck"])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="master seed override (unsigned 64-bit)")
    p.add_argument("--jobs", type=int, default=1, help="grid points run in parallel")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.jobs < 1:
            raise ConfigError("--jobs must be positive")
        if args.subcommand == "selfcheck":
            return cmd_selfcheck(args.out)
        cfg = parse_config(args.config) if args.config else eh.ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out_dir = args.out
        cmd = {"run": cmd_run, "verify": cmd_verify, "rates": cmd_rates, "compare": cmd_compare}
        return cmd[args.subcommand](cfg, args.jobs)
    except Exception as exc:   # any failure maps to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
