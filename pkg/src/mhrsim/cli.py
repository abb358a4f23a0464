"""Command-line front end: ``mhrsim run | curve | tables``.

Configuration files are flat ``key = value`` text; list values are
comma separated, ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .balance import METHODS, fit_ps, iptw_weights
from .censorcal import apply_censoring, draw_censoring, make_plan, tau_of
from .coxfit import hr_curve
from .numkit.rng import RngStream
from .simharness import (
    DEFAULT_DISTS, DEFAULT_MHRS, DEFAULT_RATES, DEFAULT_SIZES, grid_expand, run_scenario, scenario_params,
)
from .synthcohort import calibrated_params, make_cohort

log = logging.getLogger("mhrsim")

ESTIMATES_HEADER = ["scenario_id", "replicate", "method", "mhr_hat", "ci_lo", "ci_hi", "converged"]
METRICS_HEADER = [
    "scenario_id", "setting", "n", "mhr_true", "censor_dist", "censor_rate", "method",
    "bias", "sd", "rmse", "rel_bias", "coverage", "n_failed",
]
CURVES_HEADER = ["curve", "fraction", "hr_estimate"]
CURVE_NAMES = ("marginal_unweighted", "conditional_unweighted", "marginal_psweighted")

EXIT_CONFIG = 2
EXIT_OUTPUT = 3


class ConfigError(ValueError):
    pass


class OutputError(OSError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _list(value: str, conv=str) -> list:
    items = [v.strip() for v in value.split(",") if v.strip()]
    try:
        return [conv(v) for v in items]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class RunConfig:
    settings: list = field(default_factory=lambda: ["counterfactual", "observational"])
    sizes: list = field(default_factory=lambda: list(DEFAULT_SIZES))
    mhrs: list = field(default_factory=lambda: list(DEFAULT_MHRS))
    censor_rates: list = field(default_factory=lambda: list(DEFAULT_RATES))
    censor_dists: list = field(default_factory=lambda: list(DEFAULT_DISTS))
    replicates: int = 1000
    master_seed: int = 2024
    output_dir: Path = Path("mhrsim_out")
    theta_method: str = "kde_quadrature"
    ties: str = "efron"
    threads: int = 1
    calib_n: int = 1_000_000
    calib_tol: float = 0.005

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "RunConfig":
        cfg = cls()
        conv = {
            "settings": lambda v: _list(v),
            "sizes": lambda v: _list(v, int),
            "mhrs": lambda v: _list(v, float),
            "censor_rates": lambda v: _list(v, float),
            "censor_dists": lambda v: _list(v),
            "replicates": int,
            "master_seed": int,
            "output_dir": Path,
            "theta_method": str,
            "ties": str,
            "threads": int,
            "calib_n": int,
            "calib_tol": float,
        }
        for key, value in kv.items():
            if key not in conv:
                raise ConfigError(f"unknown key {key!r}")
            try:
                setattr(cfg, key, conv[key](value))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        for name in ("settings", "sizes", "mhrs", "censor_rates", "censor_dists"):
            if not getattr(cfg, name):
                raise ConfigError(f"{name} must be nonempty")
        return cfg

    def scenarios(self):
        try:
            return grid_expand(
                settings=self.settings, sizes=self.sizes, mhrs=self.mhrs,
                censor_dists=self.censor_dists, censor_rates=self.censor_rates,
                replicates=self.replicates, master_seed=self.master_seed,
                theta_method=self.theta_method, ties=self.ties,
                calib_n=self.calib_n, calib_tol=self.calib_tol,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class CurveConfig:
    setting: str = "counterfactual"
    n: int = 50_000
    mhr: float = 2.0
    censor_dist: str = "none"
    censor_rate: float = 0.0
    grid: list = field(default_factory=lambda: [round(0.05 * k, 2) for k in range(1, 21)])
    curves: list = field(default_factory=lambda: list(CURVE_NAMES))
    x_axis: str = ""
    seed: int = 2024
    output_dir: Path = Path("mhrsim_out")
    theta_method: str = "kde_quadrature"
    ties: str = "efron"
    calib_n: int = 1_000_000
    calib_tol: float = 0.005

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "CurveConfig":
        cfg = cls()
        conv = {
            "setting": str, "n": int, "mhr": float, "censor_dist": str, "censor_rate": float,
            "grid": lambda v: _list(v, float), "curves": lambda v: _list(v),
            "x_axis": str, "seed": int, "output_dir": Path, "theta_method": str,
            "ties": str, "calib_n": int, "calib_tol": float,
        }
        for key, value in kv.items():
            if key not in conv:
                raise ConfigError(f"unknown key {key!r}")
            try:
                setattr(cfg, key, conv[key](value))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        if not cfg.grid:
            raise ConfigError("grid must be nonempty")
        bad = set(cfg.curves) - set(CURVE_NAMES)
        if bad or not cfg.curves:
            raise ConfigError(f"unknown curves {sorted(bad)}")
        if cfg.setting not in ("counterfactual", "observational"):
            raise ConfigError(f"unknown setting {cfg.setting!r}")
        if (cfg.censor_dist == "none") != (cfg.censor_rate == 0):
            raise ConfigError("censor_dist='none' if and only if censor_rate=0")
        if not cfg.x_axis:
            cfg.x_axis = "event_fraction" if cfg.censor_dist == "none" else "resolved_fraction"
        return cfg


def load_config(path, kind=RunConfig):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return kind.from_mapping(parse_config_text(text))


def _fmt(x) -> str:
    if isinstance(x, float):
        # shortest round-trip repr: exact on re-read, stable across runs
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def _check_writable(out_dir: Path):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out_dir}: {exc}") from None
    if not os.access(out_dir, os.W_OK):
        raise OutputError(f"{out_dir} is not writable")


def cmd_run(config_path, replicates: int | None = None, threads: int | None = None):
    cfg = load_config(config_path, RunConfig)
    if replicates is not None:
        cfg.replicates = replicates
    env_threads = os.environ.get("MHRSIM_THREADS")
    if threads is None and env_threads:
        threads = int(env_threads)
    if threads is not None:
        cfg.threads = threads
    scenarios = cfg.scenarios()
    _check_writable(cfg.output_dir)

    est_rows, met_rows = [], []
    for sc in scenarios:
        log.info("scenario %d/%d: %s n=%d MHR=%g %s %.2f", sc.scenario_id + 1, len(scenarios),
                 sc.setting, sc.n, sc.target_mhr, sc.censor_dist, sc.censor_rate)
        res = run_scenario(sc, workers=cfg.threads, params=scenario_params(sc))
        for r in res.records:
            est_rows.append([sc.scenario_id, r.replicate, r.method, r.mhr_hat, r.ci_lo, r.ci_hi, int(r.converged)])
        for m in METHODS:
            mm = res.per_method.get(m)
            vals = [math.nan] * 5 if mm is None else [mm.bias, mm.sd, mm.rmse, mm.rel_bias, mm.coverage]
            met_rows.append([sc.scenario_id, sc.setting, sc.n, sc.target_mhr, sc.censor_dist,
                             sc.censor_rate, m, *vals, res.n_failed_replicates])
    _write_csv(cfg.output_dir / "estimates.csv", ESTIMATES_HEADER, est_rows)
    _write_csv(cfg.output_dir / "metrics.csv", METRICS_HEADER, met_rows)
    return cfg.output_dir


def curve_rows(cfg: CurveConfig):
    """(curve, fraction, hr) rows for one simulated cohort; unreachable points are omitted."""
    params = calibrated_params(cfg.mhr, calib_n=cfg.calib_n, tol=cfg.calib_tol)
    rng = RngStream(cfg.seed, 0, 0)
    cohort = make_cohort(cfg.setting, cfg.n, params, rng)
    tau = tau_of(cohort.LP, params.lam, params.eta)
    plan = make_plan(tau, cfg.censor_rate, cfg.censor_dist, params.eta, cfg.theta_method)
    cohort = apply_censoring(cohort, draw_censoring(plan, cohort.n, rng))
    rows = []
    for name in cfg.curves:
        weights, mode = None, "marginal"
        if name == "conditional_unweighted":
            mode = "conditional"
        elif name == "marginal_psweighted" and cohort.setting == "observational":
            weights = iptw_weights(fit_ps(cohort), cohort.Z)
        pts = hr_curve(cohort, weights, cfg.grid, mode=mode, x_axis=cfg.x_axis, ties=cfg.ties)
        for p in pts:
            if p.reachable:
                rows.append([name, p.fraction, p.hr])
            else:
                log.warning("%s: fraction %g not reachable, omitted", name, p.fraction)
    return rows, params


def cmd_curve(config_path):
    cfg = load_config(config_path, CurveConfig)
    _check_writable(cfg.output_dir)
    rows, _ = curve_rows(cfg)
    path = cfg.output_dir / "curves.csv"
    _write_csv(path, CURVES_HEADER, rows)
    return path


# ---------------------------------------------------------------- tables

TABLE_COLS = ("bias", "sd", "rmse", "rel_bias", "coverage")
TABLE_HEADER = ("Method", "Censoring", "Bias", "SD", "RMSE", "Rel.Bias", "Coverage")


def _round2(x: float) -> str:
    # f-format keeps the sign of small negatives ("-0.00"), as published tables do
    return "nan" if math.isnan(x) else f"{x:.2f}"


def read_metrics(path) -> list[dict]:
    if not Path(path).is_file():
        raise ConfigError(f"metrics file {path} not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(METRICS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ConfigError(f"metrics file missing columns: {sorted(missing)}")
        return list(reader)


def format_tables(rows: list[dict], filters: dict[str, str] | None = None) -> str:
    """Text blocks: one per (setting, n, MHR, distribution), methods within censoring rate."""
    filters = filters or {}
    for k in filters:
        if k not in METRICS_HEADER:
            raise ConfigError(f"cannot filter on unknown column {k!r}")

    def keep(r):
        for k, v in filters.items():
            try:
                if float(r[k]) != float(v):
                    return False
            except ValueError:
                if r[k] != v:
                    return False
        return True

    rows = [r for r in rows if keep(r)]
    blocks: dict = {}
    for r in rows:
        key = (r["setting"], int(r["n"]), float(r["mhr_true"]), r["censor_dist"])
        blocks.setdefault(key, []).append(r)
    method_rank = {m: i for i, m in enumerate(METHODS)}
    out = io.StringIO()
    for (setting, n, mhr, dist), rs in blocks.items():
        out.write(f"== setting={setting} n={n} mhr={mhr:g} censor_dist={dist}\n")
        out.write("  ".join(f"{h:>10}" for h in TABLE_HEADER) + "\n")
        rs = sorted(rs, key=lambda r: (float(r["censor_rate"]), method_rank.get(r["method"], 99)))
        for r in rs:
            cells = [r["method"], f"{float(r['censor_rate']):g}"]
            cells += [_round2(float(r[c])) for c in TABLE_COLS]
            out.write("  ".join(f"{c:>10}" for c in cells) + "\n")
        out.write("\n")
    return out.getvalue()


def parse_tables(text: str) -> list[dict]:
    """Inverse of ``format_tables`` (values come back rounded to two decimals)."""
    out = []
    block = None
    for line in text.splitlines():
        if line.startswith("== "):
            block = dict(kv.split("=", 1) for kv in line[3:].split())
            continue
        parts = line.split()
        if not parts or parts[0] == "Method" or block is None:
            continue
        rec = dict(block)
        rec["method"], rec["censor_rate"] = parts[0], float(parts[1])
        rec.update({c: float(v) for c, v in zip(TABLE_COLS, parts[2:])})
        out.append(rec)
    return out


def cmd_tables(metrics_csv, filters: dict[str, str] | None = None) -> str:
    return format_tables(read_metrics(metrics_csv), filters)


def _parse_filters(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"filter must be k=v, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhrsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario grid, write estimates.csv and metrics.csv")
    r.add_argument("config")
    r.add_argument("--replicates", type=int, default=None, help="override the config's replicate count")
    r.add_argument("--threads", type=int, default=None, help="worker processes (env MHRSIM_THREADS)")
    c = sub.add_parser("curve", help="rolling hazard-ratio curves for one cohort, write curves.csv")
    c.add_argument("config")
    t = sub.add_parser("tables", help="print metrics.csv as two-decimal text tables")
    t.add_argument("metrics_csv")
    t.add_argument("--filter", action="append", metavar="K=V", default=[])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            out = cmd_run(args.config, args.replicates, args.threads)
            print(f"wrote {out / 'estimates.csv'} and {out / 'metrics.csv'}")
        elif args.command == "curve":
            print(f"wrote {cmd_curve(args.config)}")
        else:
            sys.stdout.write(cmd_tables(args.metrics_csv, _parse_filters(args.filter)))
    except ConfigError as exc:
        print(f"mhrsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"mhrsim: output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
