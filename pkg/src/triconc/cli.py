"""Command-line entry point and file outputs.

Subcommands and the files they write into ``--out`` (default ``.``):

``simulate``
    results.csv (tail estimates), ensemble.csv (per-trial X), manifest.json
``verify-lemma``
    verdicts.csv (per trial and round), results.csv (per-round pass rates),
    summary.json, manifest.json
``oracle``
    oracle.json, manifest.json
``bounds``
    thresholds.csv, results.csv (inequality records), manifest.json
``region``
    region.json, manifest.json

Configuration precedence: built-in defaults < ``--config`` file <
``TRICONC_<KEY>`` environment variables < command-line flags.
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import admissible_region, case_inequality_check, fit_c, lemma_thresholds
from .errors import ConfigError, InvalidParameter
from .graph_core import make_schedule
from .montecarlo import (ExperimentConfig, empirical_tail, enumerate_exact, run_ensemble,
                         wilson_interval)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ENV_PREFIX = "TRICONC_"

_INT_KEYS = {"n", "trials", "master_seed", "threads", "exact_stats_limit", "rounds"}
_FLOAT_KEYS = {"p", "eps_max", "lemma_lambda"}
_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}

TAIL_COLUMNS = ["mode", "lambda", "center", "scale", "fraction", "ci_lo", "ci_hi", "trials",
                "c_hat", "subgaussian_fit"]
VERDICT_COLUMNS = ["trial", "round", "edges", "X", "maxY", "sumZ", "sumZ2", "x_ok", "y_ok", "z2_ok",
                   "x_margin", "y_margin", "z2_margin", "y_approximate"]
PASS_COLUMNS = ["round", "X_lo", "X_hi", "Y_max", "Z2_max", "x_pass", "y_pass", "z2_pass", "all_pass"]
THRESHOLD_COLUMNS = ["lambda", "round", "X_center", "X_lo", "X_hi", "Y_max", "Z2_max", "t1", "t2"]
INEQUALITY_COLUMNS = ["lambda", "round", "name", "condition", "applicable", "lhs", "rhs", "satisfied",
                      "margin"]


# config ------------------------------------------------------------------

def _coerce(key, value):
    """Type-check one configuration value; strings come from the environment."""
    from_env = isinstance(value, str)
    try:
        if key in _INT_KEYS:
            if isinstance(value, bool):
                raise TypeError
            if from_env:
                value = int(value)
            if not isinstance(value, int):
                raise TypeError
            return value
        if key in _FLOAT_KEYS:
            if isinstance(value, bool):
                raise TypeError
            if from_env:
                value = float(value)
            if not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if key == "lambda_grid":
            if from_env:
                value = [float(x) for x in value.split(",") if x.strip()]
            if not isinstance(value, (list, tuple)) or any(
                    isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
                raise TypeError
            return tuple(float(x) for x in value)
        if key == "mode":
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(key, f"wrong type for value {value!r}") from None
    raise ConfigError(key, "unknown key")


def _validate_mapping(raw, source):
    out = {}
    for key, value in raw.items():
        if key not in _KEYS:
            raise ConfigError(key, f"unknown key in {source}")
        out[key] = _coerce(key, value)
    return out


def _build_config(values):
    for key in ("n", "p"):
        if key not in values:
            raise ConfigError(key, "required")
    p = values["p"]
    if not 0.0 < p < 1.0:
        raise ConfigError("p", f"must lie strictly inside (0, 1), got {p}")
    return ExperimentConfig(**values)


def read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not a valid key-value file: {exc}") from None
    return _validate_mapping(raw, str(path))


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    raw = {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items()
           if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].lower() in _KEYS}
    return _validate_mapping(raw, "environment")


def load_config(path, overrides=None, environ=None):
    """Read a flat TOML file into an :class:`ExperimentConfig`.

    Keys are exactly the config field names; unknown keys, wrong types and
    out-of-range values raise :class:`ConfigError` naming the field.
    """
    values = read_config_file(path) if path is not None else {}
    values.update(env_overrides(environ))
    values.update(overrides or {})
    return _build_config(values)


# formatting --------------------------------------------------------------

def fmt(value):
    """Round-trip text for CSV cells."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def csv_bytes(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode()


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode()


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    outputs: dict = dataclasses.field(default_factory=dict)
    version: str = __version__
    timestamp: str = dataclasses.field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def add(self, path, payload):
        path.write_bytes(payload)
        self.outputs[path.name] = {"path": str(path), "bytes": len(payload),
                                   "sha256": hashlib.sha256(payload).hexdigest()}

    def write(self, out_dir):
        body = {"tool": "triconc", "version": self.version, "command": self.command,
                "timestamp": self.timestamp, "config": self.config, "outputs": self.outputs}
        (out_dir / "manifest.json").write_bytes(json_bytes(body))


# subcommands -------------------------------------------------------------

def tail_rows(ens, mode, lambdas):
    ests = [empirical_tail(ens, lam, mode) for lam in lambdas]
    pts = [(e.lam, e.fraction) for e in ests if e.lam > 0 and e.fraction > 0]
    c_hat = fit_c(pts).c if pts else float("nan")
    rows = []
    for e in ests:
        fit = math.exp(-c_hat * e.lam ** 2) if not math.isnan(c_hat) else float("nan")
        rows.append([mode, e.lam, e.center, e.scale, e.fraction, e.ci_lo, e.ci_hi, e.trials, c_hat, fit])
    return rows, c_hat


def cmd_simulate(cfg, out, manifest):
    ens = run_ensemble(cfg)
    modes = ["direct", "iterated"] if cfg.mode == "both" else [cfg.mode]
    rows = []
    for mode in modes:
        rows.extend(tail_rows(ens, mode, cfg.lambda_grid)[0])
    manifest.add(out / "results.csv", csv_bytes(TAIL_COLUMNS, rows))
    xd, xi = ens.x_direct, ens.x_iterated
    trial_rows = ([t, None if xd is None else xd[t], None if xi is None else xi[t]]
                  for t in range(cfg.trials))
    manifest.add(out / "ensemble.csv", csv_bytes(["trial", "x_direct", "x_iterated"], trial_rows))
    for r in rows:
        print(f"{r[0]:>8}  lambda={r[1]:<5g} tail={r[4]:.5f}  [{r[5]:.5f}, {r[6]:.5f}]")


def cmd_verify_lemma(cfg, out, manifest):
    if cfg.mode != "iterated":
        cfg = dataclasses.replace(cfg, mode="iterated")
    ens = run_ensemble(cfg)
    rounds = ens.schedule.rounds
    table, flags, margins = ens.round_table, ens.flags, ens.margins

    def verdict_rows():
        for t in range(cfg.trials):
            for i in range(rounds + 1):
                row = table[t, i]
                yield [t, i, row[0], row[1], row[2], row[3], int(ens.sum_z2[t, i]),
                       flags[t, i, 0], flags[t, i, 1], flags[t, i, 2],
                       margins[t, i, 0], margins[t, i, 1], margins[t, i, 2], not bool(row[6])]

    manifest.add(out / "verdicts.csv", csv_bytes(VERDICT_COLUMNS, verdict_rows()))
    lam = ens.lemma_lambda
    pass_rows = []
    for i in range(rounds + 1):
        thr = lemma_thresholds(cfg.n, ens.schedule.eps, i, lam, ens.schedule.target_p)
        f = flags[:, i, :]
        pass_rows.append([i, thr.X_lo, thr.X_hi, thr.Y_max, thr.Z2_max, float(f[:, 0].mean()),
                          float(f[:, 1].mean()), float(f[:, 2].mean()), float(f.all(axis=1).mean())])
    manifest.add(out / "results.csv", csv_bytes(PASS_COLUMNS, pass_rows))

    ok = ens.all_rounds_ok()
    lo, hi = wilson_interval(int(ok.sum()), ok.size)
    _, c_hat = tail_rows(ens, "iterated", cfg.lambda_grid)
    summary = {
        "lambda": lam, "eps": ens.schedule.eps, "rounds": rounds, "relaxed_eps": ens.schedule.relaxed,
        "trials": cfg.trials, "all_rounds_ok_fraction": float(ok.mean()), "ci_lo": lo, "ci_hi": hi,
        "c_hat": c_hat,
        "reference_1_minus_exp": (1.0 - math.exp(-0.5 * c_hat * lam ** 2)) if c_hat == c_hat else None,
        "approximate_maxY": bool((table[:, :, 6] == 0).any()),
    }
    manifest.add(out / "summary.json", json_bytes(summary))
    print(f"all rounds ok: {summary['all_rounds_ok_fraction']:.4f} [{lo:.4f}, {hi:.4f}] "
          f"over {cfg.trials} traces, {rounds} rounds, lambda={lam:g}")


def cmd_oracle(n, p, out, manifest):
    dist = enumerate_exact(n, p)
    body = {"n": n, "p": p, "support": [{"x": x, "probability": q} for x, q in dist.support],
            "mean": dist.mean(), "variance": dist.variance()}
    manifest.add(out / "oracle.json", json_bytes(body))
    print(json.dumps(body["support"]))


def cmd_bounds(cfg, out, manifest):
    sched = cfg.schedule()
    lambdas = [x for x in cfg.lambda_grid if x > 0] or [1.0]
    thr_rows, ineq_rows = [], []
    for lam in lambdas:
        for i in range(sched.rounds + 1):
            t = lemma_thresholds(cfg.n, sched.eps, i, lam, sched.target_p)
            thr_rows.append([lam, i, t.X_center, t.X_lo, t.X_hi, t.Y_max, t.Z2_max, t.t1, t.t2])
            for rec in case_inequality_check(cfg.n, sched.eps, i, lam, sched.target_p):
                ineq_rows.append([lam, i, rec.name, rec.condition, rec.applicable, rec.lhs, rec.rhs,
                                  rec.satisfied, rec.margin])
    manifest.add(out / "thresholds.csv", csv_bytes(THRESHOLD_COLUMNS, thr_rows))
    manifest.add(out / "results.csv", csv_bytes(INEQUALITY_COLUMNS, ineq_rows))
    bad = [r for r in ineq_rows if r[4] and not r[7]]
    print(f"eps={sched.eps:g} rounds={sched.rounds}: {len(ineq_rows)} records, "
          f"{sum(1 for r in ineq_rows if r[4])} applicable, {len(bad)} violated")


def cmd_region(n, p, lambdas, out, manifest):
    reports = [admissible_region(n, p, lam).as_dict() for lam in lambdas]
    body = reports[0] if len(reports) == 1 else reports
    manifest.add(out / "region.json", json_bytes(body))
    for rep in reports:
        print(f"lambda={rep['lambda']:g} overall={str(rep['overall']).lower()}")


# argument handling -------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="triconc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify-lemma", "oracle", "bounds", "region"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--n", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--lambda", dest="lambdas", type=float, action="append")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--mode", choices=["direct", "iterated", "both"])
        sp.add_argument("--eps-max", type=float)
        sp.add_argument("--rounds", type=int)
        sp.add_argument("--exact-stats-limit", type=int)
        sp.add_argument("--out", type=Path, default=Path("."))
    return parser


def _flag_overrides(args):
    pairs = {"n": args.n, "p": args.p, "trials": args.trials, "master_seed": args.seed,
             "threads": args.threads, "mode": args.mode, "eps_max": args.eps_max,
             "rounds": args.rounds, "exact_stats_limit": args.exact_stats_limit,
             "lambda_grid": tuple(args.lambdas) if args.lambdas else None}
    return {k: v for k, v in pairs.items() if v is not None}


def run_command(args, environ=None):
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.command in ("oracle", "region"):
        values = read_config_file(args.config) if args.config else {}
        values.update(env_overrides(environ))
        values.update(_flag_overrides(args))
        for key in ("n", "p"):
            if key not in values:
                raise ConfigError(key, "required")
        n, p = values["n"], values["p"]
        manifest = RunManifest(command=args.command, config={"n": n, "p": p})
        if args.command == "oracle":
            cmd_oracle(n, p, out, manifest)
        else:
            lambdas = list(values.get("lambda_grid") or [1.0])
            manifest.config["lambda_grid"] = lambdas
            cmd_region(n, p, lambdas, out, manifest)
    else:
        cfg = load_config(args.config, _flag_overrides(args), environ)
        manifest = RunManifest(command=args.command, config=dataclasses.asdict(cfg))
        {"simulate": cmd_simulate, "verify-lemma": cmd_verify_lemma, "bounds": cmd_bounds}[
            args.command](cfg, out, manifest)
    manifest.write(out)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except (ConfigError, InvalidParameter, FileNotFoundError, RuntimeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
