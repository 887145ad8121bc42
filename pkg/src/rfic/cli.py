"""Command-line front end (``rfic``).

Each command reads its parameters from built-in defaults, then an
optional JSON file given with ``--config``, then the flags. Later
sources win. The command runs the matching library routine and writes
one report.

JSON reports have the layout::

    {"version": ..., "command": ..., "seed": ..., "config": {...},
     "config_digest": ..., "result": {...}, "runtime": {...}}

Only ``runtime`` (wall-clock time, worker count) may change between two
runs of the same configuration. CSV outputs start with ``#``-prefixed
lines carrying the same version, seed and digest, followed by a plain
header row.

Exit status: 0 on success, 1 on invalid input, 2 when a sampling window
had to grow beyond its configured maximum.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from typing import Any, Callable

from . import __version__
from .extrema import WindowExhausted

COMMANDS = ("extrema", "simulate", "estimate-d", "estimate-dhat", "ergodic", "free-energy",
            "analytic", "distributions", "discrete-scaling", "overlap", "report")

# settings that never influence results
_RUNTIME_KEYS = {"workers", "out", "format", "config", "inputs"}

DEFAULTS: dict[str, dict[str, Any]] = {
    "extrema": {"gamma": 1.0, "ell": 50.0, "dt": 1e-3, "seed": 0},
    "simulate": {"gamma": 2.0, "alpha": 0.0, "ell": 100.0, "dt": None, "seed": 0},
    "estimate-d": {"gamma": 5.0, "replicas": 10_000, "dt": None, "window_factor": 2.0, "seed": 0},
    "estimate-dhat": {"gamma": 10.0, "replicas": 100_000, "dt": None, "seed": 0},
    "ergodic": {"gamma": 5.0, "ell": 25_000.0, "dt": None, "seed": 0},
    "free-energy": {"gamma": 2.0, "alpha": 0.0, "ell": 10_000.0, "dt": None, "seed": 0},
    "analytic": {"gamma_grid": [1.0, 2.0, 5.0, 10.0, 20.0], "alpha": 0.0, "seed": 0},
    "distributions": {"gamma": 2.0, "replicas": 10_000, "seed": 0},
    "discrete-scaling": {"gamma": 1.0, "alpha": 0.0, "ell": 1.0, "deltas": [1e-2, 1e-3, 1e-4],
                         "replicas": 1000, "seed": 0},
    "overlap": {"N": 50, "J": 2.0, "h": 0.0, "delta": 0.3, "replicas": 10_000, "seed": 0},
    "report": {},
}

_POSITIVE = ("gamma", "ell", "dt", "window_factor", "replicas", "N")
_INT_KEYS = {"seed", "replicas", "N", "workers"}
_LIST_KEYS = {"gamma_grid", "deltas", "inputs"}
_STR_KEYS = {"out", "format"}


def _coerce(key: str, value):
    """Normalize a config-file value to the type its flag would produce."""
    try:
        if value is None or key in _STR_KEYS:
            return value
        if isinstance(value, bool):
            raise TypeError
        if key in _LIST_KEYS:
            if isinstance(value, str):
                return _float_list(value)
            return [v if key == "inputs" else float(v) for v in value]
        if key in _INT_KEYS:
            if float(value) != int(value):
                raise TypeError
            return int(value)
        return float(value)
    except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
        raise ValidationError(f"config value for {key!r} has the wrong type: {value!r}") from exc


class ValidationError(ValueError):
    """Bad flags, config file or output location."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rfic", description="Continuum random field Ising chain toolkit.")
    p.add_argument("--version", action="version", version=f"rfic {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        s = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        s.add_argument("--config", help="JSON file with parameters (flags take precedence)")
        s.add_argument("--out", help="output file (default: stdout)")
        s.add_argument("--format", choices=("json", "csv"), help="output format")
        s.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
        if name == "report":
            s.add_argument("inputs", nargs="+", help="JSON reports to summarize")
            continue
        s.add_argument("--seed", type=int)
        s.add_argument("--gamma", type=float)
        s.add_argument("--alpha", type=float)
        s.add_argument("--ell", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--replicas", type=int)
        s.add_argument("--window-factor", dest="window_factor", type=float)
        s.add_argument("--gamma-grid", dest="gamma_grid", type=_float_list)
        s.add_argument("--deltas", type=_float_list)
        s.add_argument("--N", dest="N", type=int)
        s.add_argument("--J", dest="J", type=float)
        s.add_argument("--h", dest="h", type=float)
        s.add_argument("--delta", type=float)
    return p


def effective_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the ``--config`` file and flags, then validate."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    if "config" in flags:
        try:
            with open(flags["config"]) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config file: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        data.pop("command", None)
        unknown = set(data) - set(cfg) - _RUNTIME_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg.update({k: _coerce(k, v) for k, v in data.items()})
    for k, v in flags.items():
        if k == "config":
            continue
        if k not in cfg and k not in _RUNTIME_KEYS:
            raise ValidationError(f"--{k.replace('_', '-')} does not apply to {cmd}")
        cfg[k] = v
    for k in _POSITIVE:
        v = cfg.get(k)
        if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValidationError(f"{k} must be a positive number")
    if "replicas" in cfg and cfg["replicas"] < (100 if cmd == "estimate-d" else 2):
        raise ValidationError("too few replicas")
    if cfg.get("workers") is not None and cfg["workers"] < 1:
        raise ValidationError("workers must be at least 1")
    return cfg


def _science(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in _RUNTIME_KEYS}


# ---------------------------------------------------------------------------
# commands: each returns (result payload, optional CSV table)

Table = tuple[list[str], list[list]]


def _cmd_extrema(cfg, workers) -> tuple[dict, Table]:
    from .extrema import bilateral_extrema, fisher_trajectory
    from .path import sample_bilateral
    path = sample_bilateral(cfg["seed"], -cfg["ell"], cfg["ell"], cfg["dt"])
    seq, label = bilateral_extrema(path, cfg["gamma"])
    fisher_trajectory(seq, label)
    rows = [[e.index, repr(e.time), repr(e.value), e.kind_name, str(e.provisional).lower()]
            for e in seq.events]
    result = {"events": len(seq), "origin_label": int(label), "status": seq.status,
              "mean_spacing": float((seq.time[-1] - seq.time[0]) / max(1, len(seq) - 1))}
    return result, (["index", "time", "value", "kind", "provisional"], rows)


def _cmd_simulate(cfg, workers) -> tuple[dict, Table]:
    from .path import sample_bilateral
    from .sde import default_dt, integrate_l, integrate_r, magnetization
    dt = cfg["dt"] or default_dt(cfg["gamma"])
    path = sample_bilateral(cfg["seed"], 0.0, cfg["ell"], dt, alpha=cfg["alpha"])
    l = integrate_l(path, cfg["gamma"])
    r = integrate_r(path, cfg["gamma"])
    t, m, p = magnetization(l, r)
    rows = [[repr(float(a)) for a in row] for row in zip(t, l.values, r.values, m, p)]
    result = {"points": int(t.size), "dt": dt, "mean_p_up": float(p.mean())}
    return result, (["t", "l", "r", "m", "p_up"], rows)


def _cmd_estimate_d(cfg, workers) -> tuple[dict, Table]:
    from .mc import estimate_D, estimate_D_sign_m, origin_samples
    s = origin_samples(cfg["gamma"], cfg["replicas"], cfg["seed"], cfg["dt"],
                       cfg["window_factor"], workers=workers)
    d = estimate_D(cfg["gamma"], samples=s).payload()
    dm = estimate_D_sign_m(cfg["gamma"], samples=s).payload()
    rows = [[r["name"], repr(r["estimate"]), repr(r["stderr"]), r["n"]] for r in (d, dm)]
    return {"D": d, "D_sign_m": dm}, (["name", "estimate", "stderr", "n"], rows)


def _estimate_table(rep: dict) -> Table:
    return (["name", "estimate", "stderr", "n"], [[rep["name"], repr(rep["estimate"]), repr(rep["stderr"]), rep["n"]]])


def _cmd_estimate_dhat(cfg, workers):
    from .mc import estimate_D_hat
    rep = estimate_D_hat(cfg["gamma"], cfg["replicas"], cfg["dt"], cfg["seed"], workers=workers).payload()
    return rep, _estimate_table(rep)


def _cmd_ergodic(cfg, workers):
    from .mc import ergodic_discrepancy
    rep = ergodic_discrepancy(cfg["gamma"], cfg["ell"], cfg["dt"], cfg["seed"]).payload()
    return rep, _estimate_table(rep)


def _cmd_free_energy(cfg, workers):
    from .analytic import free_energy
    from .mc import estimate_free_energy
    if cfg["alpha"] != 0:
        raise ValidationError("the free-energy estimator is implemented for alpha = 0 only")
    rep = estimate_free_energy(cfg["gamma"], cfg["ell"], cfg["dt"], cfg["seed"]).payload()
    rep["extra"]["exact"] = free_energy(cfg["gamma"], cfg["alpha"])
    return rep, _estimate_table(rep)


def _cmd_analytic(cfg, workers) -> tuple[dict, Table]:
    from .analytic import analytic_row, free_energy
    rows = []
    for g in cfg["gamma_grid"]:
        if not g > 0:
            raise ValidationError("every gamma in the grid must be positive")
        row = analytic_row(g)
        row["f_alpha"] = free_energy(g, cfg["alpha"])
        rows.append(row)
    cols = ["gamma", "f0", "wall_density", "disorder_energy", "d_hat", "d_m_exact", "d_m_expansion"]
    return {"rows": rows}, (cols, [[repr(float(r[c])) for c in cols] for r in rows])


def _cmd_distributions(cfg, workers) -> tuple[dict, Table]:
    from .mc import test_distributions
    reps = [r.payload() for r in test_distributions(cfg["gamma"], cfg["replicas"], cfg["seed"],
                                                   workers=workers)]
    rows = [[r["target"], repr(r["statistic"]), r["n"], repr(r["threshold"]), str(r["pass"]).lower()]
            for r in reps]
    return {"tests": reps}, (["target", "statistic", "n", "threshold", "pass"], rows)


def _cmd_discrete_scaling(cfg, workers) -> tuple[dict, Table]:
    from .discrete import scaling_limit_check
    rep = scaling_limit_check(cfg["gamma"], cfg["alpha"], cfg["ell"], cfg["deltas"],
                              cfg["replicas"], cfg["seed"], workers=workers)
    cols = ["delta", "mean_log_ratio", "var_log_ratio", "continuum_mean", "continuum_var", "gap"]
    rows = [[repr(float(getattr(r, c))) for c in cols] for r in rep.rows]
    return rep.payload(), (cols, rows)


def _cmd_overlap(cfg, workers) -> tuple[dict, Table]:
    from .discrete import overlap_identity_check
    rep = overlap_identity_check(cfg["N"], cfg["J"], cfg["h"], cfg["delta"], cfg["replicas"],
                                 cfg["seed"], workers=workers)
    d = rep.payload()
    d["z"] = rep.z
    cols = ["lhs", "lhs_stderr", "rhs", "rhs_stderr", "diff_stderr"]
    return d, (cols, [[repr(d[c]) for c in cols]])


def _cmd_report(cfg, workers) -> tuple[dict, Table]:
    entries = []
    for name in cfg["inputs"]:
        try:
            with open(name) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read report {name}: {exc}") from exc
        if not isinstance(doc, dict) or "command" not in doc or "result" not in doc:
            raise ValidationError(f"{name} is not an rfic report")
        res = doc["result"]
        entries.append({"file": os.path.basename(name), "command": doc["command"],
                        "seed": doc.get("seed"), "config_digest": doc.get("config_digest"),
                        "estimate": res.get("estimate"), "stderr": res.get("stderr"),
                        "n": res.get("n")})
    cols = ["file", "command", "seed", "config_digest", "estimate", "stderr", "n"]
    return {"reports": entries}, (cols, [[e[c] for c in cols] for e in entries])


HANDLERS: dict[str, Callable] = {
    "extrema": _cmd_extrema, "simulate": _cmd_simulate, "estimate-d": _cmd_estimate_d,
    "estimate-dhat": _cmd_estimate_dhat, "ergodic": _cmd_ergodic, "free-energy": _cmd_free_energy,
    "analytic": _cmd_analytic, "distributions": _cmd_distributions,
    "discrete-scaling": _cmd_discrete_scaling, "overlap": _cmd_overlap, "report": _cmd_report,
}


def _json_default(x):
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def render(command: str, cfg: dict, result: dict, table: Table | None, fmt: str,
           elapsed: float, workers: int) -> str:
    from .mc import config_digest
    science = _science(cfg)
    digest = config_digest(dict(science, command=command))
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# rfic {__version__}\n# command: {command}\n# seed: {science.get('seed')}\n")
        buf.write(f"# config_digest: {digest}\n# config: {json.dumps(science, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols, rows = table
        w.writerow(cols)
        w.writerows(rows)
        return buf.getvalue()
    doc = {"version": __version__, "command": command, "seed": science.get("seed"),
           "config": science, "config_digest": digest, "result": result,
           "runtime": {"elapsed": elapsed, "workers": workers}}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def run(argv: list[str] | None = None, stdout=None) -> int:
    """Parse ``argv``, run the command and write its output; return the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    try:
        args = build_parser().parse_args(argv)
        cfg = effective_config(args)
        workers = int(cfg.get("workers") or os.cpu_count() or 1)
        out = cfg.get("out")
        fmt = cfg.get("format") or ("csv" if out and out.endswith(".csv") else "json")
        if out:
            d = os.path.dirname(os.path.abspath(out))
            if not os.path.isdir(d) or not os.access(d, os.W_OK):
                raise ValidationError(f"output location {out!r} is not writable")
        t0 = time.perf_counter()
        result, table = HANDLERS[args.command](cfg, workers)
        text = render(args.command, cfg, result, table, fmt, time.perf_counter() - t0, workers)
        if out:
            with open(out, "w") as fh:
                fh.write(text)
        else:
            stdout.write(text)
        return 0
    except WindowExhausted as exc:
        print(f"rfic: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError) as exc:
        print(f"rfic: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
