"""Command-line front end: ``nncmi {generate,estimate,sweep,te}``.

Settings come from built-in defaults, then an optional ``--config`` file
(one ``key=value`` per line, ``#`` starts a comment), then command-line
flags, each layer overriding the previous one. Output files never contain
timings, so repeating a command with the same seed reproduces them byte for
byte.

Per-repeat seeds: repeat ``i`` of a run with master seed ``s`` uses the
first 32-bit word of ``numpy.random.SeedSequence([s, i])``.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from nncmi.generators import (MarkovTreeParams, XYParams, gaussian_cmi_oracle,
                              sample_markov_tree, site_at_distance, xy_series)
from nncmi.histogram import BinningSpec, choose_bins, histogram_cmi
from nncmi.kl import default_h_range, estimate_cmi
from nncmi.ksg import ksg_cmi
from nncmi.metric import CIRCULAR, TWO_PI, Dataset, get_metric
from nncmi.transfer import EmbeddingSpec, embed

ESTIMATORS = ("kl", "ksg1", "ksg2", "hist")
AXES = ("sigma_z", "n", "k")
LN2 = math.log(2.0)


class CliError(Exception):
    pass


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key: (type, default, help)
SETTINGS = {
    "estimator": (str, "kl", "estimator: kl, ksg1, ksg2 or hist (sweep and te take a comma list)"),
    "h_min": (int, None, "smallest ball size searched by kl"),
    "h_max": (int, None, "largest ball size searched by kl"),
    "k": (int, 4, "neighbour count for ksg1/ksg2"),
    "bins": (int, None, "bins per dimension for hist"),
    "repeats": (int, 50, "independent repeats per setting"),
    "seed": (int, 0, "master seed"),
    "units": (str, "nats", "nats or bits"),
    "out": (str, None, "output CSV path"),
    "metric": (str, "euclidean", "euclidean, circular or discrete"),
    "jobs": (int, 1, "worker processes for repeats"),
    # data generation
    "generator": (str, "markov-tree", "markov-tree or xy"),
    "n": (int, 3500, "samples (markov-tree)"),
    "dims": (int, 1, "dimensions per variable (markov-tree)"),
    "sigma_w": (float, 1.0, "std of the hidden variable"),
    "sigma_x": (float, 1.0, "noise std of x"),
    "sigma_y": (float, 1.0, "noise std of y"),
    "sigma_z": (float, 1.0, "noise std of z"),
    "include_hidden": (_bool, False, "also write the hidden w columns"),
    "L": (int, 8, "lattice side (xy)"),
    "J": (float, 1.0, "coupling (xy)"),
    "T": (float, 1.0, "temperature (xy)"),
    "steps": (int, 6000, "sweeps including burn-in (xy)"),
    "burn_in": (int, 1000, "discarded sweeps (xy)"),
    "causal_site": (str, "0,0", "row,col of the causal site (xy)"),
    "target_accept": (float, 0.5, "target acceptance rate (xy)"),
    "walk_step": (float, 0.2, "causal walk step (xy)"),
    "random_order": (_bool, False, "visit sites in random order (xy)"),
    # estimate
    "input": (str, None, "input CSV"),
    "columns": (str, None, "column groups, e.g. x=0:0,y=1:1,z=2:2 (inclusive)"),
    "per_point": (str, None, "write per-point kl terms to this CSV"),
    # sweep
    "axis": (str, "sigma_z", "sweep axis: sigma_z, n or k"),
    "values": (str, "0.25,0.5,1,2,4", "comma list of axis values"),
    # te
    "ell": (str, "1", "comma list of past lengths"),
    "distances": (str, "1", "comma list of lattice distances from the causal site"),
    "stride": (int, 1, "embedding stride"),
}

COMMANDS = {
    "generate": ["generator", "n", "dims", "sigma_w", "sigma_x", "sigma_y", "sigma_z",
                 "include_hidden", "L", "J", "T", "steps", "burn_in", "causal_site",
                 "target_accept", "walk_step", "random_order", "distances", "seed", "out"],
    "estimate": ["input", "columns", "estimator", "metric", "h_min", "h_max", "k", "bins",
                 "units", "out", "per_point"],
    "sweep": ["axis", "values", "estimator", "repeats", "seed", "n", "dims", "sigma_w",
              "sigma_x", "sigma_y", "sigma_z", "h_min", "h_max", "k", "bins", "units", "out",
              "jobs"],
    "te": ["input", "estimator", "ell", "distances", "stride", "repeats", "seed", "L", "J", "T",
           "steps", "burn_in", "causal_site", "target_accept", "walk_step", "random_order",
           "h_min", "h_max", "k", "bins", "units", "out", "jobs"],
}


# ------------------------------------------------------------------ helpers

def read_config(path: str) -> dict:
    cfg = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise CliError(f"{path}:{lineno}: unknown setting {key!r}")
        cfg[key] = value
    return cfg


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags; every value converted to its type."""
    keys = COMMANDS[command]
    raw = {key: SETTINGS[key][1] for key in keys}
    if args.config:
        for key, value in read_config(args.config).items():
            if key not in keys:
                raise CliError(f"setting {key!r} does not apply to {command}")
            raw[key] = value
    for key in keys:
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    cfg = {}
    for key, value in raw.items():
        kind = SETTINGS[key][0]
        try:
            cfg[key] = None if value is None else kind(value)
        except (TypeError, ValueError):
            raise CliError(f"bad value for {key}: {value!r}") from None
    if "units" in cfg and cfg["units"] not in ("nats", "bits"):
        raise CliError(f"units must be nats or bits, got {cfg['units']!r}")
    return cfg


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: str | None, header, rows) -> None:
    if path is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([fmt(v) for v in r] for r in rows)
        return
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows([fmt(v) for v in r] for r in rows)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e.strerror}") from None


def read_table(path: str):
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None
    if len(rows) < 2:
        raise CliError(f"{path}: need a header and at least one data row")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as e:
        raise CliError(f"{path}: malformed number ({e})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise CliError(f"{path}: rows do not all have {len(header)} fields")
    return header, data


def parse_columns(spec: str, width: int) -> dict[str, np.ndarray]:
    """``"x=0:1,y=2:2,z=3:4"`` to column index arrays, ranges inclusive."""
    if not spec:
        raise CliError("--columns is required, e.g. x=0:0,y=1:1,z=2:2")
    groups, seen = {}, set()
    for part in spec.split(","):
        name, _, rng = part.partition("=")
        name = name.strip()
        if name not in ("x", "y", "z") or name in groups:
            raise CliError(f"bad column group {part!r}")
        lo, _, hi = rng.partition(":")
        try:
            lo = int(lo)
            hi = int(hi) if hi else lo
        except ValueError:
            raise CliError(f"bad column range {rng!r}") from None
        if not 0 <= lo <= hi < width:
            raise CliError(f"column range {rng!r} outside 0..{width - 1}")
        cols = set(range(lo, hi + 1))
        if cols & seen:
            raise CliError("column groups overlap")
        seen |= cols
        groups[name] = np.arange(lo, hi + 1)
    if "x" not in groups or "y" not in groups:
        raise CliError("column groups x and y are required")
    return groups


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise CliError(f"bad number list {text!r}") from None


def int_list(text: str) -> list[int]:
    vals = float_list(text)
    if any(v != int(v) for v in vals):
        raise CliError(f"expected integers in {text!r}")
    return [int(v) for v in vals]


def estimator_list(text: str) -> list[str]:
    names = [s.strip() for s in str(text).split(",") if s.strip()]
    bad = [s for s in names if s not in ESTIMATORS]
    if bad or not names:
        raise CliError(f"estimator must be drawn from {','.join(ESTIMATORS)}, got {text!r}")
    return names


def repeat_seed(master: int, i: int) -> int:
    return int(np.random.SeedSequence([master, i]).generate_state(1)[0])


def convert(value: float, units: str) -> float:
    return value / LN2 if units == "bits" else value


def run_estimator(data: Dataset, name: str, cfg: dict) -> dict:
    """Run one estimator; returns the value in nats plus its details."""
    if name == "kl":
        lo, hi = default_h_range(data.n)
        h_range = (cfg.get("h_min") or lo, cfg.get("h_max") or hi)
        e = estimate_cmi(data, h_range=h_range)
        return {"value": e.value, "h": e.h_star, "raw": e.raw, "bias": e.bias,
                "per_point": e.per_point}
    if name in ("ksg1", "ksg2"):
        k = cfg.get("k") or 4
        return {"value": ksg_cmi(data, k=k, variant=int(name[-1])), "k": k}
    bins = cfg.get("bins") or choose_bins(data.n, sum(b.dim for b in data.blocks)).bins_per_dim
    circular = data.x.metric == CIRCULAR
    spec = BinningSpec.fixed(bins, 0.0, TWO_PI) if circular else BinningSpec(bins)
    return {"value": histogram_cmi(data, spec)}


def _markov(cfg: dict, seed: int, **over) -> MarkovTreeParams:
    keys = ("sigma_w", "sigma_x", "sigma_y", "sigma_z", "dims", "n")
    params = {key: cfg[key] for key in keys}
    params.update(over)
    return MarkovTreeParams(seed=seed, **params)


def _xy(cfg: dict, seed: int) -> XYParams:
    try:
        r, c = (int(v) for v in cfg["causal_site"].split(","))
    except ValueError:
        raise CliError(f"causal_site must be row,col, got {cfg['causal_site']!r}") from None
    return XYParams(L=cfg["L"], J=cfg["J"], T=cfg["T"], target_accept=cfg["target_accept"],
                    steps=cfg["steps"], burn_in=cfg["burn_in"], causal_site=(r, c),
                    walk_step=cfg["walk_step"], seed=seed, random_order=cfg["random_order"])


def _map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# ----------------------------------------------------------------- commands

def cmd_generate(cfg: dict) -> None:
    if cfg["generator"] == "markov-tree":
        params = _markov(cfg, cfg["seed"])
        x, y, z, w = sample_markov_tree(params)
        blocks = [("x", x), ("y", y), ("z", z)] + ([("w", w)] if cfg["include_hidden"] else [])
        header = [f"{name}{j}" for name, b in blocks for j in range(b.shape[1])]
        write_csv(cfg["out"], header, np.hstack([b for _, b in blocks]).tolist())
        print(f"oracle_cmi_nats={fmt(gaussian_cmi_oracle(params))}", file=sys.stderr)
    elif cfg["generator"] == "xy":
        params = _xy(cfg, cfg["seed"])
        dists = int_list(cfg["distances"])
        sites = [params.causal_site] + [site_at_distance(params, d) for d in dists]
        series = xy_series(params, sites)
        write_csv(cfg["out"], ["causal"] + [f"d{d}" for d in dists], series.tolist())
    else:
        raise CliError(f"unknown generator {cfg['generator']!r}")


def cmd_estimate(cfg: dict) -> None:
    if cfg["input"] is None:
        raise CliError("--input is required")
    name = cfg["estimator"]
    if name not in ESTIMATORS:
        raise CliError(f"estimator must be one of {','.join(ESTIMATORS)}, got {name!r}")
    header, table = read_table(cfg["input"])
    groups = parse_columns(cfg["columns"], len(header))
    if name != "hist" and "z" not in groups:
        raise CliError("column group z is required")
    metric = get_metric(cfg["metric"])
    data = Dataset.from_arrays(table[:, groups["x"]], table[:, groups["y"]],
                               table[:, groups["z"]] if "z" in groups else None, metric)
    t0 = time.perf_counter()
    res = run_estimator(data, name, cfg)
    elapsed = time.perf_counter() - t0
    units = cfg["units"]
    rows = [("estimator", name), ("n", data.n), ("units", units),
            ("value", convert(res["value"], units))]
    if name == "kl":
        rows += [("h", res["h"]), ("raw", convert(res["raw"], units)),
                 ("bias", convert(res["bias"], units))]
    if "k" in res:
        rows.append(("k", res["k"]))
    write_csv(cfg["out"], ["key", "value"], rows)
    if cfg["per_point"]:
        if name != "kl":
            raise CliError("per-point terms are only available for kl")
        write_csv(cfg["per_point"], ["i", "term"],
                  [(i, convert(v, units)) for i, v in enumerate(res["per_point"])])
    print(f"runtime_s={elapsed:.3f}", file=sys.stderr)


def _sweep_task(task):
    cfg, axis, value, repeat, estimators = task
    seed = repeat_seed(cfg["seed"], repeat)
    over, run_cfg = {}, dict(cfg)
    if axis == "sigma_z":
        over["sigma_z"] = value
    elif axis == "n":
        over["n"] = int(value)
    else:
        run_cfg["k"] = int(value)
    x, y, z, _ = sample_markov_tree(_markov(cfg, seed, **over))
    data = Dataset.from_arrays(x, y, z)
    if {"ksg1", "ksg2"} & set(estimators) and data.n <= 5000:
        data.precompute_distances()
    return [(value, repeat, name, run_estimator(data, name, run_cfg)["value"])
            for name in estimators]


def summarise(rows, axis_values, estimators):
    """Median, quartiles and variance of the estimates for every (axis value, estimator)."""
    out = []
    for v in axis_values:
        for name in estimators:
            vals = np.array([r[3] for r in rows if r[0] == v and r[2] == name])
            q25, med, q75 = np.percentile(vals, [25, 50, 75])
            var = float(np.var(vals, ddof=1)) if len(vals) > 1 else float("nan")
            out.append((v, name, len(vals), med, q25, q75, var))
    return out


def cmd_sweep(cfg: dict) -> None:
    axis = cfg["axis"]
    if axis not in AXES:
        raise CliError(f"sweep exactly one axis out of {','.join(AXES)}, got {axis!r}")
    values = int_list(cfg["values"]) if axis in ("n", "k") else float_list(cfg["values"])
    if not values:
        raise CliError("no axis values given")
    estimators = estimator_list(cfg["estimator"])
    if cfg["repeats"] < 1:
        raise CliError("repeats must be >= 1")
    tasks = [(cfg, axis, v, i, estimators) for v in values for i in range(cfg["repeats"])]
    rows = [r for part in _map(_sweep_task, tasks, cfg["jobs"]) for r in part]
    order = {name: j for j, name in enumerate(estimators)}
    rows.sort(key=lambda r: (r[0], order[r[2]], r[1]))
    units = cfg["units"]
    rows = [(v, i, name, convert(val, units)) for v, i, name, val in rows]
    write_csv(cfg["out"], [axis, "repeat", "estimator", "value"], rows)
    summary = summarise(rows, values, estimators)
    oracle = {}
    for v in values:
        over = {"sigma_z": v} if axis == "sigma_z" else {"n": int(v)} if axis == "n" else {}
        oracle[v] = convert(gaussian_cmi_oracle(_markov(cfg, 0, **over)), units)
    write_csv(summary_path(cfg["out"]),
              [axis, "estimator", "repeats", "median", "q25", "q75", "variance", "oracle"],
              [s + (oracle[s[0]],) for s in summary])


def summary_path(out: str | None) -> str | None:
    if out is None:
        return None
    p = Path(out)
    return str(p.with_name(p.stem + "_summary" + (p.suffix or ".csv")))


def _te_task(task):
    cfg, repeat, series, names = task
    if series is None:
        params = _xy(cfg, repeat_seed(cfg["seed"], repeat))
        sites = [params.causal_site] + [site_at_distance(params, d) for d in cfg["_dists"]]
        series = xy_series(params, sites)
    rows = []
    for col, d in enumerate(cfg["_dists"], start=1):
        causal, site = series[:, 0], series[:, col]
        for ell in cfg["_ells"]:
            spec = EmbeddingSpec(ell, cfg["stride"])
            for direction, (src, dst) in (("causal->site", (causal, site)),
                                          ("site->causal", (site, causal))):
                data = embed(src, dst, spec, CIRCULAR)
                for name in names:
                    v = run_estimator(data, name, cfg)["value"]
                    rows.append((data.n, ell, d, direction, repeat, name, v))
    return rows


def cmd_te(cfg: dict) -> None:
    names = estimator_list(cfg["estimator"])
    cfg = dict(cfg, _ells=int_list(cfg["ell"]), _dists=int_list(cfg["distances"]))
    if not cfg["_ells"] or not cfg["_dists"]:
        raise CliError("need at least one ell and one distance")
    if cfg["input"] is not None:
        header, table = read_table(cfg["input"])
        try:
            cols = [header.index("causal")] + [header.index(f"d{d}") for d in cfg["_dists"]]
        except ValueError:
            raise CliError(f"{cfg['input']}: needs columns causal and d<distance>") from None
        tasks = [(cfg, 0, np.mod(table[:, cols], TWO_PI), names)]
    else:
        if cfg["repeats"] < 1:
            raise CliError("repeats must be >= 1")
        tasks = [(cfg, i, None, names) for i in range(cfg["repeats"])]
    rows = [r for part in _map(_te_task, tasks, cfg["jobs"]) for r in part]
    rows.sort(key=lambda r: (r[2], r[1], r[3], r[5], r[4]))
    units = cfg["units"]
    rows = [r[:6] + (convert(r[6], units),) for r in rows]
    write_csv(cfg["out"], ["n_samples", "ell", "distance", "direction", "repeat", "estimator",
                           "estimate"], rows)


HANDLERS = {"generate": cmd_generate, "estimate": cmd_estimate, "sweep": cmd_sweep,
            "te": cmd_te}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message.replace("\n", " "))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nncmi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, keys in COMMANDS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key=value settings file; flags override it")
        for key in keys:
            _, _, help_text = SETTINGS[key]
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_text)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        HANDLERS[args.command](resolve(args.command, args))
    except (CliError, ValueError, RuntimeError) as e:
        print(f"error: {e}".replace("\n", " "), file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
