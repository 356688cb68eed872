"""Command-line interface: ``coagemit <subcommand> [flags]``.

Every data file is UTF-8 CSV whose first line is a ``# coagemit-csv v1``
schema comment; a ``<stem>.meta.json`` file with the resolved configuration
sits next to it.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 exhausted before ``t_end`` (partial output written).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .errors import CoagError, InvalidInitialDistribution, QuadratureFailure
from .kinetics import ClusterDistribution, EmissionParams, Kind

SCHEMA = "coagemit-csv v1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_EXHAUSTED = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# --------------------------------------------------------------------------
# parsing helpers

def parse_init(text: str, ell: int) -> ClusterDistribution:
    """``dimer``, ``kmer:<k>`` or ``<size>:<fraction>,...`` (fractions sum to 1 within 1e-9)."""
    text = text.strip()
    if text == "dimer":
        return ClusterDistribution.kmer(ell, 2)
    if text.startswith("kmer:"):
        try:
            k = int(text[5:])
        except ValueError:
            raise ConfigError(f"bad k-mer size in {text!r}") from None
        if k < 1:
            raise ConfigError("k-mer size must be positive")
        return ClusterDistribution.kmer(ell, k)
    fr = {}
    for item in text.split(","):
        try:
            n, f = item.split(":")
            n, f = int(n), float(f)
        except ValueError:
            raise ConfigError(f"bad init entry {item!r}; expected <size>:<fraction>") from None
        if n < 1 or f < 0:
            raise ConfigError(f"bad init entry {item!r}")
        if n in fr:
            raise ConfigError(f"size {n} listed twice")
        fr[n] = f
    total = sum(fr.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"init fractions sum to {total!r}, not 1")
    try:
        return ClusterDistribution.initial(ell, {n: f / total for n, f in fr.items()})
    except InvalidInitialDistribution as e:
        raise ConfigError(str(e)) from None


def parse_sizes(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        out = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad size list {text!r}") from None
    if not out or min(out) < 1:
        raise ConfigError(f"bad size list {text!r}")
    return out


def record_grid(t_end: float, dt: float) -> np.ndarray:
    if dt <= 0 or t_end <= 0:
        raise ConfigError("t_end and record_dt must be positive")
    k = int(np.floor(t_end / dt + 1e-9))
    grid = np.minimum(np.arange(k + 1) * dt, t_end)
    if grid[-1] < t_end - 1e-12:
        grid = np.append(grid, t_end)
    return grid


# --------------------------------------------------------------------------
# output

def out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get("COAGEMIT_OUT_DIR") or "out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, kind: str, columns: dict) -> None:
    names = list(columns)
    rows = zip(*(np.asarray(columns[c]).tolist() for c in names))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {SCHEMA} {kind}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([_cell(x) for x in r])


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# coagemit-csv"):
            raise ConfigError(f"{path}: missing schema line")
        rows = list(csv.reader(fh))
    names, data = rows[0], rows[1:]
    cols = {}
    for k, name in enumerate(names):
        try:
            cols[name] = np.array([float(r[k]) for r in data])
        except ValueError:
            continue
    return cols


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_meta(path: Path, args, **extra) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "config")}
    write_json(path, {"tool": "coagemit", "version": __version__, "schema": SCHEMA,
                      "config": cfg, **extra})


# --------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    from . import markov

    u0 = parse_init(args.init, args.ell)
    N = args.clusters
    if N < 2:
        raise ConfigError("--clusters must be >= 2")
    if args.gel_policy == "stockmayer":
        thr = args.gel_threshold if args.gel_threshold is not None else max(N // 100, args.ell + 1)
        policy = markov.GelPolicy.stockmayer(thr)
    else:
        if args.gel_threshold is not None:
            raise ConfigError("--gel-threshold only applies to the stockmayer policy")
        policy = markov.ZIFF_STELL
    if args.backend:
        _backend.get(args.backend)
    track = parse_sizes(args.track)
    seeds = [args.seed + r for r in range(args.replicas)]
    workers = args.workers or int(os.environ.get("COAGEMIT_WORKERS", "1"))
    if args.replicas == 1:
        trajs = [markov.simulate(N, u0, args.t_end, args.record_dt, seed=args.seed,
                                 policy=policy, track=track, backend=args.backend)]
    else:
        trajs = markov.run_ensemble(N, u0, seeds, args.t_end, args.record_dt, policy=policy,
                                    track=track, workers=workers)
    d = out_dir(args)
    exhausted = False
    for r, tr in enumerate(trajs):
        stem = args.name if args.replicas == 1 else f"{args.name}_r{r:03d}"
        cols = tr.columns()
        cols.pop("largest", None)
        cols["step"] = tr.steps
        write_csv(d / f"{stem}.csv", "simulate", cols)
        write_meta(d / f"{stem}.meta.json", args, seed=seeds[r], run=tr.meta)
        exhausted |= bool(tr.meta["exhausted"]) and tr.t[-1] < args.t_end
    return EXIT_EXHAUSTED if exhausted else EXIT_OK


_KINDS = {"small": Kind.SMALL, "large": Kind.LARGE, "full": Kind.FULL,
          "truncated": Kind.TRUNCATED}


def cmd_solve(args) -> int:
    from .solver import IntegratorConfig, Terminal, integrate

    u0 = parse_init(args.init, args.ell)
    kind = _KINDS[args.system]
    if kind is Kind.TRUNCATED:
        if args.n_trunc is None:
            raise ConfigError("--n-trunc is required for the truncated system")
        params = EmissionParams.truncated(args.ell, args.n_trunc, u0.s_max)
    else:
        params = EmissionParams(args.ell, kind)
    cfg = IntegratorConfig(rtol=args.rtol, atol=args.atol, window=args.window,
                           eps_event=args.eps_event)
    res = integrate(u0, params, args.t_end, cfg, record_grid(args.t_end, args.record_dt),
                    track=parse_sizes(args.track))
    d = out_dir(args)
    write_csv(d / f"{args.name}.csv", "solve", res.trajectory.columns())
    write_meta(d / f"{args.name}.meta.json", args, terminal=res.terminal.value,
               t_ex=res.t_ex, diagnostics=res.diagnostics, run=res.trajectory.meta)
    if res.terminal is Terminal.STEP_FAILURE:
        print(f"step failure: {res.diagnostics.get('message')}", file=sys.stderr)
        return EXIT_NUMERIC
    if res.exhausted:
        print(f"exhausted at t_ex = {float(res.t_ex)!r}")
        return EXIT_EXHAUSTED if res.t_ex < args.t_end else EXIT_OK
    return EXIT_OK


def cmd_exact(args) -> int:
    from . import exact

    u0 = parse_init(args.init, args.ell)
    d = out_dir(args)
    grid = record_grid(args.t_end, args.record_dt)
    cols = {"t": grid}
    if args.ell == 1 and u0.as_dict() == {2: 1.0}:
        fam = exact.polynomial_family(args.n_max)
        write_json(d / f"{args.name}.coefficients.json",
                   {"variable": "m1", "m1_0": 2, "polynomials": {
                       str(n): p.as_json() for n, p in fam.items()}})
        for n, p in fam.items():
            cols[f"u_{n}"] = p(2.0 - grid)
        source = "polynomial"
    else:
        if not u0.is_large():
            raise ConfigError("exact solutions need large-cluster initial data")
        m1_0 = float(np.dot(u0.sizes, u0.u))
        if args.t_end >= m1_0 / args.ell:
            raise ConfigError("t_end must be below m_1(0)/ell")
        fam = exact.numeric_family(u0, args.n_max, args.t_end)
        for n, f in fam.items():
            cols[f"u_{n}"] = f(grid)
        source = "recursion"
    write_csv(d / f"{args.name}.csv", "exact", cols)
    write_meta(d / f"{args.name}.meta.json", args, source=source)
    return EXIT_OK


def cmd_moments(args) -> int:
    from . import exact

    k, ell = args.k, args.ell
    t_gel = exact.gelation_time(k, ell)
    t_end = args.t_end if args.t_end is not None else round(0.95 * t_gel, 6)
    if t_end >= t_gel:
        raise ConfigError(f"t_end must be below the gelation time {t_gel!r}")
    grid = record_grid(t_end, args.record_dt)
    init = [1.0] + [float(k) ** j for j in range(1, args.k_max + 1)]
    tr = exact.moment_hierarchy(init, ell, args.k_max, t_end, record_times=grid)
    cols = {"t": tr.t, "m0": tr.m(0), "m1": tr.m(1),
            "m2_closed": exact.closed_m2(k, ell, tr.t),
            "m3_closed": exact.closed_m3(k, ell, tr.t)}
    for j in range(2, args.k_max + 1):
        cols[f"m{j}_hierarchy"] = tr.m(j)
    d = out_dir(args)
    write_csv(d / f"{args.name}.csv", "moments", cols)
    write_meta(d / f"{args.name}.meta.json", args, t_gel=t_gel,
               t_ex=exact.exhaustion_time(k, ell))
    return EXIT_OK


def cmd_classes(args) -> int:
    from .classes import collision_numbers, compute_classes

    support = parse_sizes(args.support)
    if args.n_max < max(support):
        raise ConfigError("--n-max must cover the support")
    table = compute_classes(support, args.ell, args.n_max)
    out = table.as_json()
    out["collision_numbers"] = {str(n): c for n, c in
                                sorted(collision_numbers(support, args.ell, args.n_max).items())}
    d = out_dir(args)
    write_json(d / f"{args.name}.json", out)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    from .solver import IntegratorConfig, exhaustion_heatmap

    workers = args.workers or int(os.environ.get("COAGEMIT_WORKERS", "1"))
    p, q, T = exhaustion_heatmap(args.ell, args.grid_n, IntegratorConfig(rtol=args.rtol),
                                 workers=workers)
    P, Q = np.meshgrid(p, q, indexing="ij")
    sel = ~np.isnan(T)
    d = out_dir(args)
    write_csv(d / f"{args.name}.csv", "heatmap",
              {"p": P[sel], "q": Q[sel], "t_ex": T[sel]})
    write_meta(d / f"{args.name}.meta.json", args)
    return EXIT_OK


def compare_columns(a: dict, b: dict, columns=None) -> dict:
    """Sup-norm deviation per shared column, with ``b`` interpolated onto ``a``'s times."""
    ta, tb = a["t"], b["t"]
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    sel = (ta >= lo - 1e-12) & (ta <= hi + 1e-12)
    names = [c for c in a if c in b and c != "t"]
    if columns:
        missing = [c for c in columns if c not in names]
        if missing:
            raise ConfigError(f"columns not shared by both inputs: {missing}")
        names = list(columns)
    report = {}
    for c in names:
        fa, fb = a[c][sel], np.interp(ta[sel], tb, b[c])
        ok = np.isfinite(fa) & np.isfinite(fb)
        if not ok.any():
            continue
        dev = np.abs(fa[ok] - fb[ok])
        i = int(np.argmax(dev))
        report[c] = {"sup": float(dev[i]), "at_t": float(ta[sel][ok][i])}
    return {"t_range": [float(lo), float(hi)], "points": int(sel.sum()), "columns": report}


def cmd_compare(args) -> int:
    a, b = read_csv(args.a), read_csv(args.b)
    if "t" not in a or "t" not in b:
        raise ConfigError("both inputs need a t column")
    cols = parse_columns(args.columns)
    report = compare_columns(a, b, cols)
    report.update(a=str(args.a), b=str(args.b))
    d = out_dir(args)
    write_json(d / f"{args.name}.json", report)
    for c, r in report["columns"].items():
        print(f"{c}\t{r['sup']!r}")
    return EXIT_OK


def parse_columns(text):
    if not text:
        return None
    return [c.strip() for c in text.split(",") if c.strip()]


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coagemit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"coagemit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, name):
        p.add_argument("--config", help="JSON file with flag values (flags override it)")
        p.add_argument("--out-dir", default=None, help="output directory ($COAGEMIT_OUT_DIR)")
        p.add_argument("--name", default=name, help="output file stem")

    p = sub.add_parser("simulate", help="finite-N Markov simulation")
    common(p, "simulate")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--init", default="dimer")
    p.add_argument("--clusters", type=int, default=100_000)
    p.add_argument("--t-end", type=float, default=0.95)
    p.add_argument("--record-dt", type=float, default=0.005)
    p.add_argument("--gel-policy", choices=["ziff-stell", "stockmayer"], default="ziff-stell")
    p.add_argument("--gel-threshold", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--track", default="1,2,3,4,5,6,7,8,9,10")
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--backend", choices=["python", "cython"], default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="integrate the kinetic equations")
    common(p, "solve")
    p.add_argument("--system", choices=sorted(_KINDS), default="full")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--init", default="dimer")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--record-dt", type=float, default=0.01)
    p.add_argument("--n-trunc", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-13)
    p.add_argument("--eps-event", type=float, default=1e-13)
    p.add_argument("--track", default="1,2,3,4,5,6,7,8,9,10")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact", help="exact polynomial / recursive solutions")
    common(p, "exact")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--init", default="dimer")
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--t-end", type=float, default=0.6)
    p.add_argument("--record-dt", type=float, default=0.01)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("moments", help="k-mer moments: closed forms and hierarchy")
    common(p, "moments")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--record-dt", type=float, default=0.005)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("classes", help="reaction classes and reaction numbers")
    common(p, "classes")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--support", default="2")
    p.add_argument("--n-max", type=int, default=30)
    p.set_defaults(func=cmd_classes)

    p = sub.add_parser("heatmap", help="exhaustion times of the three-species system")
    common(p, "heatmap")
    p.add_argument("--ell", type=int, default=3)
    p.add_argument("--grid-n", type=int, default=21)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("compare", help="sup-norm deviations between two CSV outputs")
    common(p, "compare")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--columns", default=None, help="comma list (default: all shared)")
    p.set_defaults(func=cmd_compare)
    return ap


def _apply_config(ap, argv):
    args = ap.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            conf = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {args.config}: {e}") from None
    if not isinstance(conf, dict):
        raise ConfigError("config file must hold a JSON object")
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    unknown = [k for k in conf if k not in vars(args) or k in ("func", "config", "command")]
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    # flags given explicitly on the command line win over the file
    defaults = ap.parse_args([args.command] + [a for a in _positionals(args)])
    for k, v in conf.items():
        if getattr(args, k) == getattr(defaults, k):
            setattr(args, k, v)
    return args


def _positionals(args):
    return [args.a, args.b] if args.command == "compare" else []


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InvalidInitialDistribution, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureFailure, NumericalFailure, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except CoagError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
