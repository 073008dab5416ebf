"""Command-line entry point: ``epp {purify,mems,rank3,ensemble,yield}``.

Every output file carries a manifest (command, parameters, seed, version,
timestamp): CSV files as a leading ``# {json}`` comment line, JSON files under
a ``"manifest"`` key. Set ``SOURCE_DATE_EPOCH`` to pin the timestamp and make
repeated runs byte-identical.

Exit codes: 0 success, 1 bad input, 2 the state could not be purified.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic as an
from . import bellmat as bm
from . import ensemble as en
from . import protocols as pr
from . import yieldsim as ys

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 1, 2
MAX_GRID = 2000
MAX_SAMPLES = 10**7
MEMS_MARKERS = (1 / 3, math.sqrt(2) / 3, 2 / 3)
PROTOCOL_NAMES = ("m2", "m2h", "m2h2", "dejmps")
# below this a cell's success probability is roundoff, e.g. on separable cells
PURIFIABLE_FLOOR = 1e-12


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit status 2 is reserved for failed purification
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- output helpers ---------------------------------------------------------


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def manifest(command, params, seed=None, **extra):
    doc = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "version": __version__,
        "timestamp": _timestamp(),
    }
    doc.update(extra)
    return doc


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % x


def write_csv(path, header, rows, meta):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns ``(manifest, header, rows)``."""
    with open(path, encoding="utf-8") as fh:
        meta = json.loads(fh.readline()[2:])
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in r] for r in reader]
    return meta, header, rows


def _png(path):
    return Path(path).with_suffix(".png")


def _protocol_list(text):
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in PROTOCOL_NAMES]
    if bad or not names:
        raise InputError(f"unknown protocol(s) {bad or text!r}; choose from {','.join(PROTOCOL_NAMES)}")
    return names


def _float_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse {text!r} as a comma-separated list of numbers") from exc


# -- commands ---------------------------------------------------------------


def cmd_purify(args):
    try:
        rho = bm.load_state(args.input)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read state from {args.input}: {exc}") from exc
    kind = pr.ProtocolKind(args.protocol)
    params = {"input": str(args.input), "protocol": args.protocol, "tol": args.tol, "max_iter": args.max_iter}
    status = EXIT_OK
    try:
        result = pr.RUNNERS[kind](rho, tol=args.tol, max_iter=args.max_iter)
    except (pr.NotPurifiable, pr.NotConverged) as exc:
        result = exc.result
        result.metadata["error"] = f"{type(exc).__name__}: {exc}"
        status = EXIT_FAILED
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    doc = result.to_dict()
    doc["manifest"] = manifest("purify", params)
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    target = doc["target"] or "none"
    print(f"target={target} probability={_fmt(result.overall_probability)}", file=sys.stderr)
    return status


def mems_table(c_values, protocols):
    kinds = [pr.ProtocolKind(p) for p in protocols]
    return [[c] + [pr.success_probability(an.mems(c), k) for k in kinds] for c in c_values]


def cmd_mems(args):
    if not 0 <= args.c_min < args.c_max <= 1:
        raise InputError("need 0 <= c-min < c-max <= 1")
    if args.steps < 1:
        raise InputError("steps must be >= 1")
    protocols = _protocol_list(args.protocols)
    c = np.linspace(args.c_min, args.c_max, args.steps)
    rows = mems_table(c, protocols)
    header = ["C"] + [f"P_{p}" for p in protocols]
    params = {"c_min": args.c_min, "c_max": args.c_max, "steps": args.steps, "protocols": protocols}
    meta = manifest("mems", params, markers=list(MEMS_MARKERS))
    write_csv(args.out, header, rows, meta)
    if args.plot:
        from . import plotting

        cols = {p: [r[i + 1] for r in rows] for i, p in enumerate(protocols)}
        plotting.plot_mems(c, cols, MEMS_MARKERS, _png(args.out))
    return EXIT_OK


def rank3_grid(theta, phi, grid, protocol):
    """CP-plane cells ``(purity, concurrence, probability, purifiable, admissible)``.

    Each admissible cell is represented by the member with the larger ``w``.
    """
    purity = np.linspace(1 / 3, 1, grid)
    conc = np.linspace(0, 1, grid)
    cells, states = [], []
    for P in purity:
        for C in conc:
            found = an.rank3_from_cp(C, P, theta, phi)
            cells.append([P, C, bool(found)])
            if found:
                states.append(an.rank3(found[0]))
    prob = np.zeros(len(cells))
    purif = np.zeros(len(cells), dtype=bool)
    adm = np.array([c[2] for c in cells])
    if states:
        stack = np.array(states)
        kind = pr.ProtocolKind(protocol)
        if kind is pr.ProtocolKind.M2H2:
            p = pr.m2h2_batch(stack)
            ok = np.ones(len(p), dtype=bool)
        else:
            ok, p = en.evaluate_states(stack, (kind,))[kind]
        prob[adm] = p
        purif[adm] = ok & (p > PURIFIABLE_FLOOR)
    return [[c[0], c[1], pr_, pu, c[2]] for c, pr_, pu in zip(cells, prob, purif)]


def cmd_rank3(args):
    if not 1 <= args.grid <= MAX_GRID:
        raise InputError(f"grid must lie in [1, {MAX_GRID}]")
    if not 0 <= args.theta <= math.pi / 2 + 1e-12:
        raise InputError("theta must lie in [0, pi/2]")
    rows = rank3_grid(args.theta, args.phi, args.grid, args.protocol)
    header = ["purity", "concurrence", "success_probability", "purifiable", "admissible"]
    params = {"theta": args.theta, "phi": args.phi, "grid": args.grid, "protocol": args.protocol}
    write_csv(args.out, header, rows, manifest("rank3", params))
    if args.plot:
        from . import plotting

        cols = list(zip(*rows))
        title = f"{args.protocol}, theta={args.theta:.3g}, phi={args.phi:.3g}"
        plotting.plot_cp_plane(cols[0], cols[1], cols[2], cols[4], _png(args.out), title)
    return EXIT_OK


def cmd_ensemble(args):
    if not 1 <= args.samples <= MAX_SAMPLES:
        raise InputError(f"samples must lie in [1, {MAX_SAMPLES}]")
    protocols = _protocol_list(args.protocols)
    if "m2h2" in protocols:
        raise InputError("the ensemble supports m2, m2h and dejmps")
    try:
        cfg = en.EnsembleConfig(
            samples=args.samples,
            bins=args.bins,
            nr_mode=args.nr_mode,
            n_r=args.n_r,
            seed=args.seed,
            protocols=protocols,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    res = en.run_ensemble(cfg)
    meta = manifest("ensemble", cfg.to_dict(), seed=cfg.seed)
    names = [k.value for k in cfg.protocols]
    total = len(res.concurrence)
    prefix = args.out_prefix
    hist = [[b.c_low, b.c_high, b.count, b.count / total] for b in res.bins]
    write_csv(f"{prefix}_hist.csv", ["c_low", "c_high", "count", "fraction"], hist, meta)
    frac = [[b.c_low, b.c_high, b.count] + [b.fraction_purifiable[k] for k in cfg.protocols] for b in res.bins]
    write_csv(f"{prefix}_fraction.csv", ["c_low", "c_high", "count"] + [f"frac_{n}" for n in names], frac, meta)
    avgp = [
        [b.c_low, b.c_high, b.count]
        + [b.mean_success_all[k] for k in cfg.protocols]
        + [b.mean_success[k] for k in cfg.protocols]
        for b in res.bins
    ]
    header = ["c_low", "c_high", "count"] + [f"P_{n}" for n in names] + [f"P_{n}_purifiable" for n in names]
    write_csv(f"{prefix}_avgp.csv", header, avgp, meta)
    print(f"mean concurrence {_fmt(float(res.concurrence.mean()))} over {total} states")
    if args.plot:
        from . import plotting

        centers = [b.center for b in res.bins]
        plotting.plot_bins(centers, {"fraction": [h[3] for h in hist]}, "fraction of states", f"{prefix}_hist.png")
        series = {n: [b.fraction_purifiable[k] for b in res.bins] for n, k in zip(names, cfg.protocols)}
        plotting.plot_bins(centers, series, "purifiable fraction", f"{prefix}_fraction.png")
        series = {n: [b.mean_success_all[k] for b in res.bins] for n, k in zip(names, cfg.protocols)}
        plotting.plot_bins(centers, series, "average success probability", f"{prefix}_avgp.png")
    return EXIT_OK


def cmd_yield(args):
    try:
        cfg = ys.YieldConfig(args.pairs, tuple(_float_list(args.probs)))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.mode == "exact":
        try:
            dists = ys.yield_pmf(cfg)
        except ys.SizeExceeded as exc:
            raise InputError(str(exc)) from exc
    else:
        if args.trials < 1:
            raise InputError("trials must be >= 1")
        dists = ys.mc_yield(cfg, args.trials, args.seed)
    means = [d.mean for d in dists]
    dominant = [ys.dominant_mean(ys.YieldConfig(cfg.n_pairs, cfg.probs[: d.round])) for d in dists]
    params = {"pairs": cfg.n_pairs, "probs": list(cfg.probs), "mode": args.mode}
    seed = None
    if args.mode == "mc":
        params["trials"] = args.trials
        seed = args.seed
    meta = manifest("yield", params, seed=seed, means=means, dominant_means=dominant)
    rows = [[d.round, k, p] for d in dists for k, p in enumerate(d.pmf)]
    write_csv(args.out, ["round", "k", "probability"], rows, meta)
    label = "exact" if args.mode == "exact" else "mc"
    for d, m, dom in zip(dists, means, dominant):
        print(f"round {d.round}: {label} mean {_fmt(m)}  dominant {_fmt(dom)}")
    if args.plot:
        from . import plotting

        plotting.plot_yield(dists, _png(args.out))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="epp", description="Entanglement purification simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("purify", help="run one protocol on a state file")
    p.add_argument("--input", required=True, help="state JSON file")
    p.add_argument("--protocol", choices=PROTOCOL_NAMES, default="m2")
    p.add_argument("--tol", type=float, default=pr.DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=pr.DEFAULT_MAX_ITER)
    p.add_argument("--out", help="result JSON (default: stdout)")
    p.set_defaults(func=cmd_purify)

    p = sub.add_parser("mems", help="success probability of MEMS against concurrence")
    p.add_argument("--c-min", type=float, default=0.0)
    p.add_argument("--c-max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--protocols", default=",".join(PROTOCOL_NAMES))
    p.add_argument("--out", default="mems.csv")
    p.add_argument("--plot", action="store_true", help="also write a PNG next to the CSV")
    p.set_defaults(func=cmd_mems)

    p = sub.add_parser("rank3", help="rank-three family over the concurrence-purity plane")
    p.add_argument("--theta", type=float, default=math.pi / 2)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--protocol", choices=PROTOCOL_NAMES, default="m2h2")
    p.add_argument("--out", default="rank3.csv")
    p.add_argument("--plot", action="store_true", help="also write a PNG next to the CSV")
    p.set_defaults(func=cmd_rank3)

    p = sub.add_parser("ensemble", help="random-state statistics per concurrence bin")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nr-mode", choices=[m.value for m in en.NrMode], default="uniform")
    p.add_argument("--n-r", type=int, default=4, help="rank bound when --nr-mode=fixed")
    p.add_argument("--protocols", default="m2,m2h,dejmps")
    p.add_argument("--out-prefix", default="ensemble")
    p.add_argument("--plot", action="store_true", help="also write PNGs next to the CSVs")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("yield", help="distribution of surviving pairs over rounds")
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--probs", required=True, help="comma-separated per-round probabilities")
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="yield.csv")
    p.add_argument("--plot", action="store_true", help="also write a PNG next to the CSV")
    p.set_defaults(func=cmd_yield)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"epp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
