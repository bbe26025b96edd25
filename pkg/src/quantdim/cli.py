"""Command line entry point: ``quantdim <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 numerical divergence,
3 depth or capacity exhaustion.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dyadic import Atomic, Density, IfsCascade, build_measure, dim_infty_estimate, parse_spec, preset_names
from .errors import ConfigError, QuantdimError
from .oracles import cascade_beta, example_density, registered_names, uniform_midpoint_error
from .spectra import (DEFAULT_PROTOCOL, DepthProtocol, beta_curve, boundary_limit, critical_q,
                      d_zero, pf_regularity_report, qr_bounds, tau_curve)

NORM_CHOICES = ("euclid", "max")


@dataclass
class RunConfig:
    """Everything a run depends on; written next to its outputs."""

    command: str
    spec: dict = field(default_factory=dict)
    depth: int = 10
    seed: int = 0
    norm: str = "euclid"
    protocol: str = str(DEFAULT_PROTOCOL)
    params: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, np.integer)):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


# ------------------------------------------------------------------ output helpers

class Output:
    def __init__(self, directory, config: RunConfig, stdout=sys.stdout):
        self.dir = Path(directory)
        self.config = config
        self.stdout = stdout
        self.written = []

    def _path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(str(p))
        return p

    def header(self):
        return f"# quantdim {self.config.version} protocol={self.config.protocol}"

    def csv(self, name, columns, rows):
        with open(self._path(name), "w", newline="") as fh:
            fh.write(self.header() + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(v) for v in row])

    def json(self, name, obj):
        with open(self._path(name), "w") as fh:
            json.dump(_clean(obj), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def text(self, name, body):
        with open(self._path(name), "w") as fh:
            fh.write(body)

    def finish(self, summary):
        self.json("config.json", json.loads(self.config.to_json()))
        print(json.dumps(_clean(summary), sort_keys=True, indent=2), file=self.stdout)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return v


# ------------------------------------------------------------------ argument parsing

def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b = part.split(":", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _order(text):
    v = float(text)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("order must be a number")
    return v


def _common():
    p = argparse.ArgumentParser(add_help=False)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec", metavar="FILE", help="measure description (JSON file or preset name)")
    src.add_argument("--inline", metavar="JSON", help="measure description as inline JSON")
    p.add_argument("--depth", type=int, default=10, help="construction depth (default 10)")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=_seed, default=0, help="random seed (unsigned 64-bit)")
    p.add_argument("--norm", choices=NORM_CHOICES, default="euclid")
    p.add_argument("--protocol", choices=[v.value for v in DepthProtocol], default=str(DEFAULT_PROTOCOL),
                   help="depth extrapolation protocol")
    return p


def build_parser():
    common = _common()
    ap = argparse.ArgumentParser(prog="quantdim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", parents=[common], help="spectrum and J-partition function curves")
    s.add_argument("--order", type=_order, default=-0.5)
    s.add_argument("--q-grid", type=_float_list, default=None,
                   help="comma-separated q values (default 0..2.5 step 0.05)")

    s = sub.add_parser("qr", parents=[common], help="critical exponent and its bracket")
    s.add_argument("--order", type=_order, required=True)
    s.add_argument("--boundary", action="store_true", help="also estimate the boundary limit")
    s.add_argument("--regularity", action="store_true", help="also report partition-function regularity")

    s = sub.add_parser("quantize", parents=[common], help="optimal codebooks and error curve")
    s.add_argument("--order", type=_order, required=True)
    s.add_argument("--n-list", type=_int_list, default=[2, 4, 8, 16, 32, 64],
                   help="sizes, e.g. 2,4,8 or 2:64")
    s.add_argument("--strategy", choices=("dp1d", "lloyd", "exhaustive"), default=None,
                   help="default dp1d for 1-d densities, lloyd otherwise")
    s.add_argument("--grid", type=int, default=12, help="dp1d grid exponent")
    s.add_argument("--starts", type=int, default=4, help="lloyd multistarts")
    s.add_argument("--level", type=int, default=None, help="optimization level for measure targets")
    s.add_argument("--eval-level", type=int, default=None, help="evaluation level for measure targets")
    s.add_argument("--adaptive", type=float, default=None, metavar="T",
                   help="positive orders: optimize on cubes with mass*side^r <= T")
    s.add_argument("--kappa", type=float, default=None, help="coefficient exponent")

    s = sub.add_parser("partition", parents=[common], help="optimal dyadic partitions and counts")
    s.add_argument("--order", type=_order, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--budget", type=int, help="greedy partition with at most this many cubes")
    g.add_argument("--x", type=float, help="least partition with every J < 1/x")
    g.add_argument("--gamma", type=_int_list, help="greedy dual values for several budgets")
    g.add_argument("--alpha", type=_float_list, help="coarse counts / optimized dimension")

    s = sub.add_parser("oracles", parents=[common], help="reference values")
    osub = s.add_subparsers(dest="oracle", required=True)
    osub.add_parser("list", help="registered densities")
    e = osub.add_parser("eval", help="evaluate a registered density")
    e.add_argument("name")
    e.add_argument("--s-norm", type=float, default=None)
    e.add_argument("--phi", type=_order, default=None, help="density functional at this order")
    e.add_argument("--at", type=_float_list, default=None, help="pointwise values")
    b = osub.add_parser("beta", help="cascade spectrum closed form")
    b.add_argument("--p", type=_float_list, required=True)
    b.add_argument("--q", type=_float_list, required=True)
    mp = osub.add_parser("midpoint", help="uniform equal-cell error")
    mp.add_argument("--n", type=int, required=True)
    mp.add_argument("--order", type=_order, required=True)

    s = sub.add_parser("verify", parents=[common], help="acceptance criteria")
    s.add_argument("--suite", default="all")
    s.add_argument("--list", action="store_true", help="list criterion ids and suites")
    return ap


# ------------------------------------------------------------------ commands

def _load_spec(args):
    if args.inline is not None:
        return parse_spec(args.inline)
    if args.spec is None:
        raise ConfigError("a measure is required: use --spec FILE|PRESET or --inline JSON")
    path = Path(args.spec)
    if path.is_file():
        return parse_spec(path.read_text())
    if args.spec in preset_names():
        return parse_spec(args.spec)
    raise ConfigError(f"{args.spec!r} is neither a file nor a preset ({', '.join(preset_names())})")


def _config(args, spec=None, **params):
    return RunConfig(args.command, spec.to_dict() if spec is not None else {}, args.depth, args.seed,
                     args.norm, args.protocol, params)


def cmd_spectrum(args, out_stream):
    spec = _load_spec(args)
    qs = args.q_grid if args.q_grid is not None else np.round(np.arange(0, 2.5 + 1e-9, 0.05), 10)
    cfg = _config(args, spec, order=args.order, q_grid=list(map(float, qs)))
    out = Output(args.out, cfg, out_stream)
    m = build_measure(spec, args.depth)
    proto = DepthProtocol(args.protocol)
    beta = beta_curve(m, qs, protocol=proto)
    tau = tau_curve(m, args.order, qs, protocol=proto)
    cols = ["q", "n", "value", "extrapolated"]
    out.csv("beta.csv", cols, beta.rows())
    out.csv("tau.csv", cols, tau.rows())
    markers = {"r": args.order, "protocol": str(proto)}
    notes = list(tau.notes)
    try:
        ce = critical_q(m, args.order, proto)
        markers.update(q_r=ce.q_r, D_r=ce.dimension, bracket=list(ce.bracket))
        notes.extend(ce.notes)
    except QuantdimError as exc:
        markers.update(q_r=None, D_r=None)
        notes.append(f"no critical exponent: {exc}")
    dz = d_zero(m, proto)
    markers.update(D_0=dz.value, D_0_differentiable=dz.differentiable,
                   dim_infty=dim_infty_estimate(m).value, beta_0=float(beta.extrapolated[0]))
    markers["notes"] = notes
    out.csv("markers.csv", ["name", "value"],
            [(k, markers[k]) for k in ("r", "q_r", "D_r", "D_0", "dim_infty")])
    out.json("spectrum.json", {"beta": beta.to_dict(), "tau": tau.to_dict(), "markers": markers})
    out.text("spectrum.gp", _gnuplot(args.order, markers))
    out.finish(markers)
    return 0


def _gnuplot(r, markers):
    lines = [
        "# gnuplot script: spectrum curve, the line y = r q and the critical exponent",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key top right",
        "set xlabel 'q'",
        "set ylabel 'beta(q)'",
        "set grid",
        f"r = {r!r}",
    ]
    extra = ""
    if markers.get("q_r") is not None:
        lines.append(f"qr = {markers['q_r']!r}")
        lines.append("set arrow from qr, graph 0 to qr, graph 1 nohead dashtype 2")
    lines.append("plot 'beta.csv' every ::1 using 1:4 with lines title 'beta (extrapolated)', \\")
    lines.append("     r*x with lines dashtype 2 title 'r q'" + extra)
    return "\n".join(lines) + "\n"


def cmd_qr(args, out_stream):
    spec = _load_spec(args)
    cfg = _config(args, spec, order=args.order, boundary=args.boundary, regularity=args.regularity)
    out = Output(args.out, cfg, out_stream)
    m = build_measure(spec, args.depth)
    proto = DepthProtocol(args.protocol)
    ce = critical_q(m, args.order, proto)
    res = {"critical": ce.to_dict()}
    if args.boundary:
        res["boundary"] = asdict(boundary_limit(m, protocol=proto))
    if args.regularity:
        res["regularity"] = asdict(pf_regularity_report(m, args.order, proto))
    out.json("qr.json", res)
    out.finish(res)
    return 0


def _quantize_target(spec, args, r):
    from .quantizer import PointTarget, as_target
    v = spec.variant
    if isinstance(v, Density):
        return as_target(v.resolve()), None
    if isinstance(v, Atomic):
        return PointTarget(np.asarray(v.points, float), np.asarray(v.weights, float)), None
    m = build_measure(spec, args.depth)
    if args.adaptive is not None:
        return PointTarget.adaptive(m, r, args.adaptive), args.eval_level or args.depth
    level = args.level if args.level is not None else min(args.depth, 8)
    return PointTarget(measure=m, level=level), args.eval_level or args.depth


def cmd_quantize(args, out_stream):
    from .quantizer import DensityTarget, error_curve
    spec = _load_spec(args)
    strategy = args.strategy
    target, eval_level = _quantize_target(spec, args, args.order)
    if strategy is None:
        strategy = "dp1d" if isinstance(target, DensityTarget) else "lloyd"
    cfg = _config(args, spec, order=args.order, n_list=args.n_list, strategy=strategy, grid=args.grid,
                  starts=args.starts, level=args.level, eval_level=eval_level, adaptive=args.adaptive,
                  kappa=args.kappa)
    out = Output(args.out, cfg, out_stream)
    extra = {"eval_level": eval_level} if eval_level is not None else {}
    curve = error_curve(target, args.order, args.n_list, strategy, seed=args.seed, kappa=args.kappa,
                        grid=args.grid, starts=args.starts, norm=args.norm, **extra)
    out.csv("error_curve.csv", ["n", "e", "log_n", "neg_log_e"], curve.rows())
    out.json("error_curve.json", curve.to_dict())
    if curve.quantizers:
        out.json("quantizer.json", curve.quantizers[-1].to_dict())
    summary = {k: v for k, v in curve.to_dict().items() if k not in ("n", "e")}
    out.finish(summary)
    if curve.divergent:
        print("divergence: " + "; ".join(curve.notes), file=sys.stderr)
        return 2
    return 0


def cmd_partition(args, out_stream):
    from .partitions import coarse_counts, gamma_curve, greedy_partition, optimized_coarse_dimension, \
        partition_entropy
    spec = _load_spec(args)
    cfg = _config(args, spec, order=args.order, budget=args.budget, x=args.x, gamma=args.gamma,
                  alpha=args.alpha)
    out = Output(args.out, cfg, out_stream)
    m = build_measure(spec, args.depth)
    r = args.order
    if args.budget is not None or args.x is not None:
        if args.budget is not None:
            part = greedy_partition(m, r, args.budget)
            summary = {"budget": args.budget}
        else:
            res = partition_entropy(m, r, args.x)
            part = res.partition
            summary = {"x": args.x, "M": res.M}
        d = m.dimension
        out.csv("partition.csv", ["level"] + [f"k{i}" for i in range(d)] + ["J"], part.rows())
        out.json("partition.json", part.to_dict())
        summary.update(cardinality=part.cardinality, max_j=part.max_j, depth_limited=part.depth_limited)
    elif args.gamma is not None:
        gam, lim = gamma_curve(m, r, args.gamma)
        rows = list(zip(args.gamma, gam.tolist(), lim.tolist()))
        out.csv("gamma.csv", ["budget", "gamma", "depth_limited"], rows)
        summary = {"budgets": args.gamma, "gamma": gam.tolist(), "depth_limited": lim.tolist()}
    else:
        alphas = args.alpha
        rows = []
        for a in alphas:
            cc = coarse_counts(m, r, a)
            rows.extend((a, *row) for row in cc.rows())
        out.csv("coarse.csv", ["alpha", "n", "count", "F_upper", "F_lower"], rows)
        opt = optimized_coarse_dimension(m, r, alphas)
        summary = opt.to_dict()
        out.json("coarse.json", summary)
    out.finish(summary)
    return 0


def cmd_oracles(args, out_stream):
    cfg = _config(args, None, oracle=args.oracle)
    out = Output(args.out, cfg, out_stream)
    if args.oracle == "list":
        res = []
        for name in registered_names():
            h = example_density(name)
            res.append({"name": name, "s_h": h.s_h, "dim_infty": h.dim_infty,
                        "singular_points": list(h.singular_points)})
        print(json.dumps(_clean(res), indent=2, sort_keys=True), file=out_stream)
        return 0
    if args.oracle == "eval":
        from .quantizer import phi_r
        h = example_density(args.name)
        res = {"name": args.name, "s_h": h.s_h, "dim_infty": h.dim_infty}
        if args.s_norm is not None:
            iv = h.s_norm(args.s_norm)
            res["s_norm"] = {"s": args.s_norm, "value": None if iv.divergent else iv.value,
                             "divergent": iv.divergent}
        if args.phi is not None:
            res["phi"] = {"r": args.phi, "value": phi_r(h, args.phi)}
        if args.at is not None:
            res["values"] = dict(zip(map(str, args.at), np.asarray(h(np.asarray(args.at)), float).tolist()))
        print(json.dumps(_clean(res), indent=2, sort_keys=True), file=out_stream)
        return 0
    if args.oracle == "beta":
        res = {"p": args.p, "q": args.q, "beta": [cascade_beta(args.p, q) for q in args.q]}
        print(json.dumps(_clean(res), indent=2, sort_keys=True), file=out_stream)
        return 0
    res = {"n": args.n, "r": args.order, "e": uniform_midpoint_error(args.n, args.order)}
    print(json.dumps(_clean(res), indent=2, sort_keys=True), file=out_stream)
    return 0


def cmd_verify(args, out_stream):
    from .acceptance import CRITERIA, EXTRA, SUITES, run_suite
    if args.list:
        for cid, (title, _, budget) in {**CRITERIA, **EXTRA}.items():
            print(f"{cid}\t{title}\t(< {budget}s)", file=out_stream)
        for name, ids in SUITES.items():
            print(f"suite {name}: {' '.join(ids)}", file=out_stream)
        return 0
    if args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(sorted(SUITES))}")
    cfg = _config(args, None, suite=args.suite)
    out = Output(args.out, cfg, out_stream)
    results = run_suite(args.suite)
    for r in results:
        print(r.line(), file=out_stream)
    report = {"suite": args.suite, "passed": all(r.passed for r in results),
              "criteria": [r.to_dict() for r in results]}
    out.json("verify.json", report)
    return 0 if report["passed"] else 1


COMMANDS = {"spectrum": cmd_spectrum, "qr": cmd_qr, "quantize": cmd_quantize,
            "partition": cmd_partition, "oracles": cmd_oracles, "verify": cmd_verify}


def main(argv=None, stdout=None):
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.depth < 1:
        parser.error("--depth must be >= 1")
    try:
        return COMMANDS[args.command](args, stdout)
    except QuantdimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
