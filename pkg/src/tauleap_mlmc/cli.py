"""Command-line front end.

Every output starts with a provenance header (tool version, resolved config,
seed).  The worker count is deliberately left out of it so that outputs are
byte-identical for any ``--workers`` value.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import coupled_exact_tau_batch, coupled_tau_batch
from .errors import TauLeapError
from .exact import simulate_exact, simulate_exact_batch
from .mlmc import Observable, run_biased, run_unbiased
from .model import Model, decay, dimerization
from .parallel import default_workers
from .parser import ParsedModel, parse_model
from .streams import PathKey
from .study import (SweepTable, complexity_sweep, fit_power_law, mean_field_euler,
                    variance_sweep)
from .tau import grid_steps, simulate_tau, simulate_tau_batch

BUNDLED = ("dimerization", "decay")
TEMPLATES = {"dimerization": lambda N, mf: dimerization(N, mf),
             "decay": lambda N, mf: decay(round(N))}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_real(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive real, got {text}")
    return v


def _real_list(text: str) -> list[float]:
    try:
        return [_positive_real(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated positive reals, got {text}")


def _record(text: str) -> float | None:
    return None if text == "none" else _positive_real(text)


def read_model_text(spec: str) -> str:
    path = Path(spec)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if spec in BUNDLED:
        return resources.files(__package__).joinpath("models", f"{spec}.txt").read_text("utf-8")
    raise FileNotFoundError(f"model file not found: {spec}")


def load(spec: str) -> tuple[ParsedModel, Model, str]:
    text = read_model_text(spec)
    parsed = parse_model(text)
    return parsed, parsed.to_model(), text


# ---- output ----------------------------------------------------------------

def _config(args) -> dict:
    skip = {"workers", "out", "func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def provenance(args, model_text: str | None = None) -> dict:
    prov = {"tool": "tauleap-mlmc", "version": __version__, "command": args.command,
            "config": _config(args), "seed": args.seed}
    if model_text is not None:
        prov["model_sha256"] = hashlib.sha256(model_text.encode("utf-8")).hexdigest()
    return prov


def _header(prov: dict) -> str:
    return (f"# {prov['tool']} {prov['version']} {prov['command']}\n"
            f"# config: {json.dumps(prov['config'], separators=(',', ':'))}\n"
            + (f"# model_sha256: {prov['model_sha256']}\n" if "model_sha256" in prov else "")
            + f"# seed: {prov['seed']}\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _csv(prov: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(_header(prov))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json(prov: dict, payload: dict) -> str:
    return json.dumps({"provenance": prov, **payload}, separators=(",", ":"),
                      allow_nan=False) + "\n"


def _emit(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _observable(text: str | None, model: Model) -> Observable:
    if text is None:
        return Observable.coordinate(model.network, model.network.species[0])
    return Observable.parse(text, model.network)


# ---- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    parsed, model, text = load(args.model)
    net, x0 = model.network, model.initial
    sp = list(net.species)
    exact = args.method == "exact"
    if not exact and args.h is None:
        raise UsageError("simulate --method tau requires --h")
    if args.record is None:
        if exact:
            b = simulate_exact_batch(net, x0, args.t_end, args.paths, args.seed, 0, args.workers)
            rows = [[p, *b.finals[p], b.events[p]] for p in range(args.paths)]
            cols = ["path", *[f"final_{s}" for s in sp], "events"]
        else:
            b = simulate_tau_batch(net, x0, args.h, args.t_end, args.paths, args.seed, 0,
                                   args.workers)
            rows = [[p, *b.finals[p], b.firings[p].sum(), b.step_count] for p in range(args.paths)]
            cols = ["path", *[f"final_{s}" for s in sp], "events", "steps"]
    else:
        rows = []
        if exact:
            cols = ["path", "time", *sp]
            for p in range(args.paths):
                path = simulate_exact(net, None, x0, args.t_end, PathKey(args.seed, 0, p),
                                      record=args.record)
                rows += [[p, _grid_time(t), *x] for t, x in zip(path.times, path.trajectory)]
        else:
            cols = ["path", "time", *sp, "steps"]
            stride = grid_steps(args.record, args.h)
            for p in range(args.paths):
                path = simulate_tau(net, None, x0, args.h, args.t_end, PathKey(args.seed, 0, p),
                                    record=True)
                for j in range(0, path.step_count + 1, stride):
                    rows.append([p, _grid_time(j * args.h), *path.steps[j], j])
    _emit(_csv(provenance(args, text), cols, rows), args.out)
    return 0


def _grid_time(t: float) -> float:
    # j * h carries float noise such as 0.30000000000000004
    return round(float(t), 12)


def cmd_couple(args) -> int:
    parsed, model, text = load(args.model)
    net, x0 = model.network, model.initial
    h = args.t_end * float(args.M) ** (-args.level)
    if args.kind == "tau-tau":
        if args.level < 1:
            raise UsageError("couple --kind tau-tau needs --level >= 1")
        b = coupled_tau_batch(net, x0, h, args.M, args.t_end, args.pairs, args.seed, args.level,
                              args.workers)
    else:
        b = coupled_exact_tau_batch(net, x0, h, args.t_end, args.pairs, args.seed, args.level,
                                    args.workers)
    sp = list(net.species)
    cols = ["pair", *[f"fine_{s}" for s in sp], *[f"coarse_{s}" for s in sp], "cost"]
    rows = [[p, *b.fine[p], *b.coarse[p], b.costs[p]] for p in range(args.pairs)]
    _emit(_csv(provenance(args, text), cols, rows), args.out)
    return 0


def cmd_mlmc(args) -> int:
    parsed, model, text = load(args.model)
    f = _observable(args.f, model)
    run = run_biased if args.estimator == "biased" else run_unbiased
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = run(model.network, model.scaling, model.initial, args.t_end, args.eps, args.M, f,
                  args.seed, args.allocation, args.theta, args.pilot, args.workers)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(_json(provenance(args, text), est.as_dict()), args.out)
    return 0


def cmd_sweep(args) -> int:
    make = TEMPLATES[args.template]
    template = lambda N: make(N, args.mass_fraction)  # noqa: E731
    f = None
    if args.f is not None:
        f = Observable.parse(args.f, template(args.N[0]).network)
    table = variance_sweep(template, args.N, args.h, args.kind, args.pairs, f, args.seed,
                           args.t_end, args.M, args.workers)
    _emit(_header(provenance(args)) + table.to_csv(), args.out)
    return 0


def cmd_fit(args) -> int:
    text = Path(args.table).read_text(encoding="utf-8")
    fit = fit_power_law(SweepTable.from_csv(text), args.mode)
    _emit(_json(provenance(args), fit.as_dict()), args.out)
    return 0


def cmd_meanfield(args) -> int:
    parsed, model, text = load(args.model)
    path = mean_field_euler(model.network, model.scaling, model.initial, args.h, args.t_end)
    stride = 1 if args.record is None else grid_steps(args.record, args.h)
    cols = ["time", *model.network.species]
    rows = [[_grid_time(j * args.h), *path.states[j]] for j in range(0, len(path.times), stride)]
    _emit(_csv(provenance(args, text), cols, rows), args.out)
    return 0


def cmd_complexity(args) -> int:
    parsed, model, text = load(args.model)
    f = _observable(args.f, model)
    rows = complexity_sweep(model.network, model.scaling, model.initial, args.t_end, args.eps,
                            args.estimator, f, args.seed, args.M, args.allocation, args.workers)
    cols = ["eps", "variance", "cost", "estimate", "L"]
    _emit(_csv(provenance(args, text), cols,
               [[r.eps, r.variance, r.cost, r.estimate, r.levels] for r in rows]), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0, help="master seed (u64, default 0)")
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="worker threads (default: available cores); never changes results")
    common.add_argument("--out", default="-", help="output file ('-' for stdout, the default)")

    with_model = _Parser(add_help=False)
    with_model.add_argument("--model", default="dimerization",
                            help="model file, or a bundled name: dimerization, decay")
    with_model.add_argument("--t-end", type=_positive_real, default=None,
                            help="terminal time T (default 0.3 for dimerization, else 1)")

    p = _Parser(prog="tauleap-mlmc",
                description="Exact, tau-leap and coupled simulation of reaction networks, "
                            "multilevel Monte Carlo, and variance-scaling studies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common, with_model], help="simulate paths")
    s.add_argument("--method", choices=("exact", "tau"), default="exact")
    s.add_argument("--h", type=_positive_real, help="tau-leap step (required for --method tau)")
    s.add_argument("--paths", type=_positive_int, default=1)
    s.add_argument("--record", type=_record, default=None,
                   help="recording grid step, or 'none' for final states only (default)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("couple", parents=[common, with_model], help="simulate coupled pairs")
    s.add_argument("--kind", choices=("tau-tau", "exact-tau"), default="tau-tau")
    s.add_argument("--level", type=int, default=1, help="fine level; h = T * M**-level")
    s.add_argument("--M", type=_positive_int, default=3, help="grid refinement factor")
    s.add_argument("--pairs", type=_positive_int, default=1)
    s.set_defaults(func=cmd_couple)

    s = sub.add_parser("mlmc", parents=[common, with_model], help="multilevel estimator")
    s.add_argument("--estimator", choices=("biased", "unbiased"), default="biased")
    s.add_argument("--eps", type=_positive_real, required=True, help="target standard error")
    s.add_argument("--M", type=_positive_int, default=3, help="grid refinement factor (>= 2)")
    s.add_argument("--f", default=None,
                   help='observable: "X[<name>]" or "lin:<a1>,<a2>,..." (default first species)')
    s.add_argument("--allocation", choices=("paper", "adaptive"), default="adaptive",
                   help="asymptotic per-level formula or pilot-based sqrt(V/c) allocation")
    s.add_argument("--theta", type=_positive_real, default=1.0, help="bias calibration h_L <= theta*eps")
    s.add_argument("--pilot", type=_positive_int, default=100, help="pilot paths per level")
    s.set_defaults(func=cmd_mlmc)

    s = sub.add_parser("sweep", parents=[common], help="coupled-pair variance over an (N, h) grid")
    s.add_argument("--template", choices=sorted(TEMPLATES), default="dimerization")
    s.add_argument("--mass-fraction", type=_positive_real, default=0.2,
                   help="initial counts as a fraction of N (dimerization)")
    s.add_argument("--N", type=_real_list, default=[1e3, 1e4, 1e5], help="comma-separated N values")
    s.add_argument("--h", type=_real_list, default=[0.01, 0.003, 0.001],
                   help="comma-separated (fine) step sizes")
    s.add_argument("--kind", choices=("tau-tau", "exact-tau"), default="exact-tau")
    s.add_argument("--pairs", type=_positive_int, default=10_000)
    s.add_argument("--t-end", type=_positive_real, default=0.3)
    s.add_argument("--M", type=_positive_int, default=3)
    s.add_argument("--f", default=None, help="observable (default first species)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", parents=[common], help="power-law fit of a sweep table")
    s.add_argument("--table", required=True, help="sweep CSV")
    s.add_argument("--mode", choices=("full", "h", "N"), default="full")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("meanfield", parents=[common, with_model], help="Euler mean-field path")
    s.add_argument("--h", type=_positive_real, required=True)
    s.add_argument("--record", type=_record, default=None, help="recording grid step")
    s.set_defaults(func=cmd_meanfield)

    s = sub.add_parser("complexity", parents=[common, with_model], help="cost against eps")
    s.add_argument("--eps", type=_real_list, default=[0.02, 0.01, 0.005],
                   help="comma-separated descending eps values")
    s.add_argument("--estimator", choices=("biased", "unbiased"), default="biased")
    s.add_argument("--M", type=_positive_int, default=3)
    s.add_argument("--f", default=None)
    s.add_argument("--allocation", choices=("paper", "adaptive"), default="adaptive")
    s.set_defaults(func=cmd_complexity)
    return p


def _resolve(args):
    if getattr(args, "t_end", "absent") is None:
        args.t_end = 0.3 if args.model == "dimerization" else 1.0
    if args.workers is None:
        args.workers = default_workers()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("tauleap-mlmc: error: a command is required (see --help)")
        _resolve(args)
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (TauLeapError, ValueError, OverflowError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
