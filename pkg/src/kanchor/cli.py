"""Command-line entry point: ``kanchor <command> [flags]``.

Every command writes a ``manifest.json`` next to its outputs; ``kanchor replay
MANIFEST`` re-runs the recorded configuration and rewrites the result files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .data import ColumnSchema, emit_report, load_csv
from .evaluation import (
    C_ALPHA_GRID,
    METHODS,
    SWEEP_GAMMAS,
    TrialConfig,
    gamma_sweep,
    group_shift_eval,
    run_benchmark,
    shift_eval,
)
from .exceptions import InvalidInputError, SemSpecParseError
from .sem import CASES, DESIGNS, SemSpec, bias_norm, case_spec, generate
from .splitting import proportional_sizes

log = logging.getLogger("kanchor")

BIAS_TOLERANCE = 1e-6

# per-design campaign defaults: sample size, three-stage split, stage-3 ridge constant
DESIGN_DEFAULTS = {
    "main": {"n": 700, "splits": (250, 250, 200), "xi_const": 1.5},
    "variant": {"n": 700, "splits": (250, 250, 200), "xi_const": 1.5},
    "kiv": {"n": 1000, "splits": (200, 200, 600), "xi_const": 1.0},
}


def _float_list(text: str) -> list[float]:
    try:
        out = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _splits(text: str) -> list[int]:
    try:
        out = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b,c integers, got {text!r}") from None
    if len(out) != 3 or min(out) < 1:
        raise argparse.ArgumentTypeError(f"--splits needs three positive sizes, got {text!r}")
    return out


def _methods(text: str) -> list[str]:
    out = [t.strip().lower() for t in text.split(",") if t.strip()]
    unknown = [m for m in out if m not in METHODS]
    if unknown or not out:
        raise argparse.ArgumentTypeError(f"unknown methods {unknown}; choose from {','.join(METHODS)}")
    return out


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


# argument parsing ---------------------------------------------------------------


def _campaign_flags(p: argparse.ArgumentParser, trials: int = 50) -> None:
    p.add_argument("--design", choices=sorted(DESIGNS), default=None)
    p.add_argument("--n", type=_positive_int, default=None, help="sample size per trial")
    p.add_argument("--methods", type=_methods, default=None, help="comma-separated method names")
    p.add_argument("--splits", type=_splits, default=None, help="three-stage split n1,n2,m")
    p.add_argument("--alpha-const", type=float, default=1.5)
    p.add_argument("--xi-const", type=float, default=None)
    p.add_argument("--trials", type=_positive_int, default=trials)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kanchor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic dataset to CSV")
    p.add_argument("--design", choices=sorted(DESIGNS), default="main")
    p.add_argument("--n", type=_positive_int, default=700)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("benchmark", help="MSE campaign against the interventional truth")
    _campaign_flags(p)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--csv", help="observational data file (replaces --design)")
    p.add_argument("--schema", help="JSON column schema for --csv")
    p.add_argument("--group-value", help="group label used for training with --csv")
    p.add_argument("--subsample", type=_positive_int, default=1000)
    p.add_argument("--fixed-subsample", action="store_true",
                   help="draw the --csv subsample once instead of per trial")

    p = sub.add_parser("gamma-sweep", help="KAR and KAR.2 over a gamma list, KIV as reference")
    _campaign_flags(p)
    p.add_argument("--gammas", type=_float_list, default=list(SWEEP_GAMMAS))
    p.add_argument("--alpha-consts", type=_float_list, default=list(C_ALPHA_GRID),
                   help="candidate projection ridge constants")

    p = sub.add_parser("shift", help="train on one side of an anchor threshold, score on the other")
    _campaign_flags(p)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=0.0)

    p = sub.add_parser("identifiability", help="population bias of anchor regression on linear SEMs")
    p.add_argument("--case", choices=CASES + ("all",), default="all")
    p.add_argument("--spec", help="SemSpec JSON file (replaces --case)")
    p.add_argument("--gammas", type=_float_list, default=None,
                   help="gamma values; defaults to each case's own gamma")
    p.add_argument("--specs", type=_positive_int, default=20, help="random specs per case")
    p.add_argument("--a", type=float, default=0.5, help="scale of the constructed anchor covariance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional output directory")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the recorded one)")
    return parser


# helpers ------------------------------------------------------------------------


def _resolve_campaign(args) -> TrialConfig:
    design = args.design or ("kiv" if args.command == "gamma-sweep" else "main")
    defaults = DESIGN_DEFAULTS[design]
    n = args.n or defaults["n"]
    if args.splits is not None:
        split3 = tuple(args.splits)
        if args.n is not None and sum(split3) != n:
            raise InvalidInputError(f"--splits {split3} does not sum to --n {n}")
        n = sum(split3)
    elif n == defaults["n"]:
        split3 = defaults["splits"]
    else:
        split3 = proportional_sizes(n, defaults["splits"])
    xi_const = defaults["xi_const"] if args.xi_const is None else args.xi_const
    methods = tuple(args.methods) if args.methods else METHODS
    return TrialConfig(
        design=design, n=n, methods=methods, split3=tuple(split3),
        split2=(split3[0] + split3[1], split3[2]), gamma=getattr(args, "gamma", 2.0),
        alpha_const=args.alpha_const, xi_const=xi_const, trials=args.trials,
        base_seed=args.seed, jobs=args.jobs,
    )


def _write_manifest(out: str, args, config: dict) -> None:
    recorded = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    manifest = {
        "command": args.command,
        "args": recorded,
        "config": config,
        "seed": recorded.get("seed"),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _print_summary(report) -> None:
    label_width = max([len("method")] + [len(l) for l in report.labels])
    print(f"{'method':<{label_width}}  {'median':>9}  {'q1':>9}  {'q3':>9}  {'n':>4}  failures"
          f"   (log10 {report.metric})")
    for label, s in report.summary().items():
        cells = [f"{s[k]:9.4f}" if s[k] is not None and np.isfinite(s[k]) else f"{'nan':>9}"
                 for k in ("median", "q1", "q3")]
        print(f"{label:<{label_width}}  {'  '.join(cells)}  {s['n']:>4}  {s['failures']}")


def _finish_campaign(args, report) -> int:
    os.makedirs(args.out, exist_ok=True)
    emit_report(report, os.path.join(args.out, "results.csv"), "csv")
    emit_report(report, os.path.join(args.out, "summary.json"), "json")
    _write_manifest(args.out, args, report.config)
    _print_summary(report)
    if report.failed:
        failed = {k: v for k, v in report.failures.items() if v}
        print(f"kanchor: campaign failed: more than 10% of {report.n_trials} trials failed for {failed}",
              file=sys.stderr)
        return 1
    return 0


# commands -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    data = generate(args.design, args.n, args.seed)
    path = os.path.join(args.out, "data.csv")
    data.to_csv(path)
    _write_manifest(args.out, args, {"design": args.design, "n": args.n, "seed": args.seed})
    print(path)
    return 0


def cmd_benchmark(args) -> int:
    if args.csv is None:
        if args.schema is not None:
            raise InvalidInputError("--schema needs --csv")
        report = run_benchmark(_resolve_campaign(args))
        return _finish_campaign(args, report)
    if args.schema is None or args.group_value is None:
        raise InvalidInputError("--csv needs --schema and --group-value")
    data = load_csv(args.csv, ColumnSchema.from_json(args.schema))
    log.info("loaded %d rows (%d dropped as missing, %d as nonpositive under log)",
             data.n, data.meta["dropped_missing"], data.meta["dropped_log"])
    if args.splits is None:
        args.n = args.n or min(args.subsample, data.n)
    config = _resolve_campaign(args)
    report = group_shift_eval(data, args.group_value, config, args.subsample, args.fixed_subsample)
    report.config.update(csv=os.path.abspath(args.csv), rows=data.meta["rows"],
                         dropped_missing=data.meta["dropped_missing"], dropped_log=data.meta["dropped_log"])
    return _finish_campaign(args, report)


def cmd_gamma_sweep(args) -> int:
    config = _resolve_campaign(args)
    report = gamma_sweep(config, args.gammas, args.alpha_consts)
    return _finish_campaign(args, report)


def cmd_shift(args) -> int:
    report = shift_eval(_resolve_campaign(args), args.threshold)
    return _finish_campaign(args, report)


def cmd_identifiability(args) -> int:
    rows = []
    if args.spec is not None:
        spec = SemSpec.from_json(args.spec)
        for g in args.gammas or [0.0, 1.0, 2.0, 10.0, float("inf")]:
            rows.append(("spec", g, bias_norm(spec, g)))
    else:
        rng = np.random.default_rng(args.seed)
        for case in CASES if args.case == "all" else (args.case,):
            worst: dict[float, float] = {}
            for _ in range(args.specs):
                spec, own_gamma = case_spec(case, rng, a=args.a)
                for g in args.gammas or [own_gamma]:
                    worst[g] = max(worst.get(g, 0.0), bias_norm(spec, g))
            rows.extend((case, g, b) for g, b in sorted(worst.items()))

    print(f"{'case':<12}  {'gamma':>8}  {'bias_norm':>11}  result")
    for case, g, b in rows:
        print(f"{case:<12}  {g:8g}  {b:11.3e}  {'pass' if b < BIAS_TOLERANCE else 'FAIL'}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "results.csv"), "w", encoding="utf-8") as fh:
            fh.write("case,gamma,bias_norm,pass\n")
            for case, g, b in rows:
                fh.write(f"{case},{g!r},{b:.17g},{int(b < BIAS_TOLERANCE)}\n")
        summary = [{"case": c, "gamma": g if np.isfinite(g) else "inf", "bias_norm": b,
                    "pass": b < BIAS_TOLERANCE} for c, g, b in rows]
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump({"tolerance": BIAS_TOLERANCE, "rows": summary}, fh, indent=2)
        _write_manifest(args.out, args, {"case": args.case, "spec": args.spec, "gammas": args.gammas,
                                         "specs": args.specs, "a": args.a, "seed": args.seed})
    return 0


def cmd_replay(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    recorded = argparse.Namespace(**manifest["args"])
    recorded.command = manifest["command"]
    if manifest.get("version") != __version__:
        log.warning("manifest written by version %s, running %s", manifest.get("version"), __version__)
    if args.out:
        recorded.out = args.out
    return COMMANDS[recorded.command](recorded)


COMMANDS = {
    "generate": cmd_generate,
    "benchmark": cmd_benchmark,
    "gamma-sweep": cmd_gamma_sweep,
    "shift": cmd_shift,
    "identifiability": cmd_identifiability,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except SemSpecParseError as exc:
        print(f"kanchor: spec parse error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"kanchor: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
