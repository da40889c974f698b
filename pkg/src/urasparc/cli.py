"""Command line entry point: simulate, sweep, thresholds, potential."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import potential as pot
from .harness import GridSpec, SimOptions, run_campaign, simulate_trial, trial_to_json
from .model import (ConfigError, SystemConfig, check_config, load_config,
                    read_document)
from .sparc import DictionaryTooLarge

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE = 0, 2, 3


def _load_grid(path) -> GridSpec:
    doc = read_document(path)
    if "base" not in doc:
        # a plain SystemConfig document is a one-cell grid
        return GridSpec(check_config(SystemConfig.from_dict(doc)), {})
    try:
        grid = GridSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    check_config(grid.base)
    return grid


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = _outdir(args)
    seed = config.master_seed if args.seed is None else args.seed
    with open(out / "amp_trace.jsonl", "w") as trace:
        rep = simulate_trial(config, seed, SimOptions(), trace=trace)
    if rep.error and "dictionary too large" in rep.error:
        print(rep.error, file=sys.stderr)
        return EXIT_RESOURCE
    text = trial_to_json(rep)
    (out / "trial.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = _load_grid(args.config)
    seed = grid.base.master_seed if args.seed is None else args.seed
    report = run_campaign(grid, args.trials, seed, args.parallel)
    out = _outdir(args)
    if args.format in ("csv", "both"):
        (out / "campaign.csv").write_text(report.to_csv())
    if args.format in ("json", "both"):
        (out / "campaign.json").write_text(report.to_json() + "\n")
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_thresholds(args) -> int:
    rep = pot.threshold_report(args.alpha, args.E_in, K_a=args.K_a, snr=args.snr, J=args.J,
                               with_onset=args.onset)
    text = json.dumps(rep.to_dict(), indent=2)
    if args.out:
        (_outdir(args) / "thresholds.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_potential(args) -> int:
    if args.kind == "asymptotic":
        if args.S is None or args.alpha is None:
            raise ConfigError("asymptotic potential needs --S and --alpha")
        curve = pot.limit_curve(args.S, args.E_in, args.alpha)
        alpha = args.alpha
        K_a = J = None
    else:
        if args.J is None or args.K_a is None or args.S is None:
            raise ConfigError("finite potential needs --J, --K-a and --S (inner sum rate)")
        curve = pot.finite_curve(R_in=args.S / args.K_a, J=args.J, K_a=args.K_a,
                                 P_hat=2.0 * args.J * args.E_in)
        alpha = args.J / math.log2(args.K_a) if args.K_a > 1 else None
        K_a, J = args.K_a, args.J
    mins = pot.find_minimizers(curve)
    out = _outdir(args)
    bits = curve.in_bits()
    with open(out / "potential.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "value_bits", "kind"])
        for e, v in zip(curve.eta, bits):
            w.writerow([repr(float(e)), repr(float(v)), curve.kind])
    side = {"minimizers": asdict(mins)}
    if alpha is not None and alpha > 1:
        side["thresholds"] = pot.threshold_report(alpha, args.E_in, K_a=K_a, J=J).to_dict()
    (out / "potential.json").write_text(json.dumps(side, indent=2) + "\n")
    print(json.dumps(side, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urasparc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON or TOML document")
        sp.add_argument("--seed", type=int, default=None, help="overrides master_seed")
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("simulate", help="one trial with full AMP trace")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="Monte Carlo campaign over a parameter grid")
    common(sp)
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--parallel", type=int, default=1)
    sp.add_argument("--format", choices=("csv", "json", "both"), default="both")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("thresholds", help="closed-form thresholds")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--E-in", dest="E_in", type=float, required=True)
    sp.add_argument("--K-a", dest="K_a", type=int)
    sp.add_argument("--snr", type=float)
    sp.add_argument("--J", type=int)
    sp.add_argument("--onset", action="store_true",
                    help="also locate the local-minimum onset numerically")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_thresholds)

    sp = sub.add_parser("potential", help="export a potential curve as CSV")
    sp.add_argument("--kind", choices=("finite", "asymptotic"), default="asymptotic")
    sp.add_argument("--S", type=float, help="(inner) sum rate")
    sp.add_argument("--E-in", dest="E_in", type=float, required=True)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--K-a", dest="K_a", type=int)
    sp.add_argument("--J", type=int)
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_potential)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DictionaryTooLarge, MemoryError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
