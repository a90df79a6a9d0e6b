"""Command line entry point."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from .acquisition import CondProbs
from .certify.attack import best_attack
from .certify.bound import CertInput, certify_entropy
from .certify.finite_size import FiniteSizeParams, finite_size_min_entropy
from .config import PipelineConfig, dump_config, load_config
from .errors import QRNGError
from .experiments import EXPERIMENTS, run_experiment
from .pipeline import run_pipeline


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="selftest-qrng", description=__doc__)
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--seed", type=int, help="override the configured rng seed")
    p.add_argument("--out-dir", type=Path, help="override the configured output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("run", help="run the end-to-end pipeline")

    e = sub.add_parser("experiment", help="emit the CSV behind one figure")
    e.add_argument("name", help=f"one of {', '.join(EXPERIMENTS)}")

    c = sub.add_parser("certify-only", help="certify externally supplied statistics")
    c.add_argument("--probs", required=True, help="p(1|0),p(1|1)")
    c.add_argument("--omega", required=True, type=float)
    c.add_argument("--p-x1", type=float, help="defaults to the configured source value")
    c.add_argument("--n", type=int, help="block length for the finite-size total")
    c.add_argument("--convention", choices=("sum", "average"))
    c.add_argument("--attack", action="store_true",
                   help="validate the bound against the explicit-attack search")
    c.add_argument("--d-t", type=int, help="Fock truncation of the attack search")

    sub.add_parser("show-config", help="print the resolved configuration")
    return p


def _load(args) -> PipelineConfig:
    if args.config is None:
        raise QRNGError("--config is required (c and d of the finite-size bound have no defaults)")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out_dir is not None:
        cfg = cfg.replace(output=dataclasses.replace(cfg.output, out_dir=str(args.out_dir)))
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = _load(args)
        if args.command == "run":
            report, _, bits = run_pipeline(cfg, cfg.output.out_dir)
            print(json.dumps({"certified_rate_bps": report.rate,
                              "aggregate_certified_bits": report.aggregate_bits,
                              "fraction_above_threshold": report.fraction_above_threshold,
                              "extracted_bits": int(len(bits)),
                              "out_dir": cfg.output.out_dir}, indent=2))
        elif args.command == "experiment":
            text = run_experiment(args.name, cfg)
            out = Path(cfg.output.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"{args.name}.csv"
            path.write_text(text)
            print(path)
        elif args.command == "certify-only":
            p10, p11 = (float(v) for v in args.probs.split(","))
            p_x1 = cfg.source.p_x1 if args.p_x1 is None else args.p_x1
            conv = args.convention or cfg.certification.energy_convention
            inp = CertInput(CondProbs(p10, p11), args.omega, p_x1, conv)
            res = certify_entropy(inp)
            out = {"probs": [p10, p11], "omega": args.omega, "p_x1": p_x1, "h": res.h,
                   "method": res.method, "energy_convention": conv}
            if args.attack or cfg.certification.attack_check:
                cc = cfg.certification
                d_t = args.d_t or cc.d_t
                h_att, _ = best_attack(inp, d_t, cc.attack_budget, tolerance=cc.attack_tolerance)
                out["d_t"] = d_t
                out["attack_gap"] = None if math.isinf(h_att) else h_att - res.h
            if args.n:
                fsc = cfg.finite_size
                fs = FiniteSizeParams(args.n, fsc.epsilon, fsc.epsilon_prime, fsc.c, fsc.d)
                out["finite_size"] = {"n": args.n, "epsilon": fsc.epsilon, "c": fsc.c,
                                      "d": fsc.d}
                out["total_certified_bits"] = finite_size_min_entropy(res.h, fs)
            print(json.dumps(out, indent=2))
        elif args.command == "show-config":
            print(dump_config(cfg), end="")
    except (QRNGError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
