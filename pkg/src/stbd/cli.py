"""Command line entry point: ``stbd <experiment> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .errors import StbdError

log = logging.getLogger("stbd")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--out", type=Path, help="output CSV path")
    common.add_argument("--realizations", type=int, help="channel realizations")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stbd", description=__doc__)
    sub = p.add_subparsers(dest="experiment", required=True)
    helps = {
        "rate-region": "ergodic two-user rate region at one P_max/eta",
        "sum-rate": "ergodic sum rate versus P_max/eta",
        "ber": "bit error rate versus P_max/eta",
        "singvals": "user-scaling study: sum rate, SNR coefficient, singular values",
        "alloc-demo": "power allocation on one seeded channel draw",
    }
    for name in harness.EXPERIMENTS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "ber":
            sp.add_argument("--qam", type=int, help="QAM order (0: adaptive)")
    return p


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    for opt, attr in (("seed", "seed"), ("realizations", "realizations"), ("threads", "threads")):
        value = getattr(args, opt)
        if value is not None:
            setattr(cfg, attr, value)
    if args.out is not None:
        cfg.output = str(args.out)
    if getattr(args, "qam", None) is not None:
        cfg.qam_order = args.qam
    if not 0 <= cfg.seed < 2**64:
        raise StbdError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    return cfg


def run(experiment: str, cfg: harness.ExperimentConfig) -> list[Path]:
    """Run one experiment and write its CSV file(s) plus a manifest."""
    out = Path(cfg.output)
    if experiment == "singvals":
        tables = harness.run_singular_values(cfg)
        paths = [harness.emit_csv(tables["sum_rate"], out)]
        for name in ("snr_coeff", "singular_values"):
            paths.append(harness.emit_csv(tables[name], out.with_name(f"{out.stem}_{name}{out.suffix}")))
    else:
        runner = {
            "rate-region": harness.run_rate_region,
            "sum-rate": harness.run_sum_rate,
            "ber": harness.run_ber,
            "alloc-demo": harness.run_alloc_demo,
        }[experiment]
        paths = [harness.emit_csv(runner(cfg), out)]
    paths.append(harness.write_manifest(cfg, experiment, paths))
    return paths


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        paths = run(args.experiment, cfg)
    except (StbdError, OSError) as exc:
        print(f"stbd: error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
