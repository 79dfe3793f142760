"""Command-line entry point: ``dmimo-pairing {run,snapshot,calibrate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .channel import (
    CALIBRATION_DROPS,
    CALIBRATION_SEED,
    DENSE_TARGET_SNR_DB,
    SPARSE_TARGET_SNR_DB,
    calibration_sweep,
    dense_config,
    sparse_config,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    Scheme,
    drop_for,
    emit_pairing_snapshot,
    load_config,
    run_experiment,
    run_scheme,
    write_outputs,
)
from .network import InvalidInputError

log = logging.getLogger("dmimo_pairing")


def _schemes(text: str) -> tuple[Scheme, ...]:
    try:
        return tuple(Scheme(s.strip()) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{exc}; choose from {[s.value for s in Scheme]}") from exc


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.schemes is not None:
        changes["schemes"] = args.schemes
    if args.output is not None:
        changes["output_path"] = args.output
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if getattr(args, "drops", None) is not None:
        changes["num_drops"] = args.drops
    return replace(cfg, **changes) if changes else cfg


def _format_summary(summary: dict) -> str:
    lines = [f"{'scheme':<11} {'b_tot':>5} {'drops':>5} {'flag':>4} {'mean_rate':>12} {'worst_rate':>12} {'/OPT':>6}"]
    for row in summary["schemes"]:
        mean = row["mean_rate_bps"]
        worst = row["worst_rate_bps"]
        ratio = row.get("ratio_to_opt_mean")
        lines.append(
            f"{row['scheme']:<11} {row['b_tot']:>5} {row['drops']:>5} {row['flagged']:>4} "
            f"{mean if mean is not None else float('nan'):>12.1f} "
            f"{worst if worst is not None else float('nan'):>12.1f} "
            f"{ratio if ratio is not None else float('nan'):>6.3f}"
        )
    if summary.get("skipped"):
        lines.append(f"skipped (size guard): {', '.join(summary['skipped'])}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = run_experiment(cfg)
    paths = write_outputs(result, cfg.output_path)
    print(_format_summary(result.summary))
    print(f"wrote {paths['csv']}, {paths['summary']}, {paths['timing']}")
    return 0


def cmd_snapshot(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    scheme = Scheme(args.scheme)
    budget = args.budget if args.budget is not None else cfg.budgets[0]
    cfg = replace(cfg, budgets=(budget,))
    if not 0 <= args.drop_index < cfg.num_drops:
        raise ConfigError(f"drop index must lie in [0, {cfg.num_drops})")
    drop = drop_for(cfg, args.drop_index)
    record = run_scheme(cfg, scheme, budget, drop, args.drop_index, cfg.base_seed + args.drop_index)
    text = json.dumps(emit_pairing_snapshot(record, drop), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_calibrate(args) -> int:
    presets = {"dense": (dense_config, DENSE_TARGET_SNR_DB), "sparse": (sparse_config, SPARSE_TARGET_SNR_DB)}
    make, default_target = presets[args.preset]
    cfg = make(m_aps=args.aps, k_ues=args.ues)
    target = args.target_db if args.target_db is not None else default_target
    rows = calibration_sweep(cfg, args.exponents, target, args.drops, args.seed)
    print(f"preset={args.preset} side={cfg.side_length_m:g} m target={target:g} dB drops={args.drops}")
    print(f"{'exponent':>8} {'PL0_dB_at_1m':>13} {'mean_ref_snr_now':>17}")
    for r in rows:
        print(f"{r['pathloss_exponent']:>8.2f} {r['pathloss_ref_db_at_1m']:>13.4f} "
              f"{r['mean_reference_snr_db_at_current_ref']:>17.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmimo-pairing", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML experiment config")
        sp.add_argument("--seed", type=int, help="override base_seed")
        sp.add_argument("--schemes", type=_schemes, help="comma-separated scheme list")
        sp.add_argument("--output", help="output path")

    run = sub.add_parser("run", help="run a Monte-Carlo experiment and write CSV results")
    common(run)
    run.add_argument("--workers", type=int)
    run.add_argument("--drops", type=int, help="override num_drops")
    run.set_defaults(func=cmd_run)

    snap = sub.add_parser("snapshot", help="write the pairing of one drop as JSON")
    common(snap)
    snap.add_argument("--drop-index", type=int, default=0)
    snap.add_argument("--scheme", default=Scheme.APPROX.value, choices=[s.value for s in Scheme])
    snap.add_argument("--budget", type=int, help="b_tot (default: first configured budget)")
    snap.set_defaults(func=cmd_snapshot)

    cal = sub.add_parser("calibrate", help="path-loss intercept sweep for a target reference SNR")
    cal.add_argument("--preset", choices=["dense", "sparse"], default="dense")
    cal.add_argument("--exponents", type=_floats, default=[3.0, 3.5, 3.7, 4.0])
    cal.add_argument("--target-db", type=float)
    cal.add_argument("--drops", type=int, default=CALIBRATION_DROPS)
    cal.add_argument("--seed", type=int, default=CALIBRATION_SEED)
    cal.add_argument("--aps", type=int, default=6)
    cal.add_argument("--ues", type=int, default=6)
    cal.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
