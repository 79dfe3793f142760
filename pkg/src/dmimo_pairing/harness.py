"""Monte-Carlo experiment runner.

Every drop gets seed ``base_seed + index`` and every scheme runs on the same
channel, so per-drop comparisons are paired.  Results come out as one CSV row
per (drop, scheme, budget); wall-clock timings go to a separate sidecar file so
the main CSV is byte-for-byte reproducible.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import BaselineKind, baseline_scheme
from .channel import DropConfig, Drop, dense_config, generate_drop, sparse_config
from .conic import SolverTolerances
from .greedy import greedy_pairing
from .misocp import MisocpConfig, opt_scheme
from .network import (
    ConstraintVariant,
    InvalidInputError,
    PairingConfig,
    PowerBudget,
    shannon_rate,
)
from .precoding import BisectionParams

log = logging.getLogger(__name__)


class ConfigError(InvalidInputError):
    pass


class Scheme(str, enum.Enum):
    OPT = "opt"
    OPT_PER_UE = "opt_per_ue"
    APPROX = "approx"
    CLUST1 = "clust1"
    CLUST2 = "clust2"
    RANDOM = "random"

    @property
    def exact(self) -> bool:
        return self in (Scheme.OPT, Scheme.OPT_PER_UE)


@dataclass(frozen=True)
class ExperimentConfig:
    drop: DropConfig = field(default_factory=dense_config)
    schemes: tuple[Scheme, ...] = (Scheme.OPT, Scheme.APPROX, Scheme.CLUST1, Scheme.RANDOM)
    budgets: tuple[int, ...] = (6,)
    approx_variant: ConstraintVariant = ConstraintVariant.TOTAL
    bisection: BisectionParams = BisectionParams()
    misocp: MisocpConfig = MisocpConfig()
    p_max_watt: float = 1.0
    num_drops: int = 20
    base_seed: int = 0
    output_path: str = "results.csv"
    workers: int = 1
    opt_max_mk: int = 16

    def __post_init__(self):
        if self.num_drops < 1:
            raise ConfigError("num_drops must be at least 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if not self.budgets:
            raise ConfigError("at least one budget is required")
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "approx_variant", ConstraintVariant(self.approx_variant))
        K, M = self.drop.k_ues, self.drop.m_aps
        for b in self.budgets:
            if not K <= b <= M * K:
                raise ConfigError(f"budget {b} must lie in [K, MK] = [{K}, {M * K}]")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        PowerBudget(self.p_max_watt)

    def skipped(self, scheme: Scheme) -> bool:
        return scheme.exact and self.drop.m_aps * self.drop.k_ues > self.opt_max_mk


@dataclass
class RunRecord:
    drop_index: int
    seed: int
    scheme: str
    b_tot: int
    t_star: float
    per_ue_rate_bps: float
    active_pairs_total: int
    active_pairs_per_ue: list[int]
    pairing: list[list[int]]
    wall_time_s: float = 0.0
    solver_stats: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    precoder: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return not self.flags


CSV_COLUMNS = [
    "drop_index", "seed", "scheme", "b_tot", "t_star", "per_ue_rate_bps",
    "active_pairs_total", "active_pairs_per_ue", "pairing", "solver_stats", "flags",
]
TIMING_COLUMNS = ["drop_index", "scheme", "b_tot", "wall_time_s", "bnb_wall_time_s"]


def _deterministic_stats(stats: dict) -> dict:
    return {k: v for k, v in stats.items() if "time" not in k or k == "time_limited"}


def _record_row(r: RunRecord) -> dict:
    return {
        "drop_index": r.drop_index,
        "seed": r.seed,
        "scheme": r.scheme,
        "b_tot": r.b_tot,
        "t_star": repr(float(r.t_star)),
        "per_ue_rate_bps": repr(float(r.per_ue_rate_bps)),
        "active_pairs_total": r.active_pairs_total,
        "active_pairs_per_ue": " ".join(map(str, r.active_pairs_per_ue)),
        "pairing": "/".join("".join(map(str, row)) for row in r.pairing),
        "solver_stats": json.dumps(_deterministic_stats(r.solver_stats), sort_keys=True),
        "flags": ";".join(r.flags),
    }


def record_from_row(row: dict) -> RunRecord:
    return RunRecord(
        drop_index=int(row["drop_index"]),
        seed=int(row["seed"]),
        scheme=row["scheme"],
        b_tot=int(row["b_tot"]),
        t_star=float(row["t_star"]),
        per_ue_rate_bps=float(row["per_ue_rate_bps"]),
        active_pairs_total=int(row["active_pairs_total"]),
        active_pairs_per_ue=[int(x) for x in row["active_pairs_per_ue"].split()],
        pairing=[[int(c) for c in r] for r in row["pairing"].split("/")],
        solver_stats=json.loads(row["solver_stats"]),
        flags=[f for f in row["flags"].split(";") if f],
    )


def run_scheme(cfg: ExperimentConfig, scheme: Scheme, budget: int, drop: Drop, drop_index: int, seed: int) -> RunRecord:
    h = drop.channel.entries
    K, M = h.shape
    p_max = PowerBudget(cfg.p_max_watt)
    stats: dict[str, Any] = {}
    flags: list[str] = []
    start = time.perf_counter()
    if scheme.exact:
        variant = ConstraintVariant.TOTAL if scheme is Scheme.OPT else ConstraintVariant.PER_UE
        res = opt_scheme(h, PairingConfig(variant, budget), p_max, cfg.bisection, cfg.misocp)
        sol, pairing = res.solution, res.pairing
        stats = res.stats.as_dict()
        stats["bnb_wall_time_s"] = stats.pop("wall_time_s")
    elif scheme is Scheme.APPROX:
        res = greedy_pairing(h, PairingConfig(cfg.approx_variant, budget), p_max, cfg.bisection, cfg.misocp.tol)
        sol, pairing = res.solution, res.pairing
        stats = {"removals": len(res.trace.removal_sequence),
                 "removal_sequence": [list(mk) for mk in res.trace.removal_sequence]}
    else:
        res = baseline_scheme(h, BaselineKind(scheme.value), budget, p_max, cfg.bisection, seed, cfg.misocp.tol)
        sol, pairing = res.solution, res.pairing
    wall = time.perf_counter() - start
    flags.extend(sol.flags)
    stats["bisection_iterations"] = sol.iterations_used
    stats["numerical_failures"] = stats.get("numerical_failures", 0) + sol.numerical_failures
    return RunRecord(
        drop_index=drop_index,
        seed=seed,
        scheme=scheme.value,
        b_tot=budget,
        t_star=sol.t_star,
        per_ue_rate_bps=shannon_rate(sol.t_star, drop.channel.bandwidth_hz),
        active_pairs_total=pairing.active_pairs,
        active_pairs_per_ue=pairing.active_per_ue,
        pairing=pairing.entries.tolist(),
        wall_time_s=wall,
        solver_stats=stats,
        flags=flags,
        precoder=np.asarray(sol.precoder.entries),
    )


def drop_for(cfg: ExperimentConfig, index: int) -> Drop:
    return generate_drop(replace(cfg.drop, seed=cfg.base_seed + index))


def run_drop(cfg: ExperimentConfig, index: int) -> list[RunRecord]:
    seed = cfg.base_seed + index
    drop = drop_for(cfg, index)
    out = []
    for scheme in cfg.schemes:
        if cfg.skipped(scheme):
            continue
        for budget in cfg.budgets:
            try:
                out.append(run_scheme(cfg, scheme, budget, drop, index, seed))
            except Exception as exc:
                log.exception("scheme %s failed on drop %d (b_tot=%d)", scheme.value, index, budget)
                K = drop.channel.num_ues
                out.append(RunRecord(index, seed, scheme.value, budget, 0.0, 0.0, 0, [0] * K, [],
                                     flags=[f"failed: {type(exc).__name__}"]))
    return out


def _run_drop_star(args):
    return run_drop(*args)


def summarize(records: list[RunRecord], cfg: Optional[ExperimentConfig] = None) -> dict:
    """Per (scheme, budget) mean and worst rate over unflagged records, plus ratios to OPT."""
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.b_tot), []).append(r)
    opt = {(r.drop_index, r.b_tot): r for r in records if r.scheme == Scheme.OPT.value and r.ok}
    rows = []
    for (scheme, b), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        good = [r for r in rs if r.ok]
        entry = {
            "scheme": scheme,
            "b_tot": b,
            "drops": len(rs),
            "flagged": len(rs) - len(good),
            "mean_t_star": float(np.mean([r.t_star for r in good])) if good else None,
            "mean_rate_bps": float(np.mean([r.per_ue_rate_bps for r in good])) if good else None,
            "worst_rate_bps": float(min(r.per_ue_rate_bps for r in good)) if good else None,
        }
        paired = [(r, opt[r.drop_index, b]) for r in good if (r.drop_index, b) in opt]
        if paired:
            mine = np.mean([r.per_ue_rate_bps for r, _ in paired])
            ref = np.mean([o.per_ue_rate_bps for _, o in paired])
            entry["ratio_to_opt_mean"] = float(mine / ref) if ref > 0 else None
            ratios = [r.per_ue_rate_bps / o.per_ue_rate_bps for r, o in paired if o.per_ue_rate_bps > 0]
            entry["ratio_to_opt_worst"] = float(min(ratios)) if ratios else None
        rows.append(entry)
    summary = {"schemes": rows}
    if cfg is not None:
        summary["skipped"] = [s.value for s in cfg.schemes if cfg.skipped(s)]
    return summary


@dataclass
class ExperimentResult:
    records: list[RunRecord]
    summary: dict


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    jobs = [(cfg, i) for i in range(cfg.num_drops)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            # map() yields in submission order whatever the completion order
            per_drop = list(pool.map(_run_drop_star, jobs))
    else:
        per_drop = [run_drop(*job) for job in jobs]
    records = [r for rs in per_drop for r in rs]
    return ExperimentResult(records, summarize(records, cfg))


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(_record_row(r))
    return buf.getvalue()


def records_from_csv(text: str) -> list[RunRecord]:
    return [record_from_row(row) for row in csv.DictReader(io.StringIO(text))]


def timings_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMING_COLUMNS)
    for r in records:
        writer.writerow([r.drop_index, r.scheme, r.b_tot, f"{r.wall_time_s:.6f}",
                         r.solver_stats.get("bnb_wall_time_s", "")])
    return buf.getvalue()


def write_outputs(result: ExperimentResult, output_path: str | Path) -> dict[str, Path]:
    out = Path(output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out,
        "summary": out.with_suffix(".summary.json"),
        "timing": out.with_suffix(".timing.csv"),
    }
    paths["csv"].write_text(records_to_csv(result.records))
    paths["summary"].write_text(json.dumps(result.summary, indent=2) + "\n")
    paths["timing"].write_text(timings_to_csv(result.records))
    return paths


def emit_pairing_snapshot(record: RunRecord, drop: Drop) -> dict:
    """Positions plus the active AP-UE edges of one record, for plotting."""
    alpha = np.asarray(record.pairing)
    edges = []
    for m, k in zip(*np.nonzero(alpha)):
        edge = {"ap": int(m), "ue": int(k)}
        if record.precoder is not None:
            edge["power_w"] = float(abs(record.precoder[m, k]) ** 2)
        edges.append(edge)
    return {
        "drop_index": record.drop_index,
        "seed": record.seed,
        "scheme": record.scheme,
        "b_tot": record.b_tot,
        "t_star": record.t_star,
        "per_ue_rate_bps": record.per_ue_rate_bps,
        "ap_positions": drop.ap_positions.tolist(),
        "ue_positions": drop.ue_positions.tolist(),
        "active_pairs_per_ue": [int(c) for c in alpha.sum(axis=0)],
        "edges": edges,
    }


# -- configuration files ------------------------------------------------------

_TOP_KEYS = {f.name for f in fields(ExperimentConfig)} - {"drop", "bisection", "misocp", "output_path"} | {
    "output", "drop", "bisection", "misocp",
}


def _build(cls, table: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}]: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    drop_doc = dict(doc.pop("drop", {}))
    preset = drop_doc.pop("preset", "dense")
    base = {"dense": dense_config(), "sparse": sparse_config()}.get(preset)
    if base is None:
        raise ConfigError(f"unknown drop preset {preset!r}")
    drop = _build(DropConfig, {**asdict(base), **drop_doc}, "drop")
    bisection = _build(BisectionParams, doc.pop("bisection", {}), "bisection")
    mis_doc = dict(doc.pop("misocp", {}))
    tol_doc = mis_doc.pop("tolerances", {})
    tol = _build(SolverTolerances, tol_doc, "misocp.tolerances")
    misocp = _build(MisocpConfig, {**mis_doc, "tol": tol}, "misocp")
    if "output" in doc:
        doc["output_path"] = doc.pop("output")
    for key in ("schemes", "budgets"):
        if key in doc:
            doc[key] = tuple(doc[key])
    try:
        return ExperimentConfig(drop=drop, bisection=bisection, misocp=misocp, **doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(doc)
