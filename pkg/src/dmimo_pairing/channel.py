"""Random network drops and noise-normalized channels.

Large-scale gain follows a log-distance path loss with log-normal shadowing,
small-scale fading is Rayleigh.  The path-loss intercept of the two reference
deployments is calibrated so that the mean per-drop reference SNR hits the
target operating point (26 dB for the 250 m square, 16 dB for the 1000 m one).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .network import (
    DEFAULT_BANDWIDTH_HZ,
    DEFAULT_NOISE_DENSITY_DBM_PER_HZ,
    ChannelMatrix,
    InvalidInputError,
    PowerBudget,
)

MIN_DISTANCE_M = 1.0
DENSE_TARGET_SNR_DB = 26.0
SPARSE_TARGET_SNR_DB = 16.0
CALIBRATION_DROPS = 100
CALIBRATION_SEED = 0

# Output of calibrate_pathloss_ref(...) for the presets below, frozen so drops
# do not depend on re-running the sweep. tests/test_channel.py recomputes them.
DENSE_PATHLOSS_REF_DB = 60.08
SPARSE_PATHLOSS_REF_DB = 47.80


@dataclass(frozen=True)
class DropConfig:
    m_aps: int = 6
    k_ues: int = 6
    side_length_m: float = 250.0
    pathloss_exponent: float = 3.7
    pathloss_ref_db_at_1m: float = DENSE_PATHLOSS_REF_DB
    shadowing_sigma_db: float = 8.0
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ
    noise_density_dbm_per_hz: float = DEFAULT_NOISE_DENSITY_DBM_PER_HZ
    seed: int = 0

    def __post_init__(self):
        if self.m_aps < 1 or self.k_ues < 1:
            raise InvalidInputError("need at least one AP and one UE")
        if not self.side_length_m > 0:
            raise InvalidInputError("side length must be positive")
        if not self.pathloss_exponent > 2:
            raise InvalidInputError("path-loss exponent must exceed 2")
        if self.shadowing_sigma_db < 0:
            raise InvalidInputError("shadowing sigma must be non-negative")
        if not self.bandwidth_hz > 0:
            raise InvalidInputError("bandwidth must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")

    @property
    def noise_power_w(self) -> float:
        return 10 ** ((self.noise_density_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz


def dense_config(**overrides) -> DropConfig:
    return replace(DropConfig(side_length_m=250.0, pathloss_ref_db_at_1m=DENSE_PATHLOSS_REF_DB), **overrides)


def sparse_config(**overrides) -> DropConfig:
    return replace(DropConfig(side_length_m=1000.0, pathloss_ref_db_at_1m=SPARSE_PATHLOSS_REF_DB), **overrides)


@dataclass(frozen=True)
class Drop:
    ap_positions: np.ndarray
    ue_positions: np.ndarray
    channel: ChannelMatrix
    config: DropConfig | None = None

    def distances(self) -> np.ndarray:
        """K x M AP-UE distances in meters (before clamping)."""
        return np.linalg.norm(self.ue_positions[:, None, :] - self.ap_positions[None, :, :], axis=-1)


def large_scale_gain_db(cfg: DropConfig, distance_m: np.ndarray, shadowing_db: np.ndarray) -> np.ndarray:
    d = np.maximum(distance_m, MIN_DISTANCE_M)
    return -(cfg.pathloss_ref_db_at_1m + 10.0 * cfg.pathloss_exponent * np.log10(d)) + shadowing_db


def generate_drop(cfg: DropConfig) -> Drop:
    """Uniform AP/UE positions on the square and the matching normalized channel."""
    rng = np.random.default_rng(int(cfg.seed))
    M, K, R = cfg.m_aps, cfg.k_ues, cfg.side_length_m
    aps = rng.uniform(0.0, R, size=(M, 2))
    ues = rng.uniform(0.0, R, size=(K, 2))
    dist = np.linalg.norm(ues[:, None, :] - aps[None, :, :], axis=-1)
    shadowing = rng.normal(0.0, cfg.shadowing_sigma_db, size=(K, M))
    fading = (rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))) / math.sqrt(2.0)
    gain = 10 ** (large_scale_gain_db(cfg, dist, shadowing) / 10.0)
    h = np.sqrt(gain / cfg.noise_power_w) * fading
    return Drop(aps, ues, ChannelMatrix(h, cfg.bandwidth_hz, cfg.noise_density_dbm_per_hz), cfg)


def reference_snr_db(drop: Drop | ChannelMatrix | np.ndarray, p_max=PowerBudget()) -> float:
    """Mean link SNR in dB with every AP splitting its full power evenly over the UEs."""
    ch = drop.channel if isinstance(drop, Drop) else drop
    h = np.asarray(getattr(ch, "entries", ch))
    P = float(getattr(p_max, "p_max_watt", p_max))
    K = h.shape[0]
    return float(10.0 * np.log10(np.mean((P / K) * np.abs(h) ** 2)))


def mean_reference_snr_db(cfg: DropConfig, num_drops: int = CALIBRATION_DROPS,
                          base_seed: int = CALIBRATION_SEED, p_max=PowerBudget()) -> float:
    """Average of the per-drop reference SNR (dB) over seeds ``base_seed + i``."""
    return float(np.mean([
        reference_snr_db(generate_drop(replace(cfg, seed=base_seed + i)), p_max)
        for i in range(num_drops)
    ]))


def calibrate_pathloss_ref(cfg: DropConfig, target_db: float, num_drops: int = CALIBRATION_DROPS,
                           base_seed: int = CALIBRATION_SEED, p_max=PowerBudget()) -> float:
    """Path-loss intercept (dB at 1 m) that puts the mean reference SNR at ``target_db``.

    With the seeds held fixed every per-drop reference SNR shifts one-for-one
    with the intercept, so one Monte-Carlo pass at a zero intercept suffices.
    """
    at_zero = mean_reference_snr_db(replace(cfg, pathloss_ref_db_at_1m=0.0), num_drops, base_seed, p_max)
    return at_zero - target_db


def calibration_sweep(cfg: DropConfig, exponents, target_db: float, num_drops: int = CALIBRATION_DROPS,
                      base_seed: int = CALIBRATION_SEED, p_max=PowerBudget()) -> list[dict]:
    rows = []
    for n in exponents:
        c = replace(cfg, pathloss_exponent=float(n))
        ref = calibrate_pathloss_ref(c, target_db, num_drops, base_seed, p_max)
        rows.append({
            "pathloss_exponent": float(n),
            "pathloss_ref_db_at_1m": ref,
            "mean_reference_snr_db_at_current_ref": mean_reference_snr_db(c, num_drops, base_seed, p_max),
        })
    return rows


def drop_to_dict(drop: Drop) -> dict:
    h = drop.channel.entries
    return {
        "config": asdict(drop.config) if drop.config is not None else None,
        "ap_positions": drop.ap_positions.tolist(),
        "ue_positions": drop.ue_positions.tolist(),
        "channel": {
            "bandwidth_hz": drop.channel.bandwidth_hz,
            "noise_density_dbm_per_hz": drop.channel.noise_density_dbm_per_hz,
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in h],
        },
    }


def drop_from_dict(doc: dict) -> Drop:
    ch = doc["channel"]
    entries = np.array([[complex(re, im) for re, im in row] for row in ch["entries"]])
    cfg = DropConfig(**doc["config"]) if doc.get("config") else None
    return Drop(
        np.asarray(doc["ap_positions"], float),
        np.asarray(doc["ue_positions"], float),
        ChannelMatrix(entries, ch["bandwidth_hz"], ch["noise_density_dbm_per_hz"]),
        cfg,
    )


def drop_to_json(drop: Drop) -> str:
    return json.dumps(drop_to_dict(drop), indent=1)


def drop_from_json(text: str) -> Drop:
    return drop_from_dict(json.loads(text))
