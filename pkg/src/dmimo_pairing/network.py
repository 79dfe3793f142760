"""Core domain types and physical-layer arithmetic.

Channels are stored noise-normalized (every entry already divided by the
noise amplitude), so SINR denominators carry unit noise power.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ZERO_TOL = 1e-6
DEFAULT_BANDWIDTH_HZ = 200e3
DEFAULT_NOISE_DENSITY_DBM_PER_HZ = -174.0


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


class ConstraintVariant(str, enum.Enum):
    TOTAL = "total"
    PER_UE = "per_ue"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelMatrix:
    """Noise-normalized K x M channel; row k is the channel seen by UE k."""

    entries: np.ndarray
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ
    noise_density_dbm_per_hz: float = DEFAULT_NOISE_DENSITY_DBM_PER_HZ

    def __post_init__(self):
        h = np.asarray(self.entries, dtype=complex)
        if h.ndim != 2 or min(h.shape) < 1:
            raise InvalidInputError(f"channel must be a non-empty 2-D matrix, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise InvalidInputError("channel entries must be finite")
        if self.bandwidth_hz <= 0:
            raise InvalidInputError("bandwidth must be positive")
        object.__setattr__(self, "entries", _readonly(h))

    @property
    def num_ues(self) -> int:
        return self.entries.shape[0]

    @property
    def num_aps(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class PrecoderMatrix:
    """M x K precoder in sqrt(watt); column k is UE k's beamformer."""

    entries: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.entries, dtype=complex)
        if w.ndim != 2 or min(w.shape) < 1:
            raise InvalidInputError(f"precoder must be a non-empty 2-D matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("precoder entries must be finite")
        object.__setattr__(self, "entries", _readonly(w))

    @classmethod
    def zeros(cls, num_aps: int, num_ues: int) -> "PrecoderMatrix":
        return cls(np.zeros((num_aps, num_ues), dtype=complex))


@dataclass(frozen=True)
class PowerBudget:
    p_max_watt: float = 1.0

    def __post_init__(self):
        if not self.p_max_watt > 0:
            raise InvalidInputError("per-AP power budget must be positive")


def per_ue_cap(budget: int, num_ues: int) -> int:
    """Per-UE pairing cap for the PerUE variant (floor division)."""
    return budget // num_ues


def pairing_violations(
    entries: np.ndarray, variant: ConstraintVariant | str, budget: int
) -> list[str]:
    """Return human-readable reasons why a binary pairing is invalid (empty if valid)."""
    a = np.asarray(entries)
    variant = ConstraintVariant(variant)
    problems = []
    if a.ndim != 2:
        return [f"pairing must be 2-D, got shape {a.shape}"]
    if not np.all((a == 0) | (a == 1)):
        problems.append("entries must be binary")
    cols = a.sum(axis=0)
    empty = [int(k) for k in np.flatnonzero(cols < 1)]
    if empty:
        problems.append(f"UE columns {empty} have no serving AP")
    if variant is ConstraintVariant.TOTAL:
        if a.sum() > budget:
            problems.append(f"total pairings {int(a.sum())} exceed budget {budget}")
    else:
        cap = per_ue_cap(budget, a.shape[1])
        if budget < a.shape[1]:
            problems.append(f"per-UE variant needs budget >= K={a.shape[1]}, got {budget}")
        over = [int(k) for k in np.flatnonzero(cols > cap)]
        if over:
            problems.append(f"UE columns {over} exceed the per-UE cap {cap}")
    return problems


@dataclass(frozen=True)
class PairingMatrix:
    """Binary M x K AP-UE pairing with its data-sharing constraint."""

    entries: np.ndarray
    constraint_variant: ConstraintVariant = ConstraintVariant.TOTAL
    budget: int = 0

    def __post_init__(self):
        a = np.asarray(self.entries)
        variant = ConstraintVariant(self.constraint_variant)
        budget = int(self.budget) if self.budget else int(a.size)
        if budget < 1:
            raise InvalidInputError("budget must be a positive integer")
        problems = pairing_violations(a, variant, budget)
        if problems:
            raise InvalidInputError("invalid pairing: " + "; ".join(problems))
        object.__setattr__(self, "entries", _readonly(a.astype(np.int8)))
        object.__setattr__(self, "constraint_variant", variant)
        object.__setattr__(self, "budget", budget)

    @property
    def zero_set(self) -> frozenset[tuple[int, int]]:
        return zero_set_from_pairing(self.entries)

    @property
    def active_pairs(self) -> int:
        return int(self.entries.sum())

    @property
    def active_per_ue(self) -> list[int]:
        return [int(c) for c in self.entries.sum(axis=0)]


def zero_set_from_pairing(entries: np.ndarray) -> frozenset[tuple[int, int]]:
    a = np.asarray(entries)
    return frozenset((int(m), int(k)) for m, k in zip(*np.nonzero(a == 0)))


def pairing_from_zero_set(num_aps: int, num_ues: int, zero_set) -> np.ndarray:
    a = np.ones((num_aps, num_ues), dtype=np.int8)
    for m, k in zero_set:
        a[m, k] = 0
    return a


@dataclass(frozen=True)
class SinrReport:
    per_ue_sinr: np.ndarray
    per_ap_power: np.ndarray
    min_sinr: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "per_ue_sinr", _readonly(np.asarray(self.per_ue_sinr, float)))
        object.__setattr__(self, "per_ap_power", _readonly(np.asarray(self.per_ap_power, float)))
        object.__setattr__(self, "min_sinr", float(self.per_ue_sinr.min()))


def _entries(x) -> np.ndarray:
    return np.asarray(getattr(x, "entries", x), dtype=complex)


def _check_dims(h: np.ndarray, w: np.ndarray) -> None:
    if h.ndim != 2 or w.ndim != 2 or h.shape != w.shape[::-1]:
        raise InvalidInputError(
            f"channel shape {h.shape} (K x M) does not match precoder shape {w.shape} (M x K)"
        )


def received_powers(H, W) -> np.ndarray:
    """K x K matrix whose (k, i) entry is |h_k w_i|^2."""
    h, w = _entries(H), _entries(W)
    _check_dims(h, w)
    return np.abs(h @ w) ** 2


def compute_sinr(H, W, k: int) -> float:
    """SINR of UE ``k`` under precoder ``W`` with unit noise power."""
    h, w = _entries(H), _entries(W)
    _check_dims(h, w)
    if not 0 <= k < h.shape[0]:
        raise InvalidInputError(f"UE index {k} out of range for K={h.shape[0]}")
    gains = np.abs(h[k] @ w) ** 2
    signal = gains[k]
    interference = np.delete(gains, k).sum()
    return float(signal / (1.0 + interference))


def all_sinr(H, W) -> np.ndarray:
    g = received_powers(H, W)
    signal = np.diag(g).copy()
    np.fill_diagonal(g, 0.0)
    return signal / (1.0 + g.sum(axis=1))


def per_ap_power(W, m: int) -> float:
    """Transmit power of AP ``m``: sum over UEs of |w_mk|^2."""
    w = _entries(W)
    if not 0 <= m < w.shape[0]:
        raise InvalidInputError(f"AP index {m} out of range for M={w.shape[0]}")
    return float(np.sum(np.abs(w[m]) ** 2))


def sinr_report(H, W) -> SinrReport:
    w = _entries(W)
    return SinrReport(all_sinr(H, w), np.sum(np.abs(w) ** 2, axis=1))


def shannon_rate(t: float, bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ) -> float:
    """Per-UE rate in bits/s for a common SINR ``t`` (linear)."""
    if t < 0:
        raise InvalidInputError(f"SINR must be non-negative, got {t}")
    if bandwidth_hz <= 0:
        raise InvalidInputError("bandwidth must be positive")
    return float(bandwidth_hz * np.log2(1.0 + t))


def pairing_support(W, zero_tol: float = DEFAULT_ZERO_TOL) -> np.ndarray:
    """Binary M x K matrix marking the entries of ``W`` with magnitude above ``zero_tol``."""
    if zero_tol <= 0:
        raise InvalidInputError("zero_tol must be positive")
    return (np.abs(_entries(W)) > zero_tol).astype(np.int8)


@dataclass(frozen=True)
class PairingConfig:
    """Data-sharing constraint: which variant of the pairing budget, and ``b_tot``."""

    variant: ConstraintVariant = ConstraintVariant.TOTAL
    budget: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variant", ConstraintVariant(self.variant))
        if int(self.budget) != self.budget or self.budget < 1:
            raise InvalidInputError(f"budget must be a positive integer, got {self.budget}")
        object.__setattr__(self, "budget", int(self.budget))

    def check(self, num_aps: int, num_ues: int) -> None:
        """Raise unless some covering pairing fits this budget on an M x K network."""
        if self.variant is ConstraintVariant.TOTAL and self.budget < num_ues:
            raise InvalidInputError(
                f"total budget {self.budget} cannot serve {num_ues} UEs with one AP each"
            )
        if self.variant is ConstraintVariant.PER_UE and per_ue_cap(self.budget, num_ues) < 1:
            raise InvalidInputError(f"per-UE budget {self.budget} gives a zero cap for {num_ues} UEs")

    def cap(self, num_ues: int) -> int:
        return per_ue_cap(self.budget, num_ues)

    def satisfied_by(self, entries: np.ndarray) -> bool:
        return not pairing_violations(entries, self.variant, self.budget)

    def pairing(self, entries: np.ndarray) -> PairingMatrix:
        return PairingMatrix(entries, self.variant, self.budget)
