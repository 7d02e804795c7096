"""Domain types shared by every other module.

Channels and SUs are 0-indexed everywhere inside the library.  Anything that
is written for humans (reports, grids, CSV) is converted to 1-indexed labels
at the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when a scenario or one of its blocks violates an invariant.

    ``fields`` holds ``(field, message)`` pairs so callers can report every
    offending entry at once instead of stopping at the first one.
    """

    def __init__(self, fields: Sequence[tuple[str, str]]):
        self.fields = list(fields)
        lines = "; ".join(f"{name}: {msg}" for name, msg in self.fields)
        super().__init__(f"invalid configuration: {lines}")


class BudgetExceeded(RuntimeError):
    """An exact evaluation would enumerate more terms than allowed."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimingParams:
    """MAC timing constants.  Defaults are the values used in the numerical study.

    ``T``, ``v``, ``PD`` and ``t_r`` are seconds; the frame lengths are slots.
    """

    T: float = 0.1
    v: float = 20e-6
    PS: float = 450.0
    ACK: float = 20.0
    RTS: float = 20.0
    CTS: float = 20.0
    SIFS: float = 2.0
    DIFS: float = 10.0
    PD: float = 1e-6
    t_r: float = 80e-6

    def problems(self) -> list[tuple[str, str]]:
        out = []
        for name in ("T", "v", "PS", "ACK", "RTS", "CTS", "SIFS", "DIFS", "PD", "t_r"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                out.append((f"timing.{name}", f"must be a finite number >= 0, got {value!r}"))
        if not out:
            if self.T <= 0:
                out.append(("timing.T", "cycle length must be positive"))
            if self.v <= 0:
                out.append(("timing.v", "slot length must be positive"))
            elif self.PD >= self.v:
                out.append(("timing.PD", f"propagation delay {self.PD} must be shorter than a slot ({self.v})"))
        return out

    @property
    def cycle_slots(self) -> float:
        return self.T / self.v

    def reporting_time(self, n_su: int) -> float:
        return n_su * self.t_r


@dataclass(frozen=True)
class ScenarioConfig:
    """Channels, SUs and their radio statistics.

    ``snr`` is linear (N x M); configuration files carry dB and are converted
    by :func:`cogmac.config.validate_scenario`.
    """

    M: int
    N: int
    p_idle: np.ndarray
    snr: np.ndarray
    pd_target: np.ndarray = None
    timing: TimingParams = field(default_factory=TimingParams)
    noise_power: float = 1.0
    f_s: float = 6e6
    name: str = ""

    def __post_init__(self):
        problems: list[tuple[str, str]] = []
        M, N = self.M, self.N
        if not isinstance(M, (int, np.integer)) or M < 1:
            problems.append(("M", f"need at least one channel, got {M!r}"))
        if not isinstance(N, (int, np.integer)) or N < 1:
            problems.append(("N", f"need at least one SU, got {N!r}"))
        if problems:
            raise ConfigError(problems)

        p_idle = np.broadcast_to(np.asarray(self.p_idle, dtype=float), (M,))
        pd = 0.9 if self.pd_target is None else self.pd_target
        pd_target = np.broadcast_to(np.asarray(pd, dtype=float), (M,))
        snr = np.asarray(self.snr, dtype=float)
        if snr.ndim == 0:
            snr = np.full((N, M), float(snr))

        for j, value in enumerate(p_idle):
            if not (0.0 <= value <= 1.0):
                problems.append((f"p_idle[{j}]", f"probability out of [0, 1]: {value}"))
        for j, value in enumerate(pd_target):
            if not (0.0 < value < 1.0):
                problems.append((f"pd_target[{j}]", f"detection target must lie in (0, 1): {value}"))
        if snr.shape != (N, M):
            problems.append(("snr", f"expected shape ({N}, {M}), got {snr.shape}"))
        else:
            for (i, j), value in np.ndenumerate(snr):
                if not (math.isfinite(value) and value > 0):
                    problems.append((f"snr[{i}][{j}]", f"linear SNR must be > 0, got {value}"))
        if not (math.isfinite(self.f_s) and self.f_s > 0):
            problems.append(("f_s", f"sampling frequency must be > 0, got {self.f_s}"))
        if not (math.isfinite(self.noise_power) and self.noise_power > 0):
            problems.append(("noise_power", f"must be > 0, got {self.noise_power}"))
        timing_problems = self.timing.problems()
        problems.extend(timing_problems)
        if not timing_problems and self.timing.T <= N * self.timing.t_r:
            problems.append(("timing.T", f"cycle {self.timing.T}s leaves no time after {N} report slots"))
        if problems:
            raise ConfigError(problems)

        object.__setattr__(self, "M", int(M))
        object.__setattr__(self, "N", int(N))
        object.__setattr__(self, "p_idle", _frozen_array(p_idle))
        object.__setattr__(self, "pd_target", _frozen_array(pd_target))
        object.__setattr__(self, "snr", _frozen_array(snr))

    @property
    def snr_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.snr)

    @property
    def reporting_time(self) -> float:
        return self.timing.reporting_time(self.N)

    def with_snr_shift(self, delta_db: float) -> "ScenarioConfig":
        """Shift every SNR by ``delta_db`` (applied in dB)."""
        return replace(self, snr=self.snr * 10.0 ** (delta_db / 10.0))

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def invert_sets(sets: Sequence[Iterable[int]], n_targets: int) -> tuple[frozenset[int], ...]:
    """Turn ``sets[a] ∋ b`` into ``out[b] ∋ a``.

    Applying it twice (with the sizes swapped) gives back the input.
    """
    out: list[set[int]] = [set() for _ in range(n_targets)]
    for a, members in enumerate(sets):
        for b in members:
            b = int(b)
            if not 0 <= b < n_targets:
                raise ConfigError([(f"sets[{a}]", f"index {b} out of range [0, {n_targets})")])
            out[b].add(a)
    return tuple(frozenset(s) for s in out)


@dataclass(frozen=True)
class SensingAssignment:
    """Which SU senses which channel, kept in both directions."""

    per_su: tuple[frozenset[int], ...]
    per_channel: tuple[frozenset[int], ...]

    def __post_init__(self):
        per_su = tuple(frozenset(int(j) for j in s) for s in self.per_su)
        per_channel = tuple(frozenset(int(i) for i in s) for s in self.per_channel)
        if invert_sets(per_su, len(per_channel)) != per_channel:
            raise ConfigError([("assignment", "per-SU and per-channel views disagree")])
        object.__setattr__(self, "per_su", per_su)
        object.__setattr__(self, "per_channel", per_channel)

    @property
    def N(self) -> int:
        return len(self.per_su)

    @property
    def M(self) -> int:
        return len(self.per_channel)

    @property
    def b(self) -> np.ndarray:
        """Number of sensors per channel."""
        return np.array([len(s) for s in self.per_channel], dtype=int)

    @property
    def matrix(self) -> np.ndarray:
        mat = np.zeros((self.N, self.M), dtype=bool)
        for i, chans in enumerate(self.per_su):
            for j in chans:
                mat[i, j] = True
        return mat

    @classmethod
    def from_matrix(cls, matrix) -> "SensingAssignment":
        mat = np.asarray(matrix, dtype=bool)
        N, M = mat.shape
        return dual_view([np.flatnonzero(row) for row in mat], M, N)

    @classmethod
    def full(cls, M: int, N: int) -> "SensingAssignment":
        return cls.from_matrix(np.ones((N, M), dtype=bool))

    def with_pair(self, i: int, j: int) -> "SensingAssignment":
        mat = self.matrix
        mat[i, j] = True
        return SensingAssignment.from_matrix(mat)

    def pattern(self) -> int:
        """Bit pattern with bit ``i*M + j`` set when SU i senses channel j."""
        flat = self.matrix.ravel()
        return int(sum(1 << k for k in np.flatnonzero(flat)))

    @classmethod
    def from_pattern(cls, pattern: int, M: int, N: int) -> "SensingAssignment":
        bits = [(pattern >> k) & 1 for k in range(M * N)]
        return cls.from_matrix(np.array(bits, dtype=bool).reshape(N, M))

    def grid(self) -> list[str]:
        """One row per SU, ``x`` where the SU senses the channel."""
        return [" ".join("x" if v else "." for v in row) for row in self.matrix]

    def to_dict(self) -> dict:
        return {
            "per_su": {str(i + 1): sorted(j + 1 for j in s) for i, s in enumerate(self.per_su)},
            "per_channel": {str(j + 1): sorted(i + 1 for i in s) for j, s in enumerate(self.per_channel)},
            "grid": self.grid(),
        }


def dual_view(per_su: Sequence[Iterable[int]], M: int, N: int) -> SensingAssignment:
    """Build a :class:`SensingAssignment` from per-SU channel sets."""
    if len(per_su) != N:
        raise ConfigError([("assignment", f"expected {N} SU entries, got {len(per_su)}")])
    frozen = tuple(frozenset(int(j) for j in s) for s in per_su)
    return SensingAssignment(frozen, invert_sets(frozen, M))


@dataclass(frozen=True)
class SensingAccessParams:
    """Sensing times (seconds, N x M; zero where a pair is unassigned),
    fusion thresholds per channel (0 for channels nobody senses) and the
    access probability."""

    tau: np.ndarray
    a: np.ndarray
    p: float

    def __post_init__(self):
        object.__setattr__(self, "tau", _frozen_array(self.tau))
        object.__setattr__(self, "a", _frozen_array(self.a, dtype=int))
        object.__setattr__(self, "p", float(self.p))

    @property
    def su_sensing_time(self) -> np.ndarray:
        return self.tau.sum(axis=1)

    @property
    def tau_max(self) -> float:
        """Length of the sensing phase: the slowest SU."""
        return float(self.su_sensing_time.max()) if self.tau.size else 0.0

    def check(self, assignment: SensingAssignment, T: float) -> None:
        problems = []
        if self.tau.shape != (assignment.N, assignment.M):
            raise ConfigError([("params.tau", f"expected shape {(assignment.N, assignment.M)}, got {self.tau.shape}")])
        mat = assignment.matrix
        for (i, j), value in np.ndenumerate(self.tau):
            if mat[i, j] and not (0.0 < value <= T):
                problems.append((f"params.tau[{i}][{j}]", f"sensing time must lie in (0, T], got {value}"))
            if not mat[i, j] and value != 0.0:
                problems.append((f"params.tau[{i}][{j}]", "set for a pair that is not assigned"))
        b = assignment.b
        if self.a.shape != (assignment.M,):
            problems.append(("params.a", f"expected {assignment.M} thresholds"))
        else:
            for j, (aj, bj) in enumerate(zip(self.a, b)):
                if bj > 0 and not (1 <= aj <= bj):
                    problems.append((f"params.a[{j}]", f"threshold {aj} outside [1, {bj}]"))
        if not (0.0 <= self.p <= 1.0):
            problems.append(("params.p", f"probability out of [0, 1]: {self.p}"))
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        return {"tau": self.tau.tolist(), "a": self.a.tolist(), "p": self.p, "tau_max": self.tau_max}


@dataclass(frozen=True)
class ErrorModel:
    """Reporting bit-error probabilities; ``pe[r, s]`` is for the bit SU ``s``
    sends to SU ``r``.  The diagonal is always zero."""

    pe: np.ndarray

    def __post_init__(self):
        pe = np.array(self.pe, dtype=float)
        problems = []
        if pe.ndim != 2 or pe.shape[0] != pe.shape[1]:
            raise ConfigError([("error_model.pe", f"expected a square matrix, got shape {pe.shape}")])
        if np.any((pe < 0) | (pe > 1)) or not np.all(np.isfinite(pe)):
            problems.append(("error_model.pe", "probabilities must lie in [0, 1]"))
        if np.any(np.diag(pe) != 0):
            problems.append(("error_model.pe", "diagonal must be zero (an SU does not report to itself)"))
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "pe", _frozen_array(pe))

    @classmethod
    def uniform(cls, N: int, pe: float) -> "ErrorModel":
        mat = np.full((N, N), float(pe))
        np.fill_diagonal(mat, 0.0)
        return cls(mat)

    @classmethod
    def none(cls, N: int) -> "ErrorModel":
        return cls(np.zeros((N, N)))

    @property
    def N(self) -> int:
        return self.pe.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.pe)


@dataclass
class ThroughputReport:
    """Normalized throughput plus the inputs that produced it.

    ``nt`` is the mean of ``per_channel_nt``.
    """

    nt: float
    per_channel_nt: np.ndarray
    params_used: SensingAccessParams
    assignment_used: SensingAssignment
    trace: list[tuple[int, float]] = field(default_factory=list)
    method: str = ""

    def to_dict(self) -> dict:
        return {
            "nt": self.nt,
            "per_channel_nt": {str(j + 1): float(v) for j, v in enumerate(self.per_channel_nt)},
            "params": self.params_used.to_dict(),
            "assignment": self.assignment_used.to_dict(),
            "trace": [[int(k), float(v)] for k, v in self.trace],
            "method": self.method,
        }

