"""Scenario files.

A scenario is a YAML mapping::

    name: table1_4x4
    M: 4                      # channels
    N: 4                      # SUs
    p_idle: 0.5               # scalar or one value per channel
    pd_target: 0.9            # optional, scalar or per channel
    snr_db_default: -20       # SNR of every (SU, channel) pair not listed below
    snr_db_groups:            # optional; SU and channel numbers start at 1
      - snr_db: -15
        pairs: [[1, 1], [2, 1]]
    # or a full N x M matrix instead of the two keys above:
    # snr_db: [[-15, -20, ...], ...]
    f_s: 6.0e6                # optional
    noise_power: 1.0          # optional
    timing: {T: 0.1, v: 2.0e-5}   # optional overrides of the default timing
    assignment:               # optional; one of
      per_su: {1: [1, 2], 2: [3]}
      # matrix: [[1, 1, 0, 0], ...]
      # round_robin: 2
    params:                   # optional; tau in seconds, N x M, 0 where unassigned
      tau: [[...]]
      a: [1, 2, 1, 1]
      p: 0.1
    error_model:              # optional; one of
      pe: 0.05
      # matrix: [[0, 0.05], [0.05, 0]]

Bundled scenarios live in ``cogmac/scenarios`` and can be referred to by name.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .model import (ConfigError, ErrorModel, ScenarioConfig, SensingAccessParams, SensingAssignment,
                    TimingParams, dual_view)

SCENARIO_DIR = Path(__file__).with_name("scenarios")
_TOP_KEYS = {"name", "description", "M", "N", "p_idle", "pd_target", "snr_db", "snr_db_default",
             "snr_db_groups", "f_s", "noise_power", "timing", "assignment", "params", "error_model"}


@dataclass(frozen=True)
class ScenarioBundle:
    scenario: ScenarioConfig
    assignment: SensingAssignment | None = None
    params: SensingAccessParams | None = None
    error_model: ErrorModel | None = None


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))


def resolve_scenario_path(ref: str | Path) -> Path:
    path = Path(ref)
    if path.exists():
        return path
    candidate = SCENARIO_DIR / f"{ref}.yaml"
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no scenario file {ref!r} and no bundled scenario of that name "
                            f"(bundled: {', '.join(bundled_scenarios())})")


def read_raw(ref: str | Path) -> dict:
    path = resolve_scenario_path(ref)
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, Mapping):
        raise ConfigError([("<root>", f"{path} does not contain a mapping")])
    return dict(raw)


def _number(raw, key, problems, default=None):
    value = raw.get(key, default)
    if value is None:
        problems.append((key, "missing"))
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append((key, f"expected a number, got {value!r}"))
        return None
    return value


def _vector(value, length, key, problems):
    arr = np.asarray(value, dtype=float) if not isinstance(value, (str, bool)) else None
    if arr is None or arr.ndim > 1 or (arr.ndim == 1 and arr.size != length):
        problems.append((key, f"expected a number or {length} numbers, got {value!r}"))
        return None
    return np.broadcast_to(arr, (length,)).copy()


def _snr_db(raw, M, N, problems):
    if "snr_db" in raw:
        if "snr_db_groups" in raw or "snr_db_default" in raw:
            problems.append(("snr_db", "give either a full matrix or default + groups, not both"))
            return None
        try:
            mat = np.asarray(raw["snr_db"], dtype=float)
        except (TypeError, ValueError):
            problems.append(("snr_db", "matrix entries must be numbers"))
            return None
        if mat.ndim == 0:
            mat = np.full((N, M), float(mat))
        if mat.shape != (N, M):
            problems.append(("snr_db", f"expected {N} rows of {M} values, got shape {mat.shape}"))
            return None
        return mat
    default = raw.get("snr_db_default")
    if default is None:
        problems.append(("snr_db", "missing (give snr_db or snr_db_default)"))
        return None
    mat = np.full((N, M), float(default))
    seen = {}
    for g, group in enumerate(raw.get("snr_db_groups") or []):
        key = f"snr_db_groups[{g}]"
        if not isinstance(group, Mapping) or "snr_db" not in group or "pairs" not in group:
            problems.append((key, "each group needs snr_db and pairs"))
            continue
        for pair in group["pairs"]:
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                problems.append((key, f"pair {pair!r} is not [su, channel]"))
                continue
            su, ch = int(pair[0]), int(pair[1])
            if not (1 <= su <= N and 1 <= ch <= M):
                problems.append((key, f"pair [{su}, {ch}] outside 1..{N} x 1..{M}"))
                continue
            if (su, ch) in seen and seen[(su, ch)] != g:
                problems.append((key, f"pair [{su}, {ch}] already set by group {seen[(su, ch)]}"))
            seen[(su, ch)] = g
            mat[su - 1, ch - 1] = float(group["snr_db"])
    return mat


def validate_scenario(raw: Mapping[str, Any], dgamma: float = 0.0, pd_target=None,
                      p_idle=None) -> ScenarioConfig:
    """Check a parsed scenario mapping and build a :class:`ScenarioConfig`.

    ``dgamma`` shifts every SNR in dB before conversion; ``pd_target`` and
    ``p_idle`` override the file.  Every problem found is reported at once.
    """
    problems: list[tuple[str, str]] = []
    for key in raw:
        if key not in _TOP_KEYS:
            problems.append((str(key), "unknown key"))
    M = _number(raw, "M", problems)
    N = _number(raw, "N", problems)
    for key, value in (("M", M), ("N", N)):
        if value is not None and (int(value) != value or value < 1):
            problems.append((key, f"must be a positive integer, got {value}"))
    if any(name in ("M", "N") for name, _ in problems):
        raise ConfigError(problems)
    M, N = int(M), int(N)

    p_raw = raw.get("p_idle") if p_idle is None else p_idle
    if p_raw is None:
        problems.append(("p_idle", "missing"))
        p_vec = None
    else:
        p_vec = _vector(p_raw, M, "p_idle", problems)
    pd_raw = raw.get("pd_target", 0.9) if pd_target is None else pd_target
    pd_vec = _vector(pd_raw, M, "pd_target", problems)
    snr_db = _snr_db(raw, M, N, problems)

    timing_raw = raw.get("timing") or {}
    timing = TimingParams()
    if not isinstance(timing_raw, Mapping):
        problems.append(("timing", "expected a mapping"))
    else:
        names = {f.name for f in dataclasses.fields(TimingParams)}
        bad = [k for k in timing_raw if k not in names]
        for k in bad:
            problems.append((f"timing.{k}", "unknown timing field"))
        if not bad:
            timing = TimingParams(**{k: float(v) for k, v in timing_raw.items()})
    f_s = _number(raw, "f_s", problems, 6e6)
    noise = _number(raw, "noise_power", problems, 1.0)
    if problems:
        raise ConfigError(problems)
    if p_vec is not None:
        for j, v in enumerate(p_vec):
            if not 0.0 <= v <= 1.0:
                problems.append((f"p_idle[{j}]", f"probability out of [0, 1]: {v}"))
    if problems:
        raise ConfigError(problems)
    snr = 10.0 ** ((snr_db + dgamma) / 10.0)
    return ScenarioConfig(M=M, N=N, p_idle=p_vec, snr=snr, pd_target=pd_vec, timing=timing,
                          noise_power=float(noise), f_s=float(f_s), name=str(raw.get("name", "")))


def _assignment(raw, M, N) -> SensingAssignment:
    from .assign import round_robin_assignment

    if not isinstance(raw, Mapping) or len(raw) != 1:
        raise ConfigError([("assignment", "give exactly one of per_su, matrix, round_robin")])
    (kind, value), = raw.items()
    if kind == "per_su":
        per_su = [[] for _ in range(N)]
        for su, chans in dict(value).items():
            su = int(su)
            if not 1 <= su <= N:
                raise ConfigError([("assignment.per_su", f"SU {su} outside 1..{N}")])
            bad = [c for c in chans or [] if not 1 <= int(c) <= M]
            if bad:
                raise ConfigError([(f"assignment.per_su.{su}", f"channels {bad} outside 1..{M}")])
            per_su[su - 1] = [int(c) - 1 for c in chans or []]
        return dual_view(per_su, M, N)
    if kind == "matrix":
        mat = np.asarray(value, dtype=int)
        if mat.shape != (N, M) or np.any((mat != 0) & (mat != 1)):
            raise ConfigError([("assignment.matrix", f"expected an {N} x {M} 0/1 matrix")])
        return SensingAssignment.from_matrix(mat.astype(bool))
    if kind == "round_robin":
        k = int(value)
        if k < 1:
            raise ConfigError([("assignment.round_robin", "must be >= 1")])
        return round_robin_assignment(M, N, k)
    raise ConfigError([("assignment", f"unknown kind {kind!r}")])


def _error_model(raw, N) -> ErrorModel:
    if not isinstance(raw, Mapping) or len(raw) != 1:
        raise ConfigError([("error_model", "give exactly one of pe, matrix")])
    (kind, value), = raw.items()
    if kind == "pe":
        pe = float(value)
        if not 0.0 <= pe <= 1.0:
            raise ConfigError([("error_model.pe", f"probability out of [0, 1]: {pe}")])
        return ErrorModel.uniform(N, pe)
    if kind == "matrix":
        model = ErrorModel(np.asarray(value, dtype=float))
        if model.N != N:
            raise ConfigError([("error_model.matrix", f"expected {N} x {N}")])
        return model
    raise ConfigError([("error_model", f"unknown kind {kind!r}")])


def load_bundle(ref: str | Path | Mapping, dgamma: float = 0.0, pd_target=None, p_idle=None,
                pe: float | None = None) -> ScenarioBundle:
    """Read a scenario file (or an already parsed mapping) with its optional blocks."""
    raw = dict(ref) if isinstance(ref, Mapping) else read_raw(ref)
    scenario = validate_scenario(raw, dgamma=dgamma, pd_target=pd_target, p_idle=p_idle)
    M, N = scenario.M, scenario.N
    assignment = _assignment(raw["assignment"], M, N) if raw.get("assignment") is not None else None
    params = None
    if raw.get("params") is not None:
        if assignment is None:
            raise ConfigError([("params", "fixed parameters need an assignment block")])
        block = raw["params"]
        try:
            params = SensingAccessParams(np.asarray(block["tau"], dtype=float),
                                         np.asarray(block["a"], dtype=int), float(block["p"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError([("params", f"need tau, a and p: {exc}")]) from None
        params.check(assignment, scenario.timing.T)
    if pe is not None:
        error_model = ErrorModel.uniform(N, pe)
    elif raw.get("error_model") is not None:
        error_model = _error_model(raw["error_model"], N)
    else:
        error_model = None
    return ScenarioBundle(scenario, assignment, params, error_model)
