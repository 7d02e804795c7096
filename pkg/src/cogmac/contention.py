"""p-persistent CSMA with an RTS/CTS handshake, in slot units."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TimingParams

# Guards the floor against 4.9999999 style round-off in the packet count.
FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class FrameDurations:
    """Successful exchange (data part), handshake overhead and collision length, in slots."""

    t_success: float
    t_rtscts: float
    t_collision: float


def frame_durations(timing: TimingParams) -> FrameDurations:
    pd = timing.PD / timing.v
    return FrameDurations(
        t_success=timing.PS + 2 * timing.SIFS + 2 * pd + timing.ACK,
        t_rtscts=timing.DIFS + timing.RTS + timing.CTS + 2 * pd,
        t_collision=timing.RTS + timing.DIFS + pd,
    )


def slot_probabilities(n, p):
    """(success, idle, collision) probabilities of a generic slot with ``n`` contenders."""
    n_arr = np.asarray(n)
    if np.any(n_arr < 1):
        raise ValueError("need at least one contender")
    p = np.asarray(p, dtype=float)
    idle = (1.0 - p) ** n_arr
    success = n_arr * p * (1.0 - p) ** (n_arr - 1)
    collision = 1.0 - success - idle
    if np.ndim(collision) == 0:
        return float(success), float(idle), float(max(collision, 0.0))
    return success, idle, np.maximum(collision, 0.0)


def average_contention_time(n, p, frames: FrameDurations):
    """Expected slots spent from the start of contention until a packet's
    handshake completes (idle runs, collisions and the RTS/CTS exchange)."""
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(n < 1):
        raise ValueError("need at least one contender")
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("access probability must lie strictly inside (0, 1)")
    q_idle = (1.0 - p) ** n
    busy = -np.expm1(n * np.log1p(-p))  # 1 - (1-p)^n without cancellation
    mean_idle = q_idle / busy
    n_coll = busy / (n * p * (1.0 - p) ** (n - 1)) - 1.0
    out = n_coll * frames.t_collision + mean_idle * (n_coll + 1.0) + frames.t_rtscts
    return float(out) if np.ndim(out) == 0 else out


def _check_window(timing: TimingParams, tau, T_R):
    if np.any(np.asarray(tau) + T_R > timing.T * (1 + 1e-12)):
        raise ValueError(f"sensing {tau} s plus reporting {T_R} s exceed the cycle {timing.T} s")


def conditional_channel_throughput(n, p, timing: TimingParams, frames: FrameDurations, tau, T_R):
    """Normalized throughput of one channel contended by ``n`` SUs:
    whole packets that fit after sensing and reporting, times T_S / T."""
    _check_window(timing, tau, T_R)
    slots = np.maximum(timing.T - np.asarray(tau) - T_R, 0.0) / timing.v
    packets = np.floor(slots / (average_contention_time(n, p, frames) + frames.t_success) + FLOOR_EPS)
    out = packets * frames.t_success * timing.v / timing.T
    return float(out) if np.ndim(out) == 0 else out


def relaxed_channel_throughput(n, p, timing: TimingParams, frames: FrameDurations, tau, T_R):
    """Same as :func:`conditional_channel_throughput` without the floor."""
    _check_window(timing, tau, T_R)
    frac = np.maximum(1.0 - (np.asarray(tau) + T_R) / timing.T, 0.0)
    out = frac * frames.t_success / (average_contention_time(n, p, frames) + frames.t_success)
    return float(out) if np.ndim(out) == 0 else out


def efficiency_table(N: int, p_values, frames: FrameDurations) -> np.ndarray:
    """T_S / (T_cont + T_S) for n = 0..N (rows) and each p (columns); row 0 is zero."""
    p_values = np.atleast_1d(np.asarray(p_values, dtype=float))
    table = np.zeros((N + 1, p_values.size))
    n = np.arange(1, N + 1)[:, None]
    table[1:] = frames.t_success / (average_contention_time(n, p_values[None, :], frames) + frames.t_success)
    return table


def packet_table(N: int, p_values, timing: TimingParams, frames: FrameDurations, tau, T_R) -> np.ndarray:
    """Exact-floor channel throughput for n = 0..N and each p; row 0 is zero.

    ``tau`` may be an array; it broadcasts against a trailing (N+1, P) block.
    """
    p_values = np.atleast_1d(np.asarray(p_values, dtype=float))
    tau = np.asarray(tau, dtype=float)[..., None, None]
    slots = np.maximum(timing.T - tau - T_R, 0.0) / timing.v
    n = np.arange(1, N + 1)[:, None]
    cycle = average_contention_time(n, p_values[None, :], frames) + frames.t_success
    out = np.zeros(tau.shape[:-2] + (N + 1, p_values.size))
    out[..., 1:, :] = np.floor(slots / cycle + FLOOR_EPS) * frames.t_success * timing.v / timing.T
    return out


def packet_unit(timing: TimingParams) -> float:
    """Throughput carried by one packet per cycle."""
    return frame_durations(timing).t_success * timing.v / timing.T


def cycle_data_slots(timing: TimingParams, tau: float, T_R: float) -> float:
    return max(timing.T - tau - T_R, 0.0) / timing.v


__all__ = [
    "FrameDurations", "frame_durations", "slot_probabilities", "average_contention_time",
    "conditional_channel_throughput", "relaxed_channel_throughput", "efficiency_table",
    "packet_table", "packet_unit", "cycle_data_slots", "FLOOR_EPS",
]
