"""Half-duplex D2D and pure-cellular reference systems.

Both reuse the FD solver.  A half-duplex slot is the FD problem with zero
self-interference in which the non-transmitting end of every link has its
power cap set to zero, so it neither transmits nor interferes and its own
receive direction carries no rate.
"""
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import metrics
from .fp_solver import SolveResult, SolverConfig, run_fp
from .metrics import NoiseModel


class DuplexMode(str, Enum):
    FD = "FD"
    HD = "HD"
    CELLULAR_ONLY = "CellularOnly"


@dataclass
class HalfDuplexResult(SolveResult):
    slots: tuple = ()


def hd_slot_caps(channels, P_d: float, slot: int) -> np.ndarray:
    """Per-transceiver caps for slot 0 (first ends transmit) or slot 1 (partners)."""
    K = channels.num_transceivers
    first = np.arange(K) < channels.partner
    tx = first if slot == 0 else ~first
    return np.where(tx, float(P_d), 0.0)


def run_hd(channels, noise: NoiseModel, config: SolverConfig) -> HalfDuplexResult:
    """Synchronized two-slot half duplex; the reported rate is the slot average."""
    hd_noise = replace(noise, beta=0.0)
    slots = tuple(run_fp(channels, hd_noise, config, p_max=hd_slot_caps(channels, config.P_d, k))
                  for k in (0, 1))
    a, b = slots
    n = max(len(a.objective_trace), len(b.objective_trace))
    pad = lambda tr: tr + [tr[-1]] * (n - len(tr))  # noqa: E731
    trace = [0.5 * (x + y) for x, y in zip(pad(a.objective_trace), pad(b.objective_trace))]
    converged = a.converged and b.converged
    status = "converged" if converged else next(s.status for s in slots if not s.converged)
    return HalfDuplexResult(
        V=np.stack([a.V, b.V]), p=np.stack([a.p, b.p]), objective_trace=trace,
        final_sum_rate=0.5 * (a.final_sum_rate + b.final_sum_rate),
        converged=converged, iterations=max(a.iterations, b.iterations), status=status,
        inner_warnings=a.inner_warnings + b.inner_warnings,
        qos_violations=a.qos_violations + b.qos_violations, slots=slots,
    )


def run_pure_cellular(channels, noise: NoiseModel, config: SolverConfig) -> SolveResult:
    """The FD solver on the same drop with every D2D link removed."""
    return run_fp(channels.without_d2d(), noise, config)


def solve_mode(mode, channels, noise: NoiseModel, config: SolverConfig) -> SolveResult:
    mode = DuplexMode(mode)
    if mode is DuplexMode.FD:
        return run_fp(channels, noise, config)
    if mode is DuplexMode.HD:
        return run_hd(channels, noise, config)
    return run_pure_cellular(channels, noise, config)


def hd_link_rates(channels, result: HalfDuplexResult, noise: NoiseModel):
    """Time-shared HD link rates: half of each slot's one-way rate."""
    hd_noise = replace(noise, beta=0.0)
    total = None
    for slot in result.slots:
        cell, d2d = metrics.link_rates(channels, slot.V, slot.p, hd_noise)
        total = (cell, d2d) if total is None else (total[0] + cell, total[1] + d2d)
    return 0.5 * total[0], 0.5 * total[1]
