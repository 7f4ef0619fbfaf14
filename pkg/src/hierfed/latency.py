"""Per-global-round latency from physical parameters, synchronous timing.

One round costs: every device computes prod(tau) mini-batch steps, paced by
the slowest device; the device->edge hop is traversed prod(tau_2..tau_N)
times; each inter-edge hop (n-1, n) is traversed prod(tau_{n+1}..tau_N)
times; and the final hop to the cloud once. Reduced-depth deployments stretch
the device hop by a distance factor kappa, scaling the channel gain by
kappa^(-path_loss_exp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import Schedule


class NonPositiveRate(ValueError):
    """Link parameters give a non-positive transmission rate."""


class LengthMismatch(ValueError):
    """Inter-edge time vector does not match the schedule depth."""


@dataclass
class LatencyParams:
    """Physical timing inputs.

    cycles_per_sample: CPU cycles to process one training sample (c).
    frequencies: per-device CPU frequencies in Hz; the slowest one paces
        the synchronous round.
    batch_size: mini-batch size b.
    model_bits: payload size d_b in bits.
    bandwidth: channel bandwidth W in Hz.
    tx_power: transmit power p in W.
    channel_gain: reference device->edge channel gain h (dimensionless).
    noise_power: N0 in W.
    t_edge: inter-layer times (t_E[1,2], ..., t_E[N-1,N]) in seconds;
        length N-1 for an N-layer deployment (empty for N = 1).
    kappa: device-server distance growth factor (1 = reference deployment).
    path_loss_exp: path-loss exponent applied to kappa.
    deadline: total completion deadline T_d in seconds.
    rounds: global round budget T the deadline is split over.
    """

    cycles_per_sample: float
    frequencies: list[float]
    batch_size: int
    model_bits: float
    bandwidth: float
    tx_power: float
    channel_gain: float
    noise_power: float
    t_edge: list[float] = field(default_factory=list)
    kappa: float = 1.0
    path_loss_exp: float = 3.4
    deadline: float = math.inf
    rounds: int = 1

    def __post_init__(self) -> None:
        if not self.frequencies:
            raise ValueError("need at least one device frequency")
        positive = {
            "cycles_per_sample": self.cycles_per_sample,
            "model_bits": self.model_bits,
            "bandwidth": self.bandwidth,
            "tx_power": self.tx_power,
            "channel_gain": self.channel_gain,
            "noise_power": self.noise_power,
            "kappa": self.kappa,
        }
        for name, val in positive.items():
            if val <= 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0")
        if min(self.frequencies) <= 0:
            raise ValueError("device frequencies must be positive")


def compute_tcp(params: LatencyParams) -> float:
    """Slowest device's per-iteration computation time: c * b / min(f)."""
    return params.cycles_per_sample * params.batch_size / min(params.frequencies)


def compute_tde(params: LatencyParams) -> float:
    """Device->edge transmission time d_b / (W log2(1 + p h_eff / N0)).

    The effective gain is kappa^(-path_loss_exp) * h.
    """
    h_eff = params.kappa ** (-params.path_loss_exp) * params.channel_gain
    snr = params.tx_power * h_eff / params.noise_power
    if snr <= 0:
        raise NonPositiveRate(f"SNR must be positive, got {snr}")
    rate = params.bandwidth * math.log2(1.0 + snr)
    if rate <= 0:
        raise NonPositiveRate("link rate must be positive")
    return params.model_bits / rate


def round_latency(params: LatencyParams, schedule: Schedule) -> float:
    """Latency of one global round for the given iteration counts."""
    taus = schedule.taus
    n = len(taus)
    if n >= 2 and len(params.t_edge) != n - 1:
        raise LengthMismatch(
            f"{len(params.t_edge)} inter-edge times for {n} aggregation layers"
        )
    t_cp = compute_tcp(params)
    t_de = compute_tde(params)
    if n == 1:
        # single hop: devices compute tau_1 steps, then transmit to the cloud
        return taus[0] * t_cp + t_de
    total = math.prod(taus) * t_cp + math.prod(taus[1:]) * t_de
    for layer in range(2, n):  # hops (1,2) .. (N-2,N-1), crossed by upper taus
        total += math.prod(taus[layer:]) * params.t_edge[layer - 2]
    total += params.t_edge[n - 2]
    return total


def deadline_ok(params: LatencyParams, schedule: Schedule) -> tuple[bool, float]:
    """Whether one round fits in the per-round deadline T_d / T, plus the slack."""
    budget = params.deadline / params.rounds
    slack = budget - round_latency(params, schedule)
    return slack >= 0.0, slack


def table_defaults(
    n_devices: int = 1,
    model_bits: float | None = None,
    n_layers: int = 2,
) -> LatencyParams:
    """Run-time parameters used throughout the experiments.

    1 MHz bandwidth, 0.5 W transmit power, 1e-10 W noise, 0.25e9 cycles per
    sample, reference gain 1e-8, batch 40, and inter-edge times of
    (10, 20, 30, 40, 50) x t_DE counted from the lowest hop.
    """
    base = LatencyParams(
        cycles_per_sample=0.25e9,
        frequencies=[0.5e9] * n_devices,
        batch_size=40,
        model_bits=model_bits if model_bits is not None else 5.6724e6,
        bandwidth=1e6,
        tx_power=0.5,
        channel_gain=1e-8,
        noise_power=1e-10,
    )
    t_de = compute_tde(base)
    base.t_edge = [10.0 * t_de * (k + 1) for k in range(max(0, n_layers - 1))]
    return base
