"""Seeded generator for the three-chain benchmark scenario.

One integer seed deterministically fixes every randomly-selected structural
parameter of the benchmark: transport delays, waste means, and the weekly
demand pattern.  Draws happen in a documented order (per chain: delays,
inventory-waste means, transport-waste means, daily demand means), so
regenerating with the same seed and shape is reproducible across platforms.
Note the demand bound scales with ``N``, so the same seed at a different
network size yields a different (but equally deterministic) scenario.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChainSpec, NetworkSpec, validate_network
from .sim import DisturbanceModel, SimConfig, default_failures

#: directed chain pairs (j, i) whose consensus links are considered cheap in
#: the benchmark: nearest-neighbour exchange along the line 1 - 2 - 3
DEFAULT_REFERENCE = [(0, 1), (1, 0), (1, 2), (2, 1)]


@dataclass
class Scenario:
    """A fully materialized experiment: plant, disturbances, run settings."""

    network: NetworkSpec
    disturbances: DisturbanceModel
    sim: SimConfig
    seed: int


def benchmark_scenario(
    seed: int = 0,
    N: int = 3,
    n: int = 4,
    T: int = 720,
    rho_perish: float = 0.1,
    xbar_level: float = 500.0,
    gamma_bar: float = 1.0e4,
    reference_topology: list | None = None,
    failures: list | None = None,
    clamp: bool = False,
) -> Scenario:
    """Draw the benchmark network and disturbance model from one seed.

    Structural draws (uniform integers, inclusive bounds):

    * transport delays ``1 + randi(1, 4)`` per stage,
    * inventory- and transport-waste means ``10 + 2 randi(1, 5) + 2 i``
      per stage (``i`` is the 1-based chain number),
    * seven daily demand means ``100 + 2 randi(1, 10 N) + 20 i`` per chain,

    and the design-time mean demand of each chain is the arithmetic mean of
    its seven daily means.  The realized per-step noise is *not* drawn here;
    it belongs to the simulation realizations (see :mod:`stocksync.sim`).
    """
    if N < 1 or n < 1:
        raise ValueError("need at least one chain with at least one stage")
    rng = np.random.default_rng(seed)
    chains, w_inv_means, w_tr_means, daily_means = [], [], [], []
    for i in range(1, N + 1):
        tau = (1 + rng.integers(1, 5, size=n)).tolist()
        w_inv = (10 + 2 * rng.integers(1, 6, size=n) + 2 * i).astype(float)
        w_tr = (10 + 2 * rng.integers(1, 6, size=n) + 2 * i).astype(float)
        daily = (100 + 2 * rng.integers(1, 10 * N + 1, size=7) + 20 * i).astype(float)
        chains.append(
            ChainSpec(
                n=n,
                tau=[int(t) for t in tau],
                rho=[rho_perish] * n,
                xbar=[xbar_level] * n,
                wbar_inv=w_inv.tolist(),
                wbar_tr=w_tr.tolist(),
                dbar=float(np.mean(daily)),
            )
        )
        w_inv_means.append(w_inv)
        w_tr_means.append(w_tr)
        daily_means.append(daily)

    if reference_topology is None:
        reference_topology = [(j, i) for (j, i) in DEFAULT_REFERENCE if j < N and i < N]
    network = NetworkSpec(
        chains=chains,
        gamma_bar=gamma_bar,
        reference_topology=list(reference_topology),
    )
    validate_network(network)

    dm = DisturbanceModel(
        w_inv_means=w_inv_means,
        w_tr_means=w_tr_means,
        demand_daily_means=daily_means,
    )
    if failures is None:
        # default schedule, truncated to the horizon for short runs
        failures = [ev for ev in default_failures() if ev.time <= T]
    sc = SimConfig(
        T=T,
        seed=seed,
        failures=list(failures),
        xbar_norm=xbar_level,
        clamp=clamp,
    )
    return Scenario(network=network, disturbances=dm, sim=sc, seed=seed)
