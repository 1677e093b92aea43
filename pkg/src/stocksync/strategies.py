"""Order-computation policies for networked supply chains.

Five strategies compose up to three control layers on top of each chain:

* a constant steady-state order schedule (always on),
* local state feedback on the chain's own (inventory, pipeline) error,
* a consensus correction coupling the chains' inventory errors.

``LSSC`` runs the schedule alone, ``LSFC`` adds local feedback, ``GCC`` adds
a naive complete-graph consensus correction instead, and the co-designed
``DCC-C`` / ``DCC-U`` variants run all three layers with gains from
:mod:`stocksync.codesign` (reference-constrained and unconstrained,
respectively).  A built :class:`ControllerSet` is immutable and
:func:`compute_orders` is pure, so one controller may serve many concurrent
simulations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codesign import GlobalDesign, LocalDesign
from .model import NetworkSpec, steady_state

KINDS = ("LSSC", "LSFC", "GCC", "DCC-C", "DCC-U")


@dataclass(frozen=True)
class ControllerSet:
    """One strategy's gains and equilibrium targets, fixed at build time.

    ``u_bar`` / ``x_targets`` / ``pipe_targets`` hold each chain's constant
    order schedule and the equilibrium the error coordinates are measured
    against.  Only the layers the strategy uses are populated; the others
    stay ``None``.  ``gcc_gain`` holds relative-feedback consensus blocks
    (applied to output differences), while a ``global_design`` carries
    absolute-form blocks applied directly to neighbour outputs.
    """

    kind: str
    u_bar: tuple
    x_targets: tuple
    pipe_targets: tuple
    local_designs: tuple | None = None
    global_design: GlobalDesign | None = None
    gcc_gain: dict | None = None
    clamp_nonnegative: bool = False

    @property
    def N(self) -> int:
        return len(self.u_bar)


@dataclass
class MeasuredState:
    """Raw per-chain measurements at one step: absolute inventory levels and
    pipeline contents (not deviations)."""

    inventories: list
    pipelines: list

    def __post_init__(self) -> None:
        self.inventories = [np.asarray(x, dtype=float).ravel() for x in self.inventories]
        self.pipelines = [np.asarray(x, dtype=float).ravel() for x in self.pipelines]
        if len(self.inventories) != len(self.pipelines):
            raise ValueError("inventories and pipelines must list the same chains")


def gcc_default_gains(N: int, n: int, epsilon: float = 0.1) -> dict:
    """Complete-graph consensus blocks in relative-feedback form:
    ``L[(i, j)] = (epsilon / N) * I`` for ``j != i`` and zero self blocks.

    The scaling keeps the correction magnitude independent of the network
    size; ``epsilon`` trades responsiveness against stability margin.  This
    law is an uncertified baseline: whether a given ``epsilon`` keeps the
    closed loop stable depends on the network, and the default sits close to
    the margin for typical multi-stage chains.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if N < 1 or n < 1:
        raise ValueError("need at least one chain and one stage")
    gains = {}
    for i in range(N):
        for j in range(N):
            if i == j:
                gains[(i, j)] = np.zeros((n, n))
            else:
                gains[(i, j)] = (epsilon / N) * np.eye(n)
    return gains


def _check_local_designs(network: NetworkSpec, local_designs) -> tuple:
    if local_designs is None:
        raise ValueError("this strategy needs one local design per chain")
    designs = tuple(local_designs)
    if len(designs) != network.N:
        raise ValueError(f"expected {network.N} local designs, got {len(designs)}")
    for i, (chain, d) in enumerate(zip(network.chains, designs)):
        if not isinstance(d, LocalDesign):
            raise ValueError(f"local design {i} is not a LocalDesign")
        if d.L.shape != (chain.n, chain.n_state):
            raise ValueError(
                f"local gain {i} must be {(chain.n, chain.n_state)}, got {d.L.shape}"
            )
    return designs


def _check_global_design(network: NetworkSpec, gd, want_constrained: bool) -> GlobalDesign:
    if gd is None:
        raise ValueError("this strategy needs a network co-design")
    if not isinstance(gd, GlobalDesign):
        raise ValueError("global_design must be a GlobalDesign")
    if gd.constrained != want_constrained:
        got = "reference-constrained" if gd.constrained else "unconstrained"
        need = "reference-constrained" if want_constrained else "unconstrained"
        raise ValueError(f"kind/design mismatch: strategy needs a {need} co-design, got {got}")
    n, N = network.n, network.N
    for i in range(N):
        for j in range(N):
            block = gd.K_blocks.get((i, j))
            if block is None or np.shape(block) != (n, n):
                raise ValueError(f"co-design is missing an ({i}, {j}) block of shape {(n, n)}")
    return gd


def _reject(name: str, value, kind: str) -> None:
    if value is not None:
        raise ValueError(f"{kind} does not take {name}")


def build_strategy(
    kind: str,
    network: NetworkSpec,
    local_designs=None,
    global_design: GlobalDesign | None = None,
    gcc_gain: dict | None = None,
    gcc_epsilon: float = 0.1,
    clamp_nonnegative: bool = False,
) -> ControllerSet:
    """Wire a :class:`ControllerSet` for one of the five strategies.

    The steady-state layer is always derived from the network's chain
    specifications.  Design inputs a strategy does not use are rejected
    rather than silently dropped, and a co-design produced under the wrong
    topology mode (constrained vs. unconstrained) is refused.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown strategy kind {kind!r}; expected one of {KINDS}")
    if not network.chains:
        raise ValueError("network has no chains")

    eq = [steady_state(c) for c in network.chains]
    base = dict(
        kind=kind,
        u_bar=tuple(s.ubar for s in eq),
        x_targets=tuple(s.xbar for s in eq),
        pipe_targets=tuple(s.pipe for s in eq),
        clamp_nonnegative=clamp_nonnegative,
    )

    if kind == "LSSC":
        _reject("local_designs", local_designs, kind)
        _reject("global_design", global_design, kind)
        _reject("gcc_gain", gcc_gain, kind)
        return ControllerSet(**base)

    if kind == "LSFC":
        _reject("global_design", global_design, kind)
        _reject("gcc_gain", gcc_gain, kind)
        return ControllerSet(**base, local_designs=_check_local_designs(network, local_designs))

    if kind == "GCC":
        _reject("local_designs", local_designs, kind)
        _reject("global_design", global_design, kind)
        gains = gcc_gain if gcc_gain is not None else gcc_default_gains(
            network.N, network.n, gcc_epsilon
        )
        n, N = network.n, network.N
        for i in range(N):
            for j in range(N):
                block = gains.get((i, j))
                if block is None or np.shape(block) != (n, n):
                    raise ValueError(f"gcc_gain is missing an ({i}, {j}) block of shape {(n, n)}")
        return ControllerSet(**base, gcc_gain={k: np.asarray(v, dtype=float) for k, v in gains.items()})

    # DCC-C / DCC-U
    _reject("gcc_gain", gcc_gain, kind)
    designs = _check_local_designs(network, local_designs)
    gd = _check_global_design(network, global_design, want_constrained=(kind == "DCC-C"))
    return ControllerSet(**base, local_designs=designs, global_design=gd)


def _outputs(cs: ControllerSet, ms: MeasuredState) -> list:
    return [ms.inventories[i] - cs.x_targets[i] for i in range(cs.N)]


def compute_orders(cs: ControllerSet, ms: MeasuredState) -> list:
    """Evaluate every chain's order vector for the measured network state:
    the constant schedule, plus local feedback on the chain's own error,
    plus the consensus correction — with layers the strategy lacks at zero.
    """
    N = cs.N
    if len(ms.inventories) != N:
        raise ValueError(f"measured state lists {len(ms.inventories)} chains, controller has {N}")
    for i in range(N):
        if ms.inventories[i].shape != cs.x_targets[i].shape:
            raise ValueError(f"chain {i}: inventory measurement has the wrong dimension")
        if ms.pipelines[i].shape != cs.pipe_targets[i].shape:
            raise ValueError(f"chain {i}: pipeline measurement has the wrong dimension")

    orders = [u.copy() for u in cs.u_bar]

    if cs.local_designs is not None:
        for i in range(N):
            err = np.concatenate(
                [ms.inventories[i] - cs.x_targets[i], ms.pipelines[i] - cs.pipe_targets[i]]
            )
            orders[i] = orders[i] + cs.local_designs[i].L @ err

    if cs.global_design is not None:
        y = _outputs(cs, ms)
        K = cs.global_design.K_blocks
        for i in range(N):
            for j in range(N):
                orders[i] = orders[i] + K[(i, j)] @ y[j]
    elif cs.gcc_gain is not None:
        y = _outputs(cs, ms)
        G = cs.gcc_gain
        for i in range(N):
            corr = G[(i, i)] @ y[i]
            for j in range(N):
                if j != i:
                    corr = corr + G[(i, j)] @ (y[i] - y[j])
            orders[i] = orders[i] + corr

    if cs.clamp_nonnegative:
        orders = [np.maximum(u, 0.0) for u in orders]
    return orders
