"""Multi-echelon supply chain network model.

A network consists of ``N`` parallel chains. Each chain has ``n`` serial
stages; stage ``k`` holds an inventory (level ``x[k]``) fed through its own
transport pipeline with integer lead time ``tau[k]``. Orders placed by stage
``k`` (``u[k]``) are deducted from the upstream inventory ``x[k-1]`` on the
spot and travel through pipeline ``k`` before arriving. Stage ``n`` serves
exogenous customer demand. Inventories decay at per-step perish rates
``rho[k]`` and both pipelines and inventories leak stochastic waste.

The module provides

* dataclasses describing chains and networks (:class:`ChainSpec`,
  :class:`NetworkSpec`),
* builders for the LTI realizations used by the synthesis layer
  (:func:`build_transport_realization`, :func:`build_chain_error_dynamics`),
* the equilibrium order schedule (:func:`steady_state`), and
* structural validation (:func:`validate_network`).

All matrices are plain ``numpy`` arrays of ``float64``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ChainSpec",
    "NetworkSpec",
    "StateSpaceRealization",
    "ErrorDynamics",
    "SteadyState",
    "build_transport_realization",
    "transport_blocks",
    "build_chain_error_dynamics",
    "steady_state",
    "chain_step",
    "validate_network",
    "consensus_projection",
]


# ---------------------------------------------------------------------------
# dataclasses
# ---------------------------------------------------------------------------


@dataclass
class ChainSpec:
    """Static description of one supply chain.

    Parameters
    ----------
    n : int
        Number of serial stages (inventories).
    tau : list of int
        Transport lead time of the pipeline feeding each stage, ``len == n``,
        each entry >= 1.
    rho : list of float
        Per-step inventory decay ("perish") rate of each stage, in ``[0, 1)``.
    xbar : list of float
        Prescribed equilibrium inventory level of each stage.
    wbar_inv : list of float
        Mean inventory waste per step, per stage.
    wbar_tr : list of float
        Mean transport waste per step, per stage pipeline.
    dbar : float
        Mean customer demand per step (served by stage ``n``).
    """

    n: int
    tau: list[int]
    rho: list[float]
    xbar: list[float]
    wbar_inv: list[float]
    wbar_tr: list[float]
    dbar: float

    @property
    def tau_total(self) -> int:
        """Total pipeline length (number of transport state slots)."""
        return int(sum(self.tau))

    @property
    def n_state(self) -> int:
        """Dimension of the stacked (inventory, pipeline) state."""
        return self.n + self.tau_total


@dataclass
class NetworkSpec:
    """A network of parallel chains plus co-design cost data.

    ``reference_topology`` lists directed chain pairs ``(j, i)`` (0-based:
    information flowing from chain ``j`` into chain ``i``) whose consensus
    couplings are considered cheap; every other cross-chain coupling is
    penalized with ``cost_outside`` (or hard-forbidden in constrained mode).
    Self couplings ``(i, i)`` are always free and need not be listed.
    ``cost`` may carry an explicit ``(nN, nN)`` matrix of per-inventory-pair
    communication-cost coefficients instead; when given it overrides the
    two-level reference costs in the co-design objective.
    """

    chains: list[ChainSpec]
    gamma_bar: float = 1.0e4
    c0: float = 1.0
    reference_topology: list[tuple[int, int]] = field(default_factory=list)
    cost_in_reference: float = 1.0
    cost_outside: float = 20.0
    cost: np.ndarray | None = None

    @property
    def N(self) -> int:
        return len(self.chains)

    @property
    def n(self) -> int:
        return self.chains[0].n if self.chains else 0

    def cost_matrix(self) -> np.ndarray:
        """Effective ``(nN, nN)`` communication-cost coefficients: the
        explicit ``cost`` when given, otherwise derived from the reference
        topology (cheap inside, penalized outside, free on self pairs)."""
        if self.cost is not None:
            return np.asarray(self.cost, dtype=float)
        N, n = self.N, self.n
        reference = {(int(j), int(i)) for (j, i) in self.reference_topology}
        C = np.zeros((n * N, n * N))
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                level = self.cost_in_reference if (j, i) in reference else self.cost_outside
                C[n * i : n * (i + 1), n * j : n * (j + 1)] = level
        return C


@dataclass
class StateSpaceRealization:
    """Discrete-time LTI system ``x+ = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ValueError(f"B row count {self.B.shape[0]} != state dim {n}")
        if self.C.shape[1] != n:
            raise ValueError(f"C column count {self.C.shape[1]} != state dim {n}")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ValueError(
                f"D must be {(self.C.shape[0], self.B.shape[1])}, got {self.D.shape}"
            )

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]


@dataclass
class ErrorDynamics:
    """Deviation-from-equilibrium dynamics of one chain.

    State ``e = [x - xbar; pipe - pipe_bar]`` evolves as::

        e+ = A e + B v + D r

    where ``v`` is the corrective order input (n-dim), ``r`` the lumped
    zero-mean disturbance (n-dim: transport waste + inventory waste + demand
    deviation, demand entering the last component only), and the measured
    output is ``y = C e`` (the inventory errors). ``D`` is the disturbance
    input matrix -- there is no feedthrough anywhere in this model.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    n: int
    tau: list[int]

    @property
    def n_state(self) -> int:
        return self.A.shape[0]


@dataclass
class SteadyState:
    """Equilibrium of a chain under mean disturbances.

    Attributes
    ----------
    ubar : ndarray, shape (n,)
        Constant order schedule sustaining the equilibrium.
    xbar : ndarray, shape (n,)
        The prescribed inventory levels (copied from the chain spec).
    pipe : ndarray, shape (tau_total,)
        Equilibrium pipeline content: every slot of pipeline ``k`` carries
        ``ubar[k]``.
    """

    ubar: np.ndarray
    xbar: np.ndarray
    pipe: np.ndarray


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _shift_matrix(m: int) -> np.ndarray:
    """m x m nilpotent upshift (ones on the first superdiagonal)."""
    return np.eye(m, k=1)


def build_transport_realization(tau: int) -> StateSpaceRealization:
    """LTI realization of a pure delay line of ``tau`` steps.

    The state holds the orders currently in transit, oldest first; the input
    is the order entering the pipeline and the output is the amount arriving
    (before transport waste is subtracted).
    """
    if tau < 1 or int(tau) != tau:
        raise ValueError(f"transport delay must be a positive integer, got {tau}")
    tau = int(tau)
    A = _shift_matrix(tau)
    B = np.zeros((tau, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, tau))
    C[0, 0] = 1.0
    D = np.zeros((1, 1))
    return StateSpaceRealization(A, B, C, D)


def transport_blocks(tau: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stacked transport matrices ``(Abar, Bbar, Cbar, Dsel)`` for one chain.

    ``Abar`` is block-diagonal over the per-stage delay lines, ``Bbar`` routes
    order ``k`` into the tail of pipeline ``k``, ``Cbar`` reads the head of
    pipeline ``k``, and ``Dsel`` (the equilibrium fill map) carries order
    ``k`` into every slot of pipeline ``k``; it satisfies
    ``(I - Abar)^-1 @ Bbar == Dsel`` and ``Cbar @ Dsel == I``.
    """
    n = len(tau)
    tt = int(sum(tau))
    Abar = np.zeros((tt, tt))
    Bbar = np.zeros((tt, n))
    Cbar = np.zeros((n, tt))
    Dsel = np.zeros((tt, n))
    off = 0
    for k, tk in enumerate(tau):
        tk = int(tk)
        Abar[off : off + tk, off : off + tk] = _shift_matrix(tk)
        Bbar[off + tk - 1, k] = 1.0
        Cbar[k, off] = 1.0
        Dsel[off : off + tk, k] = 1.0
        off += tk
    return Abar, Bbar, Cbar, Dsel


def _inventory_blocks(chain: ChainSpec) -> tuple[np.ndarray, np.ndarray]:
    """Inventory decay matrix ``A = diag(1 - rho)`` and downstream-order
    deduction matrix ``B`` (upshift: stage ``k`` ships ``u[k+1]``)."""
    A = np.diag([1.0 - float(r) for r in chain.rho])
    B = _shift_matrix(chain.n)
    return A, B


def build_chain_error_dynamics(chain: ChainSpec) -> ErrorDynamics:
    """Assemble the deviation dynamics of one chain around its equilibrium."""
    n = chain.n
    Ainv, Binv = _inventory_blocks(chain)
    Abar, Bbar, Cbar, _ = transport_blocks(chain.tau)
    tt = chain.tau_total

    A = np.block([[Ainv, Cbar], [np.zeros((tt, n)), Abar]])
    B = np.vstack([-Binv, Bbar])
    C = np.hstack([np.eye(n), np.zeros((n, tt))])
    D = np.vstack([-np.eye(n), np.zeros((tt, n))])
    return ErrorDynamics(A=A, B=B, C=C, D=D, n=n, tau=[int(t) for t in chain.tau])


def steady_state(chain: ChainSpec) -> SteadyState:
    """Equilibrium orders and pipeline fill for prescribed inventory levels.

    Solves ``ubar = (I - B)^-1 ((I - A) xbar + wbar_tr + wbar_inv + dvec)``
    where ``dvec`` carries the mean demand in its last component; equivalently
    each stage orders its own mean losses plus everything its downstream
    neighbours lose plus the mean demand.
    """
    Ainv, Binv = _inventory_blocks(chain)
    _, _, _, Dsel = transport_blocks(chain.tau)
    dvec = np.zeros(chain.n)
    dvec[-1] = float(chain.dbar)
    rhs = (np.eye(chain.n) - Ainv) @ np.asarray(chain.xbar, dtype=float)
    rhs = rhs + np.asarray(chain.wbar_tr, dtype=float)
    rhs = rhs + np.asarray(chain.wbar_inv, dtype=float) + dvec
    ubar = np.linalg.solve(np.eye(chain.n) - Binv, rhs)
    pipe = Dsel @ ubar
    return SteadyState(ubar=ubar, xbar=np.asarray(chain.xbar, dtype=float), pipe=pipe)


def chain_blocks(chain: ChainSpec) -> tuple[np.ndarray, ...]:
    """Precomputed step matrices ``(Ainv, Binv, Abar, Bbar, Cbar)`` for
    repeated :func:`chain_step_blocks` calls (simulation hot loop)."""
    Ainv, Binv = _inventory_blocks(chain)
    Abar, Bbar, Cbar, _ = transport_blocks(chain.tau)
    return Ainv, Binv, Abar, Bbar, Cbar


def chain_step_blocks(
    blocks: tuple[np.ndarray, ...],
    x: np.ndarray,
    pipe: np.ndarray,
    u: np.ndarray,
    w_inv: np.ndarray,
    w_tr: np.ndarray,
    d: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """:func:`chain_step` on matrices prepared by :func:`chain_blocks`."""
    Ainv, Binv, Abar, Bbar, Cbar = blocks
    dvec = np.zeros(Binv.shape[0])
    dvec[-1] = float(d)
    y = Cbar @ pipe - w_tr
    x_next = Ainv @ x + y - Binv @ u - dvec - w_inv
    pipe_next = Abar @ pipe + Bbar @ u
    return x_next, pipe_next, y


def chain_step(
    chain: ChainSpec,
    x: np.ndarray,
    pipe: np.ndarray,
    u: np.ndarray,
    w_inv: np.ndarray,
    w_tr: np.ndarray,
    d: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance one chain one step in absolute (non-deviation) coordinates.

    Returns ``(x_next, pipe_next, y)`` where ``y`` is the delivery received
    by each stage this step (pipeline head minus transport waste).
    """
    return chain_step_blocks(chain_blocks(chain), x, pipe, u, w_inv, w_tr, d)


def consensus_projection(N: int, n: int) -> np.ndarray:
    """Deviation-from-network-mean map: block ``(i, j)`` is
    ``(delta_ij - 1/N) I_n``. For ``N = 1`` this is the zero matrix."""
    E = np.kron(np.eye(N) - np.ones((N, N)) / N, np.eye(n))
    return E


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _validate_chain(chain: ChainSpec, label: str) -> None:
    if chain.n < 1:
        raise ValueError(f"{label}: need at least one stage, got n={chain.n}")
    for name in ("tau", "rho", "xbar", "wbar_inv", "wbar_tr"):
        vals = getattr(chain, name)
        if len(vals) != chain.n:
            raise ValueError(
                f"{label}: {name} has length {len(vals)}, expected n={chain.n}"
            )
    for k, tk in enumerate(chain.tau):
        if int(tk) != tk or tk < 1:
            raise ValueError(
                f"{label}: tau[{k}]={tk} must be a positive integer"
            )
    for k, rk in enumerate(chain.rho):
        if not (0.0 <= rk < 1.0):
            raise ValueError(f"{label}: rho[{k}]={rk} outside [0, 1)")
    for name in ("wbar_inv", "wbar_tr"):
        for k, wk in enumerate(getattr(chain, name)):
            if wk < 0:
                raise ValueError(f"{label}: {name}[{k}]={wk} must be nonnegative")
    if chain.dbar < 0:
        raise ValueError(f"{label}: dbar={chain.dbar} must be nonnegative")


def validate_network(spec: NetworkSpec) -> None:
    """Check structural consistency of a network description.

    Raises ``ValueError`` with a precise message on the first violation.
    """
    if not spec.chains:
        raise ValueError("network has no chains")
    n0 = spec.chains[0].n
    for i, chain in enumerate(spec.chains):
        _validate_chain(chain, f"chain {i + 1}")
        if chain.n != n0:
            raise ValueError(
                f"chain {i + 1}: n={chain.n} differs from chain 1 (n={n0}); "
                "all chains must have the same number of stages"
            )
    N = spec.N
    seen: set[tuple[int, int]] = set()
    for e, (j, i) in enumerate(spec.reference_topology):
        if not (0 <= j < N and 0 <= i < N):
            raise ValueError(
                f"reference_topology[{e}]={(j, i)} out of range for N={N} (0-based)"
            )
        if j == i:
            raise ValueError(
                f"reference_topology[{e}]={(j, i)}: self pairs are implicit, "
                "list only cross-chain pairs"
            )
        if (j, i) in seen:
            raise ValueError(f"reference_topology[{e}]={(j, i)} listed twice")
        seen.add((j, i))
    if spec.gamma_bar < 0:
        raise ValueError(f"gamma_bar={spec.gamma_bar} must be nonnegative")
    if spec.c0 < 0:
        raise ValueError(f"c0={spec.c0} must be nonnegative")
    if spec.cost_in_reference < 0 or spec.cost_outside < 0:
        raise ValueError("coupling costs must be nonnegative")
    if spec.cost is not None:
        C = np.asarray(spec.cost, dtype=float)
        nN = spec.n * N
        if C.shape != (nN, nN):
            raise ValueError(f"cost matrix must be {(nN, nN)}, got {C.shape}")
        if np.any(C < 0):
            raise ValueError("cost matrix entries must be nonnegative")
