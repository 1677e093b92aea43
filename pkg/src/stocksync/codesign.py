"""Controller synthesis for chain networks.

Three layers, used in sequence by the full pipeline:

1. :func:`design_local_basic` — per-chain state feedback making the error
   dynamics dissipative with respect to an input-feedforward/output-feedback
   passivity (IF-OFP) style supply rate, searched jointly with the rate's
   scalar indices.
2. :func:`design_local_improved` — the same synthesis with an additional
   scalar feasibility block baked in, which is a necessary condition for the
   later network-level step to succeed.  The output-passivity index is
   deliberately allowed to be *negative* (shortage) here; the network step
   compensates through the coupling design.
3. :func:`codesign_global` — the joint consensus-gain + communication-topology
   optimization: one structured LMI over all chains whose 1-norm-penalized
   coupling blocks both shape the closed-loop disturbance gain and decide
   which chain pairs communicate at all.

Sign conventions for the local certificates produced here
---------------------------------------------------------
``X = [[-nu*I, Xc], [Xc', rho*I]]`` with input port the full error state
(dimension ``n_state``) and output port the inventory errors (``n``), where
``Xc`` is half the output selector transposed.  ``design_local_improved``
certifies ``nu < 0`` and ``rho < 0`` (both shortages); this is exactly the
combination the network LMI requires (its input-side weight ``-nu*I`` must be
positive definite and its output-side weight ``rho*I`` negative definite).
``design_local_basic`` uses the textbook convention ``X22 = -rho*I`` with
``rho > 0`` (output-strict) instead; its designs are meant for standalone
tracking, not for the network step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ErrorDynamics, NetworkSpec, StateSpaceRealization, consensus_projection
from .lmi.algebra import AffineMatrixExpr, AffineScalarExpr
from .lmi.dissipativity import SupplyRate, _xp_expr, _xp_times_const
from .lmi.problem import LmiProblem, SolveOptions, SolveResult, solve

__all__ = [
    "SynthesisError",
    "LocalDesign",
    "GlobalDesign",
    "Topology",
    "design_local_basic",
    "design_local_improved",
    "codesign_global",
    "design_network",
    "recover_L_from_K",
    "extract_topology",
    "local_feasibility_block",
    "network_error_system",
    "network_storage",
    "default_rho_grid",
]

_NU_FLOOR = -1.0e3  # box for the otherwise unbounded input-shortage search
_COND_LIMIT = 1.0e10


class SynthesisError(RuntimeError):
    """A synthesis LMI (or every point of a synthesis sweep) failed; carries
    per-attempt diagnostics."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class LocalDesign:
    """One chain's synthesized local controller and its certificate.

    ``P_storage`` is the storage matrix of the certified dissipation
    inequality (the LMI decision variable is its inverse, kept as ``P_lmi``).
    ``passivity_nu`` / ``passivity_rho`` are the raw scalar indices in the
    convention of the synthesis route that produced them (see module
    docstring); ``X`` always carries the literal supply-rate blocks.
    """

    L: np.ndarray
    P_storage: np.ndarray
    P_lmi: np.ndarray
    X: SupplyRate
    passivity_nu: float
    passivity_rho: float
    design: str  # "basic" | "improved"
    extended_output: bool
    gamma_tilde: float | None = None
    p_used: float | None = None
    result: SolveResult | None = field(default=None, repr=False)
    rho_diagnostics: list = field(default_factory=list, repr=False)


@dataclass
class GlobalDesign:
    """Network-level consensus gains, scalings, and the certified gain bound.

    ``K_blocks[(i, j)]`` weights chain ``j``'s inventory errors inside chain
    ``i``'s order correction; ``L_blocks`` is the equivalent
    relative-feedback form; ``Kbar_blocks`` are the raw scaled variables
    (``K_blocks`` times ``p[i]``). ``gamma_tilde`` bounds the squared
    disturbance-to-consensus-error gain.
    """

    K_blocks: dict
    L_blocks: dict
    Kbar_blocks: dict
    gamma_tilde: float
    p: np.ndarray
    gamma_bar_binding: bool
    constrained: bool
    result: SolveResult = field(repr=False)


@dataclass
class Topology:
    """Communication structure read off a :class:`GlobalDesign`.

    ``edges[(j, i)]`` (information flowing j -> i, cross-chain only) lists the
    retained inventory index pairs ``(k, l)``; ``weights[(j, i)]`` holds the
    full magnitude matrix of that coupling block.  Self couplings are not
    communication and are reported in ``self_loops``.
    """

    edges: dict
    weights: dict
    self_loops: dict
    threshold: float


def default_rho_grid(points: int = 25) -> np.ndarray:
    """Log-spaced negative candidates for the output-passivity index used by
    :func:`design_local_improved`, from -1e3 to -1e-3."""
    return -np.logspace(3.0, -3.0, points)


# ---------------------------------------------------------------------------
# shared 4-block local synthesis skeleton
# ---------------------------------------------------------------------------


def _local_synthesis_expr(Pe, Ke, A, B, C, T11, X21, X11blk) -> AffineMatrixExpr:
    """The common local-synthesis block structure::

        [ T11    0           C P       0   ]
        [ 0      P           A P + BK  I   ]
        [ P C'   P A'+K'B'   P         P W ]      W = C' X21
        [ 0      I           (P W)'    X11 ]  >= 0

    with ``P`` the inverse-storage variable and ``K`` the scaled gain.
    ``T11`` and ``X11blk`` may be constants or variable-scaled identities.
    """
    n = A.shape[0]
    n_y = C.shape[0]
    CP = Pe.lmul(C)
    APBK = Pe.lmul(A) + Ke.lmul(B)
    PW = Pe.rmul(C.T @ X21)
    return AffineMatrixExpr.block(
        [
            [T11, None, CP, np.zeros((n_y, n))],
            [None, Pe, APBK, np.eye(n)],
            [CP.T, APBK.T, Pe, PW],
            [np.zeros((n, n_y)), np.eye(n), PW.T, X11blk],
        ]
    )


def _finish_local(res: SolveResult, A, B) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Recover (L, P_storage, P_lmi, closed-loop spectral radius) from a
    feasible local synthesis solve; raises on ill-conditioned P."""
    P = np.asarray(res.values["P"])
    K = np.asarray(res.values["K"])
    cond = np.linalg.cond(P)
    if cond > _COND_LIMIT:
        raise SynthesisError(f"storage variable ill-conditioned (cond={cond:.2e})")
    L = K @ np.linalg.inv(P)
    P_storage = np.linalg.inv(0.5 * (P + P.T))
    P_storage = 0.5 * (P_storage + P_storage.T)
    radius = float(np.max(np.abs(np.linalg.eigvals(A + B @ L))))
    return L, P_storage, P, radius


# ---------------------------------------------------------------------------
# local design, basic form
# ---------------------------------------------------------------------------


def design_local_basic(
    ed: ErrorDynamics,
    X: SupplyRate | None = None,
    extended_output: bool | None = None,
    nu_floor: float = _NU_FLOOR,
    margin: float = 1e-6,
    eps_p: float = 1e-6,
    options: SolveOptions | None = None,
) -> LocalDesign:
    """Design the local gain making one chain's error dynamics dissipative.

    With ``X`` given, the supply rate is fixed and the LMI searches the gain
    and (inverse) storage only; the output map is inferred from ``X``'s port
    sizes (inventory errors, or the full error state when they match the
    state dimension).  With ``X`` omitted, the scalar indices of an
    IF-OFP-style rate are searched jointly (output-strict convention
    ``X22 = -rho*I``, ``rho > 0``) on the full-state output port by default
    (this index combination needs the extended port to be meaningful),
    minimizing the input index ``nu`` down to ``nu_floor`` — the search is
    otherwise unbounded in that direction.

    Raises :class:`SynthesisError` when infeasible (which is conclusive for
    the given supply rate up to the quadratic-storage parameterization —
    e.g. no strictly proper system admits a plain passivity rate).
    """
    A, B = ed.A, ed.B
    if X is not None:
        if extended_output is None:
            if X.n_y == ed.n_state:
                extended_output = True
            elif X.n_y == ed.C.shape[0]:
                extended_output = False
            else:
                raise ValueError(
                    f"supply rate output port {X.n_y} matches neither the measured "
                    f"output ({ed.C.shape[0]}) nor the full state ({ed.n_state})"
                )
        C = np.eye(ed.n_state) if extended_output else ed.C
        if X.n_u != ed.n_state or X.n_y != C.shape[0]:
            raise ValueError(
                f"supply rate ports ({X.n_u}, {X.n_y}) do not match "
                f"(state {ed.n_state}, output {C.shape[0]})"
            )
        w22 = np.linalg.eigvalsh(X.X22)
        if w22[-1] >= 0:
            raise SynthesisError(
                "the output-side supply block must be negative definite for the "
                f"gain synthesis (max eigenvalue {w22[-1]:.3e}); rates without "
                "output strictness (e.g. plain passivity) are unattainable for "
                "these strictly proper dynamics"
            )
        prob = LmiProblem()
        Pe = prob.symmetric("P", ed.n_state)
        Ke = prob.rectangular("K", B.shape[1], ed.n_state)
        M = _local_synthesis_expr(  # port input is the residual on the full state

            Pe, Ke, A, B, C,
            AffineMatrixExpr.constant(np.linalg.inv(-X.X22)),
            X.X21,
            AffineMatrixExpr.constant(X.X11),
        )
        prob.require_psd(Pe, margin=eps_p, name="P_pos")
        prob.require_psd(M, margin=margin, name="local_synthesis")
        res = solve(prob, options)
        if not res.feasible:
            raise SynthesisError(
                f"local synthesis infeasible for the given supply rate ({res.status})",
                diagnostics=[res],
            )
        L, P_storage, P_lmi, _ = _finish_local(res, A, B)
        nu = float(X.params.get("nu", np.nan))
        rho = float(X.params.get("rho", np.nan))
        return LocalDesign(
            L=L, P_storage=P_storage, P_lmi=P_lmi, X=X,
            passivity_nu=nu, passivity_rho=rho,
            design="basic", extended_output=extended_output, result=res,
        )

    # joint search over the scalar indices
    extended = True if extended_output is None else extended_output
    C = np.eye(ed.n_state) if extended else ed.C
    n_y = C.shape[0]
    prob = LmiProblem()
    Pe = prob.symmetric("P", ed.n_state)
    Ke = prob.rectangular("K", B.shape[1], ed.n_state)
    nu = prob.scalar("nu", lower=nu_floor)
    rho_tilde = prob.scalar("rho_tilde", lower=1e-9)
    M = _local_synthesis_expr(
        Pe, Ke, A, B, C,
        AffineMatrixExpr.scalar_times(rho_tilde, np.eye(n_y)),
        0.5 * C,  # X21 for the cross block C'/2
        AffineMatrixExpr.scalar_times(nu, -np.eye(ed.n_state)),
    )
    prob.require_psd(Pe, margin=eps_p, name="P_pos")
    prob.require_psd(M, margin=margin, name="local_synthesis")
    prob.minimize(prob.scalar_expr(nu))
    res = solve(prob, options)
    if not res.feasible:
        raise SynthesisError(
            f"local synthesis infeasible in the joint index search ({res.status})",
            diagnostics=[res],
        )
    L, P_storage, P_lmi, _ = _finish_local(res, A, B)
    nu_val = float(res.values["nu"])
    rho_val = 1.0 / float(res.values["rho_tilde"])
    X_out = SupplyRate(
        "ifofp",
        -nu_val * np.eye(ed.n_state),
        0.5 * C.T,
        -rho_val * np.eye(n_y),
        params={"nu": nu_val, "rho": rho_val},
    )
    return LocalDesign(
        L=L, P_storage=P_storage, P_lmi=P_lmi, X=X_out,
        passivity_nu=nu_val, passivity_rho=rho_val,
        design="basic", extended_output=extended, result=res,
    )


# ---------------------------------------------------------------------------
# local design, improved form (network-feasibility aware)
# ---------------------------------------------------------------------------


def local_feasibility_block(
    nu: float, rho: float, p_i: float, gamma_i: float, N: int
) -> np.ndarray:
    """The scalar 4x4 necessary condition a chain's certificate must satisfy
    for the network LMI to stand a chance: the network certificate restricted
    to a single inventory coordinate of one chain (the one its coupling rows
    cannot touch), with ``gamma_i`` standing in for the network gain bound."""
    e = 1.0 - 1.0 / N
    return np.array(
        [
            [-p_i * nu, 0.0, 0.0, p_i * nu],
            [0.0, 1.0, e, 0.0],
            [0.0, e, -p_i * rho, 0.5 * p_i],
            [p_i * nu, 0.0, 0.5 * p_i, gamma_i],
        ]
    )


def _improved_point(
    ed: ErrorDynamics,
    rho: float,
    p_i: float,
    N: int,
    extended: bool,
    margin: float,
    eps_p: float,
    options: SolveOptions | None,
):
    """Solve the improved local design at one fixed rho; returns
    (gamma, values, result) or (None, None, result)."""
    A, B = ed.A, ed.B
    C = np.eye(ed.n_state) if extended else ed.C
    n_y = C.shape[0]
    rho_tilde = 1.0 / rho  # negative

    prob = LmiProblem()
    Pe = prob.symmetric("P", ed.n_state)
    Ke = prob.rectangular("K", B.shape[1], ed.n_state)
    nu = prob.scalar("nu", upper=0.0)
    gamma = prob.scalar("gamma", lower=0.0)

    M = _local_synthesis_expr(
        Pe, Ke, A, B, C,
        AffineMatrixExpr.constant(-rho_tilde * np.eye(n_y)),
        0.5 * C,
        AffineMatrixExpr.scalar_times(nu, -np.eye(ed.n_state)),
    )
    e = 1.0 - 1.0 / N
    const_blk = np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, e, 0.0],
            [0.0, e, -p_i * rho, 0.5 * p_i],
            [0.0, 0.0, 0.5 * p_i, 0.0],
        ]
    )
    nu_coeff = p_i * np.array(
        [
            [-1.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )
    gamma_coeff = np.zeros((4, 4))
    gamma_coeff[3, 3] = 1.0
    feas = (
        AffineMatrixExpr.constant(const_blk)
        + AffineMatrixExpr.scalar_times(nu, nu_coeff)
        + AffineMatrixExpr.scalar_times(gamma, gamma_coeff)
    )
    prob.require_psd(Pe, margin=eps_p, name="P_pos")
    prob.require_psd(M, margin=margin, name="local_synthesis")
    prob.require_psd(feas, margin=margin, name="network_feasibility")
    prob.minimize(prob.scalar_expr(gamma))
    res = solve(prob, options)
    if not res.feasible:
        return None, None, res
    return float(res.values["gamma"]), res.values, res


def design_local_improved(
    ed: ErrorDynamics,
    p_i: float = 1.0,
    N: int = 2,
    rho_grid: Sequence[float] | None = None,
    extended_output: bool = False,
    margin: float = 1e-6,
    eps_p: float = 1e-6,
    options: SolveOptions | None = None,
) -> LocalDesign:
    """Local design that also enforces the scalar network-feasibility block.

    The output-passivity candidate ``rho < 0`` appears both directly and
    through its reciprocal, so the joint problem is not convex; it is swept
    over ``rho_grid`` (each point is an LMI) minimizing the chain's own gain
    bound ``gamma_tilde``, followed by one bisection refinement around the
    best point.  Ties prefer the smallest ``|rho|``.  The default output port
    is the inventory errors — the form the network step consumes; the
    extended (full-state) variant is available for standalone use but its
    certificate cannot feed :func:`codesign_global`.

    The returned design has ``passivity_nu < 0`` and ``passivity_rho < 0``,
    a spectral radius < 1 closed loop, and a feasibility block
    (:func:`local_feasibility_block`) that is PSD at the returned values.
    """
    if p_i <= 0:
        raise ValueError(f"p_i must be positive, got {p_i}")
    if N < 2:
        raise ValueError(f"the network-feasibility block needs N >= 2, got {N}")
    grid = np.asarray(rho_grid if rho_grid is not None else default_rho_grid(), dtype=float)
    if np.any(grid >= 0):
        raise ValueError("rho_grid must contain negative candidates only")

    diagnostics = []
    best = None  # (gamma, abs(rho), rho, values, res)

    def attempt(rho: float):
        nonlocal best
        rho = float(rho)
        gamma, values, res = _improved_point(
            ed, rho, p_i, N, extended_output, margin, eps_p, options
        )
        if gamma is None:
            diagnostics.append((rho, res.status, None))
            return
        radius = _closed_loop_radius(ed, values)
        if radius >= 1.0:
            diagnostics.append((rho, f"unstable closed loop (radius {radius:.4f})", gamma))
            return
        diagnostics.append((rho, "optimal", gamma))
        key = (gamma, abs(rho))
        if best is None or key < (best[0], best[1]):
            best = (gamma, abs(rho), rho, values, res)

    for rho in grid:
        attempt(rho)

    if best is not None:
        # one bisection pass in log-magnitude around the winner
        mags = np.abs(grid)
        b = int(np.argmin(np.abs(np.abs(grid) - best[1])))
        for nb in (b - 1, b + 1):
            if 0 <= nb < len(grid):
                attempt(-float(np.sqrt(mags[b] * mags[nb])))

    if best is None:
        lines = ", ".join(f"rho={r:.3e}: {s}" for r, s, _ in diagnostics[:8])
        raise SynthesisError(
            f"improved local design infeasible at every rho candidate ({lines} ...)",
            diagnostics=diagnostics,
        )

    gamma, _, rho, values, res = best
    L, P_storage, P_lmi, _ = _finish_local(res, ed.A, ed.B)
    nu_val = float(values["nu"])
    C = np.eye(ed.n_state) if extended_output else ed.C
    X_out = SupplyRate(
        "ifofp",
        -nu_val * np.eye(ed.n_state),
        0.5 * C.T,
        rho * np.eye(C.shape[0]),
        params={"nu": nu_val, "rho": rho},
    )
    return LocalDesign(
        L=L, P_storage=P_storage, P_lmi=P_lmi, X=X_out,
        passivity_nu=nu_val, passivity_rho=rho,
        design="improved", extended_output=extended_output,
        gamma_tilde=gamma, p_used=p_i, result=res,
        rho_diagnostics=diagnostics,
    )


def _closed_loop_radius(ed: ErrorDynamics, values: dict) -> float:
    P = np.asarray(values["P"])
    K = np.asarray(values["K"])
    L = K @ np.linalg.inv(P)
    return float(np.max(np.abs(np.linalg.eigvals(ed.A + ed.B @ L))))


# ---------------------------------------------------------------------------
# global co-design
# ---------------------------------------------------------------------------


def codesign_global(
    network: NetworkSpec,
    ed_list: Sequence[ErrorDynamics],
    local_designs: Sequence[LocalDesign],
    constrain_to_reference: bool = False,
    margin: float = 1e-6,
    p_min: float = 1e-9,
    l1_floor: float = 1e-9,
    options: SolveOptions | None = None,
) -> GlobalDesign:
    """Jointly pick the consensus coupling blocks, certificate scalings, and
    the disturbance-to-consensus-error gain bound for the whole network.

    One LMI over the scaled coupling blocks, per-chain scalings ``p_i > 0``,
    and the squared gain bound ``gamma_tilde`` (boxed by the network's
    ``gamma_bar``); the objective trades ``c0 * gamma_tilde`` against the
    communication cost, a 1-norm over coupling entries weighted by the
    network's cost coefficients (two-level reference costs by default, an
    explicit matrix when the network carries one; self couplings are free:
    they need no communication).  With
    ``constrain_to_reference`` the out-of-reference blocks are not merely
    penalized but structurally absent, so their recovered gains are exactly
    zero.  ``l1_floor`` adds a uniform tiny 1-norm weight on every block
    (self couplings included) so degenerate directions resolve
    deterministically; it is orders of magnitude below any real cost.

    Requires every local certificate to cover the inventory-error port with a
    positive-definite input-side block and negative-definite output-side
    block (the convention :func:`design_local_improved` produces).  Raises
    :class:`SynthesisError` when infeasible — typically the local designs
    must be redone with different scalings or the gain box relaxed.
    """
    N, n = network.N, network.n
    if not (len(ed_list) == len(local_designs) == N):
        raise ValueError(
            f"expected {N} error-dynamics/designs, got {len(ed_list)}/{len(local_designs)}"
        )
    for i, d in enumerate(local_designs):
        if d.X.n_y != n:
            raise ValueError(
                f"chain {i}: certificate output port {d.X.n_y} != inventory count {n}; "
                "the network step needs inventory-error-port certificates "
                "(design_local_improved with extended_output=False)"
            )
        if np.linalg.eigvalsh(d.X.X11)[0] <= 0:
            raise ValueError(
                f"chain {i}: input-side certificate block must be positive definite "
                "(nu < 0); rerun the local design"
            )
        if np.linalg.eigvalsh(d.X.X22)[-1] >= 0:
            raise ValueError(
                f"chain {i}: output-side certificate block must be negative definite "
                "(rho < 0); rerun the local design"
            )

    dims = [ed.n_state for ed in ed_list]
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    n_bar = int(off[-1])
    nN = n * N
    reference = {(int(j), int(i)) for (j, i) in network.reference_topology}

    X11_blocks = [d.X.X11 for d in local_designs]
    X22_blocks = [d.X.X22 for d in local_designs]
    X12bold = np.zeros((n_bar, nN))
    for i, d in enumerate(local_designs):
        X12bold[off[i] : off[i + 1], n * i : n * (i + 1)] = np.linalg.solve(d.X.X11, d.X.X12)
    X21bold = X12bold.T
    D_all = np.zeros((n_bar, nN))
    for i, ed in enumerate(ed_list):
        D_all[off[i] : off[i + 1], n * i : n * (i + 1)] = ed.D
    E = consensus_projection(N, n)

    prob = LmiProblem()
    p_vars = [prob.scalar(f"p{i}", lower=p_min) for i in range(N)]
    gamma = prob.scalar("gamma", lower=0.0, upper=network.gamma_bar)

    cost_matrix = network.cost_matrix()

    def allowed(i: int, j: int) -> bool:
        return i == j or not constrain_to_reference or (j, i) in reference

    def cost(i: int, j: int) -> np.ndarray:
        return cost_matrix[n * i : n * (i + 1), n * j : n * (j + 1)] + l1_floor

    kbar_names = {}
    L_eta_y = AffineMatrixExpr((n_bar, nN))
    for i in range(N):
        left = np.zeros((n_bar, n))
        left[off[i] : off[i + 1], :] = X11_blocks[i] @ ed_list[i].B
        for j in range(N):
            if not allowed(i, j):
                continue
            name = f"Kbar_{i}_{j}"
            Kb = prob.rectangular(name, n, n)
            kbar_names[(i, j)] = name
            right = np.zeros((n, nN))
            right[:, n * j : n * (j + 1)] = np.eye(n)
            L_eta_y = L_eta_y + Kb.lmul(left).rmul(right)

    Xp11 = _xp_expr(p_vars, X11_blocks)
    Xp22 = _xp_expr(p_vars, X22_blocks)
    L_eta_r = _xp_times_const(p_vars, X11_blocks, D_all)

    cross = (-1.0) * L_eta_y.T.rmul(X12bold)  # -L' X12
    blk33 = cross + cross.T - Xp22
    blk34 = (-1.0) * L_eta_r.lmul(X21bold)  # -X21 (Xp11 D)
    blk44 = AffineMatrixExpr.scalar_times(gamma, np.eye(nN))

    M = AffineMatrixExpr.block(
        [
            [Xp11, None, L_eta_y, L_eta_r],
            [None, np.eye(nN), E, None],
            [L_eta_y.T, E.T, blk33, blk34],
            [L_eta_r.T, None, blk34.T, blk44],
        ]
    )
    prob.require_psd(M, margin=margin, name="network")

    objective = prob.scalar_expr(gamma) * network.c0
    for (i, j), name in kbar_names.items():
        Kb = AffineMatrixExpr.of_variable(prob._by_name[name])
        S = prob.rectangular(f"S_{i}_{j}", n, n)
        for k in range(n):
            for l in range(n):
                prob.require_nonneg((S - Kb).entry(k, l))
                prob.require_nonneg((S + Kb).entry(k, l))
        objective = objective + AffineScalarExpr.of_variable(
            prob._by_name[f"S_{i}_{j}"], cost(i, j)
        )
    prob.minimize(objective)

    res = solve(prob, options)
    if not res.feasible:
        raise SynthesisError(
            f"network co-design infeasible ({res.status}); consider rerunning the "
            "local designs with different scalings or relaxing the gain box",
            diagnostics=[res],
        )

    p = np.array([float(res.values[f"p{i}"]) for i in range(N)])
    gamma_val = float(res.values["gamma"])
    Kbar_blocks, K_blocks = {}, {}
    for i in range(N):
        for j in range(N):
            if (i, j) in kbar_names:
                Kb = np.asarray(res.values[kbar_names[(i, j)]])
            else:
                Kb = np.zeros((n, n))
            Kbar_blocks[(i, j)] = Kb
            K_blocks[(i, j)] = Kb / p[i]
    return GlobalDesign(
        K_blocks=K_blocks,
        L_blocks=recover_L_from_K(K_blocks),
        Kbar_blocks=Kbar_blocks,
        gamma_tilde=gamma_val,
        p=p,
        gamma_bar_binding=bool(gamma_val >= network.gamma_bar - 1e-6),
        constrained=constrain_to_reference,
        result=res,
    )


def design_network(
    network: NetworkSpec,
    ed_list: Sequence[ErrorDynamics],
    constrain_to_reference: bool = False,
    rho_grid: Sequence[float] | None = None,
    p_refine_iterations: int = 0,
    options: SolveOptions | None = None,
) -> tuple[list[LocalDesign], GlobalDesign]:
    """Full pipeline: improved local designs (unit scalings) followed by the
    network co-design; optionally re-run the local step at the network's
    chosen scalings (at most 3 rounds, keeping the best gain bound)."""
    p_refine_iterations = min(int(p_refine_iterations), 3)
    locals_ = [
        design_local_improved(ed, p_i=1.0, N=network.N, rho_grid=rho_grid, options=options)
        for ed in ed_list
    ]
    gd = codesign_global(
        network, ed_list, locals_, constrain_to_reference, options=options
    )
    for _ in range(p_refine_iterations):
        try:
            retuned = [
                design_local_improved(
                    ed, p_i=float(gd.p[i]), N=network.N, rho_grid=rho_grid, options=options
                )
                for i, ed in enumerate(ed_list)
            ]
            gd_new = codesign_global(
                network, ed_list, retuned, constrain_to_reference, options=options
            )
        except SynthesisError:
            break
        if gd_new.gamma_tilde >= gd.gamma_tilde - 1e-9:
            break
        locals_, gd = retuned, gd_new
    return locals_, gd


# ---------------------------------------------------------------------------
# recovery / extraction
# ---------------------------------------------------------------------------


def recover_L_from_K(K_blocks: dict) -> dict:
    """Convert absolute coupling blocks into the relative-feedback form:
    the cross gains flip sign, and each self gain absorbs the row sum so that
    the two forms produce identical order corrections for any outputs."""
    idx = sorted({i for (i, _) in K_blocks})
    L_blocks = {}
    for i in idx:
        acc = K_blocks[(i, i)].copy()
        for j in idx:
            if j == i:
                continue
            L_blocks[(i, j)] = -K_blocks[(i, j)]
            acc = acc + K_blocks[(i, j)]
        L_blocks[(i, i)] = acc
    return L_blocks


def extract_topology(gd: GlobalDesign, threshold_rel: float = 1e-5) -> Topology:
    """Read the communication structure off the recovered coupling blocks:
    an entry is retained when its magnitude exceeds ``threshold_rel`` times
    the largest magnitude anywhere in the coupling; a cross-chain edge exists
    when its block retains at least one entry."""
    if threshold_rel <= 0:
        raise ValueError("threshold_rel must be positive")
    maxmag = max((np.max(np.abs(K)) for K in gd.K_blocks.values()), default=0.0)
    cut = threshold_rel * maxmag
    edges, weights, self_loops = {}, {}, {}
    for (i, j), K in sorted(gd.K_blocks.items()):
        mags = np.abs(K)
        kept = [(k, l) for k in range(K.shape[0]) for l in range(K.shape[1]) if mags[k, l] > cut]
        if not kept:
            continue
        if i == j:
            self_loops[i] = kept
        else:
            edges[(j, i)] = kept  # information flows j -> i
            weights[(j, i)] = mags
    return Topology(edges=edges, weights=weights, self_loops=self_loops, threshold=cut)


# ---------------------------------------------------------------------------
# closed-loop assembly (shared by tests, simulation checks, acceptance)
# ---------------------------------------------------------------------------


def network_error_system(
    ed_list: Sequence[ErrorDynamics],
    local_designs: Sequence[LocalDesign],
    gd: GlobalDesign,
) -> StateSpaceRealization:
    """The closed-loop network as one LTI system from stacked disturbances to
    the consensus error (deviation of each chain's inventory errors from the
    cross-chain mean)."""
    N = len(ed_list)
    n = ed_list[0].C.shape[0]
    dims = [ed.n_state for ed in ed_list]
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    n_bar = int(off[-1])
    A = np.zeros((n_bar, n_bar))
    B = np.zeros((n_bar, n * N))
    C_stack = np.zeros((n * N, n_bar))
    for i, (ed, d) in enumerate(zip(ed_list, local_designs)):
        ri = slice(off[i], off[i + 1])
        A[ri, ri] = ed.A + ed.B @ d.L
        B[ri, n * i : n * (i + 1)] = ed.D
        C_stack[n * i : n * (i + 1), ri] = ed.C
    for i in range(N):
        ri = slice(off[i], off[i + 1])
        for j in range(N):
            A[ri, off[j] : off[j + 1]] += ed_list[i].B @ gd.K_blocks[(i, j)] @ ed_list[j].C
    E = consensus_projection(N, n)
    return StateSpaceRealization(A, B, E @ C_stack, np.zeros((n * N, n * N)))


def network_storage(local_designs: Sequence[LocalDesign], p: np.ndarray) -> np.ndarray:
    """Block-diagonal composite storage ``diag(p_i * P_storage_i)`` certifying
    the network-level dissipation inequality."""
    blocks = [float(pi) * d.P_storage for pi, d in zip(p, local_designs)]
    total = sum(b.shape[0] for b in blocks)
    out = np.zeros((total, total))
    r = 0
    for b in blocks:
        out[r : r + b.shape[0], r : r + b.shape[0]] = b
        r += b.shape[0]
    return out
