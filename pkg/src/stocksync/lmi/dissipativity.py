"""Supply rates, dissipativity verification/synthesis LMIs, and the
trajectory-sampling oracle.

Conventions
-----------
A system is ``X``-dissipative (around an equilibrium) when every trajectory
satisfies ``V(x+) - V(x) <= s(u, y)`` with quadratic storage
``V(x) = x' P x`` and supply ``s(u, y) = [u; y]' [[X11, X12], [X21, X22]]
[u; y]``. Named specializations (``SupplyRate`` constructors):

* ``passive``:           X = [[0, I/2], [I/2, 0]]
* ``ifofp(nu, rho)``:    X = [[-nu I, I/2], [I/2, -rho I]]
* ``l2_gain(gamma)``:    X = [[gamma^2 I, 0], [0, -I]]
* ``sector(a, b)``:      X = [[-ab I, (a+b)/2 I], [(a+b)/2 I, -I]]

All synthesis routines return, alongside the designed gain, the *storage*
matrix (the LMI variable of the synthesis form is the inverse of the storage;
the inversion happens here so callers never see the internal variable).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..model import StateSpaceRealization
from .algebra import AffineMatrixExpr, AffineScalarExpr
from .problem import LmiProblem, SolveOptions, SolveResult, solve

__all__ = [
    "SupplyRate",
    "check_xeid_lti",
    "dissipativate_local",
    "InterconnectionDesign",
    "synthesize_interconnection",
    "trajectory_dissipativity_check",
]

_DEFAULT_ALPHA_GRID = (0.1, 0.5, 1.0, 2.0, 10.0)


@dataclass
class SupplyRate:
    """Quadratic supply rate s(u, y) = [u; y]' X [u; y] in block form."""

    kind: str
    X11: np.ndarray
    X12: np.ndarray
    X22: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.X11 = np.atleast_2d(np.asarray(self.X11, dtype=float))
        self.X12 = np.atleast_2d(np.asarray(self.X12, dtype=float))
        self.X22 = np.atleast_2d(np.asarray(self.X22, dtype=float))
        if self.X11.shape[0] != self.X11.shape[1]:
            raise ValueError("X11 must be square")
        if self.X22.shape[0] != self.X22.shape[1]:
            raise ValueError("X22 must be square")
        if self.X12.shape != (self.X11.shape[0], self.X22.shape[0]):
            raise ValueError(
                f"X12 must be {(self.X11.shape[0], self.X22.shape[0])}, got {self.X12.shape}"
            )
        if not np.allclose(self.X11, self.X11.T, atol=1e-12):
            raise ValueError("X11 must be symmetric")
        if not np.allclose(self.X22, self.X22.T, atol=1e-12):
            raise ValueError("X22 must be symmetric")

    @property
    def X21(self) -> np.ndarray:
        return self.X12.T

    @property
    def n_u(self) -> int:
        return self.X11.shape[0]

    @property
    def n_y(self) -> int:
        return self.X22.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.X11, self.X12], [self.X21, self.X22]])

    def supply(self, u: np.ndarray, y: np.ndarray) -> float:
        u = np.asarray(u, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        return float(u @ self.X11 @ u + 2.0 * (u @ self.X12 @ y) + y @ self.X22 @ y)

    # -- named specializations ------------------------------------------------

    @staticmethod
    def passive(m: int) -> "SupplyRate":
        return SupplyRate(
            "passive", np.zeros((m, m)), 0.5 * np.eye(m), np.zeros((m, m))
        )

    @staticmethod
    def ifofp(nu: float, rho: float, m: int) -> "SupplyRate":
        """Input-feedforward/output-feedback passivity indices (nu, rho):
        excess (positive) or shortage (negative) of passivity at the input
        and output ports respectively."""
        return SupplyRate(
            "ifofp",
            -float(nu) * np.eye(m),
            0.5 * np.eye(m),
            -float(rho) * np.eye(m),
            params={"nu": float(nu), "rho": float(rho)},
        )

    @staticmethod
    def l2_gain(gamma: float, n_u: int, n_y: int | None = None) -> "SupplyRate":
        n_y = n_u if n_y is None else n_y
        return SupplyRate(
            "l2_gain",
            float(gamma) ** 2 * np.eye(n_u),
            np.zeros((n_u, n_y)),
            -np.eye(n_y),
            params={"gamma": float(gamma), "gamma_sq": float(gamma) ** 2},
        )

    @staticmethod
    def l2_gain_sq(gamma_sq: float, n_u: int, n_y: int | None = None) -> "SupplyRate":
        """Same as :meth:`l2_gain` but parameterized by the squared gain."""
        n_y = n_u if n_y is None else n_y
        if gamma_sq < 0:
            raise ValueError("squared gain must be nonnegative")
        return SupplyRate(
            "l2_gain",
            float(gamma_sq) * np.eye(n_u),
            np.zeros((n_u, n_y)),
            -np.eye(n_y),
            params={"gamma": float(np.sqrt(gamma_sq)), "gamma_sq": float(gamma_sq)},
        )

    @staticmethod
    def sector(a: float, b: float, m: int) -> "SupplyRate":
        return SupplyRate(
            "sector",
            -a * b * np.eye(m),
            0.5 * (a + b) * np.eye(m),
            -np.eye(m),
            params={"a": float(a), "b": float(b)},
        )

    @staticmethod
    def general(X11, X12, X22) -> "SupplyRate":
        return SupplyRate("general", X11, X12, X22)


# ---------------------------------------------------------------------------
# verification (analysis) LMI
# ---------------------------------------------------------------------------


def xeid_verification_expr(
    prob: LmiProblem,
    sys: StateSpaceRealization,
    X: SupplyRate,
    P: AffineMatrixExpr | None = None,
) -> AffineMatrixExpr:
    """The 3x3 analysis block for ``x+ = Ax + Bu, y = Cx + Du``::

        [ P      PA                PB                       ]
        [ A'P    P + C'X22C        C'X21 + C'X22 D          ]
        [ B'P    X12 C + D'X22 C   X11 + D'X21 + X12 D + D'X22 D ]  >= 0

    with storage variable ``P``. If ``P`` is given it is used (allowing the
    caller to add more structure); otherwise a fresh symmetric variable named
    ``"P"`` is declared on ``prob``. The expression is returned; the caller
    adds it as a PSD constraint together with ``P > 0``.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    if X.n_u != sys.n_u or X.n_y != sys.n_y:
        raise ValueError(
            f"supply rate ports ({X.n_u}, {X.n_y}) do not match system ({sys.n_u}, {sys.n_y})"
        )
    Pe = prob.symmetric("P", sys.n_x) if P is None else P
    X11, X12, X21, X22 = X.X11, X.X12, X.X21, X.X22

    blk22 = Pe + AffineMatrixExpr.constant(C.T @ X22 @ C)
    blk23 = AffineMatrixExpr.constant(C.T @ X21 + C.T @ X22 @ D)
    blk33 = AffineMatrixExpr.constant(X11 + D.T @ X21 + X12 @ D + D.T @ X22 @ D)
    M = AffineMatrixExpr.block(
        [
            [Pe, Pe.rmul(A), Pe.rmul(B)],
            [Pe.lmul(A.T), blk22, blk23],
            [Pe.lmul(B.T), blk23.T, blk33],
        ]
    )
    return M


def check_xeid_lti(
    sys: StateSpaceRealization,
    X: SupplyRate,
    margin: float = 1e-9,
    eps_p: float = 1e-8,
    options: SolveOptions | None = None,
) -> tuple[bool, np.ndarray | None, SolveResult]:
    """Search for a quadratic storage certifying that ``sys`` is X-dissipative.

    Returns ``(certified, P, result)``. ``certified`` is True only when the
    solver reports feasibility *and* the independent eigenvalue re-check
    passes. Infeasibility of this one-parameterization search is reported as
    ``certified = False``; it does not prove the property fails (though for
    LTI systems with quadratic storage it is conclusive in exact arithmetic).
    """
    prob = LmiProblem()
    M = xeid_verification_expr(prob, sys, X)
    Pe = AffineMatrixExpr.of_variable(prob._by_name["P"])
    prob.require_psd(Pe, margin=eps_p, name="P_pos")
    prob.require_psd(M, margin=margin, name="analysis")
    res = solve(prob, options)
    if res.status == "optimal" and res.verified:
        return True, np.asarray(res.values["P"]), res
    return False, None, res


# ---------------------------------------------------------------------------
# local synthesis (state feedback)
# ---------------------------------------------------------------------------


def dissipativate_local(
    A: np.ndarray,
    B: np.ndarray,
    X: SupplyRate,
    C: np.ndarray | None = None,
    margin: float = 1e-6,
    eps_p: float = 1e-6,
    cond_limit: float = 1e10,
    options: SolveOptions | None = None,
) -> tuple[np.ndarray | None, np.ndarray | None, SolveResult]:
    """Synthesize ``L`` so that ``x+ = (A + BL)x + eta, y = Cx`` is
    X-dissipative from the full-state port ``eta`` to ``y``.

    Requires ``X22 < 0``. Internally solves, in variables ``(P, K)``::

        [ (-X22)^-1   0          C P        0        ]
        [ 0           P          A P + B K  I        ]
        [ P C'        P A'+K' B' P          P C' X21 ]
        [ 0           I          X12 C P    X11      ]  >= 0

    and returns ``(L, P_storage, result)`` with ``L = K P^-1`` and
    ``P_storage = P^-1`` (the LMI variable is the inverse of the storage).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    C = np.eye(n) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    n_y = C.shape[0]
    m = B.shape[1]

    if X.n_u != n or X.n_y != n_y:
        raise ValueError(
            f"supply rate ports ({X.n_u}, {X.n_y}) do not match (state {n}, output {n_y})"
        )
    w22 = np.linalg.eigvalsh(0.5 * (X.X22 + X.X22.T))
    if w22[-1] >= 0:
        raise ValueError(
            "X22 must be negative definite for state-feedback dissipativation "
            f"(max eigenvalue {w22[-1]:.3e} >= 0)"
        )

    prob = LmiProblem()
    Pe = prob.symmetric("P", n)
    Ke = prob.rectangular("K", m, n)

    T11 = AffineMatrixExpr.constant(np.linalg.inv(-X.X22))
    CP = Pe.lmul(C)
    APBK = Pe.lmul(A) + Ke.lmul(B)
    I_n = np.eye(n)
    blk34 = Pe.rmul(C.T @ X.X21)
    blk43 = Pe.lmul(X.X12 @ C)
    M = AffineMatrixExpr.block(
        [
            [T11, None, CP, np.zeros((n_y, n))],
            [None, Pe, APBK, I_n],
            [CP.T, APBK.T, Pe, blk34],
            [np.zeros((n, n_y)), I_n, blk43, AffineMatrixExpr.constant(X.X11)],
        ]
    )
    prob.require_psd(Pe, margin=eps_p, name="P_pos")
    prob.require_psd(M, margin=margin, name="synthesis")
    res = solve(prob, options)
    if res.status != "optimal" or not res.verified:
        if res.status == "optimal" and not res.verified:
            res.status = "numerical-failure"
        return None, None, res

    P = np.asarray(res.values["P"])
    K = np.asarray(res.values["K"])
    if np.linalg.cond(P) > cond_limit:
        res.status = "numerical-failure"
        res.solver_status += f" | cond(P)={np.linalg.cond(P):.2e} exceeds {cond_limit:.1e}"
        return None, None, res
    L = K @ np.linalg.inv(P)
    P_storage = np.linalg.inv(0.5 * (P + P.T))
    P_storage = 0.5 * (P_storage + P_storage.T)
    return L, P_storage, res


# ---------------------------------------------------------------------------
# interconnection synthesis
# ---------------------------------------------------------------------------


@dataclass
class InterconnectionDesign:
    """Result of :func:`synthesize_interconnection`."""

    M_uy: np.ndarray
    M_uw: np.ndarray
    M_zy: np.ndarray
    M_zw: np.ndarray
    p: np.ndarray
    case: str
    alpha: float | None
    result: SolveResult = field(repr=False)


def _block_offsets(dims: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(dims)]).astype(int)


def _xp_expr(p_vars, blocks: list[np.ndarray]) -> AffineMatrixExpr:
    """blockdiag(p_i * blocks[i]) as an affine expression in the p_i."""
    dims = [b.shape[0] for b in blocks]
    off = _block_offsets(dims)
    total = int(off[-1])
    expr = AffineMatrixExpr((total, total))
    for i, blk in enumerate(blocks):
        big = np.zeros((total, total))
        big[off[i] : off[i + 1], off[i] : off[i + 1]] = blk
        expr = expr + AffineMatrixExpr.scalar_times(p_vars[i], big)
    return expr


def _xp_times_const(p_vars, blocks: list[np.ndarray], G: np.ndarray) -> AffineMatrixExpr:
    """blockdiag(p_i * blocks[i]) @ G as an affine expression in the p_i."""
    dims = [b.shape[0] for b in blocks]
    off = _block_offsets(dims)
    total = int(off[-1])
    expr = AffineMatrixExpr((total, G.shape[1]))
    for i, blk in enumerate(blocks):
        big = np.zeros((total, G.shape[1]))
        big[off[i] : off[i + 1], :] = blk @ G[off[i] : off[i + 1], :]
        expr = expr + AffineMatrixExpr.scalar_times(p_vars[i], big)
    return expr


def synthesize_interconnection(
    subsystems: Sequence[SupplyRate],
    Y: SupplyRate,
    fixed_blocks: dict | None = None,
    case: str = "auto",
    alpha_grid: Sequence[float] | None = None,
    margin: float = 1e-6,
    p_min: float = 1e-9,
    options: SolveOptions | None = None,
) -> InterconnectionDesign | None:
    """Synthesize a static interconnection ``[u; z] = M [y; w]`` rendering
    the network Y-dissipative (ports ``w`` to ``z``), given each subsystem's
    certified supply rate.

    ``fixed_blocks`` may pin any of ``M_uy, M_uw, M_zy, M_zw`` to constants;
    unpinned blocks become decision variables. Two structural cases are
    supported: all ``X11_i > 0`` (one LMI) and all ``X11_i < 0`` (a family of
    LMIs over the scalarization grid ``alpha_grid``, tried in order until one
    is feasible). Scaling freedom: subsystem certificates may be rescaled by
    ``p_i > 0``, which the synthesis optimizes jointly.

    Returns an :class:`InterconnectionDesign` or ``None`` when every attempt
    is infeasible (callers distinguish infeasibility from numerical failure
    via the diagnostics of the last attempt, carried on the exception-free
    return path by retrying with other options).
    """
    fixed_blocks = dict(fixed_blocks or {})
    n_ui = [X.n_u for X in subsystems]
    n_yi = [X.n_y for X in subsystems]
    n_u, n_y = int(sum(n_ui)), int(sum(n_yi))
    n_w, n_z = Y.n_u, Y.n_y

    w22 = np.linalg.eigvalsh(0.5 * (Y.X22 + Y.X22.T))
    if w22[-1] >= 0:
        raise ValueError("network target Y22 must be negative definite")

    if case == "auto":
        if all(np.linalg.eigvalsh(X.X11)[0] > 0 for X in subsystems):
            case = "x11_pos"
        elif all(np.linalg.eigvalsh(X.X11)[-1] < 0 for X in subsystems):
            case = "x11_neg"
        else:
            raise ValueError(
                "subsystem X11 blocks must be all positive definite or all "
                "negative definite; mixed/singular cases are not supported"
            )

    X11_blocks = [X.X11 for X in subsystems]
    X22_blocks = [X.X22 for X in subsystems]
    # bold X12 = diag((X11_i)^-1 X12_i), a constant
    X12bold_blocks = [np.linalg.solve(X.X11, X.X12) for X in subsystems]
    off_u = _block_offsets(n_ui)
    off_y = _block_offsets(n_yi)
    X12bold = np.zeros((n_u, n_y))
    for i, blk in enumerate(X12bold_blocks):
        X12bold[off_u[i] : off_u[i + 1], off_y[i] : off_y[i + 1]] = blk
    X21bold = X12bold.T

    def build(alpha: float | None) -> tuple[LmiProblem, dict]:
        prob = LmiProblem()
        p_vars = [prob.scalar(f"p{i}", lower=p_min) for i in range(len(subsystems))]

        handles: dict[str, AffineMatrixExpr] = {}

        def mk(name: str, rows: int, cols: int) -> AffineMatrixExpr:
            if name in fixed_blocks:
                return AffineMatrixExpr.constant(
                    np.asarray(fixed_blocks[name], dtype=float).reshape(rows, cols)
                )
            e = prob.rectangular(name, rows, cols)
            handles[name] = e
            return e

        # L_uy / L_uw are the natural variables; when M_uy / M_uw are fixed
        # the corresponding L = Xp11 @ M is affine in p.
        if "M_uy" in fixed_blocks:
            L_uy = _xp_times_const(
                p_vars, X11_blocks, np.asarray(fixed_blocks["M_uy"], dtype=float)
            )
        else:
            L_uy = prob.rectangular("L_uy", n_u, n_y)
            handles["L_uy"] = L_uy
        if "M_uw" in fixed_blocks:
            L_uw = _xp_times_const(
                p_vars, X11_blocks, np.asarray(fixed_blocks["M_uw"], dtype=float)
            )
        else:
            L_uw = prob.rectangular("L_uw", n_u, n_w)
            handles["L_uw"] = L_uw
        M_zy = mk("M_zy", n_z, n_y)
        M_zw = mk("M_zw", n_z, n_w)

        Xp11 = _xp_expr(p_vars, X11_blocks)
        Xp22 = _xp_expr(p_vars, X22_blocks)
        Y11c = AffineMatrixExpr.constant(Y.X11)
        Y22n = AffineMatrixExpr.constant(-Y.X22)

        blk_yy = (-1.0) * (L_uy.T.rmul(X12bold)) - L_uy.lmul(X21bold) - Xp22
        blk_yw = (-1.0) * L_uw.lmul(X21bold) + M_zy.T.rmul(Y.X21)
        blk_ww = M_zw.T.rmul(Y.X21) + M_zw.lmul(Y.X12) + Y11c

        if case == "x11_pos":
            M = AffineMatrixExpr.block(
                [
                    [Xp11, None, L_uy, L_uw],
                    [None, Y22n, M_zy.lmul(-Y.X22), M_zw.lmul(-Y.X22)],
                    [L_uy.T, M_zy.T.rmul(-Y.X22.T), blk_yy, blk_yw],
                    [L_uw.T, M_zw.T.rmul(-Y.X22.T), blk_yw.T, blk_ww],
                ]
            )
        else:
            if not (n_u == n_y == n_w):
                raise ValueError(
                    "the X11 < 0 case needs matching u/y/w port dimensions "
                    f"(got {n_u}, {n_y}, {n_w})"
                )
            a = float(alpha)
            blk_yy_a = blk_yy + (a * a) * Xp11 - a * (L_uy.T + L_uy)
            blk_yw_a = blk_yw + (a * a) * Xp11 - a * (L_uy.T + L_uw)
            blk_ww_a = blk_ww + (a * a) * Xp11 - a * (L_uw.T + L_uw)
            M = AffineMatrixExpr.block(
                [
                    [Y22n, M_zy.lmul(-Y.X22), M_zw.lmul(-Y.X22)],
                    [M_zy.T.rmul(-Y.X22.T), blk_yy_a, blk_yw_a],
                    [M_zw.T.rmul(-Y.X22.T), blk_yw_a.T, blk_ww_a],
                ]
            )
        prob.require_psd(M, margin=margin, name="interconnection")
        return prob, handles

    def extract(prob: LmiProblem, handles, res: SolveResult, alpha) -> InterconnectionDesign:
        p = np.array([float(res.values[f"p{i}"]) for i in range(len(subsystems))])
        Xp11_val = np.zeros((n_u, n_u))
        for i, blk in enumerate(X11_blocks):
            Xp11_val[off_u[i] : off_u[i + 1], off_u[i] : off_u[i + 1]] = p[i] * blk

        def val(name: str, rows: int, cols: int) -> np.ndarray:
            if name in fixed_blocks:
                return np.asarray(fixed_blocks[name], dtype=float).reshape(rows, cols)
            return np.asarray(res.values[name])

        if "M_uy" in fixed_blocks:
            M_uy_val = np.asarray(fixed_blocks["M_uy"], dtype=float).reshape(n_u, n_y)
        else:
            M_uy_val = np.linalg.solve(Xp11_val, val("L_uy", n_u, n_y))
        if "M_uw" in fixed_blocks:
            M_uw_val = np.asarray(fixed_blocks["M_uw"], dtype=float).reshape(n_u, n_w)
        else:
            M_uw_val = np.linalg.solve(Xp11_val, val("L_uw", n_u, n_w))
        return InterconnectionDesign(
            M_uy=M_uy_val,
            M_uw=M_uw_val,
            M_zy=val("M_zy", n_z, n_y),
            M_zw=val("M_zw", n_z, n_w),
            p=p,
            case=case,
            alpha=alpha,
            result=res,
        )

    if case == "x11_pos":
        prob, handles = build(None)
        res = solve(prob, options)
        if res.status == "optimal" and res.verified:
            return extract(prob, handles, res, None)
        return None

    grid = list(alpha_grid) if alpha_grid is not None else list(_DEFAULT_ALPHA_GRID)
    for alpha in grid:
        prob, handles = build(alpha)
        res = solve(prob, options)
        if res.status == "optimal" and res.verified:
            return extract(prob, handles, res, alpha)
    return None


# ---------------------------------------------------------------------------
# sampling oracle
# ---------------------------------------------------------------------------


def trajectory_dissipativity_check(
    sys: StateSpaceRealization,
    P: np.ndarray,
    X: SupplyRate,
    trials: int = 10_000,
    horizon: int = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte-Carlo check of the dissipation inequality along random
    trajectories; returns the worst observed violation
    ``max_t [ V(x(t+1)) - V(x(t)) - s(u(t), y(t)) ]`` (negative or ~0 for a
    genuinely dissipative pair ``(P, X)``).

    Initial states and inputs are drawn from the unit ball (Gaussian draws
    normalized onto it) so the returned figure is on a fixed absolute scale
    across systems. Vectorized over all trials at once.
    """
    rng = rng or np.random.default_rng(0)
    P = np.asarray(P, dtype=float)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n, m = sys.n_x, sys.n_u

    x = rng.standard_normal((n, trials))
    norms = np.maximum(1.0, np.linalg.norm(x, axis=0))
    x = x / norms

    worst = -np.inf
    for _ in range(horizon):
        u = rng.standard_normal((m, trials))
        norms = np.maximum(1.0, np.linalg.norm(u, axis=0))
        u = u / norms
        y = C @ x + D @ u
        v_now = np.einsum("ij,ij->j", x, P @ x)
        x_next = A @ x + B @ u
        v_next = np.einsum("ij,ij->j", x_next, P @ x_next)
        s = (
            np.einsum("ij,ij->j", u, X.X11 @ u)
            + 2.0 * np.einsum("ij,ij->j", u, X.X12 @ y)
            + np.einsum("ij,ij->j", y, X.X22 @ y)
        )
        worst = max(worst, float(np.max(v_next - v_now - s)))
        x = x_next
    return worst
