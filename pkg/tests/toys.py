"""Small hand-certified interconnection examples shared by the dissipativity
tests and the acceptance suite.

Both toys use scalar subsystems whose dissipativity certificates were derived
by hand (completing the square), so the supply rates fed to the synthesizer
are exact, not solver output.
"""

from __future__ import annotations

import numpy as np

from stocksync.model import StateSpaceRealization
from stocksync.lmi.dissipativity import SupplyRate, synthesize_interconnection


def pos_toy_subsystems():
    """Two copies of x+ = 0.5 x + u, y = x.

    With storage V = x^2 (P = 1):  s - dV = (-nu - 1) u^2 + (1 - 2*0.5) u x
    + (0.75 - rho) x^2, so IF-OFP(nu = -1.5, rho = 0.5) holds exactly and
    X11 = 1.5 I > 0.
    """
    sys = StateSpaceRealization(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
    X = SupplyRate.ifofp(-1.5, 0.5, 1)
    P = np.eye(1)
    return [sys, sys], [X, X], [P, P]


def neg_toy_subsystems():
    """Two copies of x+ = 0.5 x + u, y = x + u (direct feedthrough).

    With storage V = 0.4 x^2:  s - dV = 0.1 u^2 + 0.1 u x + 0.05 x^2 >= 0
    (determinant 0.0025 >= 0), so IF-OFP(nu = 0.25, rho = 0.25) holds exactly
    and X11 = -0.25 I < 0.
    """
    sys = StateSpaceRealization(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[1.0]])
    X = SupplyRate.ifofp(0.25, 0.25, 1)
    P = 0.4 * np.eye(1)
    return [sys, sys], [X, X], [P, P]


def closed_loop(systems, design):
    """Assemble the interconnected network as one LTI system (w -> z),
    resolving the algebraic loop when subsystems have feedthrough."""
    A = _blkdiag([s.A for s in systems])
    B = _blkdiag([s.B for s in systems])
    C = _blkdiag([s.C for s in systems])
    D = _blkdiag([s.D for s in systems])
    Muy, Muw, Mzy, Mzw = design.M_uy, design.M_uw, design.M_zy, design.M_zw
    n_y = C.shape[0]
    S = np.linalg.inv(np.eye(n_y) - D @ Muy)  # y = S (C x + D Muw w)
    A_cl = A + B @ Muy @ S @ C
    B_cl = B @ (Muy @ S @ D + np.eye(D.shape[1])) @ Muw
    C_cl = Mzy @ S @ C
    D_cl = Mzy @ S @ D @ Muw + Mzw
    return StateSpaceRealization(A_cl, B_cl, C_cl, D_cl)


def composite_storage(storages, p):
    return _blkdiag([p_i * P_i for p_i, P_i in zip(p, storages)])


def synthesize_toy(kind: str, gamma_sq: float = 4.0):
    """Run the interconnection synthesis for one of the toys with z = y
    (M_zy = I fixed) and an L2-gain target, and return everything needed for
    an end-to-end trajectory check."""
    if kind == "pos":
        systems, rates, storages = pos_toy_subsystems()
    elif kind == "neg":
        systems, rates, storages = neg_toy_subsystems()
    else:
        raise ValueError(kind)
    n_y = sum(X.n_y for X in rates)
    Y = SupplyRate.l2_gain_sq(gamma_sq, n_y, n_y)
    design = synthesize_interconnection(
        rates,
        Y,
        fixed_blocks={"M_zy": np.eye(n_y), "M_zw": np.zeros((n_y, n_y))},
    )
    return systems, rates, storages, Y, design


def _blkdiag(blocks):
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
