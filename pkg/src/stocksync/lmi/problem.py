"""LMI feasibility/optimization problems and their conic-form backends.

A :class:`LmiProblem` collects matrix variables, PSD constraints, scalar
equalities/inequalities, and a linear objective. :func:`solve` compiles it to
the standard primal conic form

    minimize    c' x
    subject to  A x + s = b,   s in  Zero x Nonneg x PSD x ... x PSD

and hands it to an interior-point backend (Clarabel, the default) or a
first-order one (SCS). Solutions are re-verified independently of the
solver's own status report: every PSD constraint is re-assembled from the
expression tree and its minimum eigenvalue recomputed with numpy's
eigensolver.

PSD cone rows use the scaled upper-triangle packing of
:func:`~stocksync.lmi.algebra.svec`; backend adapters repack into whatever
their native triangle order is, so the documented layout (see
:func:`dump_conic`) is backend-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import AffineMatrixExpr, AffineScalarExpr, LmiVariable, svec

__all__ = ["LmiProblem", "SolveOptions", "SolveResult", "solve", "dump_conic"]


@dataclass
class SolveOptions:
    backend: str = "clarabel"
    max_iter: int = 200
    time_limit: float = 120.0
    tol: float = 1e-9
    verbose: bool = False
    # acceptance threshold for the independent eigenvalue re-check
    verify_tol: float = 1e-7


@dataclass
class SolveResult:
    """Outcome of a solve.

    ``status`` is one of ``"optimal"``, ``"infeasible"``, ``"unbounded"``,
    ``"numerical-failure"``. ``values`` maps variable names to floats or
    dense arrays. ``psd_margins`` holds the independently recomputed minimum
    eigenvalue of every PSD constraint (same order as declared);
    ``verified`` is True when all margins clear ``-verify_tol`` and equality
    residuals are tiny.
    """

    status: str
    values: dict[str, np.ndarray | float] = field(default_factory=dict)
    objective: float | None = None
    psd_margins: list[float] = field(default_factory=list)
    eq_residual: float = 0.0
    ineq_min: float = 0.0
    verified: bool = False
    solver_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == "optimal" and self.verified


class LmiProblem:
    """Container for variables, constraints, and objective."""

    def __init__(self) -> None:
        self.variables: list[LmiVariable] = []
        self._by_name: dict[str, LmiVariable] = {}
        self.psd_constraints: list[tuple[str, AffineMatrixExpr]] = []
        self.equality_constraints: list[tuple[str, AffineScalarExpr]] = []
        self.nonneg_constraints: list[tuple[str, AffineScalarExpr]] = []
        self.objective: AffineScalarExpr | None = None

    # -- variable declaration ------------------------------------------------

    def _register(self, var: LmiVariable) -> LmiVariable:
        if var.name in self._by_name:
            raise ValueError(f"duplicate variable name {var.name!r}")
        self.variables.append(var)
        self._by_name[var.name] = var
        return var

    def symmetric(self, name: str, m: int) -> AffineMatrixExpr:
        var = self._register(LmiVariable(name, "symmetric", (m, m)))
        return AffineMatrixExpr.of_variable(var)

    def rectangular(self, name: str, rows: int, cols: int) -> AffineMatrixExpr:
        var = self._register(LmiVariable(name, "rectangular", (rows, cols)))
        return AffineMatrixExpr.of_variable(var)

    def scalar(
        self, name: str, lower: float | None = None, upper: float | None = None
    ) -> LmiVariable:
        """Declare a scalar variable (returned as the raw variable handle;
        use :meth:`scalar_expr` / ``AffineMatrixExpr.scalar_times`` to embed
        it in matrix expressions)."""
        return self._register(LmiVariable(name, "scalar", (), lower, upper))

    def scalar_expr(self, var: LmiVariable) -> AffineScalarExpr:
        return AffineScalarExpr.of_variable(var)

    # -- constraints -----------------------------------------------------------

    def require_psd(self, expr: AffineMatrixExpr, margin: float = 0.0, name: str = "") -> None:
        """Add ``expr - margin * I >= 0`` (in the PSD sense)."""
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD constraint must be square, got {expr.shape}")
        if margin != 0.0:
            expr = expr - AffineMatrixExpr.constant(margin * np.eye(expr.shape[0]))
        self.psd_constraints.append((name or f"psd{len(self.psd_constraints)}", expr))

    def require_eq0(self, expr: AffineScalarExpr, name: str = "") -> None:
        self.equality_constraints.append((name or f"eq{len(self.equality_constraints)}", expr))

    def require_nonneg(self, expr: AffineScalarExpr, name: str = "") -> None:
        self.nonneg_constraints.append((name or f"ge{len(self.nonneg_constraints)}", expr))

    def minimize(self, expr: AffineScalarExpr) -> None:
        self.objective = expr

    # -- compilation -------------------------------------------------------------

    def _offsets(self) -> tuple[dict[str, int], int]:
        offsets: dict[str, int] = {}
        total = 0
        for var in self.variables:
            offsets[var.name] = total
            total += var.n_coords
        return offsets, total

    def _scalar_row(self, expr: AffineScalarExpr, offsets: dict[str, int], ncoords: int) -> tuple[np.ndarray, float]:
        """Row vector a and constant k with expr(x) = a @ x + k."""
        a = np.zeros(ncoords)
        for name, W in expr.coeffs.items():
            var = self._by_name.get(name) or expr.vars[name]
            off = offsets[name]
            if var.kind == "scalar":
                a[off] += float(W[0, 0])
            elif var.kind == "symmetric":
                for c, (i, j) in enumerate(var.coord_pairs()):
                    a[off + c] += W[i, j] if i == j else W[i, j] + W[j, i]
            else:
                for c, (i, j) in enumerate(var.coord_pairs()):
                    a[off + c] += W[i, j]
        return a, expr.const

    def compile(self):
        """Compile to (c, blocks) where blocks stack zero/nonneg/PSD cones.

        Returns a dict with keys: offsets, ncoords, c, zero (A, b),
        nonneg (A, b), psd (list of (A, b, m)). Cone rows follow the
        convention A x + s = b with s in the cone; PSD rows are svec-packed
        (scaled upper triangle, row-major).
        """
        offsets, ncoords = self._offsets()

        c = np.zeros(ncoords)
        obj_const = 0.0
        if self.objective is not None:
            c, obj_const = self._scalar_row(self.objective, offsets, ncoords)

        rows_zero, b_zero = [], []
        for _, expr in self.equality_constraints:
            a, k = self._scalar_row(expr, offsets, ncoords)
            rows_zero.append(-a)
            b_zero.append(k)

        rows_nn, b_nn = [], []
        for _, expr in self.nonneg_constraints:
            a, k = self._scalar_row(expr, offsets, ncoords)
            rows_nn.append(-a)
            b_nn.append(k)
        for var in self.variables:
            if var.kind != "scalar":
                continue
            off = offsets[var.name]
            if var.lower is not None:
                row = np.zeros(ncoords)
                row[off] = -1.0
                rows_nn.append(row)
                b_nn.append(-var.lower)
            if var.upper is not None:
                row = np.zeros(ncoords)
                row[off] = 1.0
                b_nn.append(var.upper)
                rows_nn.append(row)

        psd = []
        for _, expr in self.psd_constraints:
            m = expr.shape[0]
            sdim = m * (m + 1) // 2
            A = np.zeros((sdim, ncoords))
            sym_const = 0.5 * (expr.const + expr.const.T)
            b = svec(sym_const)
            for var in self.variables:
                mats = expr.coordinate_matrices(var) if var.name in expr.variables() else None
                if mats is None:
                    continue
                off = offsets[var.name]
                for cidx, F in enumerate(mats):
                    Fs = 0.5 * (F + F.T)
                    A[:, off + cidx] = -svec(Fs)
            psd.append((A, b, m))

        A_zero = np.array(rows_zero).reshape(len(rows_zero), ncoords)
        A_nn = np.array(rows_nn).reshape(len(rows_nn), ncoords)
        return {
            "offsets": offsets,
            "ncoords": ncoords,
            "c": c,
            "obj_const": obj_const,
            "zero": (A_zero, np.asarray(b_zero, dtype=float)),
            "nonneg": (A_nn, np.asarray(b_nn, dtype=float)),
            "psd": psd,
        }

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray | float]:
        offsets, _ = self._offsets()
        out: dict[str, np.ndarray | float] = {}
        for var in self.variables:
            off = offsets[var.name]
            out[var.name] = var.unflatten(x[off : off + var.n_coords])
        return out

    def verify(self, values: dict[str, np.ndarray | float], tol: float) -> tuple[list[float], float, float, bool]:
        """Independent re-check of a candidate solution.

        Returns (psd margins, max |equality residual|, min inequality slack,
        all-clear flag)."""
        margins = []
        for _, expr in self.psd_constraints:
            M = expr.evaluate(values)
            M = 0.5 * (M + M.T)
            margins.append(float(np.linalg.eigvalsh(M)[0]) if M.size else 0.0)
        eq_res = 0.0
        for _, expr in self.equality_constraints:
            eq_res = max(eq_res, abs(expr.evaluate(values)))
        ineq_min = np.inf
        for _, expr in self.nonneg_constraints:
            ineq_min = min(ineq_min, expr.evaluate(values))
        for var in self.variables:
            if var.kind == "scalar":
                v = float(values[var.name])
                if var.lower is not None:
                    ineq_min = min(ineq_min, v - var.lower)
                if var.upper is not None:
                    ineq_min = min(ineq_min, var.upper - v)
        if not np.isfinite(ineq_min):
            ineq_min = 0.0
        ok = (
            all(m >= -tol for m in margins)
            and eq_res <= max(tol, 1e-7)
            and ineq_min >= -max(tol, 1e-7)
        )
        return margins, eq_res, float(ineq_min), ok


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


def _triangle_reorder(m: int) -> np.ndarray:
    """Permutation taking svec order (row-major upper) to column-major upper
    triangle order (Clarabel's packing). Entry values keep the sqrt(2)
    scaling, so only the order differs."""
    # svec position of (i, j), i <= j, row-major upper
    pos = {}
    idx = 0
    for i in range(m):
        for j in range(i, m):
            pos[(i, j)] = idx
            idx += 1
    perm = []
    for j in range(m):
        for i in range(j + 1):
            perm.append(pos[(i, j)])
    return np.asarray(perm, dtype=int)


def _solve_clarabel(compiled, options: SolveOptions):
    import clarabel
    from scipy import sparse

    c = compiled["c"]
    ncoords = compiled["ncoords"]
    A_parts, b_parts, cones = [], [], []

    A0, b0 = compiled["zero"]
    if A0.shape[0]:
        A_parts.append(A0)
        b_parts.append(b0)
        cones.append(clarabel.ZeroConeT(A0.shape[0]))
    A1, b1 = compiled["nonneg"]
    if A1.shape[0]:
        A_parts.append(A1)
        b_parts.append(b1)
        cones.append(clarabel.NonnegativeConeT(A1.shape[0]))
    for A, b, m in compiled["psd"]:
        perm = _triangle_reorder(m)
        A_parts.append(A[perm, :])
        b_parts.append(b[perm])
        cones.append(clarabel.PSDTriangleConeT(m))

    if A_parts:
        A = sparse.csc_matrix(np.vstack(A_parts))
        b = np.concatenate(b_parts)
    else:
        A = sparse.csc_matrix((0, ncoords))
        b = np.zeros(0)
    P = sparse.csc_matrix((ncoords, ncoords))

    settings = clarabel.DefaultSettings()
    settings.verbose = options.verbose
    settings.max_iter = options.max_iter
    settings.time_limit = options.time_limit
    solver = clarabel.DefaultSolver(P, c, A, b, cones, settings)
    sol = solver.solve()

    status = str(sol.status)
    mapping = {
        "Solved": "optimal",
        "AlmostSolved": "optimal",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
    }
    mapped = mapping.get(status, "numerical-failure")
    x = np.asarray(sol.x) if mapped == "optimal" else None
    return mapped, x, status, int(sol.iterations), float(sol.solve_time)


def _solve_scs(compiled, options: SolveOptions):
    import scs
    from scipy import sparse

    c = compiled["c"]
    ncoords = compiled["ncoords"]
    A_parts, b_parts = [], []
    A0, b0 = compiled["zero"]
    A1, b1 = compiled["nonneg"]
    if A0.shape[0]:
        A_parts.append(A0)
        b_parts.append(b0)
    if A1.shape[0]:
        A_parts.append(A1)
        b_parts.append(b1)
    s_dims = []
    for A, b, m in compiled["psd"]:
        # SCS packs the lower triangle column-major with sqrt(2) off-diagonal
        # scaling; for symmetric data that coincides with svec order.
        A_parts.append(A)
        b_parts.append(b)
        s_dims.append(m)
    if A_parts:
        A = sparse.csc_matrix(np.vstack(A_parts))
        b = np.concatenate(b_parts)
    else:
        A = sparse.csc_matrix((0, ncoords))
        b = np.zeros(0)
    data = {"A": A, "b": b, "c": c}
    cone = {"z": int(A0.shape[0]), "l": int(A1.shape[0]), "s": s_dims}
    solver = scs.SCS(
        data,
        cone,
        eps_abs=options.tol * 10,
        eps_rel=options.tol * 10,
        max_iters=200_000,
        verbose=options.verbose,
    )
    sol = solver.solve()
    status = sol["info"]["status"]
    if "solved" in status.lower():
        mapped = "optimal"
    elif "infeasible" in status.lower():
        mapped = "infeasible"
    elif "unbounded" in status.lower():
        mapped = "unbounded"
    else:
        mapped = "numerical-failure"
    x = np.asarray(sol["x"]) if mapped == "optimal" else None
    return mapped, x, status, int(sol["info"]["iter"]), float(sol["info"]["solve_time"]) / 1e3


_BACKENDS: dict[str, Callable] = {
    "clarabel": _solve_clarabel,
    "scs": _solve_scs,
}


def solve(problem: LmiProblem, options: SolveOptions | None = None) -> SolveResult:
    """Solve an :class:`LmiProblem` and independently verify the result."""
    options = options or SolveOptions()
    if options.backend not in _BACKENDS:
        raise ValueError(
            f"unknown backend {options.backend!r}; available: {sorted(_BACKENDS)}"
        )
    compiled = problem.compile()
    try:
        mapped, x, raw_status, iters, t = _BACKENDS[options.backend](compiled, options)
    except Exception as exc:  # backend blew up: report, don't crash the caller
        return SolveResult(status="numerical-failure", solver_status=f"exception: {exc}")

    if mapped != "optimal" or x is None:
        return SolveResult(
            status=mapped, solver_status=raw_status, iterations=iters, solve_time=t
        )

    values = problem.unpack(x)
    margins, eq_res, ineq_min, ok = problem.verify(values, options.verify_tol)
    obj = None
    if problem.objective is not None:
        obj = problem.objective.evaluate(values)
    return SolveResult(
        status="optimal",
        values=values,
        objective=obj,
        psd_margins=margins,
        eq_residual=eq_res,
        ineq_min=ineq_min,
        verified=ok,
        solver_status=raw_status,
        iterations=iters,
        solve_time=t,
    )


def dump_conic(problem: LmiProblem, path: str) -> None:
    """Write the compiled conic form to a text file.

    Layout: a VARIABLES table (name, kind, shape, coordinate offset), the
    objective row ``c``, then one section per cone in solve order (ZERO,
    NONNEG, PSD blocks) listing rows of ``[A | b]`` with PSD rows in svec
    order (scaled upper triangle, row-major).
    """
    compiled = problem.compile()

    def fmt_row(a: np.ndarray, b: float) -> str:
        entries = " ".join(f"{v:+.9e}" for v in a)
        return f"{entries} | {b:+.9e}"

    lines = ["# conic form: min c'x  s.t.  A x + s = b,  s in cones", "", "VARIABLES"]
    for var in problem.variables:
        lines.append(
            f"  {var.name} kind={var.kind} shape={var.shape} offset={compiled['offsets'][var.name]}"
        )
    lines += ["", "OBJECTIVE"]
    lines.append("  c = " + " ".join(f"{v:+.9e}" for v in compiled["c"]))
    A0, b0 = compiled["zero"]
    lines += ["", f"ZERO rows={A0.shape[0]}"]
    for i in range(A0.shape[0]):
        lines.append("  " + fmt_row(A0[i], b0[i]))
    A1, b1 = compiled["nonneg"]
    lines += ["", f"NONNEG rows={A1.shape[0]}"]
    for i in range(A1.shape[0]):
        lines.append("  " + fmt_row(A1[i], b1[i]))
    for k, (A, b, m) in enumerate(compiled["psd"]):
        name = problem.psd_constraints[k][0]
        lines += ["", f"PSD block={k} name={name} m={m} rows={A.shape[0]} (svec order)"]
        for i in range(A.shape[0]):
            lines.append("  " + fmt_row(A[i], b[i]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
