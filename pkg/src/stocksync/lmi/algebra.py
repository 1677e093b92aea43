"""Matrix variables, affine matrix/scalar expressions, and the symmetric
vectorization pair ``svec``/``smat``.

The expression objects here are deliberately minimal: enough algebra to
assemble block LMIs (constant left/right multiplication, addition,
transposition, block stacking, entry extraction) without pulling in a general
modeling language. Everything stays affine in the declared variables by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = ["svec", "smat", "LmiVariable", "AffineMatrixExpr", "AffineScalarExpr"]

_SQRT2 = float(np.sqrt(2.0))


def svec(S: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix into a vector, upper triangle in row-major
    order, off-diagonal entries scaled by sqrt(2).

    The scaling makes the packing an isometry: ``svec(S) @ svec(T) ==
    trace(S @ T)`` for symmetric ``S``, ``T``.
    """
    S = np.asarray(S, dtype=float)
    m = S.shape[0]
    if S.shape != (m, m):
        raise ValueError(f"svec needs a square matrix, got {S.shape}")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise ValueError("svec needs a symmetric matrix")
    out = np.empty(m * (m + 1) // 2)
    idx = 0
    for i in range(m):
        out[idx] = S[i, i]
        idx += 1
        for j in range(i + 1, m):
            out[idx] = _SQRT2 * S[i, j]
            idx += 1
    return out


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float).ravel()
    # invert m(m+1)/2 == len(v)
    m = int((np.sqrt(8 * len(v) + 1) - 1) / 2 + 0.5)
    if m * (m + 1) // 2 != len(v):
        raise ValueError(f"length {len(v)} is not a triangular number")
    S = np.zeros((m, m))
    idx = 0
    for i in range(m):
        S[i, i] = v[idx]
        idx += 1
        for j in range(i + 1, m):
            S[i, j] = S[j, i] = v[idx] / _SQRT2
            idx += 1
    return S


@dataclass(frozen=True)
class LmiVariable:
    """A decision variable: scalar, symmetric matrix, or rectangular matrix.

    ``shape`` is ``()`` for scalars, ``(m, m)`` for symmetric, ``(p, q)`` for
    rectangular. Scalar variables may carry box bounds. ``n_coords`` is the
    number of free real coordinates (upper triangle for symmetric variables,
    row-major; full row-major grid for rectangular ones).
    """

    name: str
    kind: str  # "scalar" | "symmetric" | "rectangular"
    shape: tuple[int, ...]
    lower: float | None = None
    upper: float | None = None

    @property
    def n_coords(self) -> int:
        if self.kind == "scalar":
            return 1
        if self.kind == "symmetric":
            m = self.shape[0]
            return m * (m + 1) // 2
        p, q = self.shape
        return p * q

    def coord_pairs(self) -> list[tuple[int, int]]:
        """Index pairs in fixed coordinate order (documented above)."""
        if self.kind == "scalar":
            return [(0, 0)]
        if self.kind == "symmetric":
            m = self.shape[0]
            return [(a, b) for a in range(m) for b in range(a, m)]
        p, q = self.shape
        return [(a, b) for a in range(p) for b in range(q)]

    def unflatten(self, coords: np.ndarray):
        """Rebuild the variable's value from its coordinate vector."""
        if self.kind == "scalar":
            return float(coords[0])
        if self.kind == "symmetric":
            m = self.shape[0]
            S = np.zeros((m, m))
            for c, (a, b) in enumerate(self.coord_pairs()):
                S[a, b] = S[b, a] = coords[c]
            return S
        return np.asarray(coords, dtype=float).reshape(self.shape)


# --- expression terms -------------------------------------------------------


@dataclass(frozen=True)
class _MatTerm:
    """alpha * L @ op(V) @ R with op = transpose if transp else identity."""

    var: LmiVariable
    L: np.ndarray
    R: np.ndarray
    transp: bool
    alpha: float


@dataclass(frozen=True)
class _ScalTerm:
    """x * M for a scalar variable x."""

    var: LmiVariable
    M: np.ndarray


class AffineMatrixExpr:
    """Matrix-valued expression, affine in the declared variables."""

    def __init__(self, shape: tuple[int, int], const: np.ndarray | None = None, terms=()):
        self.shape = (int(shape[0]), int(shape[1]))
        self.const = (
            np.zeros(self.shape) if const is None else np.asarray(const, dtype=float).reshape(self.shape)
        )
        self.terms: tuple = tuple(terms)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(M: np.ndarray) -> "AffineMatrixExpr":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return AffineMatrixExpr(M.shape, M)

    @staticmethod
    def of_variable(var: LmiVariable) -> "AffineMatrixExpr":
        if var.kind == "scalar":
            return AffineMatrixExpr((1, 1), None, [_ScalTerm(var, np.ones((1, 1)))])
        p, q = var.shape
        return AffineMatrixExpr(
            (p, q), None, [_MatTerm(var, np.eye(p), np.eye(q), False, 1.0)]
        )

    @staticmethod
    def scalar_times(var: LmiVariable, M: np.ndarray) -> "AffineMatrixExpr":
        """x * M for scalar variable x and constant matrix M."""
        if var.kind != "scalar":
            raise ValueError("scalar_times needs a scalar variable")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return AffineMatrixExpr(M.shape, None, [_ScalTerm(var, M)])

    # -- algebra -----------------------------------------------------------

    def __add__(self, other):
        other = _as_expr(other, self.shape)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return AffineMatrixExpr(
            self.shape, self.const + other.const, self.terms + other.terms
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_as_expr(other, self.shape))

    def __rsub__(self, other):
        return _as_expr(other, self.shape) + (-self)

    def __neg__(self):
        return self * (-1.0)

    def __mul__(self, c: float):
        c = float(c)
        terms = []
        for t in self.terms:
            if isinstance(t, _MatTerm):
                terms.append(_MatTerm(t.var, t.L, t.R, t.transp, t.alpha * c))
            else:
                terms.append(_ScalTerm(t.var, t.M * c))
        return AffineMatrixExpr(self.shape, self.const * c, terms)

    __rmul__ = __mul__

    def lmul(self, G: np.ndarray) -> "AffineMatrixExpr":
        """G @ self for constant G."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        terms = []
        for t in self.terms:
            if isinstance(t, _MatTerm):
                terms.append(_MatTerm(t.var, G @ t.L, t.R, t.transp, t.alpha))
            else:
                terms.append(_ScalTerm(t.var, G @ t.M))
        return AffineMatrixExpr((G.shape[0], self.shape[1]), G @ self.const, terms)

    def rmul(self, G: np.ndarray) -> "AffineMatrixExpr":
        """self @ G for constant G."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        terms = []
        for t in self.terms:
            if isinstance(t, _MatTerm):
                terms.append(_MatTerm(t.var, t.L, t.R @ G, t.transp, t.alpha))
            else:
                terms.append(_ScalTerm(t.var, t.M @ G))
        return AffineMatrixExpr((self.shape[0], G.shape[1]), self.const @ G, terms)

    @property
    def T(self) -> "AffineMatrixExpr":
        terms = []
        for t in self.terms:
            if isinstance(t, _MatTerm):
                terms.append(_MatTerm(t.var, t.R.T, t.L.T, not t.transp, t.alpha))
            else:
                terms.append(_ScalTerm(t.var, t.M.T))
        return AffineMatrixExpr((self.shape[1], self.shape[0]), self.const.T, terms)

    # -- structure ----------------------------------------------------------

    @staticmethod
    def block(rows: Sequence[Sequence["AffineMatrixExpr | np.ndarray | None"]]) -> "AffineMatrixExpr":
        """Assemble a block matrix. ``None`` blocks are zeros (their size is
        inferred from the row/column partition; every row and column must
        contain at least one sized block)."""
        nrows = len(rows)
        ncols = len(rows[0])
        row_h = [None] * nrows
        col_w = [None] * ncols
        grid: list[list[AffineMatrixExpr | None]] = []
        for i, row in enumerate(rows):
            if len(row) != ncols:
                raise ValueError("ragged block rows")
            grid.append([])
            for j, blk in enumerate(row):
                if blk is None:
                    grid[i].append(None)
                    continue
                e = blk if isinstance(blk, AffineMatrixExpr) else AffineMatrixExpr.constant(blk)
                grid[i].append(e)
                if row_h[i] is None:
                    row_h[i] = e.shape[0]
                elif row_h[i] != e.shape[0]:
                    raise ValueError(f"row {i}: height {e.shape[0]} != {row_h[i]}")
                if col_w[j] is None:
                    col_w[j] = e.shape[1]
                elif col_w[j] != e.shape[1]:
                    raise ValueError(f"column {j}: width {e.shape[1]} != {col_w[j]}")
        if any(h is None for h in row_h) or any(w is None for w in col_w):
            raise ValueError("a block row/column has no sized entries")
        M = int(sum(row_h))
        K = int(sum(col_w))
        roff = np.concatenate([[0], np.cumsum(row_h)]).astype(int)
        coff = np.concatenate([[0], np.cumsum(col_w)]).astype(int)
        const = np.zeros((M, K))
        terms: list = []
        for i in range(nrows):
            for j in range(ncols):
                e = grid[i][j]
                if e is None:
                    continue
                const[roff[i] : roff[i + 1], coff[j] : coff[j + 1]] = e.const
                for t in e.terms:
                    if isinstance(t, _MatTerm):
                        Lb = np.zeros((M, t.L.shape[1]))
                        Lb[roff[i] : roff[i + 1], :] = t.L
                        Rb = np.zeros((t.R.shape[0], K))
                        Rb[:, coff[j] : coff[j + 1]] = t.R
                        terms.append(_MatTerm(t.var, Lb, Rb, t.transp, t.alpha))
                    else:
                        Mb = np.zeros((M, K))
                        Mb[roff[i] : roff[i + 1], coff[j] : coff[j + 1]] = t.M
                        terms.append(_ScalTerm(t.var, Mb))
        return AffineMatrixExpr((M, K), const, terms)

    def entry(self, i: int, j: int) -> "AffineScalarExpr":
        """The (i, j) entry as a scalar expression."""
        coeffs: dict[str, np.ndarray] = {}
        vars_: dict[str, LmiVariable] = {}
        for t in self.terms:
            vars_[t.var.name] = t.var
            if isinstance(t, _MatTerm):
                if t.transp:
                    G = t.alpha * np.outer(t.R[:, j], t.L[i, :])
                else:
                    G = t.alpha * np.outer(t.L[i, :], t.R[:, j])
                full = np.zeros(t.var.shape if t.var.kind != "scalar" else (1, 1))
                full += G
            else:
                full = np.array([[t.M[i, j]]]) if t.var.kind == "scalar" else t.M[i, j]
            key = t.var.name
            if key in coeffs:
                coeffs[key] = coeffs[key] + full
            else:
                coeffs[key] = full
        return AffineScalarExpr(float(self.const[i, j]), coeffs, vars_)

    # -- evaluation ----------------------------------------------------------

    def variables(self) -> dict[str, LmiVariable]:
        return {t.var.name: t.var for t in self.terms}

    def evaluate(self, assignment: dict[str, np.ndarray | float]) -> np.ndarray:
        """Substitute values (by variable name) and return the dense matrix."""
        out = self.const.copy()
        for t in self.terms:
            val = assignment[t.var.name]
            if isinstance(t, _ScalTerm):
                out += float(val) * t.M
            else:
                V = np.asarray(val, dtype=float)
                V = V.T if t.transp else V
                out += t.alpha * (t.L @ V @ t.R)
        return out

    def coordinate_matrices(self, var: LmiVariable) -> list[np.ndarray]:
        """Dense d(expr)/d(coord) matrices for every coordinate of ``var``,
        in the variable's fixed coordinate order."""
        pairs = var.coord_pairs()
        mats = [np.zeros(self.shape) for _ in pairs]
        for t in self.terms:
            if t.var.name != var.name:
                continue
            if isinstance(t, _ScalTerm):
                mats[0] += t.M
                continue
            for c, (a, b) in enumerate(pairs):
                if var.kind == "symmetric":
                    cols = [(a, b), (b, a)] if a != b else [(a, b)]
                else:
                    cols = [(a, b)]
                for (aa, bb) in cols:
                    if t.transp:
                        mats[c] += t.alpha * np.outer(t.L[:, bb], t.R[aa, :])
                    else:
                        mats[c] += t.alpha * np.outer(t.L[:, aa], t.R[bb, :])
        return mats


def _as_expr(x, shape) -> AffineMatrixExpr:
    if isinstance(x, AffineMatrixExpr):
        return x
    if np.isscalar(x) and x == 0:
        return AffineMatrixExpr(shape)
    return AffineMatrixExpr.constant(np.asarray(x))


class AffineScalarExpr:
    """Scalar expression: const + sum over variables of <coeff, var>."""

    def __init__(self, const: float = 0.0, coeffs: dict[str, np.ndarray] | None = None, vars_: dict[str, LmiVariable] | None = None):
        self.const = float(const)
        self.coeffs = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in (coeffs or {}).items()}
        self.vars = dict(vars_ or {})

    @staticmethod
    def of_variable(var: LmiVariable, weight: np.ndarray | float = 1.0) -> "AffineScalarExpr":
        """<weight, var>; for scalar variables weight is a plain factor."""
        if var.kind == "scalar":
            W = np.array([[float(weight)]])
        else:
            W = np.asarray(weight, dtype=float).reshape(var.shape)
        return AffineScalarExpr(0.0, {var.name: W}, {var.name: var})

    def __add__(self, other):
        if np.isscalar(other):
            return AffineScalarExpr(self.const + float(other), self.coeffs, self.vars)
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v
        vars_ = {**self.vars, **other.vars}
        return AffineScalarExpr(self.const + other.const, coeffs, vars_)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (other * -1.0 if isinstance(other, AffineScalarExpr) else -other)

    def __rsub__(self, other):
        return (self * -1.0) + other

    def __mul__(self, c: float):
        c = float(c)
        return AffineScalarExpr(
            self.const * c, {k: v * c for k, v in self.coeffs.items()}, self.vars
        )

    __rmul__ = __mul__

    def evaluate(self, assignment: dict[str, np.ndarray | float]) -> float:
        out = self.const
        for name, W in self.coeffs.items():
            val = assignment[name]
            if self.vars[name].kind == "scalar":
                out += float(W[0, 0]) * float(val)
            else:
                out += float(np.sum(W * np.asarray(val, dtype=float)))
        return out
