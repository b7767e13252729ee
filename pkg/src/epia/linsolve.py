"""Assembly and solution of the linear policy-evaluation equation.

The interior equation is

    rho*v - b_bar . Dv - (1/2) tr(Sigma_bar D^2 v) = r_bar - lambda*H_bar.

Drift terms use central differences wherever the cell Peclet condition
``Sigma_cc >= h_c * |b_c|`` holds at the node (second order, sign pattern
preserved) and one-sided upwind differences otherwise (first order).  With a
diagonal diffusion this yields an M-matrix, i.e. a discrete comparison
principle; off-diagonal diffusion entries require cross stencils that break
the sign pattern, which is recorded on the assembled system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .discretize import ScalarField

__all__ = [
    "LinearOperatorSystem",
    "SolverError",
    "assemble_operator",
    "solve_policy_evaluation",
    "dump_matrix_coo",
]

logger = logging.getLogger(__name__)

SOLVER_TOL = 1e-10

_BC_TAGS = ("zero-dirichlet", "bound-dirichlet", "linear-extrapolation")


class SolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or []


@dataclass
class LinearOperatorSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    bc: str
    grid: object
    is_m_matrix: bool
    upwind_nodes: int = 0
    dirichlet_mask: np.ndarray = field(default=None, repr=False)

    def verify_m_matrix(self, tol=1e-12):
        """Numerically confirm positive diagonal and non-positive
        off-diagonal entries."""
        coo = self.matrix.tocoo()
        off = coo.data[coo.row != coo.col]
        diag = self.matrix.diagonal()
        return bool(np.all(diag > 0) and (off.size == 0 or np.max(off) <= tol))


def _flat_index(grid, idx):
    if grid.dim == 1:
        return idx[0]
    return idx[0] * grid.n[1] + idx[1]


def assemble_operator(grid, coeffs, rho, lam, bc="linear-extrapolation", growth=None,
                      drift_scheme="auto"):
    """Assemble the policy-evaluation system for averaged coefficients.

    ``bc``: "zero-dirichlet" pins v=0 on the boundary; "bound-dirichlet" pins
    the polynomial growth barrier +-2*A1/rho*(1+|x|^2)^(N/2), sign-matched to
    r_bar (requires ``growth=(A1, N)``); "linear-extrapolation" imposes a zero
    second normal derivative.
    """
    if bc not in _BC_TAGS:
        raise ValueError(f"unknown bc {bc!r}; expected one of {_BC_TAGS}")
    if drift_scheme not in ("auto", "central", "upwind"):
        raise ValueError(f"unknown drift scheme {drift_scheme!r}")
    d = grid.dim
    N = grid.size
    h = grid.h
    shape = grid.shape
    Sigma = coeffs.Sigma_bar.reshape(shape + (d, d))
    if not np.allclose(Sigma, np.swapaxes(Sigma, -1, -2), atol=1e-12):
        raise ValueError("Sigma_bar must be symmetric")
    b = coeffs.b_bar.reshape(shape + (d,))
    rhs_interior = coeffs.r_bar - lam * coeffs.H_bar

    boundary = grid.boundary_mask()
    interior = ~boundary
    diag = np.where(interior, rho, 0.0).astype(float)

    flat = np.arange(N).reshape(shape)

    # collect (row, col, val) for interior rows, vectorized per stencil arm
    entries_r, entries_c, entries_v = [], [], []

    def put(r_idx, c_idx, v):
        entries_r.append(r_idx.ravel())
        entries_c.append(c_idx.ravel())
        entries_v.append(np.asarray(v, dtype=float).ravel())

    idx_grid = flat
    has_cross = False
    upwind_nodes = 0

    int_idx = idx_grid[interior]

    # diffusion, diagonal part, and drift per axis
    for ax in range(d):
        shift_plus = np.roll(idx_grid, -1, axis=ax)
        shift_minus = np.roll(idx_grid, 1, axis=ax)
        s_aa = Sigma[..., ax, ax]
        b_a = b[..., ax]
        if drift_scheme == "central":
            central = np.ones(shape, dtype=bool)
        elif drift_scheme == "upwind":
            central = np.zeros(shape, dtype=bool)
        else:
            central = s_aa >= np.abs(b_a) * h[ax]
        upwind_nodes += int(np.count_nonzero(~central & interior))

        coeff_diff = s_aa / (2 * h[ax] ** 2)
        # central drift split
        drift_plus = np.where(central, -b_a / (2 * h[ax]), 0.0)
        drift_minus = np.where(central, b_a / (2 * h[ax]), 0.0)
        # upwind drift: b>=0 forward difference, b<0 backward difference
        up = ~central
        bp = np.where(up & (b_a >= 0), b_a, 0.0)
        bm = np.where(up & (b_a < 0), b_a, 0.0)
        drift_plus = drift_plus - bp / h[ax]
        drift_minus = drift_minus + bm / h[ax]
        diag += np.where(interior, 2 * coeff_diff + bp / h[ax] - bm / h[ax], 0.0)

        off_plus = -coeff_diff + drift_plus
        off_minus = -coeff_diff + drift_minus
        put(int_idx, shift_plus[interior], off_plus[interior])
        put(int_idx, shift_minus[interior], off_minus[interior])

    # cross-derivative terms (2D, off-diagonal Sigma)
    if d == 2:
        s_ab = Sigma[..., 0, 1]
        if np.any(np.abs(s_ab) > 1e-14):
            has_cross = True
            logger.warning(
                "off-diagonal diffusion entries present: cross stencils break "
                "the M-matrix sign pattern; comparison-based checks disabled"
            )
            c = -s_ab / (4 * h[0] * h[1])
            pp = np.roll(np.roll(idx_grid, -1, axis=0), -1, axis=1)
            mm = np.roll(np.roll(idx_grid, 1, axis=0), 1, axis=1)
            pm = np.roll(np.roll(idx_grid, -1, axis=0), 1, axis=1)
            mp = np.roll(np.roll(idx_grid, 1, axis=0), -1, axis=1)
            put(int_idx, pp[interior], c[interior])
            put(int_idx, mm[interior], c[interior])
            put(int_idx, pm[interior], -c[interior])
            put(int_idx, mp[interior], -c[interior])

    # diagonal entries for interior rows
    put(int_idx, int_idx, diag[interior])

    rhs = np.where(interior, rhs_interior.reshape(shape), 0.0).astype(float)

    # boundary rows
    bnd_idx = idx_grid[boundary]
    if bc in ("zero-dirichlet", "bound-dirichlet"):
        put(bnd_idx, bnd_idx, np.ones(bnd_idx.size))
        if bc == "bound-dirichlet":
            if growth is None:
                raise ValueError("bound-dirichlet requires growth=(A1, N)")
            a1, n_growth = growth
            coords = grid.nodes()[boundary]
            barrier = (
                2.0 * a1 / rho * (1.0 + np.sum(coords**2, axis=-1)) ** (n_growth / 2.0)
            )
            sign = np.sign(coeffs.r_bar.reshape(shape)[boundary])
            sign[sign == 0] = 1.0
            rhs[boundary] = sign * barrier
        m_matrix = not has_cross
    else:
        # zero second difference along each outward normal axis; corners
        # average the two axis conditions
        row_acc = {}
        coords_axes = np.indices(shape)
        for ax in range(d):
            for side in (0, shape[ax] - 1):
                sel = coords_axes[ax] == side
                sel &= boundary
                base = idx_grid[sel]
                step = 1 if side == 0 else -1
                n1 = np.roll(idx_grid, -step, axis=ax)[sel]
                n2 = np.roll(idx_grid, -2 * step, axis=ax)[sel]
                for r_i, c_i, v_i in zip(
                    (base, base, base), (base, n1, n2), (1.0, -2.0, 1.0)
                ):
                    for rr, cc in zip(r_i, c_i):
                        row_acc[(rr, cc)] = row_acc.get((rr, cc), 0.0) + v_i
        if row_acc:
            rr = np.array([k[0] for k in row_acc])
            cc = np.array([k[1] for k in row_acc])
            vv = np.array(list(row_acc.values()))
            put(rr, cc, vv)
        m_matrix = False

    matrix = sp.csr_matrix(
        (np.concatenate(entries_v), (np.concatenate(entries_r), np.concatenate(entries_c))),
        shape=(N, N),
    )
    matrix.sum_duplicates()
    return LinearOperatorSystem(
        matrix=matrix,
        rhs=rhs.reshape(-1),
        bc=bc,
        grid=grid,
        is_m_matrix=m_matrix,
        upwind_nodes=upwind_nodes,
        dirichlet_mask=boundary.reshape(-1)
        if bc in ("zero-dirichlet", "bound-dirichlet")
        else None,
    )


def _relative_residual(matrix, x, rhs):
    num = np.linalg.norm(matrix @ x - rhs)
    den = np.linalg.norm(rhs)
    return num / den if den > 0 else num


def _solve_banded_direct(system):
    csr = system.matrix.tocoo()
    offsets = csr.col - csr.row
    bw = int(np.max(np.abs(offsets)))
    N = system.matrix.shape[0]
    ab = np.zeros((2 * bw + 1, N))
    ab[bw + csr.row - csr.col, csr.col] = csr.data
    return solve_banded((bw, bw), ab, system.rhs)


def solve_policy_evaluation(system, tol=SOLVER_TOL):
    """Solve the assembled system to relative residual <= tol.

    1D grids use direct banded elimination; 2D grids use BiCGStab with
    diagonal preconditioning, falling back to sparse LU on non-convergence.
    """
    residuals = []
    if system.grid.dim == 1:
        x = _solve_banded_direct(system)
        res = _relative_residual(system.matrix, x, system.rhs)
        residuals.append(res)
        if res > tol:
            raise SolverError(
                f"banded solve residual {res:.3e} exceeds {tol:.1e}", residuals
            )
        return ScalarField(system.grid, x.reshape(system.grid.shape))

    diag = system.matrix.diagonal()
    if np.any(diag == 0):
        precond = None
    else:
        inv = 1.0 / diag
        precond = spla.LinearOperator(system.matrix.shape, lambda v: inv * v)
    x, info = spla.bicgstab(
        system.matrix,
        system.rhs,
        rtol=max(tol * 1e-2, 1e-14),
        atol=0.0,
        maxiter=20 * system.matrix.shape[0],
        M=precond,
    )
    if info == 0:
        res = _relative_residual(system.matrix, x, system.rhs)
        residuals.append(res)
        if res <= tol:
            return ScalarField(system.grid, x.reshape(system.grid.shape))
    # fall back to direct sparse elimination
    try:
        lu = spla.splu(system.matrix.tocsc())
        x = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise SolverError(f"direct sparse fallback failed: {exc}", residuals) from exc
    res = _relative_residual(system.matrix, x, system.rhs)
    residuals.append(res)
    if res > tol:
        raise SolverError(
            f"fallback residual {res:.3e} exceeds {tol:.1e}", residuals
        )
    return ScalarField(system.grid, x.reshape(system.grid.shape))


def dump_matrix_coo(system, path):
    """Coordinate text dump (row, col, value) for external verification."""
    coo = system.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {system.matrix.shape[0]} {system.matrix.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
