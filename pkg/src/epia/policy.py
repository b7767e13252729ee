"""Gibbs policies, entropy, policy-averaged coefficients, and the
entropy-regularized Hamiltonians.

All exponentials are max-shifted, so no overflow occurs for any finite
derivative inputs; densities are stored in the linear domain after
normalization against the action quadrature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .discretize import ScalarField
from .problem import coefficient_tables

__all__ = [
    "PolicyField",
    "AveragedCoefficients",
    "gibbs_policy",
    "entropy",
    "averaged_coefficients",
    "hamiltonian_F",
    "F_pi",
    "exponent_table",
    "policy_from_table",
    "averaged_from_tables",
]


@dataclass
class PolicyField:
    """Discrete density over action quadrature nodes at every grid node.

    ``density`` has shape (n_nodes, n_actions); each row is strictly positive
    and integrates to 1 against the quadrature weights.
    """

    grid: object
    quad: object
    density: np.ndarray

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != (self.grid.size, self.quad.size):
            raise ValueError("density shape mismatch")

    def mass_defect(self):
        """Max deviation of the weighted row sums from 1."""
        return float(np.max(np.abs(self.density @ self.quad.weights - 1.0)))

    def check(self, tol=1e-10):
        if not np.all(self.density > 0):
            raise ValueError("policy density must be strictly positive")
        defect = self.mass_defect()
        if defect > tol:
            raise ValueError(f"policy mass defect {defect:.3e} exceeds {tol:.1e}")

    def to_csv(self, path):
        coords = self.grid.nodes_flat()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"x{i + 1}" for i in range(self.grid.dim)]
                + [f"u{j + 1}" for j in range(self.quad.dim)]
                + ["density"]
            )
            for i in range(self.grid.size):
                for j in range(self.quad.size):
                    writer.writerow(
                        [repr(float(c)) for c in coords[i]]
                        + [repr(float(c)) for c in self.quad.nodes[j]]
                        + [repr(float(self.density[i, j]))]
                    )


@dataclass
class AveragedCoefficients:
    """Policy-averaged fields feeding the linear policy-evaluation solve."""

    grid: object
    r_bar: np.ndarray  # (n_nodes,)
    b_bar: np.ndarray  # (n_nodes, d)
    Sigma_bar: np.ndarray  # (n_nodes, d, d)
    H_bar: np.ndarray  # (n_nodes,)

    def r_field(self):
        return self.r_bar.reshape(self.grid.shape)

    def b_field(self):
        return self.b_bar.reshape(self.grid.shape + (self.grid.dim,))

    def sigma_field(self):
        return self.Sigma_bar.reshape(self.grid.shape + (self.grid.dim,) * 2)

    def h_field(self):
        return self.H_bar.reshape(self.grid.shape)


def _pointwise_f(problem, quad, x, p, X, include_trace):
    """f(u_j) = r + b.p (+ tr(Sigma X)/2) at one state point, shape (M,)."""
    x = np.asarray(x, dtype=float).reshape(1, problem.state_dim)
    p = np.asarray(p, dtype=float).reshape(problem.state_dim)
    u = quad.nodes
    r = np.asarray(problem.reward(x, u), dtype=float)
    b = np.asarray(problem.drift(x, u), dtype=float)
    f = r + b @ p
    if include_trace:
        X = np.asarray(X, dtype=float).reshape(problem.state_dim, problem.state_dim)
        Sig = problem.sigma_matrix(x, u)
        f = f + 0.5 * np.einsum("...ab,ab->...", Sig, X)
    if not np.all(np.isfinite(f)):
        raise ArithmeticError("non-finite Hamiltonian integrand")
    return np.broadcast_to(f, (quad.size,)).astype(float)


def gibbs_policy(problem, quad, x, p, X=None):
    """Maximizing density over the action nodes at one state point.

    When the diffusion does not depend on the action, the trace term is a
    constant shift in the exponent and is skipped.
    """
    include_trace = problem.action_dependent_vol and X is not None
    f = _pointwise_f(problem, quad, x, p, X, include_trace)
    g = f / problem.lam
    e = np.exp(g - g.max())
    return e / (quad.weights @ e)


def hamiltonian_F(problem, quad, x, p, X):
    """Log-sum-exp Hamiltonian lambda * ln sum_j w_j exp(f_j / lambda)."""
    f = _pointwise_f(problem, quad, x, p, X, include_trace=True)
    g = f / problem.lam
    m = g.max()
    return float(problem.lam * (m + np.log(quad.weights @ np.exp(g - m))))


def F_pi(problem, quad, x, p, X, density_row):
    """Entropy-regularized reward of an arbitrary density row."""
    density_row = np.asarray(density_row, dtype=float)
    if np.any(density_row <= 0):
        raise ValueError("density must be strictly positive")
    f = _pointwise_f(problem, quad, x, p, X, include_trace=True)
    integrand = density_row * (f - problem.lam * np.log(density_row))
    return float(quad.weights @ integrand)


def entropy(policy):
    """Entropy field H(x_i) = sum_j w_j pi ln pi from the stored densities."""
    h = _kernels.averaged_scalar(
        policy.density, policy.quad.weights, np.log(policy.density)
    )
    return ScalarField(policy.grid, h.reshape(policy.grid.shape))


# -- field-level construction (used by the iteration driver) ------------------


def exponent_table(tables, lam, grad_flat, hess_flat=None):
    """Exponent f/lambda on (nodes x action nodes).

    ``grad_flat``: (n_nodes, d); ``hess_flat``: (n_nodes, d, d) or None (the
    trace term is dropped when the diffusion is action-independent).
    """
    f = tables.r + np.einsum("ijc,ic->ij", tables.b, grad_flat)
    if tables.action_dependent_vol and hess_flat is not None:
        f = f + 0.5 * np.einsum("ijab,iab->ij", tables.Sigma, hess_flat)
    return f / lam


def policy_from_table(grid, quad, f_over_lam):
    """Gibbs policy field plus entropy and log-normalizer arrays."""
    if not np.all(np.isfinite(f_over_lam)):
        raise ArithmeticError("non-finite policy exponent")
    density, ent, logz = _kernels.policy_from_exponent(
        np.ascontiguousarray(f_over_lam), quad.weights
    )
    return PolicyField(grid, quad, density), ent, logz


def averaged_from_tables(tables, policy):
    """Quadrature averages of r, b, Sigma against the policy density."""
    w = policy.quad.weights
    dens = policy.density
    r_bar = _kernels.averaged_scalar(dens, w, tables.r)
    b_bar = _kernels.averaged_vector(dens, w, tables.b)
    if tables.action_dependent_vol:
        Sigma_bar = _kernels.averaged_matrix(dens, w, tables.Sigma)
    else:
        Sigma_bar = tables.Sigma[:, 0].copy()
    h_bar = _kernels.averaged_scalar(dens, w, np.log(dens))
    return AveragedCoefficients(
        grid=policy.grid, r_bar=r_bar, b_bar=b_bar, Sigma_bar=Sigma_bar, H_bar=h_bar
    )


def averaged_coefficients(problem, policy):
    """Public one-shot averaging; evaluates the coefficient tables on the fly."""
    tables = coefficient_tables(problem, policy.grid, policy.quad)
    return averaged_from_tables(tables, policy)
