"""Shared builders for the test suite."""

import numpy as np

from epia.discretize import ScalarField, build_grid
from epia.linsolve import assemble_operator, solve_policy_evaluation
from epia.policy import AveragedCoefficients
from epia.problem import GrowthRecord, expression_problem


def ou_problem(rho=2.0):
    """Mean-reverting instance with closed-form value
    v(x) = x^2/(rho+2) + 1/(rho(rho+2))."""
    return expression_problem(
        d=1,
        L=1,
        r_text="x1^2",
        b_texts=["-x1"],
        sigma_texts=[["1"]],
        lam=1.0,
        rho=rho,
        growth=GrowthRecord(N=2, A1=1.0, A2=1.0, A3=1.0),
        ellipticity_c0=1.0,
        name="ou-like",
    )


def ou_value(x, rho=2.0):
    return x**2 / (rho + 2.0) + 1.0 / (rho * (rho + 2.0))


def constant_coeffs(grid, r=1.0, b=0.0, sigma=1.0, entropy=0.0):
    d = grid.dim
    N = grid.size
    return AveragedCoefficients(
        grid=grid,
        r_bar=np.full(N, float(r)),
        b_bar=np.full((N, d), float(b)),
        Sigma_bar=np.tile(sigma * np.eye(d), (N, 1, 1)),
        H_bar=np.full(N, float(entropy)),
    )


def mms_solve_1d(n, rho=10.0, box=(-2.0, 2.0), core_fraction=0.6):
    """Solve rho*v - cos(x) v' - (1/2)*2*v'' = rhs manufactured from
    v_m = sin(x); returns (numeric field, exact field)."""
    grid = build_grid([box], n, core_fraction)
    x = grid.nodes()[..., 0]
    vm = np.sin(x)
    bbar = np.cos(x)
    sbar = 2.0 * np.ones_like(x)
    rhs = rho * vm - bbar * np.cos(x) - 0.5 * sbar * (-np.sin(x))
    coeffs = AveragedCoefficients(
        grid=grid,
        r_bar=rhs.reshape(-1),
        b_bar=bbar.reshape(-1, 1),
        Sigma_bar=sbar.reshape(-1, 1, 1),
        H_bar=np.zeros(grid.size),
    )
    system = assemble_operator(grid, coeffs, rho, 1.0, bc="zero-dirichlet")
    bnd = grid.boundary_mask().reshape(-1)
    system.rhs[bnd] = vm.reshape(-1)[bnd]
    vh = solve_policy_evaluation(system)
    return vh, ScalarField(grid, vm)


def mms_interior_error_1d(n, rho=10.0):
    vh, vm = mms_solve_1d(n, rho)
    core = vh.grid.core_mask()
    return float(np.max(np.abs((vh.values - vm.values)[core])))


def random_bounded_problem(rng):
    """Random smooth bounded instance for variational tests."""
    a1, a2, a3 = rng.uniform(0.3, 1.5, size=3)
    w1, w2 = rng.integers(1, 4, size=2)
    s0 = rng.uniform(1.0, 3.0)
    eps = rng.uniform(0.0, 0.3)
    lam = rng.uniform(0.3, 2.0)

    def reward(x, u):
        return a1 * np.sin(w1 * x[..., 0]) * u[..., 0]

    def drift(x, u):
        return (a2 * np.cos(w2 * x[..., 0]) + 0.5 * u[..., 0])[..., None]

    def vol(x, u):
        return np.sqrt(s0 + eps * u[..., 0] * np.sin(x[..., 0]))[..., None, None]

    from epia.problem import ControlProblem

    return ControlProblem(
        state_dim=1,
        action_dim=1,
        reward=reward,
        drift=drift,
        vol=vol,
        lam=lam,
        rho=10.0,
        growth=GrowthRecord(N=0, A1=a1, A2=a2 + 0.5, A3=np.sqrt(s0 + eps)),
        ellipticity_c0=max(1.0, 1.0 / (s0 - eps)),
        action_dependent_vol=eps > 0,
        name="random-bounded",
    )


def perturbed_density(quad, density, rng, t=0.25):
    """Mix a valid density with positive noise, renormalized to unit mass."""
    noise = rng.uniform(0.2, 2.0, size=density.shape)
    mixed = (1 - t) * density + t * noise
    return mixed / (quad.weights @ mixed)
