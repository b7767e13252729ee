"""Monte-Carlo verification of policy values.

Simulates the averaged-coefficient dynamics (drift ``b_bar``, diffusion
``chol(Sigma_bar)``, both multilinearly interpolated from the grid fields)
and accumulates the discounted running reward ``r_bar - lambda*H_bar`` by
left-endpoint quadrature.  Paths leaving the grid box are absorbed with
their accumulated payoff frozen; the exit events are counted and a high exit
fraction flags the estimate as invalid for comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import _kernels
from .policy import averaged_coefficients

__all__ = ["McEstimate", "simulate_exploratory_sde", "mc_value"]

_BLOCK = 256  # fixed path-block size; results independent of thread count


@dataclass
class McEstimate:
    mean: float
    stderr: float
    npaths: int
    T: float
    dt: float
    seed: int
    x0: list
    exit_fraction: float
    tail_bound: float
    chol_failures: int
    valid: bool

    def to_dict(self):
        return asdict(self)


def _field_arrays(problem, coeffs):
    grid = coeffs.grid
    running = (coeffs.r_bar - problem.lam * coeffs.H_bar).reshape(grid.shape)
    bbar = coeffs.b_field()
    sigma = coeffs.sigma_field()
    return running, bbar, sigma


def _block_normals(seed, block_index, nsteps, size, dim):
    bitgen = np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block_index,)))
    rng = np.random.Generator(bitgen)
    if dim == 1:
        return rng.standard_normal((nsteps, size))
    return rng.standard_normal((nsteps, size, dim))


def _run_blocks(problem, coeffs, x0, dt, T, seed, npaths):
    grid = coeffs.grid
    running, bbar, sigma = _field_arrays(problem, coeffs)
    nsteps = int(round(T / dt))
    lo = [b[0] for b in grid.box]
    payoffs = np.empty(npaths)
    exit_steps = np.empty(npaths, dtype=np.int64)
    chol_failures = 0
    done = 0
    block = 0
    while done < npaths:
        size = min(_BLOCK, npaths - done)
        normals = _block_normals(seed, block, nsteps, size, grid.dim)
        if grid.dim == 1:
            pay, ex, fails = _kernels.mc_block_1d(
                np.ascontiguousarray(running),
                np.ascontiguousarray(bbar[..., 0]),
                np.ascontiguousarray(sigma[..., 0, 0]),
                lo[0],
                grid.h[0],
                grid.n[0],
                float(np.atleast_1d(x0)[0]),
                dt,
                problem.rho,
                normals,
            )
        else:
            pay, ex, fails = _kernels.mc_block_2d(
                np.ascontiguousarray(running),
                np.ascontiguousarray(bbar),
                np.ascontiguousarray(sigma),
                lo,
                list(grid.h),
                list(grid.n),
                list(np.asarray(x0, dtype=float)),
                dt,
                problem.rho,
                normals,
            )
        payoffs[done : done + size] = pay
        exit_steps[done : done + size] = ex
        chol_failures += int(fails)
        done += size
        block += 1
    return payoffs, exit_steps, chol_failures, nsteps, running


def simulate_exploratory_sde(policy, problem, x0, dt, T, seed):
    """One discounted payoff sample along a single simulated path."""
    _check_horizon(problem, dt, T)
    coeffs = averaged_coefficients(problem, policy)
    payoffs, _, _, _, _ = _run_blocks(problem, coeffs, x0, dt, T, seed, npaths=1)
    return float(payoffs[0])


def _check_horizon(problem, dt, T):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 10.0 / problem.rho:
        raise ValueError(f"horizon T={T} shorter than 10/rho={10.0 / problem.rho}")


def mc_value(problem, policy, x0, npaths=10_000, dt=None, T=None, seed=0, coeffs=None):
    """Mean/stderr of the discounted payoff over independent seeded paths."""
    if npaths < 1000:
        raise ValueError("npaths must be at least 1000")
    if T is None:
        T = 20.0 / problem.rho
    if dt is None:
        dt = T / 10_000
    _check_horizon(problem, dt, T)
    if coeffs is None:
        coeffs = averaged_coefficients(problem, policy)
    grid = coeffs.grid
    x0_arr = np.atleast_1d(np.asarray(x0, dtype=float))
    for ax, (lo, hi) in enumerate(grid.box):
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * grid.core_fraction
        if not (c - half <= x0_arr[ax] <= c + half):
            raise ValueError(f"x0 axis {ax} outside the core region")
    payoffs, exit_steps, chol_failures, nsteps, running = _run_blocks(
        problem, coeffs, x0_arr, dt, T, seed, npaths
    )
    mean = float(np.mean(payoffs))
    stderr = float(np.std(payoffs, ddof=1) / math.sqrt(npaths))
    exit_fraction = float(np.mean(exit_steps < nsteps))
    tail = math.exp(-problem.rho * T) * float(np.max(np.abs(running))) / problem.rho
    return McEstimate(
        mean=mean,
        stderr=stderr,
        npaths=npaths,
        T=T,
        dt=dt,
        seed=seed,
        x0=[float(c) for c in x0_arr],
        exit_fraction=exit_fraction,
        tail_bound=tail,
        chol_failures=chol_failures,
        valid=exit_fraction <= 0.20,
    )
