"""Discrete norm estimators, geometric rate fits, and parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import ScalarField, gradient, hessian

__all__ = [
    "RateFit",
    "holder_seminorm",
    "sup_seminorm",
    "weighted_h1_error",
    "fit_geometric_rate",
    "rho_scaling_sweep",
    "epsilon_floor_sweep",
]


def _region_mask(grid, region):
    if isinstance(region, str):
        if region == "core":
            return grid.core_mask()
        if region == "all":
            return np.ones(grid.shape, dtype=bool)
        raise ValueError(f"unknown region {region!r}")
    mask = np.asarray(region, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError("region mask shape mismatch")
    return mask


def _derivative_fields(field, k):
    if k == 0:
        return [field.values]
    if k == 1:
        g = gradient(field, "central")
        return [g[..., c] for c in range(field.grid.dim)]
    if k == 2:
        H = hessian(field)
        d = field.grid.dim
        return [H[..., a, b] for a in range(d) for b in range(a, d)]
    raise ValueError("order k must be 0, 1, or 2")


def _pair_offsets(grid):
    """Offsets with |x - y| <= 1 used for seminorm quotients.

    1D enumerates every admissible node offset.  2D restricts to the axis
    and diagonal directions (documented lower-bound estimate; full pair
    enumeration is quadratic in the node count).
    """
    h = grid.h
    if grid.dim == 1:
        kmax = max(1, int(math.floor(1.0 / h[0] + 1e-12)))
        return [((off,), off * h[0]) for off in range(1, kmax + 1)]
    offsets = []
    for direction in ((1, 0), (0, 1), (1, 1), (1, -1)):
        step = math.hypot(direction[0] * h[0], direction[1] * h[1])
        kmax = int(math.floor(1.0 / step + 1e-12))
        for m in range(1, kmax + 1):
            offsets.append(((m * direction[0], m * direction[1]), m * step))
    if not offsets:
        # coarse grids: nearest neighbors even if slightly beyond unit distance
        offsets = [((1, 0), h[0]), ((0, 1), h[1])]
    return offsets


def holder_seminorm(field, k, alpha, region="core"):
    """Discrete [w]_{k,alpha}: max over order-k stencil derivatives and node
    pairs within unit distance of |D^a w(x) - D^a w(y)| / |x-y|^alpha."""
    grid = field.grid
    mask = _region_mask(grid, region)
    if not mask.any():
        raise ValueError("seminorm region is empty")
    best = 0.0
    for w in _derivative_fields(field, k):
        for offset, dist in _pair_offsets(grid):
            sl_a = []
            sl_b = []
            for off in offset:
                if off >= 0:
                    sl_a.append(slice(off, None) if off else slice(None))
                    sl_b.append(slice(None, -off) if off else slice(None))
                else:
                    sl_a.append(slice(None, off))
                    sl_b.append(slice(-off, None))
            sl_a, sl_b = tuple(sl_a), tuple(sl_b)
            both = mask[sl_a] & mask[sl_b]
            if not both.any():
                continue
            quot = np.abs(w[sl_a] - w[sl_b])[both] / dist**alpha
            m = float(quot.max())
            if m > best:
                best = m
    return best


def sup_seminorm(field, k, region="core"):
    """Discrete sup norm of order-k derivatives over the region."""
    mask = _region_mask(field.grid, region)
    return max(float(np.max(np.abs(w[mask]))) for w in _derivative_fields(field, k))


def weighted_h1_error(v, v_ref, center=None, radius=1.0, rho=None):
    """rho * int |v - v_ref|^2 + int |D(v - v_ref)|^2 over a ball.

    Trapezoidal in 1D (exact node-interval endpoints), uniform nodal weights
    in 2D.  The ball must lie inside the core region.
    """
    grid = v.grid
    if v_ref.grid.shape != grid.shape:
        raise ValueError("fields must share a grid")
    if rho is None:
        raise ValueError("rho must be provided")
    if center is None:
        center = [0.5 * (lo + hi) for lo, hi in grid.box]
    center = np.asarray(center, dtype=float)
    for ax, (lo, hi) in enumerate(grid.box):
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * grid.core_fraction
        if center[ax] - radius < c - half - 1e-9 or center[ax] + radius > c + half + 1e-9:
            raise ValueError("ball exceeds the core region")
    coords = grid.nodes()
    dist = np.sqrt(np.sum((coords - center) ** 2, axis=-1))
    inside = dist <= radius + 1e-12
    diff = ScalarField(grid, v.values - v_ref.values)
    grad = gradient(diff, "central")
    dens = rho * diff.values**2 + np.sum(grad**2, axis=-1)
    if grid.dim == 1:
        idx = np.nonzero(inside)[0]
        w = np.zeros(grid.shape)
        w[idx] = grid.h[0]
        w[idx[0]] *= 0.5
        w[idx[-1]] *= 0.5
        return float(np.sum(dens * w))
    cell = grid.h[0] * grid.h[1]
    return float(np.sum(dens[inside]) * cell)


@dataclass
class RateFit:
    """Least-squares fit of an error sequence to C * q^n + f."""

    errors: np.ndarray
    q: float
    floor: float
    amplitude: float
    residual: float
    window: tuple
    n_fit_points: int


def fit_geometric_rate(errors, window=None):
    """Fit e_n ~ C q^n + f with f >= 0.

    When the trailing quarter of the window plateaus, the floor is its median
    and q is fitted on (e_n - f) above the plateau; otherwise f = 0 and the
    fit is log-linear.
    """
    errors = np.asarray(errors, dtype=float)
    if window is None:
        window = (0, len(errors) - 1)
    n0, n1 = window
    e = errors[n0 : n1 + 1]
    n = np.arange(n0, n1 + 1)
    if len(e) < 5:
        raise ValueError("need at least 5 points in the fit window")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    spread = e.max() - e.min()
    if spread <= 1e-12 * e.max():
        raise ValueError("degenerate fit: errors are constant")

    tail = e[-max(2, len(e) // 4) :]
    plateau = (tail.max() - tail.min()) <= 0.5 * np.median(tail)
    floor = float(np.median(tail)) if plateau else 0.0

    lifted = e - floor
    if plateau:
        usable = lifted > 0.5 * floor  # points clearly above the floor
    else:
        usable = np.ones_like(e, dtype=bool)
    n_usable = int(usable.sum())
    if n_usable == 0:
        raise ValueError("degenerate fit: no decay above the floor")
    if n_usable >= 2:
        nn = n[usable]
        ll = np.log(lifted[usable])
        slope, intercept = np.polyfit(nn, ll, 1)
        q = float(np.exp(slope))
        amplitude = float(np.exp(intercept))
    else:
        # decay resolved within a single step: bound q by the drop from the
        # lone pre-plateau point into the plateau noise band
        k = int(np.nonzero(usable)[0][0])
        band = max(float(tail.max()) - floor, 1e-300)
        nxt = lifted[k + 1] if k + 1 < len(lifted) and lifted[k + 1] > 0 else band
        q = float(max(nxt, band) / lifted[k])
        amplitude = float(lifted[k] / q ** n[k]) if q > 0 else 0.0
    if q > 1.05:
        raise ValueError(f"errors do not decay geometrically (q = {q:.3f})")
    q = float(np.clip(q, 1e-16, 1.0))
    model = amplitude * q**n + floor
    residual = float(np.sqrt(np.mean(((model - e) / e) ** 2)))
    return RateFit(
        errors=errors,
        q=q,
        floor=floor,
        amplitude=amplitude,
        residual=residual,
        window=(n0, n1),
        n_fit_points=n_usable,
    )


def rho_scaling_row(problem, disc, alpha=0.5, max_iters=80, delta_tol=1e-9):
    """One discount-sweep row: run to convergence, report the six scaled
    quantities rho*||v||, rho^(1-a/2)[v]_{0,a}, rho^(1/2-a/2)[v]_{1,a},
    rho^(-a/2)[v]_{2,a}, rho^(1/2)[[v]]_1, [[v]]_2 over the core."""
    from .pia import pia_run

    rho = problem.rho
    result = pia_run(problem, disc, max_iters=max_iters, delta_tol=delta_tol)
    v = result.state.v
    return {
        "rho": rho,
        "converged": result.converged,
        "iters": result.iters,
        "sup_v": sup_seminorm(v, 0),
        "rho_sup_v": rho * sup_seminorm(v, 0),
        "rho_s_h0": rho ** (1 - alpha / 2) * holder_seminorm(v, 0, alpha),
        "rho_s_h1": rho ** (0.5 - alpha / 2) * holder_seminorm(v, 1, alpha),
        "rho_s_h2": rho ** (-alpha / 2) * holder_seminorm(v, 2, alpha),
        "rho_s_d1": rho**0.5 * sup_seminorm(v, 1),
        "rho_s_d2": sup_seminorm(v, 2),
    }


def rho_scaling_sweep(make_problem, rho_list, disc, alpha=0.5, max_iters=80,
                      delta_tol=1e-9):
    """Scaled-norm table over an ascending discount sweep;
    ``make_problem(rho)`` supplies each instance."""
    if not rho_list:
        raise ValueError("rho_list must be nonempty")
    if sorted(rho_list) != list(rho_list):
        raise ValueError("rho_list must be ascending")
    return [
        rho_scaling_row(
            make_problem(rho), disc, alpha=alpha, max_iters=max_iters,
            delta_tol=delta_tol,
        )
        for rho in rho_list
    ]


def _transient_start(grid):
    """Initial field with O(1) derivatives so that the decay toward the
    fixed point spans several observable iterations before the floor."""
    coords = grid.nodes()
    phase = sum(coords[..., ax] for ax in range(grid.dim))
    return ScalarField(grid, 0.5 * np.cos(2.0 * phase))


def epsilon_floor_row(problem, disc, reference_problem=None, max_iters=40,
                      ref_factor=2, fit_window=None):
    """One diffusion-perturbation row: weighted H1 errors against the
    fine-grid reference of the unperturbed baseline, fitted to C q^n + f.

    The reference is the optimal value of ``reference_problem`` (defaults to
    ``problem`` itself), so with a perturbed diffusion the error sequence
    decays until it resolves the perturbation-induced offset and then stalls
    at a floor; at eps0 = 0 the floor degenerates to the discretization
    error level.
    """
    from .pia import pia_run, reference_solution

    reference, info = reference_solution(
        reference_problem or problem, disc, factor=ref_factor
    )
    result = pia_run(
        problem,
        disc,
        v0=_transient_start(disc.grid),
        max_iters=max_iters,
        delta_tol=0.0,
        reference=reference,
    )
    errs = result.trace.column("weighted_err")
    fit = fit_geometric_rate(errs, window=fit_window)
    return {
        "q": fit.q,
        "floor": fit.floor,
        "fit_residual": fit.residual,
        "iters": result.iters,
        "converged": True,
        "ref_residual": info.residual_core_max,
    }


def epsilon_floor_sweep(make_problem, eps0_list, disc, max_iters=40, ref_factor=2,
                        fit_window=None):
    """Rate/floor table over an eps0 sweep; ``make_problem(eps0)`` supplies
    each instance and ``make_problem(0.0)`` the shared baseline reference."""
    if len(eps0_list) < 3:
        raise ValueError("need at least three eps0 values")
    baseline = make_problem(0.0)
    rows = []
    for eps0 in eps0_list:
        row = epsilon_floor_row(
            make_problem(eps0),
            disc,
            reference_problem=baseline if eps0 > 0 else None,
            max_iters=max_iters,
            ref_factor=ref_factor,
            fit_window=fit_window,
        )
        rows.append({"eps0": eps0, **row})
    return rows
