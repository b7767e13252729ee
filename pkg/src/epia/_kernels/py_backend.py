"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled module ``_speedups``; selected at import
time by :mod:`epia._kernels` when the extension is unavailable or when
``EPIA_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def policy_from_exponent(f_over_lam, weights):
    """Weighted softmax over the action axis with max-shift stabilization.

    ``f_over_lam``: (n_nodes, n_actions) exponent table f/lambda.
    Returns (density, entropy, logz) where density is (n_nodes, n_actions)
    with sum_j w_j * density[i, j] == 1, entropy[i] = sum_j w_j pi ln pi, and
    logz[i] = ln sum_j w_j exp(f[i, j]) (the stabilized log normalizer).
    """
    f = np.asarray(f_over_lam, dtype=float)
    w = np.asarray(weights, dtype=float)
    m = f.max(axis=1)
    e = np.exp(f - m[:, None])
    z = e @ w
    density = e / z[:, None]
    logpi = np.log(density)
    entropy = (density * logpi) @ w
    logz = m + np.log(z)
    return density, entropy, logz


def averaged_scalar(density, weights, table):
    """sum_j w_j * density[i, j] * table[i, j] -> (n_nodes,)."""
    return np.einsum("ij,j,ij->i", density, weights, table)


def averaged_vector(density, weights, table):
    """sum_j w_j * density[i, j] * table[i, j, c] -> (n_nodes, d)."""
    return np.einsum("ij,j,ijc->ic", density, weights, table)


def averaged_matrix(density, weights, table):
    """sum_j w_j * density[i, j] * table[i, j, a, b] -> (n_nodes, d, d)."""
    return np.einsum("ij,j,ijab->iab", density, weights, table)


def _interp_weights_1d(pos, lo, h, n):
    cell = np.floor((pos - lo) / h).astype(np.int64)
    cell = np.clip(cell, 0, n - 2)
    theta = (pos - (lo + cell * h)) / h
    return cell, theta


def mc_block_1d(running, bbar, sbar, lo, h, n, x0, dt, rho, normals):
    """Euler-Maruyama block on a 1D grid with linear interpolation.

    ``running`` = r_bar - lambda*H_bar nodal values (n,), ``bbar`` drift (n,),
    ``sbar`` diffusion Sigma_bar (n,).  ``normals`` has shape (nsteps, B).
    Returns (payoff (B,), exit_step (B,), chol_failures).
    """
    nsteps, B = normals.shape
    x = np.full(B, float(x0))
    payoff = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    exit_step = np.full(B, nsteps, dtype=np.int64)
    chol_failures = 0
    sqdt = np.sqrt(dt)
    disc = np.exp(-rho * dt * np.arange(nsteps))
    for k in range(nsteps):
        if not alive.any():
            break
        cell, theta = _interp_weights_1d(x, lo, h, n)
        run_x = (1 - theta) * running[cell] + theta * running[cell + 1]
        b_x = (1 - theta) * bbar[cell] + theta * bbar[cell + 1]
        s_x = (1 - theta) * sbar[cell] + theta * sbar[cell + 1]
        bad = alive & (s_x <= 0)
        if bad.any():
            chol_failures += int(bad.sum())
            alive &= ~bad
            exit_step[bad] = np.minimum(exit_step[bad], k)
        payoff += np.where(alive, disc[k] * run_x * dt, 0.0)
        step = b_x * dt + np.sqrt(np.maximum(s_x, 0.0)) * sqdt * normals[k]
        x = np.where(alive, x + step, x)
        exited = alive & ((x < lo) | (x > lo + (n - 1) * h))
        if exited.any():
            exit_step[exited] = k + 1
            alive &= ~exited
    return payoff, exit_step, chol_failures


def mc_block_2d(running, bbar, sbar, lo, h, n, x0, dt, rho, normals):
    """2D analogue of :func:`mc_block_1d`.

    ``running``: (n1, n2); ``bbar``: (n1, n2, 2); ``sbar``: (n1, n2, 2, 2);
    ``normals``: (nsteps, B, 2); ``lo``/``h``/``n`` are per-axis pairs.
    """
    nsteps, B, _ = normals.shape
    x = np.tile(np.asarray(x0, dtype=float), (B, 1))
    payoff = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    exit_step = np.full(B, nsteps, dtype=np.int64)
    chol_failures = 0
    sqdt = np.sqrt(dt)
    disc = np.exp(-rho * dt * np.arange(nsteps))
    hi = [lo[a] + (n[a] - 1) * h[a] for a in range(2)]

    def interp(tab, c0, c1, t0, t1):
        v00 = tab[c0, c1]
        v10 = tab[c0 + 1, c1]
        v01 = tab[c0, c1 + 1]
        v11 = tab[c0 + 1, c1 + 1]
        if tab.ndim > 2:
            t0 = t0.reshape((-1,) + (1,) * (tab.ndim - 2))
            t1 = t1.reshape((-1,) + (1,) * (tab.ndim - 2))
        return (
            (1 - t0) * (1 - t1) * v00
            + t0 * (1 - t1) * v10
            + (1 - t0) * t1 * v01
            + t0 * t1 * v11
        )

    for k in range(nsteps):
        if not alive.any():
            break
        c0, t0 = _interp_weights_1d(x[:, 0], lo[0], h[0], n[0])
        c1, t1 = _interp_weights_1d(x[:, 1], lo[1], h[1], n[1])
        run_x = interp(running, c0, c1, t0, t1)
        b_x = interp(bbar, c0, c1, t0, t1)
        s_x = interp(sbar, c0, c1, t0, t1)
        a = s_x[:, 0, 0]
        c = s_x[:, 0, 1]
        d22 = s_x[:, 1, 1]
        bad = alive & (a <= 0)
        l11 = np.sqrt(np.maximum(a, 1e-300))
        l21 = c / l11
        rem = d22 - l21**2
        bad |= alive & (rem <= 0)
        if bad.any():
            chol_failures += int(bad.sum())
            alive &= ~bad
            exit_step[bad] = np.minimum(exit_step[bad], k)
        l22 = np.sqrt(np.maximum(rem, 0.0))
        payoff += np.where(alive, disc[k] * run_x * dt, 0.0)
        dw = normals[k] * sqdt
        step0 = b_x[:, 0] * dt + l11 * dw[:, 0]
        step1 = b_x[:, 1] * dt + l21 * dw[:, 0] + l22 * dw[:, 1]
        x[:, 0] = np.where(alive, x[:, 0] + step0, x[:, 0])
        x[:, 1] = np.where(alive, x[:, 1] + step1, x[:, 1])
        exited = alive & (
            (x[:, 0] < lo[0])
            | (x[:, 0] > hi[0])
            | (x[:, 1] < lo[1])
            | (x[:, 1] > hi[1])
        )
        if exited.any():
            exit_step[exited] = k + 1
            alive &= ~exited
    return payoff, exit_step, chol_failures
