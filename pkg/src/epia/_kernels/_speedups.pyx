# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels (policy tables, averaged
coefficients, Euler-Maruyama path blocks).  Mirrors ``py_backend``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, floor

cnp.import_array()

BACKEND = "cython"


def policy_from_exponent(cnp.ndarray[cnp.float64_t, ndim=2] f_over_lam,
                         cnp.ndarray[cnp.float64_t, ndim=1] weights):
    cdef Py_ssize_t n = f_over_lam.shape[0]
    cdef Py_ssize_t m = f_over_lam.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] density = np.empty((n, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] entropy = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logz = np.empty(n)
    cdef Py_ssize_t i, j
    cdef double fmax, z, val, ent, lz
    for i in range(n):
        fmax = f_over_lam[i, 0]
        for j in range(1, m):
            if f_over_lam[i, j] > fmax:
                fmax = f_over_lam[i, j]
        z = 0.0
        for j in range(m):
            val = exp(f_over_lam[i, j] - fmax)
            density[i, j] = val
            z += weights[j] * val
        lz = log(z)
        ent = 0.0
        for j in range(m):
            val = density[i, j] / z
            density[i, j] = val
            ent += weights[j] * val * log(val)
        entropy[i] = ent
        logz[i] = fmax + lz
    return density, entropy, logz


def averaged_scalar(cnp.ndarray[cnp.float64_t, ndim=2] density,
                    cnp.ndarray[cnp.float64_t, ndim=1] weights,
                    cnp.ndarray[cnp.float64_t, ndim=2] table):
    cdef Py_ssize_t n = density.shape[0]
    cdef Py_ssize_t m = density.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += weights[j] * density[i, j] * table[i, j]
        out[i] = acc
    return out


def averaged_vector(cnp.ndarray[cnp.float64_t, ndim=2] density,
                    cnp.ndarray[cnp.float64_t, ndim=1] weights,
                    cnp.ndarray[cnp.float64_t, ndim=3] table):
    cdef Py_ssize_t n = density.shape[0]
    cdef Py_ssize_t m = density.shape[1]
    cdef Py_ssize_t d = table.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, d))
    cdef Py_ssize_t i, j, c
    cdef double wd
    for i in range(n):
        for j in range(m):
            wd = weights[j] * density[i, j]
            for c in range(d):
                out[i, c] += wd * table[i, j, c]
    return out


def averaged_matrix(cnp.ndarray[cnp.float64_t, ndim=2] density,
                    cnp.ndarray[cnp.float64_t, ndim=1] weights,
                    cnp.ndarray[cnp.float64_t, ndim=4] table):
    cdef Py_ssize_t n = density.shape[0]
    cdef Py_ssize_t m = density.shape[1]
    cdef Py_ssize_t d = table.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((n, d, d))
    cdef Py_ssize_t i, j, a, c
    cdef double wd
    for i in range(n):
        for j in range(m):
            wd = weights[j] * density[i, j]
            for a in range(d):
                for c in range(d):
                    out[i, a, c] += wd * table[i, j, a, c]
    return out


def mc_block_1d(cnp.ndarray[cnp.float64_t, ndim=1] running,
                cnp.ndarray[cnp.float64_t, ndim=1] bbar,
                cnp.ndarray[cnp.float64_t, ndim=1] sbar,
                double lo, double h, Py_ssize_t n,
                double x0, double dt, double rho,
                cnp.ndarray[cnp.float64_t, ndim=2] normals):
    cdef Py_ssize_t nsteps = normals.shape[0]
    cdef Py_ssize_t B = normals.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] payoff = np.zeros(B)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] exit_step = np.full(B, nsteps, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] disc = np.exp(-rho * dt * np.arange(nsteps))
    cdef Py_ssize_t p, k, cell
    cdef double x, theta, run_x, b_x, s_x, acc, hi
    cdef double sqdt = sqrt(dt)
    cdef long chol_failures = 0
    hi = lo + (n - 1) * h
    for p in range(B):
        x = x0
        acc = 0.0
        for k in range(nsteps):
            cell = <Py_ssize_t>floor((x - lo) / h)
            if cell < 0:
                cell = 0
            elif cell > n - 2:
                cell = n - 2
            theta = (x - (lo + cell * h)) / h
            s_x = (1 - theta) * sbar[cell] + theta * sbar[cell + 1]
            if s_x <= 0.0:
                chol_failures += 1
                if k < exit_step[p]:
                    exit_step[p] = k
                break
            run_x = (1 - theta) * running[cell] + theta * running[cell + 1]
            b_x = (1 - theta) * bbar[cell] + theta * bbar[cell + 1]
            acc += disc[k] * run_x * dt
            x = x + b_x * dt + sqrt(s_x) * sqdt * normals[k, p]
            if x < lo or x > hi:
                exit_step[p] = k + 1
                break
        payoff[p] = acc
    return payoff, exit_step, chol_failures


def mc_block_2d(cnp.ndarray[cnp.float64_t, ndim=2] running,
                cnp.ndarray[cnp.float64_t, ndim=3] bbar,
                cnp.ndarray[cnp.float64_t, ndim=4] sbar,
                lo, h, n, x0,
                double dt, double rho,
                cnp.ndarray[cnp.float64_t, ndim=3] normals):
    cdef Py_ssize_t nsteps = normals.shape[0]
    cdef Py_ssize_t B = normals.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] payoff = np.zeros(B)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] exit_step = np.full(B, nsteps, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] disc = np.exp(-rho * dt * np.arange(nsteps))
    cdef double lo0 = lo[0], lo1 = lo[1], h0 = h[0], h1 = h[1]
    cdef Py_ssize_t n0 = n[0], n1 = n[1]
    cdef double hi0 = lo0 + (n0 - 1) * h0
    cdef double hi1 = lo1 + (n1 - 1) * h1
    cdef double x00 = x0[0], x01 = x0[1]
    cdef Py_ssize_t p, k, c0, c1
    cdef double x, y, t0, t1, w00, w10, w01, w11
    cdef double run_x, b0, b1, a, c, d22, l11, l21, l22, rem, acc
    cdef double sqdt = sqrt(dt)
    cdef long chol_failures = 0
    for p in range(B):
        x = x00
        y = x01
        acc = 0.0
        for k in range(nsteps):
            c0 = <Py_ssize_t>floor((x - lo0) / h0)
            if c0 < 0:
                c0 = 0
            elif c0 > n0 - 2:
                c0 = n0 - 2
            c1 = <Py_ssize_t>floor((y - lo1) / h1)
            if c1 < 0:
                c1 = 0
            elif c1 > n1 - 2:
                c1 = n1 - 2
            t0 = (x - (lo0 + c0 * h0)) / h0
            t1 = (y - (lo1 + c1 * h1)) / h1
            w00 = (1 - t0) * (1 - t1)
            w10 = t0 * (1 - t1)
            w01 = (1 - t0) * t1
            w11 = t0 * t1
            a = (w00 * sbar[c0, c1, 0, 0] + w10 * sbar[c0 + 1, c1, 0, 0]
                 + w01 * sbar[c0, c1 + 1, 0, 0] + w11 * sbar[c0 + 1, c1 + 1, 0, 0])
            c = (w00 * sbar[c0, c1, 0, 1] + w10 * sbar[c0 + 1, c1, 0, 1]
                 + w01 * sbar[c0, c1 + 1, 0, 1] + w11 * sbar[c0 + 1, c1 + 1, 0, 1])
            d22 = (w00 * sbar[c0, c1, 1, 1] + w10 * sbar[c0 + 1, c1, 1, 1]
                   + w01 * sbar[c0, c1 + 1, 1, 1] + w11 * sbar[c0 + 1, c1 + 1, 1, 1])
            if a <= 0.0:
                chol_failures += 1
                if k < exit_step[p]:
                    exit_step[p] = k
                break
            l11 = sqrt(a)
            l21 = c / l11
            rem = d22 - l21 * l21
            if rem <= 0.0:
                chol_failures += 1
                if k < exit_step[p]:
                    exit_step[p] = k
                break
            l22 = sqrt(rem)
            run_x = (w00 * running[c0, c1] + w10 * running[c0 + 1, c1]
                     + w01 * running[c0, c1 + 1] + w11 * running[c0 + 1, c1 + 1])
            b0 = (w00 * bbar[c0, c1, 0] + w10 * bbar[c0 + 1, c1, 0]
                  + w01 * bbar[c0, c1 + 1, 0] + w11 * bbar[c0 + 1, c1 + 1, 0])
            b1 = (w00 * bbar[c0, c1, 1] + w10 * bbar[c0 + 1, c1, 1]
                  + w01 * bbar[c0, c1 + 1, 1] + w11 * bbar[c0 + 1, c1 + 1, 1])
            acc += disc[k] * run_x * dt
            x = x + b0 * dt + l11 * sqdt * normals[k, p, 0]
            y = y + b1 * dt + (l21 * normals[k, p, 0] + l22 * normals[k, p, 1]) * sqdt
            if x < lo0 or x > hi0 or y < lo1 or y > hi1:
                exit_step[p] = k + 1
                break
        payoff[p] = acc
    return payoff, exit_step, chol_failures
