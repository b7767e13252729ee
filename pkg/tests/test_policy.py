import math

import numpy as np
import pytest

from epia.discretize import (
    build_action_quadrature,
    build_grid,
    gradient,
)
from epia.policy import (
    F_pi,
    averaged_coefficients,
    averaged_from_tables,
    entropy,
    exponent_table,
    gibbs_policy,
    hamiltonian_F,
    policy_from_table,
)
from epia.problem import (
    GrowthRecord,
    builtin_problem,
    coefficient_tables,
    expression_problem,
)

from helpers import perturbed_density, random_bounded_problem


def u_only_problem(lam=1.0):
    """r(x,u) = u, drift and diffusion action-independent."""
    return expression_problem(
        d=1,
        L=1,
        r_text="u1",
        b_texts=["0"],
        sigma_texts=[["1"]],
        lam=lam,
        rho=10.0,
        growth=GrowthRecord(N=0, A1=1, A2=1, A3=1),
        ellipticity_c0=1.0,
    )


def test_uniform_density_for_action_independent_coefficients():
    p = expression_problem(
        d=1,
        L=1,
        r_text="sin(x1)",
        b_texts=["cos(x1)"],
        sigma_texts=[["1"]],
        lam=1.0,
        rho=10.0,
        growth=GrowthRecord(N=0, A1=1, A2=1, A3=1),
        ellipticity_c0=1.0,
    )
    quad = build_action_quadrature(1, 8)
    dens = gibbs_policy(p, quad, [0.4], [0.2])
    np.testing.assert_allclose(dens, 1.0, rtol=1e-13)


def test_gibbs_density_closed_form_exp_u():
    # r = u, lambda = 1: density(u) = e^u / (e - 1); at u = 0 this is
    # 1/(e-1) ~ 0.5820
    p = u_only_problem()
    quad = build_action_quadrature(1, 8)
    dens = gibbs_policy(p, quad, [0.0], [0.0])
    expected = np.exp(quad.nodes[:, 0]) / (math.e - 1.0)
    np.testing.assert_allclose(dens, expected, rtol=1e-12)
    assert 1.0 / (math.e - 1.0) == pytest.approx(0.5820, abs=1e-4)


def test_shift_invariance_of_density():
    base = expression_problem(
        d=1, L=1, r_text="sin(x1)*u1", b_texts=["0"], sigma_texts=[["1"]],
        lam=0.7, rho=10.0, growth=GrowthRecord(N=0, A1=1, A2=1, A3=1),
        ellipticity_c0=1.0,
    )
    shifted = expression_problem(
        d=1, L=1, r_text="sin(x1)*u1 + 17.5 - x1^2", b_texts=["0"],
        sigma_texts=[["1"]], lam=0.7, rho=10.0,
        growth=GrowthRecord(N=2, A1=20, A2=1, A3=1), ellipticity_c0=1.0,
    )
    quad = build_action_quadrature(1, 6)
    for x in (-1.2, 0.3, 2.0):
        d1 = gibbs_policy(base, quad, [x], [0.5])
        d2 = gibbs_policy(shifted, quad, [x], [0.5])
        np.testing.assert_allclose(d1, d2, rtol=1e-13)


def test_overflow_safety_for_extreme_inputs():
    p = u_only_problem(lam=1e-3)
    quad = build_action_quadrature(1, 8)
    dens = gibbs_policy(p, quad, [0.0], [1e6])
    assert np.all(np.isfinite(dens))
    assert quad.weights @ dens == pytest.approx(1.0, abs=1e-10)


def test_entropy_uniform_is_zero():
    p = builtin_problem("bounded-trig", {})
    grid = build_grid([(-1, 1)], 9)
    quad = build_action_quadrature(1, 8)
    tables = coefficient_tables(u_only_problem(), grid, quad)
    # uniform density: all exponents equal
    field, ent, _ = policy_from_table(grid, quad, np.zeros((grid.size, quad.size)))
    np.testing.assert_allclose(ent, 0.0, atol=1e-14)
    h = entropy(field)
    np.testing.assert_allclose(h.values, 0.0, atol=1e-14)


def test_entropy_closed_form_exp_density():
    # H = int pi ln pi du for pi = e^u/(e-1):
    #   = 1/(e-1) - ln(e-1), computed from the closed forms of
    #   int u e^u du = 1 and int e^u du = e - 1
    p = u_only_problem()
    grid = build_grid([(-1, 1)], 5)
    quad = build_action_quadrature(1, 12)
    tables = coefficient_tables(p, grid, quad)
    f = exponent_table(tables, p.lam, np.zeros((grid.size, 1)))
    field, ent, _ = policy_from_table(grid, quad, f)
    expected = 1.0 / (math.e - 1.0) - math.log(math.e - 1.0)
    assert expected == pytest.approx(0.0406518523, abs=1e-9)
    np.testing.assert_allclose(ent, expected, rtol=1e-10)


def test_entropy_nonnegative_on_gibbs_densities():
    # Jensen with |U| = 1: int pi ln pi >= 0
    rng = np.random.default_rng(11)
    quad = build_action_quadrature(1, 8)
    for _ in range(50):
        p = random_bounded_problem(rng)
        x = rng.uniform(-2, 2, size=1)
        pvec = rng.standard_normal(1)
        X = rng.standard_normal((1, 1))
        dens = gibbs_policy(p, quad, x, pvec, X)
        h = quad.weights @ (dens * np.log(dens))
        assert h >= -1e-12


def test_averaged_uniform_reward():
    p = u_only_problem()
    grid = build_grid([(-1, 1)], 7)
    quad = build_action_quadrature(1, 8)
    tables = coefficient_tables(p, grid, quad)
    field, _, _ = policy_from_table(grid, quad, np.zeros((grid.size, quad.size)))
    coeffs = averaged_from_tables(tables, field)
    np.testing.assert_allclose(coeffs.r_bar, 0.5, rtol=1e-13)
    np.testing.assert_allclose(coeffs.H_bar, 0.0, atol=1e-13)


def test_averaged_sigma_exact_for_action_independent_vol():
    p = builtin_problem("bounded-trig", {})
    grid = build_grid([(-2, 2)], 9)
    quad = build_action_quadrature(1, 6)
    tables = coefficient_tables(p, grid, quad)
    f = exponent_table(tables, p.lam, np.ones((grid.size, 1)))
    field, _, _ = policy_from_table(grid, quad, f)
    coeffs = averaged_from_tables(tables, field)
    np.testing.assert_array_equal(coeffs.Sigma_bar, tables.Sigma[:, 0])


def test_averaged_sigma_within_eps0_of_baseline():
    p = builtin_problem("small-diffusion", {"eps0": 0.05})
    grid = build_grid([(-2, 2)], 33)
    quad = build_action_quadrature(1, 8)
    field = averaged_coefficients(
        p,
        policy_from_table(
            grid,
            quad,
            exponent_table(
                coefficient_tables(p, grid, quad),
                p.lam,
                np.zeros((grid.size, 1)),
                np.zeros((grid.size, 1, 1)),
            ),
        )[0],
    )
    sigma0 = p.sigma0(grid.nodes_flat())
    assert np.max(np.abs(field.Sigma_bar - sigma0)) <= 0.05 + 1e-12


def test_hamiltonian_reduces_to_integrand_when_action_free():
    p = expression_problem(
        d=1, L=1, r_text="x1", b_texts=["2"], sigma_texts=[["1"]],
        lam=0.8, rho=10.0, growth=GrowthRecord(N=1, A1=1, A2=2, A3=1),
        ellipticity_c0=1.0,
    )
    quad = build_action_quadrature(1, 8)
    x, pvec, X = [0.7], [1.5], [[2.0]]
    f_exact = 0.7 + 2 * 1.5 + 0.5 * 1.0 * 2.0
    assert hamiltonian_F(p, quad, x, pvec, X) == pytest.approx(f_exact, rel=1e-14)


def test_hamiltonian_dominates_uniform_average():
    rng = np.random.default_rng(5)
    quad = build_action_quadrature(1, 8)
    for _ in range(50):
        p = random_bounded_problem(rng)
        x = rng.uniform(-2, 2, 1)
        pvec = rng.standard_normal(1)
        X = rng.standard_normal((1, 1))
        F = hamiltonian_F(p, quad, x, pvec, X)
        uniform = F_pi(p, quad, x, pvec, X, np.ones(quad.size))
        assert F >= uniform - 1e-12


def test_hamiltonian_large_lambda_limit():
    rng = np.random.default_rng(6)
    quad = build_action_quadrature(1, 8)
    p = random_bounded_problem(rng)
    import dataclasses

    plarge = dataclasses.replace(p, lam=1e3)
    x, pvec, X = [0.3], [0.7], [[0.5]]
    from epia.policy import _pointwise_f

    f = _pointwise_f(plarge, quad, x, pvec, X, include_trace=True)
    uniform_avg = quad.weights @ f
    spread = f.max() - f.min()
    F = hamiltonian_F(plarge, quad, x, pvec, X)
    assert abs(F - uniform_avg) <= 1e-2 * max(spread, 1e-12)


def test_variational_identity_and_strict_optimality():
    rng = np.random.default_rng(7)
    quad = build_action_quadrature(1, 8)
    for _ in range(25):
        p = random_bounded_problem(rng)
        x = rng.uniform(-2, 2, 1)
        pvec = rng.standard_normal(1)
        X = rng.standard_normal((1, 1))
        dens = gibbs_policy(p, quad, x, pvec, X if p.action_dependent_vol else None)
        F = hamiltonian_F(p, quad, x, pvec, X)
        # log-sum-exp identity: F_pi at the Gibbs density equals F
        assert F_pi(p, quad, x, pvec, X, dens) == pytest.approx(F, rel=1e-12)
        for _ in range(5):
            other = perturbed_density(quad, dens, rng)
            assert F_pi(p, quad, x, pvec, X, other) < F - 1e-12


def test_f_pi_uniform_drops_entropy_term():
    p = u_only_problem()
    quad = build_action_quadrature(1, 8)
    from epia.policy import _pointwise_f

    f = _pointwise_f(p, quad, [0.0], [0.0], [[0.0]], include_trace=True)
    val = F_pi(p, quad, [0.0], [0.0], [[0.0]], np.ones(quad.size))
    assert val == pytest.approx(float(quad.weights @ f), rel=1e-14)


def test_f_pi_rejects_invalid_density():
    p = u_only_problem()
    quad = build_action_quadrature(1, 4)
    with pytest.raises(ValueError):
        F_pi(p, quad, [0.0], [0.0], [[0.0]], np.array([1.0, -0.1, 0.5, 0.6]))


def test_density_bounds_from_instance_constants():
    # discrete analogue of the two-sided Gibbs bound: with |Dv|, |D^2v| <= a1,
    # exp(-K) <= pi <= exp(K) for K = (2/lam)(|r| + |b| a1 + |Sigma| a1 / 2)
    p = builtin_problem("bounded-trig", {"lambda": 0.5})
    quad = build_action_quadrature(1, 8)
    a1 = 2.0
    sup_r, sup_b, sup_sig = 1.0, 1.5, 2.0
    K = (2.0 / p.lam) * (sup_r + sup_b * a1 + 0.5 * sup_sig * a1)
    rng = np.random.default_rng(3)
    for _ in range(100):
        x = rng.uniform(-2, 2, 1)
        pvec = rng.uniform(-a1, a1, 1)
        X = rng.uniform(-a1, a1, (1, 1))
        dens = gibbs_policy(p, quad, x, pvec, X)
        assert np.all(dens <= math.exp(K) + 1e-9)
        assert np.all(dens >= math.exp(-K) - 1e-12)


def test_policy_field_normalization_and_positivity():
    p = builtin_problem("bounded-trig", {})
    grid = build_grid([(-2, 2)], 33)
    quad = build_action_quadrature(1, 8)
    tables = coefficient_tables(p, grid, quad)
    rng = np.random.default_rng(9)
    grad = rng.standard_normal((grid.size, 1))
    field, _, _ = policy_from_table(
        grid, quad, exponent_table(tables, p.lam, grad)
    )
    field.check(tol=1e-10)
    assert field.mass_defect() <= 1e-10


def test_policy_csv_export(tmp_path):
    p = builtin_problem("bounded-trig", {})
    grid = build_grid([(-1, 1)], 5)
    quad = build_action_quadrature(1, 2)
    tables = coefficient_tables(p, grid, quad)
    field, _, _ = policy_from_table(
        grid, quad, exponent_table(tables, p.lam, np.zeros((grid.size, 1)))
    )
    path = tmp_path / "policy.csv"
    field.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,u1,density"
    assert len(lines) == 1 + 5 * 2


def test_entropy_log_growth_stable_under_refinement():
    # |lam * H(x)| <= C (1 + ln(1 + |Dv(x)|)) with C stable across grids
    from epia.pia import Discretization, pia_run

    p = builtin_problem("linear-growth", {"rho": 72.0})

    def fitted_constant(n):
        disc = Discretization.build(
            box=[(-2, 2)], n=n, core_fraction=0.6, action_nodes=8,
            bc="bound-dirichlet",
        )
        res = pia_run(p, disc, max_iters=25, delta_tol=1e-11)
        grad = gradient(res.state.v, "central")[..., 0].reshape(-1)
        lam_h = np.abs(p.lam * res.state.coeffs.H_bar)
        return float(np.max(lam_h / (1.0 + np.log1p(np.abs(grad)))))

    c_coarse = fitted_constant(65)
    c_fine = fitted_constant(129)
    assert c_fine <= 1.3 * c_coarse
    assert c_coarse <= 1.3 * c_fine
