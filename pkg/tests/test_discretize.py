import numpy as np
import pytest

from epia.discretize import (
    ScalarField,
    build_action_quadrature,
    build_grid,
    gradient,
    hessian,
    read_field_binary,
    refine_grid,
    restrict_to,
    write_field_binary,
    write_field_csv,
)


def test_build_grid_1d_nodes():
    g = build_grid([(-1.0, 1.0)], 5)
    np.testing.assert_allclose(g.axes()[0], [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert g.h == (0.5,)


def test_build_grid_2d_core():
    g = build_grid([(-2, 2), (-2, 2)], (9, 9), core_fraction=0.5)
    assert g.size == 81
    core = g.core_mask()
    coords = g.nodes()[core]
    assert np.all(np.abs(coords) <= 1.0 + 1e-12)


def test_degenerate_box_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        build_grid([(0.0, 0.0)], 5)
    with pytest.raises(ValueError, match="5 nodes"):
        build_grid([(0.0, 1.0)], 4)
    with pytest.raises(ValueError, match="core_fraction"):
        build_grid([(0.0, 1.0)], 5, core_fraction=0.0)


def test_gradient_constant_is_zero():
    g = build_grid([(-1, 1)], 9)
    f = ScalarField(g, np.full(g.shape, 3.7))
    np.testing.assert_allclose(gradient(f, "central"), 0.0, atol=1e-14)
    drift = np.ones(g.shape + (1,))
    np.testing.assert_allclose(gradient(f, "upwind", drift), 0.0, atol=1e-14)


def test_gradient_exact_on_affine():
    g = build_grid([(-1, 1)], 8)
    x = g.nodes()[..., 0]
    f = ScalarField(g, 2.0 * x - 1.0)
    np.testing.assert_allclose(gradient(f, "central")[..., 0], 2.0, rtol=1e-13)
    drift = -np.ones(g.shape + (1,))
    np.testing.assert_allclose(gradient(f, "upwind", drift)[..., 0], 2.0, rtol=1e-13)


def test_central_gradient_of_square_at_origin():
    # hand evaluation of the 3-point stencil: (0.25 - 0.25) / (2*0.5) = 0
    g = build_grid([(-1, 1)], 5)
    x = g.nodes()[..., 0]
    f = ScalarField(g, x**2)
    assert gradient(f, "central")[2, 0] == 0.0


def test_upwind_requires_matching_drift():
    g = build_grid([(-1, 1)], 5)
    f = ScalarField(g, np.zeros(g.shape))
    with pytest.raises(ValueError, match="drift"):
        gradient(f, "upwind")
    with pytest.raises(ValueError, match="shape"):
        gradient(f, "upwind", np.ones((5, 2)))


def test_hessian_exact_on_quadratic():
    g = build_grid([(-1, 1)], 9)
    x = g.nodes()[..., 0]
    f = ScalarField(g, x**2)
    np.testing.assert_allclose(hessian(f)[..., 0, 0], 2.0, rtol=1e-12)


def test_hessian_cross_exact_on_bilinear():
    g = build_grid([(-1, 1), (-1, 1)], (9, 11))
    xy = g.nodes()
    f = ScalarField(g, xy[..., 0] * xy[..., 1])
    H = hessian(f)
    np.testing.assert_allclose(H[..., 0, 1], 1.0, rtol=1e-12)
    np.testing.assert_allclose(H[..., 1, 0], H[..., 0, 1], rtol=1e-14)
    np.testing.assert_allclose(H[..., 0, 0], 0.0, atol=1e-12)


def test_hessian_constant_zero():
    g = build_grid([(-1, 1)], 7)
    f = ScalarField(g, np.full(g.shape, -2.0))
    np.testing.assert_allclose(hessian(f), 0.0, atol=1e-13)


def test_two_point_gauss_rule():
    q = build_action_quadrature(1, 2)
    expected = np.array([0.5 - 1 / (2 * np.sqrt(3.0)), 0.5 + 1 / (2 * np.sqrt(3.0))])
    np.testing.assert_allclose(np.sort(q.nodes[:, 0]), expected, rtol=1e-15)
    np.testing.assert_allclose(q.weights, [0.5, 0.5], rtol=1e-15)


def test_two_point_rule_integrates_cubics():
    q = build_action_quadrature(1, 2)
    integral = q.weights @ q.nodes[:, 0] ** 3
    assert integral == pytest.approx(0.25, abs=1e-15)


def test_tensor_rule_2d():
    q = build_action_quadrature(2, 3)
    assert q.size == 9
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("L", [1, 2])
@pytest.mark.parametrize("m", [2, 4, 8])
def test_quadrature_weights_positive_unit_mass(L, m):
    q = build_action_quadrature(L, m)
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-13)
    assert np.all(q.nodes > 0) and np.all(q.nodes < 1)


def test_quadrature_rejects_bad_args():
    with pytest.raises(ValueError):
        build_action_quadrature(3, 4)
    with pytest.raises(ValueError):
        build_action_quadrature(1, 1)


def test_refinement_halves_central_difference_error():
    errs = []
    for n in (33, 65, 129):
        g = build_grid([(-1, 1)], n)
        x = g.nodes()[..., 0]
        f = ScalarField(g, np.exp(np.sin(2 * x)))
        exact = 2 * np.cos(2 * x) * np.exp(np.sin(2 * x))
        interior = slice(1, -1)
        errs.append(
            np.max(np.abs(gradient(f, "central")[interior, 0] - exact[interior]))
        )
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.2 <= coarse / fine <= 4.8


def test_field_binary_roundtrip(tmp_path):
    g = build_grid([(-2, 2), (0, 1)], (7, 5), core_fraction=0.5)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.standard_normal(g.shape))
    path = tmp_path / "field.bin"
    write_field_binary(f, path)
    back = read_field_binary(path, core_fraction=0.5)
    assert back.grid.box == g.box
    assert back.grid.n == g.n
    np.testing.assert_array_equal(back.values, f.values)


def test_field_csv_export(tmp_path):
    g = build_grid([(0, 1)], 5)
    f = ScalarField(g, np.arange(5.0))
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,value"
    assert len(lines) == 6
    assert float(lines[1].split(",")[1]) == 0.0


def test_restriction_by_injection():
    coarse = build_grid([(-1, 1)], 5)
    fine = refine_grid(coarse)
    assert fine.n == (9,)
    x = fine.nodes()[..., 0]
    f = ScalarField(fine, x**3)
    r = restrict_to(f, coarse)
    np.testing.assert_array_equal(r.values, coarse.nodes()[..., 0] ** 3)
    other = build_grid([(-1, 1)], 6)
    with pytest.raises(ValueError, match="nested"):
        restrict_to(f, other)


def test_nonfinite_field_rejected():
    g = build_grid([(0, 1)], 5)
    with pytest.raises(ValueError, match="finite"):
        ScalarField(g, np.array([0.0, 1.0, np.nan, 2.0, 3.0]))
