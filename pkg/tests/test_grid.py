import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obslab.grid import (
    CoefficientField,
    Grid1D,
    GridMismatchError,
    TimeGrid,
    inner_l2,
    norm,
    weak_norm_star,
)

# x^2 (pi-x)^2 integrates to pi^5/30; value frozen from scipy.integrate.quad
PARABOLA_SQ_INTEGRAL = 10.20065615950938


def test_grid_invariants():
    g = Grid1D(np.pi, 10)
    assert g.h == pytest.approx(np.pi / 11)
    assert np.all(np.diff(g.nodes) > 0)
    assert 0 < g.nodes[0] and g.nodes[-1] < np.pi
    with pytest.raises(ValueError):
        Grid1D(np.pi, 2)
    with pytest.raises(ValueError):
        Grid1D(-1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 4)


def test_field_validation(pi_grid):
    with pytest.raises(ValueError):
        CoefficientField(pi_grid, np.ones(3))
    bad = np.ones(pi_grid.n_interior)
    bad[5] = np.nan
    with pytest.raises(ValueError):
        CoefficientField(pi_grid, bad)
    with pytest.raises(ValueError):
        CoefficientField(pi_grid, -np.ones(pi_grid.n_interior), nonneg=True)


def test_inner_product_orthonormality(fine_grid):
    x = fine_grid.nodes
    f = CoefficientField(fine_grid, np.sqrt(2 / np.pi) * np.sin(x))
    assert inner_l2(f, f) == pytest.approx(1.0, abs=1e-6)
    g = CoefficientField(fine_grid, np.sin(2 * x))
    f1 = CoefficientField(fine_grid, np.sin(x))
    assert abs(inner_l2(f1, g)) <= 1e-8


def test_inner_product_parabola(fine_grid):
    x = fine_grid.nodes
    f = CoefficientField(fine_grid, x * (np.pi - x))
    assert inner_l2(f, f) == pytest.approx(PARABOLA_SQ_INTEGRAL, abs=1e-3)


def test_inner_product_grid_mismatch(pi_grid, fine_grid):
    with pytest.raises(GridMismatchError):
        inner_l2(
            CoefficientField.zero(pi_grid), CoefficientField.zero(fine_grid)
        )


def test_norm_zero_field(pi_grid, sine_basis):
    z = CoefficientField.zero(pi_grid)
    for kind in ("L2", "H01", "H1"):
        assert norm(z, kind) == 0.0
    assert norm(z, "Hminus", basis=sine_basis) == 0.0


def test_norm_eigenfunction_identity(fine_grid):
    f = CoefficientField(fine_grid, np.sin(fine_grid.nodes))
    assert norm(f, "L2") == pytest.approx(np.sqrt(np.pi / 2), rel=1e-6)
    assert norm(f, "H01") == pytest.approx(np.sqrt(np.pi / 2), rel=1e-4)


def test_norm_derivative_ratio(fine_grid):
    f = CoefficientField(fine_grid, np.sin(3 * fine_grid.nodes))
    assert norm(f, "H01") / norm(f, "L2") == pytest.approx(3.0, abs=1e-4)


def test_norm_hminus_needs_basis(pi_grid):
    with pytest.raises(ValueError):
        norm(CoefficientField.zero(pi_grid), "Hminus")
    with pytest.raises(ValueError):
        norm(CoefficientField.zero(pi_grid), "bogus")


def test_weak_norm_single_mode(fine_grid, fine_basis):
    # e^{-3 tau^2 lam_1^2 / 2} with tau = 1, lam_1 = 1
    f = fine_basis.mode(1)
    assert weak_norm_star(f, fine_basis, 1.0) == pytest.approx(
        0.22313016014842982, abs=1e-4
    )
    z = CoefficientField.zero(fine_grid)
    assert weak_norm_star(z, fine_basis, 1.0) == 0.0
    with pytest.raises(ValueError):
        weak_norm_star(f, None, 1.0)


def test_weak_norm_dominated_by_l2(pi_grid, sine_basis):
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = CoefficientField(pi_grid, rng.standard_normal(pi_grid.n_interior))
        assert weak_norm_star(f, sine_basis, 0.7) <= norm(f, "L2") + 1e-12


def test_parseval_on_synthesized_fields(pi_grid, sine_basis):
    rng = np.random.default_rng(1)
    for _ in range(10):
        coeffs = rng.standard_normal(8)
        f = CoefficientField(pi_grid, sine_basis.eigenvectors[:, :8] @ coeffs)
        total = np.sum(sine_basis.analyze(f.values)[:8] ** 2)
        assert total == pytest.approx(inner_l2(f, f), rel=1e-10)


def test_cauchy_schwarz_random_pairs(pi_grid):
    rng = np.random.default_rng(2)
    for _ in range(100):
        f = CoefficientField(pi_grid, rng.standard_normal(pi_grid.n_interior))
        g = CoefficientField(pi_grid, rng.standard_normal(pi_grid.n_interior))
        assert abs(inner_l2(f, g)) <= norm(f, "L2") * norm(g, "L2") * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=12, max_size=12))
def test_h1_dominates_l2(values):
    g = Grid1D(2.0, 12)
    f = CoefficientField(g, np.asarray(values))
    assert norm(f, "H1") >= norm(f, "L2") - 1e-12


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=12, max_size=12),
    st.lists(st.floats(-10, 10), min_size=12, max_size=12),
    st.floats(-3, 3),
)
def test_inner_product_bilinear(u, v, c):
    g = Grid1D(1.5, 12)
    fu = CoefficientField(g, np.asarray(u))
    fv = CoefficientField(g, np.asarray(v))
    lhs = inner_l2(CoefficientField(g, fu.values * c), fv)
    assert lhs == pytest.approx(c * inner_l2(fu, fv), rel=1e-9, abs=1e-9)
    assert inner_l2(fu, fv) == pytest.approx(inner_l2(fv, fu), rel=1e-12, abs=1e-12)
