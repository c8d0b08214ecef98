"""
Square morphism built from a cotangent path and the sigma-model functional.
"""
import numpy as np
import pytest
from scipy.linalg import expm

from catalog import get_entry
from errors import DimensionError, GridError
from harness import TheoremScenario, random_path
from paths import CotangentPath, time_grid
from sigma import SquareMorphism, build_tilde_alpha, ks_lagrangian, verify_equality
from variational import lagrangian


@pytest.mark.parametrize("name", ["symplectic2d", "linear_so3", "r3_nonfoliated"])
def test_lagrangian_equals_sigma_functional(name, rng):
    scenario = TheoremScenario.from_catalog(name, steps=128)
    alpha = random_path(rng, scenario)
    report = verify_equality(scenario.pi, scenario.hamiltonian, alpha, y_steps=128)
    assert report.absolute_gap <= 1e-5, report
    assert report.first_integrand_sup <= 1e-6
    assert report.y_variation_sup <= 1e-5
    assert (report.t_steps, report.y_steps) == (128, 128)
    assert report.lagrangian == pytest.approx(lagrangian(scenario.pi, scenario.hamiltonian, alpha))


def test_square_morphism_of_the_harmonic_oscillator():
    entry = get_entry("symplectic2d")
    t = time_grid(16)
    alpha = CotangentPath(np.column_stack([t, 1.0 - t]), np.column_stack([np.ones(17), t]))
    square = build_tilde_alpha(entry.pi, entry.hamiltonian, alpha, y_steps=128)
    assert square.X.shape == (17, 129, 2)
    rotation = expm(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    np.testing.assert_allclose(square.X[:, 0], alpha.base)
    np.testing.assert_allclose(square.X[:, -1], alpha.base @ rotation.T, atol=1e-9)
    # the adjoint pullback of a rotation is the same rotation
    np.testing.assert_allclose(square.beta_y[:, -1], alpha.covector @ rotation.T, atol=1e-9)
    np.testing.assert_allclose(square.beta_t, square.X, atol=1e-15)


def test_square_morphism_is_read_only_and_shape_checked():
    square = SquareMorphism.zero(8, 8, 2)
    assert not square.X.flags.writeable
    with pytest.raises(DimensionError):
        SquareMorphism(np.zeros((9, 9, 2)), np.zeros((9, 9, 2)), np.zeros((9, 8, 2)))


def test_odd_grids_are_rejected():
    entry = get_entry("symplectic2d")
    t = time_grid(8)
    alpha = CotangentPath(np.column_stack([t, t]), np.ones((9, 2)))
    square = build_tilde_alpha(entry.pi, entry.hamiltonian, alpha, y_steps=9)
    with pytest.raises(GridError):
        ks_lagrangian(entry.pi, square)


def test_dimension_mismatch():
    entry = get_entry("linear_so3")
    t = time_grid(8)
    alpha = CotangentPath(np.column_stack([t, t]), np.ones((9, 2)))
    with pytest.raises(DimensionError):
        build_tilde_alpha(entry.pi, entry.hamiltonian, alpha, y_steps=8)
