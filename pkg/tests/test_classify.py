"""
Pointwise classification: ranks, image tests, Poisson and weak-foliation
verdicts, twisted and conformal checks, rank profiles.
"""
import numpy as np
import pytest

from catalog import get_entry
from classify import (
    classify_point,
    classify_points,
    conformal_check,
    in_image,
    is_poisson_at,
    jacobiator_in_image_at,
    kernel_basis,
    lie_image_inclusion_at,
    numerical_rank,
    rank_profile,
    solve_C_H_at,
    twisted_check,
    weakly_foliated_at,
)
from geometry import BivectorField, Chart


def test_numerical_rank_of_symplectic_plane():
    pi = get_entry("symplectic2d").pi
    assert numerical_rank(pi.at((0.3, 0.4))) == 2


@pytest.mark.parametrize("point,rank", [
    ((0.7, 0.1, 0.0, 0.0), 4),
    ((0.0, 0.4, 0.2, 0.1), 2),
    ((0.0, 0.0, 0.5, -0.3), 0),
])
def test_rank_of_weak_family_with_linear_coefficient(point, rank):
    pi = get_entry("r4_weak_i1").pi
    assert numerical_rank(pi.at(point)) == rank


def test_rank_drops_only_on_the_axis_for_constant_coefficient():
    pi = get_entry("r4_weak_i0").pi
    assert numerical_rank(pi.at((0.0, 0.4, 0.2, 0.1))) == 4
    assert numerical_rank(pi.at((0.0, 0.0, 0.2, 0.1))) == 2


def test_in_image_of_a_rank_one_matrix():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert in_image(A, np.array([3.0, 6.0]))
    assert not in_image(A, np.array([1.0, 0.0]))


def test_kernel_of_r3_field_is_spanned_by_one_one_minus_x():
    pi = get_entry("r3_nonfoliated").pi
    x = 0.6
    basis = kernel_basis(pi.at((x, -0.2, 0.3)))
    assert basis.shape == (3, 1)
    expected = np.array([1.0, 1.0, -x]) / np.linalg.norm([1.0, 1.0, -x])
    assert abs(abs(basis[:, 0] @ expected) - 1.0) <= 1e-12


@pytest.mark.parametrize("name", ["symplectic2d", "linear_so3", "pia_pib_pair"])
def test_poisson_entries_have_vanishing_bracket(name, rng):
    entry = get_entry(name)
    for point in entry.chart.sample(rng, 20, entry.box):
        ok, residual = is_poisson_at(entry.pi, point)
        assert ok and residual <= 1e-12


def test_conformal_entry_is_not_poisson():
    entry = get_entry("conformal_times_symplectic")
    ok, residual = is_poisson_at(entry.pi, (0.3, 0.2, 0.1, -0.1))
    assert not ok and residual > 1e-3


def test_r3_field_is_not_weakly_foliated_and_y_z_is_a_witness(rng):
    pi = get_entry("r3_nonfoliated").pi
    for point in rng.uniform(-1, 1, size=(20, 3)):
        weak, witness = weakly_foliated_at(pi, point)
        assert not weak
        assert (1, 2) in witness and (0, 2) in witness


def test_witness_is_reported_with_coordinate_forms():
    record = classify_point(get_entry("r3_nonfoliated").pi, (0.5, 0.1, 0.2))
    assert ["dy", "dz"] in record.witness
    assert record.rank == 2


def test_weak_family_is_weakly_foliated_on_and_off_the_axis():
    entry = get_entry("r4_weak_i0")
    points = entry.sample_points(np.random.default_rng(5), 20)
    for point in points:
        assert weakly_foliated_at(entry.pi, point)[0], point


def test_jacobiator_lies_in_the_image_off_the_axis():
    entry = get_entry("r4_weak_i1")
    ok, omega, residual = jacobiator_in_image_at(entry.pi, (0.8, 0.1, 0.3, -0.2))
    assert ok and omega is not None and residual <= 1e-9


def test_jacobiator_of_r3_field_is_not_in_the_image():
    ok, omega, residual = jacobiator_in_image_at(get_entry("r3_nonfoliated").pi, (0.2, 0.4, -0.1))
    assert not ok and omega is None and residual > 1e-3


def test_c_h_exists_where_pi_is_invertible():
    entry = get_entry("symplectic2d")
    C, residual, ok = solve_C_H_at(entry.pi, entry.hamiltonian, (0.3, -0.8))
    assert ok and residual <= 1e-10
    assert C.shape == (2, 2)


def test_lie_image_inclusion_fails_for_r3_field():
    entry = get_entry("r3_nonfoliated")
    assert not lie_image_inclusion_at(entry.pi, "y", (0.3, 0.2, 0.1))


def test_lie_image_inclusion_holds_for_linear_so3():
    entry = get_entry("linear_so3")
    assert lie_image_inclusion_at(entry.pi, entry.hamiltonian, (0.3, 0.2, 0.1))


def test_twisted_check_on_both_weak_family_members(rng):
    for name in ("r4_weak_i0", "r4_weak_i1"):
        entry = get_entry(name)
        report = twisted_check(entry.pi, entry.phi, entry.chart.sample(rng, 10, entry.box))
        assert report.passed, report
        assert report.points_checked == 10


def test_conformal_bracket_formula(rng):
    entry = get_entry("conformal_times_symplectic")
    report = conformal_check(entry.conformal_base, entry.conformal_factor, entry.chart.sample(rng, 10, entry.box))
    assert report.passed and report.max_residual <= 1e-9


def test_rank_profile_flags_nodes_next_to_the_rank_drop():
    pi = get_entry("r4_weak_i1").pi
    box = ((-1.0, 1.0),) * 4
    profile = rank_profile(pi, box, 5)
    assert profile.grid_shape == (5, 5, 5, 5)
    assert set(profile.ranks.tolist()) == {0, 2, 4}
    corner = np.where(np.all(profile.points == 1.0, axis=1))[0][0]
    assert profile.ranks[corner] == 4 and profile.regular[corner]
    on_plane = profile.points[:, 0] == 0.0
    assert not np.any(profile.regular[on_plane])
    assert profile.to_json()["grid_shape"] == [5, 5, 5, 5]


def test_singular_point_becomes_an_error_record():
    pi = BivectorField.from_upper(Chart(("x", "y")), {(0, 1): "1/x"})
    result = classify_points(pi, [(1.0, 0.0), (0.0, 0.0)], field_name="pole")
    summary = result.summary()
    assert summary["points"] == 2 and summary["errors"] == 1
    assert result.records[1].error is not None
    assert result.poisson


def test_classification_summary_for_r4_weak_family():
    entry = get_entry("r4_weak_i0")
    result = classify_points(entry.pi, entry.sample_points(np.random.default_rng(1), 10), H="u")
    summary = result.summary()
    assert not summary["poisson"]
    assert summary["weakly_foliated"]
    assert summary["weakly_foliated_points"] == 14
    assert all(r.lie_image_inclusion for r in result.records)
