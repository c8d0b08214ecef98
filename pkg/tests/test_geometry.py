"""
Bivector fields, Schouten bracket, Lie derivative, connections and K^H.
sympy serves as an independent oracle for the bracket identities.
"""
import itertools

import numpy as np
import pytest
import sympy as sp

from catalog import get_entry
from errors import DimensionError
from expr import evaluate
from geometry import (
    BivectorField,
    Chart,
    ConnectionSpec,
    ThreeForm,
    VectorField,
    covariant_derivative_bivector,
    covariant_derivative_vector,
    derivation_extension,
    exterior_derivative_3form,
    hamiltonian_vf,
    jacobiator,
    k_matrix,
    k_tensor,
    lie_derivative_pi,
    pi_sharp,
    poisson_bracket,
    schouten_pi_pi,
    wedge3_pi_sharp,
)

R3_ENTRIES = {(0, 1): "x", (0, 2): "1", (1, 2): "-1"}


def _r3():
    return BivectorField.from_upper(Chart(("x", "y", "z")), R3_ENTRIES)


def _sympy_matrix(entries, names):
    symbols = sp.symbols(names)
    n = len(names)
    local = dict(zip(names, symbols))
    P = sp.zeros(n, n)
    for (i, j), src in entries.items():
        value = sp.sympify(src.replace("^", "**"), locals=local)
        P[i, j] = value
        P[j, i] = -value
    return P, symbols


def _sympy_jacobiator(P, symbols, i, j, k):
    """{F, G} = sum_{ab} P[a, b] dF/dx_b dG/dx_a."""
    n = len(symbols)

    def bracket(F, G):
        return sum(P[a, b] * sp.diff(F, symbols[b]) * sp.diff(G, symbols[a]) for a in range(n) for b in range(n))

    x = symbols
    return sp.expand(
        bracket(x[i], bracket(x[j], x[k])) + bracket(x[j], bracket(x[k], x[i])) + bracket(x[k], bracket(x[i], x[j]))
    )


def test_chart_rejects_bad_bounds():
    with pytest.raises(DimensionError):
        Chart(("x", "y"), ((0.0, 1.0), (1.0, 1.0)))
    with pytest.raises(DimensionError):
        Chart(("x", "x"))


def test_from_upper_fills_antisymmetric_part():
    pi = _r3()
    P = pi.at((2.0, 0.0, 0.0))
    np.testing.assert_allclose(P, -P.T)
    assert P[0, 1] == 2.0 and P[1, 0] == -2.0


def test_sharp_of_coordinate_forms_on_the_r3_field():
    pi = _r3()
    x = 0.7
    p = (x, 0.2, -0.4)
    np.testing.assert_allclose(pi_sharp(pi, p, (1, 0, 0)), [0.0, -x, -1.0])
    np.testing.assert_allclose(pi_sharp(pi, p, (0, 1, 0)), [x, 0.0, 1.0])
    np.testing.assert_allclose(pi_sharp(pi, p, (0, 0, 1)), [1.0, -1.0, 0.0])


def test_hamiltonian_field_of_u_on_the_weak_family_is_d_dx():
    entry = get_entry("r4_weak_i0")
    X = hamiltonian_vf(entry.pi, "u")
    np.testing.assert_allclose(X.at((0.3, -0.2, 0.5, 0.1)), [1.0, 0.0, 0.0, 0.0])


def test_linear_so3_is_poisson():
    pi = get_entry("linear_so3").pi
    bracket = schouten_pi_pi(pi)
    for point in np.random.default_rng(3).uniform(-1, 1, size=(10, 3)):
        assert np.max(np.abs(bracket.at(point))) <= 1e-12


def test_r3_schouten_component():
    bracket = schouten_pi_pi(_r3())
    assert bracket.at((0.3, 0.1, 0.9))[0, 1, 2] == pytest.approx(-2.0)


def test_weak_family_schouten_is_four_x_to_the_i_plus_one():
    for power in (0, 1):
        entry = get_entry(f"r4_weak_i{power}")
        bracket = schouten_pi_pi(entry.pi)
        p = (0.6, -0.3, 0.2, 0.8)
        expected = 4.0 * p[0] ** (power + 1)
        T = np.array(bracket.at(p))
        assert T[1, 2, 3] == pytest.approx(expected)
        T[1, 2, 3] = 0.0
        for perm in itertools.permutations((1, 2, 3)):
            T[perm] = 0.0
        assert np.max(np.abs(T)) <= 1e-12


@pytest.mark.parametrize("entries,names", [
    (R3_ENTRIES, ("x", "y", "z")),
    ({(0, 1): "x*z + y^2", (0, 2): "sin(y)", (1, 2): "x - z^2"}, ("x", "y", "z")),
    ({(0, 1): "x*w", (0, 2): "y^2", (0, 3): "1", (1, 2): "z", (1, 3): "x + y", (2, 3): "w*y"},
     ("x", "y", "z", "w")),
])
def test_schouten_is_twice_the_jacobiator_of_coordinates(entries, names, rng):
    chart = Chart(names)
    pi = BivectorField.from_upper(chart, entries)
    bracket = schouten_pi_pi(pi)
    P, symbols = _sympy_matrix(entries, names)
    for _ in range(3):
        point = rng.uniform(-1, 1, size=len(names))
        subs = dict(zip(symbols, point))
        T = bracket.at(point)
        for i, j, k in itertools.combinations(range(len(names)), 3):
            oracle = float(_sympy_jacobiator(P, symbols, i, j, k).subs(subs))
            assert T[i, j, k] == pytest.approx(2.0 * oracle, abs=1e-10)
            library = evaluate(jacobiator(pi, names[i], names[j], names[k]), point)
            assert library == pytest.approx(oracle, abs=1e-10)


def test_poisson_bracket_of_coordinates_on_symplectic_plane():
    pi = get_entry("symplectic2d").pi
    # {F, G} = <X_F, dG>, X_q = pi_sharp(dq) = -d/dp
    assert evaluate(poisson_bracket(pi, "q", "p"), (0.1, 0.2)) == pytest.approx(-1.0)


def test_lie_derivative_on_r3_field_with_h_equal_y():
    pi = _r3()
    L = lie_derivative_pi(pi, hamiltonian_vf(pi, "y"))
    expected = np.zeros((3, 3))
    expected[0, 2], expected[2, 0] = -1.0, 1.0
    for point in ((0.0, 0.0, 0.0), (0.5, -0.7, 2.0)):
        np.testing.assert_allclose(L.at(point), expected, atol=1e-14)


def test_lie_derivative_matches_sympy(rng):
    names = ("x", "y", "z")
    entries = {(0, 1): "x*z + y^2", (0, 2): "y", (1, 2): "x - z^2"}
    H = "x*y + z^2/2"
    pi = BivectorField.from_upper(Chart(names), entries)
    L = lie_derivative_pi(pi, hamiltonian_vf(pi, H))
    P, s = _sympy_matrix(entries, names)
    Hs = sp.sympify(H.replace("^", "**"), locals=dict(zip(names, s)))
    X = [sum(P[i, j] * sp.diff(Hs, s[j]) for j in range(3)) for i in range(3)]
    point = rng.uniform(-1, 1, size=3)
    subs = dict(zip(s, point))
    for i, j in itertools.combinations(range(3), 2):
        oracle = sum(
            X[l] * sp.diff(P[i, j], s[l]) - P[l, j] * sp.diff(X[i], s[l]) - P[i, l] * sp.diff(X[j], s[l])
            for l in range(3)
        )
        assert L.at(point)[i, j] == pytest.approx(float(oracle.subs(subs)), abs=1e-12)


def test_twisted_identity_holds_off_the_axis_for_both_powers():
    for power in (0, 1):
        entry = get_entry(f"r4_weak_i{power}")
        p = (0.7, 0.2, -0.5, 0.3)
        lhs = 0.5 * schouten_pi_pi(entry.pi).at(p)
        np.testing.assert_allclose(wedge3_pi_sharp(entry.pi, entry.phi, p), lhs, atol=1e-12)


def test_twisted_three_form_is_closed():
    phi = get_entry("r4_weak_i0").phi
    d_phi = exterior_derivative_3form(phi)
    assert np.max(np.abs(d_phi.at((0.7, 0.2, -0.5, 0.3)))) <= 1e-12


def test_exterior_derivative_of_non_closed_form():
    chart = Chart(("a", "b", "c", "d"))
    phi = ThreeForm.from_upper(chart, {(1, 2, 3): "a"})
    # d(a db^dc^dd) = da^db^dc^dd
    assert exterior_derivative_3form(phi).at((0.1, 0.2, 0.3, 0.4))[0, 1, 2, 3] == pytest.approx(1.0)


def test_torsion_free_assertion_is_checked():
    chart = Chart(("x", "y"))
    with pytest.raises(ValueError):
        ConnectionSpec.from_entries(chart, {(0, 0, 1): "x"}, torsion_free=True)
    symmetric = ConnectionSpec.from_entries(chart, {(0, 0, 1): "x", (0, 1, 0): "x"}, torsion_free=True)
    assert np.max(np.abs(symmetric.torsion_at((0.3, 0.4)))) == 0.0


def test_flat_connection_reduces_k_to_the_jacobian():
    pi = get_entry("linear_so3").pi
    H = get_entry("linear_so3").hamiltonian
    flat = ConnectionSpec.flat(pi.chart)
    p = (0.2, -0.4, 0.9)
    np.testing.assert_allclose(k_tensor(pi, H, flat, p), hamiltonian_vf(pi, H).jacobian_at(p))


def test_lie_derivative_equals_covariant_minus_derivation_extension(rng):
    chart = Chart(("x", "y", "z"))
    conn = ConnectionSpec.random_polynomial(chart, rng)
    u = VectorField(chart, ("y*z", "x^2 - z", "sin(x)"))
    Y = VectorField(chart, ("1 + y", "x*z", "y^2"))
    pi = BivectorField.from_upper(chart, {(0, 1): "x*z + y^2", (0, 2): "y", (1, 2): "x - z^2"})
    L = lie_derivative_pi(pi, u)
    for point in rng.uniform(-1, 1, size=(5, 3)):
        N = k_matrix(u.jacobian_at(point), conn.christoffel_at(point), u.at(point))
        nabla_Y = covariant_derivative_vector(Y, conn, u.at(point), point)
        np.testing.assert_allclose(nabla_Y - derivation_extension(N, Y.at(point)), u.bracket(Y).at(point), atol=1e-12)
        nabla_P = covariant_derivative_bivector(pi, conn, u.at(point), point)
        np.testing.assert_allclose(nabla_P - derivation_extension(N, pi.at(point)), L.at(point), atol=1e-12)


def test_stacked_points_get_a_leading_axis():
    pi = _r3()
    points = np.array([[0.1, 0.2, 0.3], [1.0, 0.0, 0.0]])
    assert pi.at(points).shape == (2, 3, 3)
    assert pi.derivative_at(points).shape == (2, 3, 3, 3)


def test_points_must_match_the_chart_dimension():
    entry = get_entry("symplectic2d")
    X = hamiltonian_vf(entry.pi, entry.hamiltonian)
    with pytest.raises(DimensionError):
        entry.pi.at([0.1, 0.2, 0.3])
    with pytest.raises(DimensionError):
        X.at(np.zeros((4, 3)))
    assert X.at(np.zeros((4, 2))).shape == (4, 2)
