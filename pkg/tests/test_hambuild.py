import math
from dataclasses import replace

import numpy as np
import pytest

from reskam import hambuild
from reskam._elements import Elements, elements_to_state
from reskam._jet import JetSpace
from reskam.errors import EquilibriumError, ExpansionError
from reskam.hambuild import (
    DiagonalHamiltonian,
    ExpansionCaps,
    OrbitalConfig,
    PoincareChart,
    PoincareExpansion,
    ResonantChart,
    ResonantHamiltonian,
    build_expansion,
    diagonalize,
    find_equilibrium,
    from_action_angle,
    poincare_state,
    to_action_angle,
    to_resonant_average,
)
from reskam.pseries import SqrtSeries

SMALL_CAPS = ExpansionCaps(secular_degree=2, kepler_degree=1, fourier=4, grid=64)


def _massless():
    cfg = OrbitalConfig.hd60532()
    return cfg.replace(planets=tuple(replace(p, mass=0.0) for p in cfg.planets))


def _as_dict(expansion):
    return {
        (tuple(int(x) for x in e), tuple(int(x) for x in k)): c
        for e, k, c in zip(expansion.exponents, expansion.harmonics, expansion.coefficients)
    }


def _direct_perturbation(chart, L, lam, xi, eta):
    states = []
    for j in (0, 1):
        Lam = chart.Lambda_star[j] + L[j]
        a = Lam**2 / (chart.beta[j] ** 2 * chart.mu[j])
        gamma = (xi[j] ** 2 + eta[j] ** 2) / 2
        e = math.sqrt(1 - (1 - gamma / Lam) ** 2)
        varpi = math.atan2(-eta[j], xi[j])
        states.append(elements_to_state(chart.mu[j], Elements(a, e, varpi, lam[j] - varpi)))
    (r1, v1), (r2, v2) = states
    kinetic = chart.beta[0] * chart.beta[1] * np.dot(v1, v2) / chart.m0
    return kinetic - chart.G * chart.masses[0] * chart.masses[1] / np.linalg.norm(r1 - r2)


def _expansion(terms):
    exponents = np.array([t[0] for t in terms], dtype=np.int64)
    harmonics = np.array([t[1] for t in terms], dtype=np.int64)
    coefficients = np.array([t[2] for t in terms], dtype=complex)
    chart = PoincareChart.from_config(OrbitalConfig.hd60532())
    return PoincareExpansion(chart, ExpansionCaps(), exponents, harmonics, coefficients)


def _bound_chart():
    return replace(ResonantChart.for_resonance(3, 1), p_phi=0.3, p_theta=0.1)


def test_hd60532_mean_motions_are_near_three_to_one():
    chart = PoincareChart.from_config(OrbitalConfig.hd60532())

    assert chart.n_star[0] / chart.n_star[1] == pytest.approx(3.0, rel=0.02)


def test_masses_are_scaled_by_inclination():
    cfg = OrbitalConfig.hd60532()

    masses = cfg.planet_masses

    assert masses[0] == pytest.approx(3.1548 / 1047.348644 / math.sin(math.radians(20.0)))
    assert cfg.mu == pytest.approx(masses[1] / 1.44)


def test_when_mass_unit_changes_then_frequencies_are_unchanged():
    cfg = OrbitalConfig.hd60532()

    scaled = PoincareChart.from_config(cfg.replace(mass_unit=1e-3))
    plain = PoincareChart.from_config(cfg)

    np.testing.assert_allclose(scaled.n_star, plain.n_star, rtol=1e-14)
    np.testing.assert_allclose(scaled.Lambda_star, plain.Lambda_star * 1e3, rtol=1e-14)


def test_when_planets_are_massless_then_only_kepler_terms():
    cfg = _massless()
    chart = PoincareChart.from_config(cfg)

    expansion = build_expansion(cfg, SMALL_CAPS)

    assert np.all(expansion.harmonics == 0)
    assert np.all(expansion.exponents[:, 2:] == 0)
    assert expansion.coefficient([1, 0, 0, 0, 0, 0], [0, 0]) == pytest.approx(chart.n_star[0])
    assert expansion.coefficient([0, 1, 0, 0, 0, 0], [0, 0]) == pytest.approx(chart.n_star[1])


def test_kepler_coefficients_expand_the_keplerian_energy():
    chart = PoincareChart.from_config(OrbitalConfig.hd60532())
    A = chart.mu[0] ** 2 * chart.beta[0] ** 3
    L = 1e-4 * chart.Lambda_star[0]

    c = chart.kepler_coefficients(0, 4)

    exact = -A / (2 * (chart.Lambda_star[0] + L) ** 2)
    assert sum(c[d] * L**d for d in range(5)) == pytest.approx(exact, rel=1e-14)
    assert c[1] == pytest.approx(chart.n_star[0], rel=1e-14)


def test_when_grid_is_too_coarse_then_expansion_error():
    with pytest.raises(ExpansionError, match="too coarse"):
        build_expansion(OrbitalConfig.hd60532(), ExpansionCaps(fourier=12, grid=32))


def test_when_stencil_has_too_few_points_then_expansion_error():
    caps = ExpansionCaps(secular_degree=2, kepler_degree=1, fourier=2, grid=8, method="stencil", stencil_points=10)

    with pytest.raises(ExpansionError, match="singular stencil"):
        build_expansion(OrbitalConfig.hd60532(), caps)


def test_when_method_is_unknown_then_value_error():
    with pytest.raises(ValueError):
        ExpansionCaps(method="laplace")


def test_grid_jets_match_direct_perturbation():
    cfg = OrbitalConfig.hd60532()
    chart = PoincareChart.from_config(cfg)
    caps = ExpansionCaps(secular_degree=2, kepler_degree=1, fourier=1, grid=4)
    grid = 2 * np.pi * np.arange(4) / 4
    L = (1e-4 * chart.Lambda_star[0], -1e-4 * chart.Lambda_star[1])
    xi, eta = (3e-4, -2e-4), (-1e-4, 2.5e-4)
    point = np.array([L[0], L[1], xi[0], eta[0], xi[1], eta[1]])

    values = hambuild._grid_by_jets(chart, caps, grid)

    space = hambuild._full_space(caps)
    for i1, i2 in [(0, 0), (1, 3), (2, 1), (3, 2)]:
        expected = _direct_perturbation(chart, L, (grid[i1], grid[i2]), xi, eta)
        assert space.evaluate(values[i1, i2], point)[0] == pytest.approx(expected, rel=1e-6)


def test_expansion_agrees_with_refined_quadrature():
    cfg = OrbitalConfig.hd60532()

    coarse = _as_dict(build_expansion(cfg, SMALL_CAPS))
    fine = _as_dict(build_expansion(cfg, replace(SMALL_CAPS, grid=128)))

    scale = max(abs(c) for c in fine.values())
    for key in set(coarse) | set(fine):
        assert abs(coarse.get(key, 0) - fine.get(key, 0)) <= 1e-8 * scale


def test_expansion_is_real():
    expansion = build_expansion(OrbitalConfig.hd60532(), SMALL_CAPS)
    terms = _as_dict(expansion)
    scale = np.abs(expansion.coefficients).max()

    for (e, (k1, k2)), c in terms.items():
        assert abs(terms.get((e, (-k1, -k2)), 0) - np.conj(c)) <= 1e-14 * scale


def test_resonant_chart_is_canonical():
    chart = ResonantChart.for_resonance(3, 1)

    assert chart.is_canonical()
    assert abs(round(np.linalg.det(chart.angle_matrix))) == 1


def test_when_resonance_map_is_not_unimodular_then_value_error():
    with pytest.raises(ValueError):
        ResonantChart.for_resonance(5, 3)


def test_resonant_variables_round_trip():
    cfg = OrbitalConfig.hd60532()
    chart = ResonantChart.for_resonance(3, 1)
    state = poincare_state(cfg)

    p, angles = chart.to_resonant(state)
    actions, old = chart.from_resonant(p, angles)

    np.testing.assert_allclose(actions, np.concatenate([state.I, state.L]), atol=1e-15)
    expected = np.concatenate([state.varpi, state.lam])
    np.testing.assert_allclose(np.angle(np.exp(1j * (old - expected))), 0.0, atol=1e-12)


def test_resonant_angle_is_the_three_to_one_combination():
    cfg = OrbitalConfig.hd60532()
    chart = ResonantChart.for_resonance(3, 1)
    state = poincare_state(cfg)

    _, angles = chart.to_resonant(state)

    sigma = state.lam[0] - 3 * state.lam[1] + 2 * state.varpi[0]
    assert np.angle(np.exp(1j * (angles[1] - sigma))) == pytest.approx(0.0, abs=1e-12)
    assert np.angle(np.exp(1j * (angles[0] - (state.varpi[1] - state.varpi[0])))) == pytest.approx(0.0, abs=1e-12)


def test_poincare_state_recovers_elements():
    cfg = OrbitalConfig.hd60532()

    state = poincare_state(cfg)

    np.testing.assert_allclose(state.L, 0.0, atol=1e-15)
    e = np.sqrt(1 - (1 - state.I / state.Lambda) ** 2)
    np.testing.assert_allclose(e, [0.278, 0.038], rtol=1e-12)


def test_resonant_average_keeps_resonant_terms():
    c = 0.25
    expansion = _expansion(
        [
            ([0, 0, 2, 0, 0, 0], [1, -3], c),
            ([0, 0, 1, 1, 0, 0], [1, -3], -2j * c),
            ([0, 0, 0, 2, 0, 0], [1, -3], -c),
            ([0, 0, 2, 0, 0, 0], [-1, 3], c),
            ([0, 0, 1, 1, 0, 0], [-1, 3], 2j * c),
            ([0, 0, 0, 2, 0, 0], [-1, 3], -c),
            ([0, 0, 2, 0, 0, 0], [0, 0], 1.0),
            ([0, 0, 0, 2, 0, 0], [0, 0], 1.0),
            ([0, 0, 0, 0, 0, 0], [0, 1], 1.0),
            ([0, 0, 0, 0, 0, 0], [0, -1], 1.0),
        ]
    )

    average = to_resonant_average(expansion, _bound_chart())

    assert len(average) == 3
    assert set(map(tuple, average.harmonics)) == {(0, 0), (0, 1), (0, -1)}
    np.testing.assert_array_equal(average.exponents, np.tile([1.0, 0.0, 0.0, 0.0], (3, 1)))
    value = average.evaluate(0.2, 0.01, 0.3, 1.0)
    assert value == pytest.approx(0.18 * (2 + math.cos(1.0)), rel=1e-14)


def test_when_a_term_depends_on_phi_then_expansion_error():
    expansion = _expansion([([0, 0, 1, 0, 0, 0], [0, 0], 1.0)])

    with pytest.raises(ExpansionError, match="φ"):
        to_resonant_average(expansion, _bound_chart())


def test_resonant_forms_express_the_old_actions():
    forms = _bound_chart().forms()

    np.testing.assert_array_equal(forms[0], [0.0, 1.0, -2.0])
    np.testing.assert_array_equal(forms[1], [0.3, -1.0, 0.0])
    np.testing.assert_array_equal(forms[2], [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(forms[3], [0.1, 0.0, -3.0])


def _toy_resonant(sigma_weight=4.0):
    return ResonantHamiltonian(
        forms=np.array([[-1.0, 1.0, 0.0], [2.0, 0.0, 1.0]]),
        exponents=np.array([[2, 0], [0, 2], [0, 0], [0, 0], [0, 0], [0, 0]], dtype=float),
        harmonics=np.array([[0, 0], [0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]),
        coefficients=np.array([1, 1, 0.5, 0.5, 0.5 * sigma_weight, 0.5 * sigma_weight], dtype=complex),
    )


def test_find_equilibrium_on_toy_model():
    H = _toy_resonant(1.0)

    equilibrium = find_equilibrium(H, (0.0, 0.0))

    assert equilibrium.p_delta == pytest.approx(1.0, abs=1e-12)
    assert equilibrium.p_sigma == pytest.approx(-2.0, abs=1e-12)
    gradient = H.taylor(equilibrium.point, 2).gradient()
    assert np.all(np.abs(gradient[:2]) < 1e-10)


def test_taylor_matches_evaluate():
    H = _toy_resonant()
    point = (0.7, -1.5, 2.0, 2.9)
    offset = np.array([[1e-3, -2e-3, 3e-3, 1e-3]])

    jet = H.taylor(point, 6)

    expected = H.evaluate(*(np.asarray(point) + offset[0]))
    assert jet.evaluate(offset)[0] == pytest.approx(expected, rel=1e-13)


def test_diagonalize_toy_oscillators():
    space = JetSpace([(4, 4)])
    y1, y2, x1, x2 = (space.variable(i) for i in range(4))
    H = 2 * (y1 * y1 + x1 * x1) + 5 * (y2 * y2 + x2 * x2)

    diagonal = diagonalize(H)

    assert diagonal.omega == pytest.approx((4.0, 10.0), rel=1e-12)
    np.testing.assert_allclose(diagonal.C.T @ diagonal.C, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(diagonal.C.T @ hambuild.SYMPLECTIC @ diagonal.C, hambuild.SYMPLECTIC, atol=1e-13)


def test_when_frequencies_are_negative_then_signs_are_kept():
    space = JetSpace([(4, 2)])
    y1, y2, x1, x2 = (space.variable(i) for i in range(4))
    H = -5 * (y1 * y1 + x1 * x1) - 2 * (y2 * y2 + x2 * x2)

    diagonal = diagonalize(H)

    assert diagonal.omega == pytest.approx((-4.0, -10.0), rel=1e-12)
    np.testing.assert_allclose(diagonal.C.T @ hambuild.SYMPLECTIC @ diagonal.C, hambuild.SYMPLECTIC, atol=1e-13)


def test_when_quadratic_part_is_hyperbolic_then_equilibrium_error():
    space = JetSpace([(4, 2)])
    y1, y2, x1, x2 = (space.variable(i) for i in range(4))

    with pytest.raises(EquilibriumError):
        diagonalize(y1 * y1 - x1 * x1 + y2 * y2 + x2 * x2)


def test_diagonalize_resonant_model_at_equilibrium():
    H = _toy_resonant()
    equilibrium = find_equilibrium(H, (0.5, -1.0))

    diagonal = diagonalize(H, equilibrium, degree=4)

    assert diagonal.omega == pytest.approx((math.sqrt(2.0), math.sqrt(8.0)), rel=1e-10)
    assert diagonal.origin == pytest.approx((1.0, -2.0, math.pi, math.pi))


def test_diagonal_round_trip_through_resonant_variables():
    H = _toy_resonant()
    diagonal = diagonalize(H, find_equilibrium(H, (0.5, -1.0)), degree=4)
    Z = np.array([[0.01, -0.02, 0.03, 0.005]])

    back = diagonal.from_resonant(diagonal.to_resonant(Z))

    np.testing.assert_allclose(back, Z, atol=1e-14)


def test_vector_field_of_harmonic_oscillators():
    space = JetSpace([(4, 2)])
    y1, y2, x1, x2 = (space.variable(i) for i in range(4))
    jet = 2 * (y1 * y1 + x1 * x1) + 5 * (y2 * y2 + x2 * x2)
    diagonal = DiagonalHamiltonian(jet=jet, omega=(4.0, 10.0), C=np.eye(4))

    field = diagonal.vector_field(np.array([1.0, 0.0, 0.0, 2.0]))

    np.testing.assert_allclose(field, [[0.0, -20.0, 4.0, 0.0]])


def test_to_action_angle_of_quadratic_is_action():
    space = JetSpace([(4, 2)])
    y1, x1 = space.variable(0), space.variable(2)

    series = to_action_angle((y1 * y1 + x1 * x1) * 0.5)

    assert series == SqrtSeries.action(1, degree_cap=2)


def test_to_action_angle_of_coordinates():
    space = JetSpace([(4, 4)])

    Y = to_action_angle(space.variable(0))
    X = to_action_angle(space.variable(2))

    expected_pairs = ((Y, SqrtSeries.cartesian(1, "Y", degree_cap=4)), (X, SqrtSeries.cartesian(1, "X", degree_cap=4)))
    for series, expected in expected_pairs:
        assert len(series) == 2
        for e, k, c in expected.terms():
            assert series.coefficient(e, k) == pytest.approx(c, rel=1e-15)


def test_action_angle_round_trip():
    rng = np.random.default_rng(3)
    space = JetSpace([(4, 4)])
    jet = space.from_coefficients(rng.normal(size=space.size))

    back = from_action_angle(to_action_angle(jet))

    np.testing.assert_allclose(back.c, jet.c, atol=1e-13)


def test_action_angle_series_evaluates_like_the_polynomial():
    rng = np.random.default_rng(5)
    space = JetSpace([(4, 4)])
    jet = space.from_coefficients(rng.normal(size=space.size))
    J, theta = np.array([0.3, 0.7]), np.array([0.4, -1.1])
    point = np.concatenate([np.sqrt(2 * J) * np.cos(theta), np.sqrt(2 * J) * np.sin(theta)])

    series = to_action_angle(jet)

    assert series.evaluate(J, theta) == pytest.approx(jet.evaluate(point[None])[0], rel=1e-12)


@pytest.mark.slow
def test_hd60532_equilibrium_is_elliptic_with_negative_frequencies():
    cfg = OrbitalConfig.hd60532()
    chart = ResonantChart.for_resonance(*cfg.resonance).bind(poincare_state(cfg))
    state = poincare_state(cfg)

    average = to_resonant_average(build_expansion(cfg), chart)
    p, _ = chart.to_resonant(state)
    equilibrium = find_equilibrium(average, (p[0], p[1]))
    diagonal = diagonalize(average, equilibrium)

    assert diagonal.omega[0] < 0 and diagonal.omega[1] < 0
    assert abs(diagonal.omega[0]) < abs(diagonal.omega[1])
    assert diagonal.omega[0] == pytest.approx(-2.728e-2, rel=0.1)
    assert diagonal.omega[1] == pytest.approx(-3.057e-1, rel=0.1)
