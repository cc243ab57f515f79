import numpy as np
import pytest
import sympy as sp

from reskam.errors import SeriesError
from reskam.pseries import (
    ActionSeries,
    FrequencyVector,
    SqrtSeries,
    angle_average,
    bracket,
    dumps,
    evaluate,
    lie_series,
    lie_transform,
    loads,
    norm,
)

SQRT_CAPS = dict(degree_cap=6)
ACTION_CAPS = dict(action_cap=8, fourier_cap=40)
GRADING_PAIRS = 1000


def _random_sqrt(rng, s, n=5, caps=SQRT_CAPS):
    terms = []
    for _ in range(n):
        l1 = int(rng.integers(0, s + 1))
        ell = (l1, s - l1)
        k = tuple(ell[j] - 2 * int(rng.integers(0, ell[j] + 1)) for j in range(2))
        terms.append((ell, k, complex(rng.normal(), rng.normal())))
    return SqrtSeries.from_terms(terms, **caps).real_part()


def _random_action(rng, ell, fourier, n=5, caps=ACTION_CAPS):
    terms = []
    for _ in range(n):
        j1 = int(rng.integers(0, ell + 1))
        k1 = int(rng.integers(-fourier, fourier + 1))
        k2 = int(rng.integers(-(fourier - abs(k1)), fourier - abs(k1) + 1))
        terms.append(((j1, ell - j1), (k1, k2), complex(rng.normal(), rng.normal())))
    return ActionSeries.from_terms(terms, **caps).real_part()


def _sympy_sqrt(series, J1, J2, t1, t2):
    expr = 0
    for (l1, l2), (k1, k2), c in series.terms():
        coefficient = sp.Float(c.real) + sp.I * sp.Float(c.imag)
        monomial = sp.sqrt(J1) ** l1 * sp.sqrt(J2) ** l2
        expr += coefficient * monomial * sp.exp(sp.I * (k1 * t1 + k2 * t2))
    return expr


def _direct_sum(series, actions, angles, root):
    total = 0j
    for (e1, e2), (k1, k2), c in series.terms():
        base = np.sqrt(actions) if root else np.asarray(actions)
        total += c * base[0] ** e1 * base[1] ** e2 * np.exp(1j * (k1 * angles[0] + k2 * angles[1]))
    return total.real


def test_when_bracket_with_action_then_minus_angle_derivative():
    f = SqrtSeries.action(1, **SQRT_CAPS)
    g = SqrtSeries.from_terms([((1, 0), (1, 0), 1.0)], **SQRT_CAPS)

    result = bracket(f, g)

    assert list(result.terms()) == [((1, 0), (1, 0), -1j)]


def test_when_bracket_with_frequency_term_then_divisor_factor():
    omega = (3.0, 4.0)
    f = SqrtSeries.frequency_term(omega, **SQRT_CAPS)
    g = SqrtSeries.from_terms([((3, 2), (1, -2), 1.0)], **SQRT_CAPS)

    result = bracket(f, g)

    assert result.coefficient((3, 2), (1, -2)) == pytest.approx(5j)
    assert len(result) == 1


def test_bracket_matches_symbolic_oracle():
    rng = np.random.default_rng(7)
    J1, J2, t1, t2 = sp.symbols("J1 J2 t1 t2", positive=True)
    for _ in range(3):
        f = _random_sqrt(rng, 3)
        g = _random_sqrt(rng, 4)
        fe, ge = _sympy_sqrt(f, J1, J2, t1, t2), _sympy_sqrt(g, J1, J2, t1, t2)
        expected = sum(
            sp.diff(fe, t) * sp.diff(ge, J) - sp.diff(fe, J) * sp.diff(ge, t)
            for t, J in ((t1, J1), (t2, J2))
        )
        oracle = sp.lambdify((J1, J2, t1, t2), expected, "numpy")

        result = bracket(f, g)

        assert result.is_in_class(5)
        for point in rng.uniform(0.1, 1.0, size=(5, 4)):
            value = complex(oracle(*point))
            assert result.evaluate(point[:2], point[2:]) == pytest.approx(value.real, rel=1e-10, abs=1e-12)
            assert abs(value.imag) < 1e-10


def _pairs_per_case(cases):
    return -(-GRADING_PAIRS // len(list(cases())))


def sqrt_grades():
    for s1 in (1, 2, 3):
        for s2 in (1, 2):
            yield s1, s2


@pytest.mark.parametrize("s1, s2", sqrt_grades())
def test_bracket_of_homogeneous_sqrt_series_is_homogeneous(s1, s2):
    rng = np.random.default_rng(100 * s1 + s2)
    caps = dict(degree_cap=12)
    for _ in range(_pairs_per_case(sqrt_grades)):
        f = _random_sqrt(rng, s1 + 2, caps=caps)
        g = _random_sqrt(rng, s2 + 2, caps=caps)

        result = bracket(f, g)

        assert result.is_in_class(s1 + s2 + 2)


def action_grades():
    for ell in (0, 1, 2):
        for m in (0, 1, 2):
            yield ell, m


@pytest.mark.parametrize("ell, m", action_grades())
def test_bracket_of_graded_action_series_obeys_grading(ell, m):
    rng = np.random.default_rng(10 * ell + m)
    for _ in range(_pairs_per_case(action_grades)):
        f = _random_action(rng, ell, 4)
        g = _random_action(rng, m, 6)

        result = bracket(f, g)

        if ell + m == 0:
            assert len(result) == 0
        else:
            assert result.is_in_class(ell + m - 1, 10)


def test_bracket_is_antisymmetric_and_obeys_jacobi():
    rng = np.random.default_rng(3)
    for _ in range(5):
        f, g, h = (_random_action(rng, 1 + (i % 2), 3) for i in range(3))

        antisymmetry = bracket(f, g) + bracket(g, f)
        jacobi = (
            bracket(f, bracket(g, h)) + bracket(g, bracket(h, f)) + bracket(h, bracket(f, g))
        )

        assert norm(antisymmetry) <= 1e-12 * norm(f) * norm(g)
        assert norm(jacobi) <= 1e-11 * norm(f) * norm(g) * norm(h)


def test_bracket_preserves_reality():
    rng = np.random.default_rng(11)
    f, g = _random_sqrt(rng, 3), _random_sqrt(rng, 4)

    assert bracket(f, g).is_real()


def test_when_mixing_kinds_then_raises():
    f = SqrtSeries.action(1, **SQRT_CAPS)
    g = ActionSeries.action(1, action_cap=2, fourier_cap=12)

    with pytest.raises(SeriesError):
        bracket(f, g)


def test_when_caps_differ_then_raises():
    f = SqrtSeries.action(1, degree_cap=6)
    g = SqrtSeries.action(2, degree_cap=8)

    with pytest.raises(SeriesError):
        f + g


def test_when_parity_is_violated_then_raises():
    with pytest.raises(SeriesError):
        SqrtSeries.from_terms([((2, 0), (1, 0), 1.0)], **SQRT_CAPS)


def test_when_differentiating_odd_power_then_raises():
    g = SqrtSeries.cartesian(1, "Y", **SQRT_CAPS)

    with pytest.raises(SeriesError):
        g.derivative("action", 1)


def test_products_are_truncated_at_degree_cap():
    y = SqrtSeries.cartesian(1, "Y", degree_cap=3)

    result = y * y * y * y

    assert len(result) == 0


def test_cartesian_coordinates_rebuild_action():
    y = SqrtSeries.cartesian(2, "Y", **SQRT_CAPS)
    x = SqrtSeries.cartesian(2, "X", **SQRT_CAPS)

    result = (y * y + x * x) * 0.5
    expected = SqrtSeries.action(2, **SQRT_CAPS)

    assert norm(result - expected) < 1e-15


def test_when_averaging_oscillating_term_then_zero():
    g = SqrtSeries.from_terms([((0, 2), (0, 2), 0.5), ((0, 2), (0, -2), 0.5)], **SQRT_CAPS)

    assert len(angle_average(g, 2)) == 0


def test_when_averaging_mixed_term_then_keeps_secular_part():
    caps = dict(action_cap=2, fourier_cap=12)
    g = ActionSeries.from_terms(
        [((1, 1), (0, 0), 1.0), ((0, 1), (1, -1), 0.5), ((0, 1), (-1, 1), 0.5)], **caps
    )

    result = angle_average(g, 2)

    assert list(result.terms()) == [((1, 1), (0, 0), 1.0 + 0j)]


def test_averaging_is_idempotent():
    rng = np.random.default_rng(5)
    g = angle_average(_random_sqrt(rng, 4, n=8), 2)

    assert angle_average(g, 2) == g


def test_when_averaging_bad_index_then_raises():
    with pytest.raises(ValueError):
        angle_average(SqrtSeries.zero(**SQRT_CAPS), 3)


def test_norm_sums_coefficient_moduli():
    caps = dict(action_cap=2, fourier_cap=12)
    g = ActionSeries.from_terms([((1, 0), (1, 0), 1.5), ((1, 0), (-1, 0), 1.5)], **caps)

    assert norm(g) == pytest.approx(3.0)
    assert norm(ActionSeries.zero(**caps)) == 0.0


def test_norm_obeys_triangle_inequality():
    rng = np.random.default_rng(13)
    for _ in range(20):
        f, g = _random_action(rng, 1, 4), _random_action(rng, 1, 4)

        assert norm(f + g) <= norm(f) + norm(g) + 1e-15


def test_when_evaluating_frequency_term_then_dot_product():
    g = SqrtSeries.frequency_term((3.0, 4.0), **SQRT_CAPS)

    assert evaluate(g, [1.0, 2.0], [0.3, 0.4]) == pytest.approx(11.0)


def test_when_evaluating_action_times_cosine_then_value():
    caps = dict(action_cap=2, fourier_cap=12)
    g = ActionSeries.from_terms([((1, 0), (1, 0), 0.5), ((1, 0), (-1, 0), 0.5)], **caps)

    assert evaluate(g, [2.0, 0.0], [0.0, 0.0]) == pytest.approx(2.0)


def test_when_evaluating_negative_action_then_raises():
    g = SqrtSeries.frequency_term((3.0, 4.0), **SQRT_CAPS)

    with pytest.raises(SeriesError):
        evaluate(g, [-1.0, 2.0], [0.0, 0.0])


def test_evaluate_matches_direct_summation():
    rng = np.random.default_rng(17)
    g = _random_sqrt(rng, 3, n=6) + _random_sqrt(rng, 4, n=6)
    actions = rng.uniform(0.1, 2.0, size=(10, 2))
    angles = rng.uniform(-np.pi, np.pi, size=(10, 2))

    values = g.evaluate(actions, angles)

    expected = [_direct_sum(g, a, q, root=True) for a, q in zip(actions, angles)]
    np.testing.assert_allclose(values, expected, rtol=1e-14, atol=1e-14)


def test_when_generator_is_zero_then_transform_is_identity():
    rng = np.random.default_rng(19)
    terms = {(0,): SqrtSeries.frequency_term((1.0, 2.0), **SQRT_CAPS), (1,): _random_sqrt(rng, 3)}

    result = lie_transform(terms, SqrtSeries.zero(**SQRT_CAPS), (1,), lambda g: g[0] <= 4)

    assert result == terms


def test_lie_transform_of_frequency_term_matches_nested_brackets():
    rng = np.random.default_rng(23)
    omega = SqrtSeries.frequency_term((1.0, np.sqrt(2.0)), **SQRT_CAPS)
    chi = _random_sqrt(rng, 3)

    result = lie_transform({(0,): omega}, chi, (1,), lambda g: g[0] <= 4)

    nested = omega
    for j in range(1, 5):
        nested = bracket(nested, chi) / j
        assert norm(result[(j,)] - nested) <= 1e-13 * norm(nested)
        assert result[(j,)].is_in_class(j + 2)


def test_lie_transform_obeys_exchange_theorem():
    rng = np.random.default_rng(29)
    h = SqrtSeries.frequency_term((1.0, -0.6), **SQRT_CAPS) + 0.3 * _random_sqrt(rng, 3)
    chi = 0.5 * _random_sqrt(rng, 3)
    transformed = lie_transform({(0,): h.homogeneous(2), (1,): h.homogeneous(3)}, chi, (1,), lambda g: g[0] <= 4)
    total = SqrtSeries.sum(list(transformed.values()), **SQRT_CAPS)
    coordinates = {
        which: [lie_series(SqrtSeries.cartesian(j, which, **SQRT_CAPS), chi, 6) for j in (1, 2)]
        for which in ("Y", "X")
    }
    for _ in range(10):
        actions = rng.uniform(1e-6, 1e-5, size=2)
        angles = rng.uniform(-np.pi, np.pi, size=2)
        y = np.array([c.evaluate(actions, angles) for c in coordinates["Y"]])
        x = np.array([c.evaluate(actions, angles) for c in coordinates["X"]])
        mapped_actions = (y**2 + x**2) / 2
        mapped_angles = np.arctan2(x, y)

        assert total.evaluate(actions, angles) == pytest.approx(
            h.evaluate(mapped_actions, mapped_angles), rel=1e-8, abs=1e-15
        )


def test_translate_expands_binomially():
    caps = dict(action_cap=2, fourier_cap=12)
    g = ActionSeries.from_terms([((2, 0), (0, 0), 1.0)], **caps)

    pieces = g.translate((0.5, 0.0))

    assert list(pieces[1].terms()) == [((1, 0), (0, 0), 1.0 + 0j)]
    assert list(pieces[2].terms()) == [((0, 0), (0, 0), 0.25 + 0j)]


def test_text_format_round_trips_bit_exactly():
    rng = np.random.default_rng(31)
    g = _random_sqrt(rng, 4, n=8) * (1 / 3)

    text = dumps(g)

    assert text.startswith("# kind: sqrt\n# caps: degree_cap=6\n")
    assert loads(text) == g


def test_frequency_vector_converts_to_an_array():
    omega = FrequencyVector((0.3, 1.7))

    assert len(omega) == 2
    np.testing.assert_array_equal(np.asarray(omega), [0.3, 1.7])
    assert np.linalg.norm(omega) == pytest.approx(np.hypot(0.3, 1.7))


def test_when_dividing_by_a_frequency_vector_then_divisors_are_dot_products():
    h = SqrtSeries.from_terms([((1, 1), (1, -1), 1.0), ((1, 1), (-1, 1), 1.0)], **SQRT_CAPS)

    divided = h.divide_by_divisors(FrequencyVector((0.3, 1.7)))

    assert divided.coefficient((1, 1), (1, -1)) == pytest.approx(1 / (1j * (0.3 - 1.7)))
