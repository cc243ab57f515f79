import math

import numpy as np
import pytest

from reskam.adapt import AdaptedChart
from reskam.errors import ConvergenceError, SmallDivisorError
from reskam.kolmogorov import (
    KolmogorovOptions,
    KolmogorovState,
    frequency_map,
    grade_hamiltonian,
    homological_residual,
    kolmo_step,
    kolmogorov_normalize,
    newton_calibrate,
    solve_chi0,
    solve_chi1,
)
from reskam.pseries import ActionSeries, FrequencyVector, SqrtSeries

CAPS = dict(action_cap=3, fourier_cap=12)
W1, W2 = 0.7, 1.3
EPS = 0.01
HOMOLOGICAL_INSTANCES = 100


def _series(terms):
    return ActionSeries.from_terms(terms, **CAPS)


def _pendulum():
    # ω·p + p₁²/2 + ε cos q₁
    return _series(
        [
            ((1, 0), (0, 0), W1),
            ((0, 1), (0, 0), W2),
            ((2, 0), (0, 0), 0.5),
            ((0, 0), (1, 0), EPS / 2),
            ((0, 0), (-1, 0), EPS / 2),
        ]
    )


def _at(series, p, q):
    return float(np.real(series.evaluate(np.array([p]), np.array([q]))[0]))


def test_chi0_of_a_single_cosine():
    f0 = _series([((0, 0), (1, 1), 0.5), ((0, 0), (-1, -1), 0.5)])
    chi0, energy = solve_chi0(f0, (1.0, 2.0))
    assert energy == 0
    for q in ([0.3, 0.1], [1.2, -0.7]):
        assert _at(chi0, [0, 0], q) == pytest.approx(math.sin(q[0] + q[1]) / 3, abs=1e-15)


def test_chi0_of_a_constant_is_zero():
    chi0, energy = solve_chi0(ActionSeries.constant(0.25, **CAPS), (1.0, 2.0))
    assert not chi0
    assert energy == 0.25


def test_chi1_of_p1_cos_2q2():
    f1 = _series([((1, 0), (0, 2), 0.5), ((1, 0), (0, -2), 0.5)])
    chi1, shift = solve_chi1(f1, (1.0, 2.0))
    np.testing.assert_array_equal(shift, [0.0, 0.0])
    assert _at(chi1, [0.2, 0.4], [0.0, 0.3]) == pytest.approx(0.2 * math.sin(0.6) / 4, abs=1e-15)


def test_chi1_frequency_correction():
    f1 = _series([((1, 0), (0, 0), 0.1), ((0, 1), (1, -1), 0.05), ((0, 1), (-1, 1), 0.05)])
    chi1, shift = solve_chi1(f1, (1.0, 2.0))
    np.testing.assert_allclose(shift, [0.1, 0.0])
    assert homological_residual(chi1, f1, _series([((1, 0), (0, 0), 0.1)]), (1.0, 2.0)) < 1e-13


def test_homological_equations_are_solved():
    rng = np.random.default_rng(5)
    omega = FrequencyVector((1.0, math.sqrt(2)))
    for _ in range(HOMOLOGICAL_INSTANCES):
        terms = []
        for _ in range(8):
            k = tuple(int(x) for x in rng.integers(-4, 5, size=2))
            j = (int(rng.integers(0, 2)), 0)
            terms.append((j, k, complex(rng.normal(), rng.normal())))
        f = _series(terms).real_part()
        f0 = f.filter(lambda e, k: e.sum(axis=1) == 0)
        f1 = f.filter(lambda e, k: e.sum(axis=1) == 1)

        chi0, energy = solve_chi0(f0, omega)
        chi1, shift = solve_chi1(f1, omega)

        assert homological_residual(chi0, f0, ActionSeries.constant(energy, **CAPS), omega) < 1e-13
        assert homological_residual(chi1, f1, ActionSeries.frequency_term(shift, **CAPS), omega) < 1e-13


def test_when_divisor_vanishes_then_small_divisor_error():
    f0 = _series([((0, 0), (2, -1), 0.5), ((0, 0), (-2, 1), 0.5)])
    with pytest.raises(SmallDivisorError):
        solve_chi0(f0, (1.0, 2.0))


def test_grading_by_action_degree_and_order():
    graded = grade_hamiltonian(_series([((1, 0), (3, 0), 1.0), ((2, 0), (0, 0), 1.0), ((0, 0), (1, 1), 1.0)]), 4)
    assert sorted(graded) == [(0, 1), (1, 2), (2, 0)]


def test_when_frequency_term_is_missing_then_value_error():
    with pytest.raises(ValueError):
        KolmogorovState.from_hamiltonian(_series([((2, 0), (0, 0), 1.0)]))


def test_state_reads_frequency_and_energy():
    state = KolmogorovState.from_hamiltonian(_pendulum() + ActionSeries.constant(0.5, **CAPS))
    assert state.omega == FrequencyVector((W1, W2))
    assert state.energy == 0.5
    assert state.step == 0 and state.is_normalized()


def test_first_step_of_the_pendulum():
    state = kolmo_step(KolmogorovState.from_hamiltonian(_pendulum(), KolmogorovOptions(order_cap=4)))
    assert state.step == 1
    assert state.is_normalized()
    chi0, chi1 = state.generators[0]
    assert chi0.norm() == pytest.approx(EPS / W1, rel=1e-14)
    assert chi1.norm() == pytest.approx(EPS / W1**2, rel=1e-14)
    assert state.omega == FrequencyVector((W1, W2))
    # f₀ at order 2 is ε² cos² q₁ / (2 ω₁²)
    f0 = state.block(0, 2)
    assert f0.coefficient((0, 0), (0, 0)).real == pytest.approx(EPS**2 / (4 * W1**2), rel=1e-13)
    assert f0.coefficient((0, 0), (2, 0)).real == pytest.approx(EPS**2 / (8 * W1**2), rel=1e-13)


def test_second_step_of_the_pendulum_shifts_energy_and_frequency():
    state = kolmogorov_normalize(_pendulum(), options=KolmogorovOptions(steps=2, order_cap=4))
    assert state.step == 2
    assert state.is_normalized()
    assert state.energy == pytest.approx(EPS**2 / (4 * W1**2), rel=1e-13)
    assert state.omega[0] == pytest.approx(W1 - EPS**2 / (2 * W1**3), rel=1e-14)
    assert state.omega[1] == W2
    assert list(state.ledger.steps) == [1, 2]
    assert len(state.chain) == 4


def test_frequency_correction_does_not_depend_on_carrying_its_brackets():
    carried = kolmogorov_normalize(_pendulum(), options=KolmogorovOptions(steps=2, order_cap=4))
    dropped = kolmogorov_normalize(
        _pendulum(), options=KolmogorovOptions(steps=2, order_cap=4, carry_frequency_shift=False)
    )
    assert carried.omega[0] == pytest.approx(dropped.omega[0], rel=1e-15)


def test_remainder_shrinks_over_steps():
    state = kolmogorov_normalize(_pendulum(), options=KolmogorovOptions(steps=3, order_cap=6))
    remainder = state.ledger.column("norm_remainder")
    assert remainder[-1] < remainder[0]
    assert (state.ledger.column("norm_chi0")[1:] < state.ledger.column("norm_chi0")[0]).all()


def test_when_hamiltonian_is_normal_then_step_is_identity():
    h = _series([((1, 0), (0, 0), W1), ((0, 1), (0, 0), W2), ((2, 0), (0, 0), 1.0), ((1, 1), (0, 0), 0.3)])
    state = KolmogorovState.from_hamiltonian(h)
    stepped = kolmo_step(state)
    assert stepped.hamiltonian() == state.hamiltonian()
    assert all(not chi for chi in stepped.chain)
    assert stepped.ledger.column("norm_chi0")[0] == 0


def test_normalize_continues_from_a_state():
    once = kolmogorov_normalize(_pendulum(), steps=1, options=KolmogorovOptions(order_cap=4))
    twice = kolmogorov_normalize(once, steps=1)
    assert twice.step == 2
    assert twice.omega == kolmogorov_normalize(_pendulum(), steps=2, options=KolmogorovOptions(order_cap=4)).omega


def test_newton_on_a_linear_map_converges_in_one_iteration():
    result = newton_calibrate(lambda shift: 2 + 3 * shift, target=5, initial=0.5)
    assert result.iterations == 1
    assert result.shift == pytest.approx(1.0, rel=1e-14)
    assert [n for n, _, _ in result.history] == [0, 1]


def test_newton_accepts_frequency_vectors():
    result = newton_calibrate(lambda shift: FrequencyVector((shift**2, 1.0)), target=0.04, initial=0.3)
    assert result.shift == pytest.approx(0.2, rel=1e-10)
    assert abs(result.history[-1][2]) < 1e-12


def test_when_map_is_degenerate_then_convergence_error():
    with pytest.raises(ConvergenceError):
        newton_calibrate(lambda shift: 1.0, target=2.0, initial=0.5)


def test_when_iterations_run_out_then_convergence_error():
    with pytest.raises(ConvergenceError):
        newton_calibrate(lambda shift: math.exp(shift), target=2.0, initial=3.0, max_iter=1)


def test_frequency_map_calibrates_an_anharmonic_oscillator():
    a = -0.02
    H = SqrtSeries.from_terms(
        [((2, 0), (0, 0), W1), ((0, 2), (0, 0), W2), ((4, 0), (0, 0), a)],
        degree_cap=6,
    )
    chart = AdaptedChart(p1_star=0.1)
    omega = frequency_map(H, chart, KolmogorovOptions(steps=1, order_cap=2))
    assert omega(0.1)[0] == pytest.approx(W1 + 2 * a * 0.1, rel=1e-12)
    result = newton_calibrate(omega, target=W1 + 2 * a * 0.3, initial=0.1)
    assert result.shift == pytest.approx(0.3, rel=1e-10)
