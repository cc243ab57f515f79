import math

import numpy as np
import pytest

from reskam._elements import G_AU_YR, Elements, elements_to_state, kepler_drift, orbital_elements, solve_kepler
from reskam.errors import ConvergenceError

MU = G_AU_YR * 1.45


def test_solve_kepler_satisfies_equation():
    M = np.linspace(0.0, 2 * np.pi, 17)
    e = 0.3

    E = solve_kepler(M, e)

    np.testing.assert_allclose(E - e * np.sin(E), M, atol=1e-14)


def test_when_scalar_input_then_scalar_output():
    assert isinstance(solve_kepler(1.0, 0.1), float)


def test_elements_round_trip():
    elements = Elements(a=0.76, e=0.278, varpi=1.2, mean_anomaly=0.7)

    r, v = elements_to_state(MU, elements)
    back = orbital_elements(r, v, MU)

    assert back.a == pytest.approx(0.76, rel=1e-12)
    assert back.e == pytest.approx(0.278, rel=1e-12)
    assert back.varpi == pytest.approx(1.2, rel=1e-12)
    assert back.mean_anomaly == pytest.approx(0.7, rel=1e-11)


def test_mean_longitude_wraps():
    elements = Elements(a=1.0, e=0.0, varpi=6.0, mean_anomaly=1.0)

    assert elements.mean_longitude == pytest.approx(7.0 - 2 * np.pi)


def test_kepler_drift_matches_mean_anomaly_advance():
    elements = Elements(a=1.58, e=0.038, varpi=2.0, mean_anomaly=3.4)
    n = math.sqrt(MU / 1.58**3)
    dt = 0.37
    (x, y), (vx, vy) = elements_to_state(MU, elements)

    moved = kepler_drift(x, y, vx, vy, MU, dt)

    (ex, ey), (evx, evy) = elements_to_state(
        MU, Elements(a=1.58, e=0.038, varpi=2.0, mean_anomaly=3.4 + n * dt)
    )
    np.testing.assert_allclose(moved, [ex, ey, evx, evy], rtol=1e-11, atol=1e-12)


def test_when_drifting_one_period_then_back_to_start():
    elements = Elements(a=0.76, e=0.278, varpi=0.3, mean_anomaly=0.1)
    period = 2 * math.pi / math.sqrt(MU / 0.76**3)
    (x, y), (vx, vy) = elements_to_state(MU, elements)

    moved = kepler_drift(x, y, vx, vy, MU, period)

    np.testing.assert_allclose(moved, [x, y, vx, vy], rtol=1e-10, atol=1e-11)


def test_when_drifting_backwards_then_inverse():
    (x, y), (vx, vy) = elements_to_state(MU, Elements(a=0.76, e=0.2, varpi=0.3, mean_anomaly=2.0))

    there = kepler_drift(x, y, vx, vy, MU, 0.05)
    back = kepler_drift(*there, MU, -0.05)

    np.testing.assert_allclose(back, [x, y, vx, vy], rtol=1e-12, atol=1e-13)


def test_when_iterations_exhausted_then_convergence_error():
    (x, y), (vx, vy) = elements_to_state(MU, Elements(a=0.76, e=0.2, varpi=0.3, mean_anomaly=2.0))

    with pytest.raises(ConvergenceError):
        kepler_drift(x, y, vx, vy, MU, 10.0, max_iter=1)
