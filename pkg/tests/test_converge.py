import math

import numpy as np
import pytest

from reskam.converge import (
    CertificateReport,
    TailBounds,
    certify,
    diophantine_gamma,
    explicit_stage,
    tail_bound_frame,
    tail_iterate,
    tail_seed,
)
from reskam.errors import BoundBlowUpError, ConvergenceError, ResonanceError
from reskam.kolmogorov import KolmogorovOptions, KolmogorovState, kolmogorov_normalize
from reskam.pseries import ActionSeries, FrequencyVector

CAPS = dict(action_cap=2, fourier_cap=12)
W1, W2 = 0.7, 1.3
OMEGA_STAR = (-2.72805620345067182e-2, -3.0574227066988818e-1)


def _toy(eps=0.01, twist=0.5):
    # ω·p + p₁²/2 + twist p₂²/2 + ε (cos q₁ + p₁ cos(q₁ - q₂))
    terms = [
        ((1, 0), (0, 0), W1),
        ((0, 1), (0, 0), W2),
        ((2, 0), (0, 0), 0.5),
        ((0, 2), (0, 0), twist / 2),
        ((0, 0), (1, 0), eps / 2),
        ((0, 0), (-1, 0), eps / 2),
        ((1, 0), (1, -1), eps / 2),
        ((1, 0), (-1, 1), eps / 2),
    ]
    return ActionSeries.from_terms(terms, **CAPS)


def _bounds(chi1, steps=None):
    chi1 = np.asarray(chi1, dtype=float)
    steps = np.arange(1, len(chi1) + 1) if steps is None else steps
    return TailBounds(steps, np.zeros_like(chi1), chi1, np.zeros_like(chi1), 0.1, 1.0, 0, len(chi1))


def test_diophantine_constant_at_calibrated_frequencies():
    witness = diophantine_gamma(OMEGA_STAR, tau=1, cutoff=64)
    assert witness.gamma == pytest.approx(2.7280562034505684e-2, rel=1e-8)
    assert abs(witness.k[0]) == 1 and witness.k[1] == 0


def test_when_frequencies_are_resonant_then_resonance_error():
    with pytest.raises(ResonanceError) as info:
        diophantine_gamma((1.0, 1.0), cutoff=8)
    assert abs(info.value.k[0]) == abs(info.value.k[1]) == 1
    assert info.value.k[0] == -info.value.k[1]


def test_diophantine_constant_matches_exhaustive_scan():
    omega = (1.0, math.sqrt(2))
    expected = min(
        abs(k1 * omega[0] + k2 * omega[1]) * (abs(k1) + abs(k2))
        for k1 in range(-32, 33)
        for k2 in range(-32, 33)
        if 0 < abs(k1) + abs(k2) <= 32
    )
    assert diophantine_gamma(omega, tau=1, cutoff=32).gamma == pytest.approx(expected, rel=1e-12)


def test_when_no_explicit_steps_then_state_is_unchanged():
    state = KolmogorovState.from_hamiltonian(_toy())
    out, ledger = explicit_stage(state, (W1, W2), 0)
    assert out is state
    assert len(ledger) == 0


def test_explicit_stage_pins_the_frequency():
    state = KolmogorovState.from_hamiltonian(_toy(), KolmogorovOptions(order_cap=4))
    out, ledger = explicit_stage(state, (W1 + 1e-3, W2), 4)
    assert out.step == 4
    assert out.omega == FrequencyVector((W1 + 1e-3, W2))
    assert list(ledger.steps) == [1, 2, 3, 4]
    remainder = ledger.column("norm_remainder")
    assert remainder[-1] < remainder[0]
    assert ledger.column("norm_eta")[0] > 0


def test_explicit_stage_clears_low_orders():
    state = KolmogorovState.from_hamiltonian(_toy(), KolmogorovOptions(order_cap=5))
    out, _ = explicit_stage(state, (W1, W2), 3)
    for s in (1, 2, 3):
        assert out.block(0, s).norm() == 0
        assert out.block(1, s).norm() < 1e-15


def test_when_twist_is_singular_then_convergence_error():
    state = KolmogorovState.from_hamiltonian(_toy(twist=0.0))
    with pytest.raises(ConvergenceError):
        explicit_stage(state, (W1, W2), 2)


def test_when_seed_is_zero_then_bounds_are_zero():
    bounds = tail_iterate(np.zeros((3, 30)), gamma=0.1, tau=1, r_i=4, r_ii=20)
    assert len(bounds) == 20
    assert not bounds.chi0.any() and not bounds.chi1.any() and not bounds.remainder.any()
    assert certify(bounds).passed


def test_small_seed_decays_and_is_certified():
    seed = np.zeros((3, 42))
    seed[0, 2:6] = seed[1, 2:6] = 1e-6
    seed[2, 0] = 1.0
    bounds = tail_iterate(seed, gamma=1.0, tau=1, r_i=1, r_ii=40)
    assert bounds.chi1[-1] < bounds.chi1[5]
    assert certify(bounds).passed


def test_when_bounds_blow_up_then_bound_blow_up_error():
    seed = np.zeros((3, 12))
    seed[0, 1:] = seed[1, 1:] = 1.0
    seed[2, 0] = 1.0
    with pytest.raises(BoundBlowUpError):
        tail_iterate(seed, gamma=1e-6, tau=1, r_i=0, r_ii=11)


def test_bounds_dominate_measured_norms():
    options = KolmogorovOptions(order_cap=6)
    start = kolmogorov_normalize(_toy(), steps=2, options=options)
    full = kolmogorov_normalize(start, steps=3)
    omegas = [start.omega] + [
        (w1, w2) for w1, w2 in zip(full.ledger.column("omega1")[2:], full.ledger.column("omega2")[2:])
    ]
    gamma = min(diophantine_gamma(w, tau=1, cutoff=CAPS["fourier_cap"]).gamma for w in omegas)
    bounds = tail_iterate(tail_seed(start, 3), gamma=gamma, tau=1, r_i=2, r_ii=3)
    np.testing.assert_array_equal(bounds.steps, [3, 4, 5])
    measured = full.ledger
    assert np.all(bounds.chi0 >= measured.column("norm_chi0")[2:])
    assert np.all(bounds.chi1 >= measured.column("norm_chi1")[2:])


def test_geometric_decay_passes():
    report = certify(_bounds(0.5 ** np.arange(1, 21)))
    assert report.passed
    assert report.ratio == pytest.approx(0.5, rel=1e-10)


def test_constant_bounds_fail():
    report = certify(_bounds(np.full(20, 1e-3)))
    assert not report.passed
    assert report.ratio == pytest.approx(1.0, rel=1e-10)


def test_report_text():
    report = certify(_bounds(0.5 ** np.arange(1, 11)))
    text = report.to_text()
    assert isinstance(report, CertificateReport)
    assert "status: PASS\n" in text
    assert "r_ii: 10\n" in text
    assert "not a proof" in text


def test_tail_bound_frame():
    df = tail_bound_frame(_bounds([0.3, 0.2, 0.1]))
    assert list(df.columns) == ["step", "chi0", "chi1", "remainder"]
    assert list(df["step"]) == [1, 2, 3]
