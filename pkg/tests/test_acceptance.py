import math

import pytest

from reskam._acceptance import EQUILIBRIUM, FREQUENCIES, acceptance_frame, evaluate


def _scalars():
    compare = {}
    for signal in ("Y1", "Y2", "X1", "X2"):
        compare[f"fig7.{signal}.rms"] = 1e-5
        compare[f"fig7.{signal}.scale"] = 1e-2
        compare[f"fig3.{signal}.amplitude"] = 0.01
        compare[f"fig3.{signal}.frequency"] = 1e-4
        compare[f"fig3.{signal}.nu"] = -0.3
    return {
        "reduce": {"p_delta": EQUILIBRIUM[0] * 1.001, "p_sigma": EQUILIBRIUM[1]},
        "calibrate": {"omega1": FREQUENCIES[0], "omega2": FREQUENCIES[1] * 0.99},
        "integrate": {
            "sigma_center": math.pi,
            "sigma_width": math.radians(285.0),
            "sigma_librates": True,
            "delta_librates": True,
            "e1_max": 0.35,
            "energy_drift": 2e-10,
        },
        "adapt": {"gain": 0.3},
        "compare": compare,
        "certify": {"status": "PASS", "ratio": 0.9, "dominated": True},
    }


def _failed(checks):
    return [c.criterion for c in checks if not c.passed]


def test_when_all_scalars_are_within_tolerance_then_every_check_passes():
    assert _failed(evaluate(_scalars())) == []


def test_gamma_is_reproduced_at_the_midpoints():
    checks = {c.criterion: c for c in evaluate(_scalars())}

    assert checks["gamma"].value == pytest.approx(2.7280562034505684e-2, rel=1e-8)
    assert checks["gamma.k"].passed


@pytest.mark.parametrize(
    "stage, name, value, criterion",
    [
        ("reduce", "p_delta", EQUILIBRIUM[0] * 1.02, "equilibrium.p_delta"),
        ("calibrate", "omega2", FREQUENCIES[1] * 1.03, "frequency.omega2"),
        ("integrate", "sigma_width", math.radians(200.0), "sigma.width"),
        ("integrate", "sigma_center", 0.5, "sigma.center"),
        ("integrate", "e1_max", 0.25, "e1.max"),
        ("integrate", "energy_drift", 3e-9, "energy.drift"),
        ("integrate", "energy_drift", "nan", "energy.drift"),
        ("adapt", "gain", 0.2, "circularization.gain"),
        ("compare", "fig7.X2.rms", 1e-3, "kolmogorov.X2"),
        ("compare", "fig3.Y2.amplitude", 0.06, "averaging.Y2.amplitude"),
        ("compare", "fig3.X2.frequency", 0.03, "averaging.X2.frequency"),
        ("certify", "ratio", 0.97, "certificate"),
        ("certify", "dominated", False, "certificate.dominated"),
    ],
)
def test_when_a_scalar_is_out_of_tolerance_then_its_check_fails(stage, name, value, criterion):
    scalars = _scalars()
    scalars[stage][name] = value

    assert _failed(evaluate(scalars)) == [criterion]


def test_slow_pair_drift_is_only_reported():
    scalars = _scalars()
    scalars["compare"]["fig3.Y1.frequency"] = 0.1

    assert _failed(evaluate(scalars)) == []


def test_when_a_stage_is_missing_then_its_checks_fail():
    scalars = _scalars()
    del scalars["certify"]

    assert _failed(evaluate(scalars)) == ["certificate", "certificate.dominated"]


def test_acceptance_frame():
    df = acceptance_frame(evaluate(_scalars()))

    assert list(df.columns) == ["criterion", "value", "expected", "passed"]
    assert df["passed"].all()
