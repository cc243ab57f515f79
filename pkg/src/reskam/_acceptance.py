"""
Acceptance checks evaluated on the scalars the pipeline stages record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional

from .converge import diophantine_gamma
from .errors import ReskamError
from ._libraries import DataFrame, DataFrameLibrary, PandasDataFrameLibrary

__all__ = ("Check", "evaluate", "acceptance_frame")

EQUILIBRIUM = (0.0227533, -0.00128589)
EQUILIBRIUM_TOLERANCE = 0.01
FREQUENCIES = (-2.728056e-2, -3.057423e-1)
FREQUENCY_TOLERANCE = 0.02
OMEGA_MIDPOINTS = (-2.72805620345067182e-2, -3.0574227066988818e-1)
GAMMA = 2.7280562034505684e-2
SIGMA_WIDTH = 280.0
SIGMA_WIDTH_TOLERANCE = 0.1
SIGMA_CENTER_TOLERANCE = 30.0
E1_MAX = 0.3
ENERGY_DRIFT = 1e-9
GAIN = 0.25
CONSISTENCY = 0.02
FIDELITY = 0.05
SIGNALS = ("Y1", "Y2", "X1", "X2")
FAST_PAIR = ("Y2", "X2")
NON_FINITE = ("nan", "inf", "-inf")


@dataclass(frozen=True)
class Check:
    """
    Args:
        criterion: A short name.
        value: What was measured.
        expected: What it is compared with, as text.
        passed: Whether the check holds; reported checks always pass.
    """

    criterion: str
    value: float
    expected: str
    passed: bool


def _numbers(values: Mapping[str, Any]) -> Dict[str, Any]:
    # non-finite floats are stored as strings
    return {k: float(v) if isinstance(v, str) and v in NON_FINITE else v for k, v in values.items()}


def _relative(value: float, reference: float) -> float:
    return abs(value / reference - 1)


def _within(criterion: str, value: Optional[float], reference: float, tolerance: float) -> Check:
    if value is None or not math.isfinite(value):
        return Check(criterion, math.nan, f"{reference:.8g} ± {tolerance:.0%}", False)
    return Check(criterion, value, f"{reference:.8g} ± {tolerance:.0%}", _relative(value, reference) < tolerance)


def _below(criterion: str, value: Optional[float], limit: float) -> Check:
    passed = value is not None and math.isfinite(value) and value < limit
    return Check(criterion, math.nan if value is None else value, f"< {limit:.4g}", passed)


def _gamma() -> List[Check]:
    try:
        witness = diophantine_gamma(OMEGA_MIDPOINTS, tau=1.0, cutoff=64)
    except ReskamError:
        return [Check("gamma", math.nan, f"{GAMMA:.8e}", False)]
    return [
        Check("gamma", witness.gamma, f"{GAMMA:.8e}", f"{witness.gamma:.7e}" == f"{GAMMA:.7e}"),
        Check("gamma.k", float(abs(witness.k[0])), "(±1, 0)", abs(witness.k[0]) == 1 and witness.k[1] == 0),
    ]


def evaluate(scalars: Mapping[str, Mapping[str, Any]]) -> List[Check]:
    """
    Evaluates the acceptance checks from per-stage scalars; a stage missing from ``scalars`` fails its checks.
    """
    stages = ("reduce", "calibrate", "integrate", "adapt", "compare", "certify")
    reduce, calibrate, integrate, adapt, compare, certify = (_numbers(scalars.get(stage, {})) for stage in stages)

    checks = [
        _within("equilibrium.p_delta", reduce.get("p_delta"), EQUILIBRIUM[0], EQUILIBRIUM_TOLERANCE),
        _within("equilibrium.p_sigma", reduce.get("p_sigma"), EQUILIBRIUM[1], EQUILIBRIUM_TOLERANCE),
        _within("frequency.omega1", calibrate.get("omega1"), FREQUENCIES[0], FREQUENCY_TOLERANCE),
        _within("frequency.omega2", calibrate.get("omega2"), FREQUENCIES[1], FREQUENCY_TOLERANCE),
    ]
    checks.extend(_gamma())

    width = integrate.get("sigma_width")
    center = integrate.get("sigma_center")
    checks.append(
        _within("sigma.width", None if width is None else math.degrees(width), SIGMA_WIDTH, SIGMA_WIDTH_TOLERANCE)
    )
    checks.append(
        Check(
            "sigma.center",
            math.nan if center is None else math.degrees(center),
            f"180 ± {SIGMA_CENTER_TOLERANCE:g}",
            center is not None
            and bool(integrate.get("sigma_librates"))
            and abs(math.degrees(center) - 180.0) < SIGMA_CENTER_TOLERANCE,
        )
    )
    librates = bool(integrate.get("delta_librates"))
    checks.append(Check("delta.librates", float(librates), "librates", librates))
    e1 = integrate.get("e1_max")
    checks.append(Check("e1.max", math.nan if e1 is None else e1, f"> {E1_MAX:g}", e1 is not None and e1 > E1_MAX))
    checks.append(_below("energy.drift", integrate.get("energy_drift"), ENERGY_DRIFT))

    gain = adapt.get("gain")
    passed = gain is not None and gain >= GAIN
    checks.append(Check("circularization.gain", math.nan if gain is None else gain, f">= {GAIN:g}", passed))

    for signal in SIGNALS:
        rms, scale = compare.get(f"fig7.{signal}.rms"), compare.get(f"fig7.{signal}.scale")
        value = rms / scale if rms is not None and scale else None
        checks.append(_below(f"kolmogorov.{signal}", value, CONSISTENCY))
    for signal in FAST_PAIR:
        checks.append(_below(f"averaging.{signal}.amplitude", compare.get(f"fig3.{signal}.amplitude"), FIDELITY))
        difference, nu = compare.get(f"fig3.{signal}.frequency"), compare.get(f"fig3.{signal}.nu")
        value = abs(difference / nu) if difference is not None and nu else None
        checks.append(_below(f"averaging.{signal}.frequency", value, FIDELITY))
    # the slow pair drifts by construction
    slow = compare.get("fig3.Y1.frequency")
    checks.append(Check("averaging.Y1.frequency", math.nan if slow is None else slow, "reported", True))

    ratio = certify.get("ratio")
    passed = certify.get("status") == "PASS" and ratio is not None and ratio < 0.95
    checks.append(Check("certificate", math.nan if ratio is None else ratio, "PASS, ratio < 0.95", passed))
    dominated = bool(certify.get("dominated"))
    checks.append(Check("certificate.dominated", float(dominated), "true", dominated))
    return checks


def acceptance_frame(checks: List[Check], library: Optional[DataFrameLibrary] = None) -> DataFrame:
    library = library or PandasDataFrameLibrary()
    return library.create(
        [{"criterion": c.criterion, "value": c.value, "expected": c.expected, "passed": c.passed} for c in checks]
    )
