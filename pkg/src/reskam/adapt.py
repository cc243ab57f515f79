"""
Coordinates adapted to the slow orbit of the integrable approximation.

The slow signal ``Y₁(t) + i X₁(t)`` is decomposed into quasi-periodic lines, the ellipse they describe is turned into
a near circle by ``v₁ = α Y₁``, ``u₁ = (X₁ - X₁*) / α`` and the Hamiltonian is re-expanded in action-angle variables
``(p, q)`` centered on the enclosed action ``p₁*`` and on the mean fast action ``J₂*``::

    v₁ = √(2(p₁ + Ĩ₁)) cos q₁    Y₂ = √(2(p₂ + J₂*)) cos q₂
    u₁ = √(2(p₁ + Ĩ₁)) sin q₁    X₂ = √(2(p₂ + J₂*)) sin q₂
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft, linalg, optimize
from scipy.integrate import trapezoid
from scipy.signal import windows
from scipy.special import binom

from . import _flow
from ._chain import TransformChain, chain_eval
from ._decorators import timeit
from ._libraries import DataFrame, DataFrameLibrary, PandasDataFrameLibrary
from .errors import DecompositionError, SeriesError
from .hambuild import from_action_angle, to_action_angle
from .pseries import ActionSeries, SqrtSeries

__all__ = (
    "Component",
    "QuasiPeriodicDecomposition",
    "FrequencyAnalysis",
    "CircularizationFit",
    "AdaptedChart",
    "SlowOrbit",
    "naff_decompose",
    "fit_circularization",
    "enclosed_action",
    "slow_orbit",
    "build_adapted_chart",
    "adapted_chart",
    "read_orbit_csv",
    "circularization_gain",
    "normalized_start",
    "ORBIT_COLUMNS",
    "K",
)

log = logging.getLogger(__name__)

K = 2
PHASE_TOLERANCE = 0.1
ORBIT_COLUMNS = ("t", "Y1", "X1", "Y2", "X2")
_PADDING = 4


@dataclass(frozen=True)
class Component:
    """
    One line ``A e^{i(k ν₁ t + φ)}`` of a quasi-periodic signal.
    """

    k: int
    amplitude: float
    phase: float
    frequency: float

    def __post_init__(self):
        assert self.amplitude > 0, "amplitude must be positive."

    @property
    def complex_amplitude(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class QuasiPeriodicDecomposition:
    """
    Args:
        fundamental: The fundamental frequency ``ν₁ > 0``.
        components: The lines, sorted by decreasing amplitude.
        residual: The windowed power left after removing the lines, relative to the signal's.
    """

    fundamental: float
    components: Tuple[Component, ...]
    residual: float = 0.0

    def component(self, k: int) -> Optional[Component]:
        """
        Returns the strongest line with harmonic ``k``, if any.
        """
        return next((c for c in self.components if c.k == k), None)

    def signal(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return sum(c.complex_amplitude * np.exp(1j * c.frequency * t) for c in self.components)


class FrequencyAnalysis:
    """
    Numerical analysis of fundamental frequencies on a fixed uniform time grid.

    Inner products are Hann-windowed trapezoid sums normalized so that ``⟨e^{iνt}, e^{iνt}⟩ = 1``.
    """

    def __init__(self, t: np.ndarray):
        t = np.asarray(t, dtype=float)
        assert t.ndim == 1 and len(t) > 8, "at least 9 samples must be specified."
        steps = np.diff(t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("a uniformly sampled signal is required.")
        self.t = t
        self.dt = float(steps[0])
        self.T = float(t[-1] - t[0])
        weights = windows.hann(len(t), sym=True)
        weights[0] *= 0.5
        weights[-1] *= 0.5
        self._weights = weights / weights.sum()

    @property
    def resolution(self) -> float:
        return 2 * np.pi / self.T

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        return complex(np.sum(self._weights * f * np.conj(g)))

    def project(self, f: np.ndarray, nu: float) -> complex:
        return self.inner(f, np.exp(1j * nu * self.t))

    def frequency(self, f: np.ndarray, seed: Optional[float] = None) -> float:
        """
        Returns the frequency maximizing ``|⟨f, e^{iνt}⟩|``: golden-section search about ``seed``, by default the
        peak of the zero-padded FFT.
        """
        n = _PADDING * len(self.t)
        width = 2 * np.pi / (n * self.dt)
        if seed is None:
            spectrum = np.abs(fft.fft(self._weights * f, n=n))
            seed = float(2 * np.pi * fft.fftfreq(n, d=self.dt)[int(np.argmax(spectrum))])
        result = optimize.minimize_scalar(
            lambda nu: -abs(self.project(f, nu)),
            bracket=(seed - width, seed, seed + width),
            method="golden",
            options={"xtol": 1e-13, "maxiter": 200},
        )
        return float(result.x)

    def amplitudes(self, f: np.ndarray, frequencies: Sequence[float]) -> np.ndarray:
        """
        Solves the windowed least-squares problem for the complex amplitudes of the given lines.
        """
        exponentials = [np.exp(1j * nu * self.t) for nu in frequencies]
        gram = np.array([[self.inner(ek, ej) for ek in exponentials] for ej in exponentials])
        rhs = np.array([self.inner(f, ej) for ej in exponentials])
        return linalg.solve(gram, rhs, assume_a="her")

    def synthesize(self, frequencies: Sequence[float], amplitudes: Sequence[complex]) -> np.ndarray:
        return sum(a * np.exp(1j * nu * self.t) for nu, a in zip(frequencies, amplitudes))


@timeit
def naff_decompose(
    t: np.ndarray,
    signal: np.ndarray,
    n_components: int = 3,
    fundamental: Optional[float] = None,
    refine_passes: int = 3,
) -> QuasiPeriodicDecomposition:
    """
    Decomposes a complex signal into ``n_components`` quasi-periodic lines.

    Lines are found one at a time on the residual and removed by Gram–Schmidt projection. Each frequency is then
    re-measured ``refine_passes`` times on the signal minus the other lines, and the amplitudes are solved together.
    Harmonics are ``k = round(ν / ν₁)`` where ``ν₁`` is ``fundamental`` or, by default, the modulus of the strongest
    non-constant line.

    Raises:
        DecompositionError: When no dominant line exists or when more lines are requested than can be resolved.
    """
    analysis = FrequencyAnalysis(t)
    signal = np.asarray(signal, dtype=complex)
    power = analysis.inner(signal, signal).real
    if power <= 0:
        raise DecompositionError("the signal has no dominant peak.")
    residual = signal.copy()
    frequencies: List[float] = []
    basis: List[np.ndarray] = []
    for n in range(n_components):
        nu = analysis.frequency(residual)
        if any(abs(nu - other) < 2 * analysis.resolution for other in frequencies):
            raise DecompositionError(f"line {n + 1} is not resolved from the previous ones.")
        e = np.exp(1j * nu * analysis.t)
        u = e - sum(analysis.inner(e, b) * b for b in basis)
        size = math.sqrt(max(analysis.inner(u, u).real, 0.0))
        if size < 1e-10:
            raise DecompositionError(f"line {n + 1} is not resolved from the previous ones.")
        u = u / size
        c = analysis.inner(residual, u)
        if abs(c) ** 2 < 1e-28 * power:
            raise DecompositionError(f"the signal has no line {n + 1} above round-off.")
        residual = residual - c * u
        frequencies.append(nu)
        basis.append(u)
    amplitudes = analysis.amplitudes(signal, frequencies)
    for _ in range(refine_passes if n_components > 1 else 0):
        for i in range(n_components):
            others = [j for j in range(n_components) if j != i]
            isolated = signal - analysis.synthesize([frequencies[j] for j in others], amplitudes[others])
            frequencies[i] = analysis.frequency(isolated, seed=frequencies[i])
        amplitudes = analysis.amplitudes(signal, frequencies)
    residual = signal - analysis.synthesize(frequencies, amplitudes)
    if fundamental is None:
        moving = [(abs(a), abs(nu)) for a, nu in zip(amplitudes, frequencies) if abs(nu) > 0.5 * analysis.resolution]
        if not moving:
            raise DecompositionError("the signal has no oscillating line.")
        fundamental = max(moving)[1]
    components = [
        Component(
            k=int(round(nu / fundamental)),
            amplitude=float(abs(a)),
            phase=float(np.angle(a)),
            frequency=nu,
        )
        for a, nu in zip(amplitudes, frequencies)
        if abs(a) > 0
    ]
    components.sort(key=lambda c: -c.amplitude)
    left = analysis.inner(residual, residual).real / power
    log.debug("naff: ν₁ = %.12g with %d lines, residual power %.3e.", fundamental, len(components), left)
    return QuasiPeriodicDecomposition(float(fundamental), tuple(components), float(left))


@dataclass(frozen=True)
class CircularizationFit:
    """
    The shift ``X₁*`` and dilation ``α`` turning the three-line ellipse into a circle.
    """

    X1_star: float
    alpha: float
    c_minus: float
    c_plus: float

    def __post_init__(self):
        assert self.alpha > 0, "alpha must be positive."


def fit_circularization(
    decomposition: QuasiPeriodicDecomposition, phase_tolerance: float = PHASE_TOLERANCE
) -> CircularizationFit:
    """
    Fits ``α = √((c₋ - c₊) / (c₋ + c₊))`` and ``X₁*`` from the lines ``k = 0, -1, +1``.

    Raises:
        DecompositionError: When the constant line is missing or not aligned with the ``X₁`` axis, or ``c₋ ≤ c₊``.
    """
    zero = decomposition.component(0)
    if zero is None:
        raise DecompositionError("the decomposition has no constant line.")
    if abs(abs(zero.phase) - math.pi / 2) > phase_tolerance:
        raise DecompositionError(f"the constant line has phase {zero.phase:.3f}, away from ±π/2.")
    minus, plus = decomposition.component(-1), decomposition.component(1)
    c_minus = minus.amplitude if minus else 0.0
    c_plus = plus.amplitude if plus else 0.0
    if c_minus <= c_plus:
        raise DecompositionError(f"c₋ = {c_minus:.3e} does not exceed c₊ = {c_plus:.3e}.")
    alpha = math.sqrt((c_minus - c_plus) / (c_minus + c_plus))
    return CircularizationFit(zero.amplitude * math.sin(zero.phase), alpha, c_minus, c_plus)


def enclosed_action(v: np.ndarray, u: np.ndarray, gap_tolerance: float = 1e-3) -> float:
    """
    Returns ``|∮ v du| / 2π`` for a sampled closed curve, by the trapezoid rule.

    Raises:
        DecompositionError: When the curve is open or does not wind exactly once around its centroid.
    """
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    diameter = max(np.ptp(v), np.ptp(u))
    if diameter == 0:
        raise DecompositionError("the curve is a point.")
    if math.hypot(v[-1] - v[0], u[-1] - u[0]) > gap_tolerance * diameter:
        raise DecompositionError("the curve is not closed.")
    turning = np.unwrap(np.arctan2(np.append(u, u[0]) - u.mean(), np.append(v, v[0]) - v.mean()))
    winding = (turning[-1] - turning[0]) / (2 * np.pi)
    if abs(abs(winding) - 1) > 0.05:
        raise DecompositionError(f"the curve winds {winding:.2f} times around its centroid.")
    closed_v, closed_u = np.append(v, v[0]), np.append(u, u[0])
    return abs(float(trapezoid(closed_v, closed_u))) / (2 * np.pi)


@dataclass(frozen=True, eq=False)
class SlowOrbit:
    """
    A sampled orbit of the integrable approximation in ``(Y₁, Y₂, X₁, X₂)``.
    """

    t: np.ndarray
    points: np.ndarray

    @property
    def signal(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 2]

    @property
    def J1(self) -> np.ndarray:
        return 0.5 * (self.points[:, 0] ** 2 + self.points[:, 2] ** 2)

    @property
    def J2(self) -> np.ndarray:
        return 0.5 * (self.points[:, 1] ** 2 + self.points[:, 3] ** 2)

    def to_frame(self, library: Optional[DataFrameLibrary] = None) -> DataFrame:
        library = library or PandasDataFrameLibrary()
        columns = dict(zip(ORBIT_COLUMNS, (self.t, *self.points[:, [0, 2, 1, 3]].T)))
        return library.from_columns(columns)


def read_orbit_csv(path: Union[str, Path], library: Optional[DataFrameLibrary] = None) -> SlowOrbit:
    """
    Reads orbit samples with the columns ``t, Y1, X1, Y2, X2``.
    """
    library = library or PandasDataFrameLibrary()
    df, _ = library.read_csv(path)
    missing = [c for c in ORBIT_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{missing} must be specified.")
    points = df[["Y1", "Y2", "X1", "X2"]].to_numpy(dtype=float)
    return SlowOrbit(df["t"].to_numpy(dtype=float), points)


@timeit
def slow_orbit(
    normal_form: SqrtSeries,
    start: Sequence[float],
    periods: float = 32,
    samples_per_period: int = 128,
    frequency: Optional[float] = None,
) -> SlowOrbit:
    """
    Integrates the flow of the integrable approximation from ``start`` (normalized ``(Y₁, Y₂, X₁, X₂)``).

    The span is ``periods`` slow periods of ``2π/|frequency|``, the linear slow frequency by default.
    """
    if frequency is None:
        frequency = normal_form.coefficient((2, 0), (0, 0)).real
    if frequency == 0:
        raise ValueError(f"{frequency} is not a valid value")
    period = 2 * np.pi / abs(frequency)
    t = np.linspace(0.0, periods * period, int(periods * samples_per_period) + 1)
    field = _flow.jet_vector_field(from_action_angle(normal_form))
    return SlowOrbit(t, _flow.integrate(field, start, t))


def _root_power(n: int, shift: float, caps: Dict[str, int], which: int) -> ActionSeries:
    """
    ``(p + shift)^{n/2}`` expanded in powers of ``p`` up to the action cap.
    """
    exponent = (lambda d: (d, 0)) if which == 1 else (lambda d: (0, d))
    if shift == 0:
        if n % 2:
            raise SeriesError("odd power of √p about p = 0 is not an action series.")
        return ActionSeries.from_terms([(exponent(n // 2), (0, 0), 1.0)], **caps)
    if shift < 0:
        raise SeriesError("negative shift under a square root.")
    terms = [(exponent(d), (0, 0), binom(n / 2, d) * shift ** (n / 2 - d)) for d in range(caps["action_cap"] + 1)]
    return ActionSeries.from_terms([t for t in terms if t[2] != 0], **caps)


@dataclass(frozen=True)
class AdaptedChart:
    """
    Args:
        alpha: The dilation coefficient.
        X1_star: The translation of ``X₁``.
        p1_star: The enclosed action of the slow orbit.
        J2_star: The mean fast action.
        I1_shift: The shift ``Ĩ₁`` of ``p₁``; ``p₁*`` unless calibrated.
    """

    alpha: float = 1.0
    X1_star: float = 0.0
    p1_star: float = 0.0
    J2_star: float = 0.0
    I1_shift: Optional[float] = None

    def __post_init__(self):
        assert self.alpha > 0, "alpha must be positive."
        assert self.p1_star >= 0, "p1_star must be non-negative."
        if self.I1_shift is None:
            object.__setattr__(self, "I1_shift", self.p1_star)

    def with_shift(self, shift: float) -> AdaptedChart:
        return replace(self, I1_shift=float(shift))

    def circularize(self, Y1, X1) -> Tuple[np.ndarray, np.ndarray]:
        return self.alpha * np.asarray(Y1), (np.asarray(X1) - self.X1_star) / self.alpha

    def decircularize(self, v1, u1) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(v1) / self.alpha, self.alpha * np.asarray(u1) + self.X1_star

    def chart_to_action(self, points) -> np.ndarray:
        """
        Maps ``(Y₁, Y₂, X₁, X₂)`` to ``(p₁, p₂, q₁, q₂)``.
        """
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        points = np.atleast_2d(points)
        v1, u1 = self.circularize(points[:, 0], points[:, 2])
        Y2, X2 = points[:, 1], points[:, 3]
        out = np.column_stack(
            [
                0.5 * (v1**2 + u1**2) - self.I1_shift,
                0.5 * (Y2**2 + X2**2) - self.J2_star,
                np.arctan2(u1, v1),
                np.arctan2(X2, Y2),
            ]
        )
        return out[0] if single else out

    def action_to_chart(self, points) -> np.ndarray:
        """
        Maps ``(p₁, p₂, q₁, q₂)`` to ``(Y₁, Y₂, X₁, X₂)``.
        """
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        points = np.atleast_2d(points)
        r1 = np.sqrt(2 * (points[:, 0] + self.I1_shift))
        r2 = np.sqrt(2 * (points[:, 1] + self.J2_star))
        Y1, X1 = self.decircularize(r1 * np.cos(points[:, 2]), r1 * np.sin(points[:, 2]))
        out = np.column_stack([Y1, r2 * np.cos(points[:, 3]), X1, r2 * np.sin(points[:, 3])])
        return out[0] if single else out

    def as_dict(self) -> Dict[str, float]:
        return {
            "alpha": self.alpha,
            "X1_star": self.X1_star,
            "p1_star": self.p1_star,
            "J2_star": self.J2_star,
            "I1_shift": self.I1_shift,
        }


@timeit
def adapted_chart(
    hamiltonian: SqrtSeries,
    chart: AdaptedChart,
    action_cap: int = 2,
    fourier_cap: int = 12,
) -> ActionSeries:
    """
    Re-expands a Hamiltonian given in normalized ``(√J, ϑ)`` variables in the adapted ``(p, q)`` variables.

    The circularizing map is applied to the polynomial in ``(Y, X)``; each ``(√K₁)^ℓ₁ (√J₂)^ℓ₂`` is then expanded
    about the shifts ``Ĩ₁``, ``J₂*`` up to ``action_cap``.

    Raises:
        SeriesError: When a shift is zero and the Hamiltonian has odd powers of the corresponding root.
    """
    caps = dict(action_cap=action_cap, fourier_cap=fourier_cap)
    jet = from_action_angle(hamiltonian)
    scale = np.diag([1 / chart.alpha, 1.0, chart.alpha, 1.0])
    circular = jet.compose_linear(scale, shift=np.array([0.0, 0.0, chart.X1_star, 0.0]))
    series = to_action_angle(circular, degree_cap=hamiltonian.degree_cap)
    if not series:
        return ActionSeries.zero(**caps)
    roots: Dict[Tuple[int, int], ActionSeries] = {}

    def root(which: int, n: int) -> ActionSeries:
        if (which, n) not in roots:
            shift = chart.I1_shift if which == 1 else chart.J2_star
            roots[which, n] = _root_power(n, shift, caps, which)
        return roots[which, n]

    parts = []
    for (l1, l2), k, c in series.terms():
        if abs(k[0]) + abs(k[1]) > fourier_cap:
            continue
        factor = root(1, l1) * root(2, l2)
        phase = ActionSeries.from_terms([((0, 0), k, c)], **caps)
        parts.append(factor * phase)
    out = ActionSeries.sum(parts, **caps).real_part()
    log.info(
        "adapted chart: %d terms, ω⁽⁰⁾ = (%.10g, %.10g).",
        len(out),
        out.coefficient((1, 0), (0, 0)).real,
        out.coefficient((0, 1), (0, 0)).real,
    )
    return out


@timeit
def build_adapted_chart(
    normal_form: SqrtSeries,
    start: Sequence[float],
    periods: float = 32,
    samples_per_period: int = 128,
) -> Tuple[AdaptedChart, QuasiPeriodicDecomposition, SlowOrbit]:
    """
    Integrates the slow orbit, decomposes it, fits the circularization and measures ``p₁*`` and ``J₂*``.

    ``p₁*`` is the action enclosed by the last full slow period and ``J₂*`` the mean of ``J₂`` over it.
    """
    orbit = slow_orbit(normal_form, start, periods, samples_per_period)
    decomposition = naff_decompose(orbit.t, orbit.signal, n_components=3)
    fit = fit_circularization(decomposition)
    period = 2 * np.pi / decomposition.fundamental
    last = orbit.t >= orbit.t[-1] - period
    window = orbit.points[last]
    v1, u1 = AdaptedChart(alpha=fit.alpha, X1_star=fit.X1_star).circularize(window[:, 0], window[:, 2])
    closing = np.argmin(np.hypot(v1[1:] - v1[0], u1[1:] - u1[0])[len(v1) // 2 :]) + len(v1) // 2 + 1
    p1_star = enclosed_action(v1[: closing + 1], u1[: closing + 1], gap_tolerance=0.05)
    J2_star = float(np.mean(orbit.J2[last][:closing]))
    chart = AdaptedChart(alpha=fit.alpha, X1_star=fit.X1_star, p1_star=p1_star, J2_star=J2_star)
    log.info(
        "adapted chart: α = %.8g, X₁* = %.8g, p₁* = %.8g, J₂* = %.8g.", fit.alpha, fit.X1_star, p1_star, J2_star
    )
    return chart, decomposition, orbit


def circularization_gain(orbit: SlowOrbit, chart: AdaptedChart) -> float:
    """
    Returns ``1 - ptp((v₁² + u₁²)/2) / ptp((Y₁² + X₁²)/2)`` along an orbit.
    """
    v1, u1 = chart.circularize(orbit.points[:, 0], orbit.points[:, 2])
    return 1 - float(np.ptp(0.5 * (v1**2 + u1**2)) / np.ptp(orbit.J1))


def normalized_start(chain: TransformChain, diagonal_point: Sequence[float]) -> np.ndarray:
    """
    Maps a point of the diagonal chart into the variables of the normal form.
    """
    return chain_eval(chain, np.asarray(diagonal_point, dtype=float), "inverse")

