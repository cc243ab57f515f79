"""
Reference dynamics: a symplectic integration of the three-body problem, flows of the polynomial and series
Hamiltonians, the semi-analytic reconstructions through the chains of canonical transformations, and diagnostics to
compare them.

Astrocentric states are ``(x₁, y₁, v₁ₓ, v₁ᵧ, x₂, y₂, v₂ₓ, v₂ᵧ)`` with ``v_j = p_j / β_j``, ``p_j`` being the
barycentric momentum conjugate to the astrocentric position.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline

from . import _flow
from ._chain import TransformChain, chain_eval
from ._decorators import timeit
from ._elements import elements_to_state, kepler_drift, orbital_elements
from ._jet import Jet
from ._libraries import DataFrame, DataFrameLibrary, PandasDataFrameLibrary
from .adapt import AdaptedChart, naff_decompose
from .errors import DecompositionError
from .hambuild import DiagonalHamiltonian, OrbitalConfig, PoincareChart, from_action_angle
from .pseries import ActionSeries, FrequencyVector, SqrtSeries

__all__ = (
    "CHARTS",
    "DynamicsOptions",
    "Trajectory",
    "ResonantAngles",
    "Libration",
    "Reconstruction",
    "astrocentric_energy",
    "saba3",
    "integrate_full",
    "integrate_poly",
    "reconstruct",
    "compare",
    "resonant_angles",
    "libration",
    "energy_drift",
    "dominant_frequency",
)

log = logging.getLogger(__name__)

CHARTS: Dict[str, Tuple[str, ...]] = {
    "astrocentric": ("x1", "y1", "vx1", "vy1", "x2", "y2", "vx2", "vy2"),
    "YX": ("Y1", "Y2", "X1", "X2"),
    "pq": ("p1", "p2", "q1", "q2"),
}

# pairs whose complex combination rotates, for frequency measurements
PAIRS: Dict[str, Tuple[Tuple[str, str], ...]] = {
    "astrocentric": (("x1", "y1"), ("x2", "y2")),
    "YX": (("Y1", "X1"), ("Y2", "X2")),
    "pq": (),
}

_ROOT15 = math.sqrt(15)
SABA3_DRIFTS = (0.5 - _ROOT15 / 10, _ROOT15 / 10, _ROOT15 / 10, 0.5 - _ROOT15 / 10)
SABA3_KICKS = (5 / 18, 4 / 9, 5 / 18)


@dataclass(frozen=True)
class DynamicsOptions:
    """
    Args:
        full_span: The span of the three-body integration, in years.
        full_step: Its step, in years.
        sample_every: The number of steps between stored samples.
        slow_periods: The span of the comparisons, in slow periods.
        samples_per_period: Samples per slow period in the comparisons.
    """

    full_span: float = 1e4
    full_step: float = 5e-4
    sample_every: int = 200
    slow_periods: float = 1.0
    samples_per_period: int = 512

    def __post_init__(self):
        assert self.full_span > 0, "full_span must be positive."
        assert self.full_step > 0, "full_step must be positive."
        assert self.sample_every >= 1, "sample_every must be positive."
        assert self.slow_periods > 0, "slow_periods must be positive."
        assert self.samples_per_period > 8, "samples_per_period must exceed 8."


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Samples of a state on a time grid (years).

    Args:
        t: Strictly increasing times.
        states: Shape (N, D), in the columns of ``chart``.
        chart: One of :data:`CHARTS`.
        energy: The energy at each sample, when known.
    """

    t: np.ndarray
    states: np.ndarray
    chart: str
    energy: Optional[np.ndarray] = None

    def __post_init__(self):
        assert self.chart in CHARTS, f"{self.chart} is not a valid value"
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "states", np.atleast_2d(np.asarray(self.states, dtype=float)))
        assert self.states.shape == (len(self.t), len(CHARTS[self.chart])), "states must match the chart."
        assert np.all(np.diff(self.t) > 0), "times must be strictly increasing."
        assert np.all(np.isfinite(self.states)), "states must be finite."

    def __len__(self) -> int:
        return len(self.t)

    @property
    def columns(self) -> Tuple[str, ...]:
        return CHARTS[self.chart]

    def signal(self, name: str) -> np.ndarray:
        return self.states[:, self.columns.index(name)]

    def to_frame(self, library: Optional[DataFrameLibrary] = None) -> DataFrame:
        library = library or PandasDataFrameLibrary()
        columns = {"t": self.t, **{name: self.states[:, i] for i, name in enumerate(self.columns)}}
        if self.energy is not None:
            columns["energy"] = self.energy
        return library.from_columns(columns)

    @classmethod
    def from_frame(cls, df: DataFrame, chart: str) -> Trajectory:
        if chart not in CHARTS:
            raise ValueError(f"{chart} is not a valid value")
        energy = df["energy"].to_numpy() if "energy" in df.columns else None
        return cls(df["t"].to_numpy(), df[list(CHARTS[chart])].to_numpy(), chart, energy)

    def write_csv(self, path: Union[str, Path], library: Optional[DataFrameLibrary] = None):
        library = library or PandasDataFrameLibrary()
        library.write_csv(self.to_frame(library), path, comment=f"chart: {self.chart}")

    @classmethod
    def read_csv(cls, path: Union[str, Path], library: Optional[DataFrameLibrary] = None) -> Trajectory:
        library = library or PandasDataFrameLibrary()
        df, comment = library.read_csv(path)
        if not comment or not comment.startswith("chart:"):
            raise ValueError(f"{path} is not a valid value")
        return cls.from_frame(df, comment.split(":", 1)[1].strip())


# three-body problem


def _split(states: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    states = np.atleast_2d(states)
    return states[:, 0:2], states[:, 2:4], states[:, 4:6], states[:, 6:8]


def astrocentric_energy(states: np.ndarray, chart: PoincareChart) -> np.ndarray:
    """
    The Hamiltonian of the planar three-body problem in astrocentric positions and barycentric momenta.
    """
    r1, v1, r2, v2 = _split(states)
    beta, mu = chart.beta, chart.mu
    kepler = sum(
        beta[j] * (0.5 * (v**2).sum(axis=1) - mu[j] / np.hypot(r[:, 0], r[:, 1]))
        for j, (r, v) in enumerate(((r1, v1), (r2, v2)))
    )
    kinetic = beta[0] * beta[1] / chart.m0 * (v1 * v2).sum(axis=1)
    potential = chart.G * chart.masses[0] * chart.masses[1] / np.hypot(*(r1 - r2).T)
    return kepler + kinetic - potential


def _drift(z: np.ndarray, chart: PoincareChart, dt: float) -> np.ndarray:
    out = z.copy()
    for j in (0, 1):
        out[4 * j : 4 * j + 4] = kepler_drift(*z[4 * j : 4 * j + 4], chart.mu[j], dt)
    return out


def _kick(z: np.ndarray, chart: PoincareChart, dt: float) -> np.ndarray:
    # exp(dt/2 L_T) exp(dt L_U) exp(dt/2 L_T), T = p₁·p₂/m₀ and U the mutual potential
    beta, m0 = chart.beta, chart.m0
    out = z.copy()
    for half in (0.5, None, 0.5):
        if half is not None:
            shift1 = half * dt * beta[1] / m0 * out[6:8]
            shift2 = half * dt * beta[0] / m0 * out[2:4]
            out[0:2] += shift1
            out[4:6] += shift2
            continue
        d = out[0:2] - out[4:6]
        force = chart.G * d / math.hypot(*d) ** 3
        # v_j = p_j / β_j and m_j / β_j = (m₀ + m_j) / m₀
        out[2:4] -= dt * chart.masses[1] * (m0 + chart.masses[0]) / m0 * force
        out[6:8] += dt * chart.masses[0] * (m0 + chart.masses[1]) / m0 * force
    return out


def saba3(
    start: Sequence[float], chart: PoincareChart, dt: float, steps: int, sample_every: int = 1
) -> np.ndarray:
    """
    Integrates ``steps`` steps of the SABA₃ splitting (no corrector) and returns the samples, shape (M, 8), the first
    being ``start``.

    Raises:
        ConvergenceError: When a Kepler drift does not converge.
    """
    z = np.asarray(start, dtype=float).copy()
    samples = [z.copy()]
    for n in range(1, steps + 1):
        for i, c in enumerate(SABA3_DRIFTS):
            z = _drift(z, chart, c * dt)
            if i < len(SABA3_KICKS):
                z = _kick(z, chart, SABA3_KICKS[i] * dt)
        if n % sample_every == 0:
            samples.append(z.copy())
    return np.array(samples)


def initial_state(cfg: OrbitalConfig, chart: Optional[PoincareChart] = None) -> np.ndarray:
    chart = chart or PoincareChart.from_config(cfg)
    parts = []
    for j in (0, 1):
        r, v = elements_to_state(chart.mu[j], cfg.elements(j))
        parts.extend([r, v])
    return np.concatenate(parts)


@timeit
def integrate_full(
    cfg: OrbitalConfig, T: float, dt: float, sample_every: int = 1, start: Optional[Sequence[float]] = None
) -> Trajectory:
    """
    Integrates the planar three-body problem from the configured elements over ``T`` years.

    Raises:
        ValueError: When the step does not resolve the inner orbit with at least 40 steps.
        ConvergenceError: When a Kepler drift does not converge.
    """
    chart = PoincareChart.from_config(cfg)
    if dt * chart.n_star[0] > 2 * math.pi / 40:
        raise ValueError(f"{dt} is not a valid value")
    steps = int(round(T / dt))
    z0 = initial_state(cfg, chart) if start is None else np.asarray(start, dtype=float)
    states = saba3(z0, chart, dt, steps, sample_every)
    t = dt * sample_every * np.arange(len(states))
    energy = astrocentric_energy(states, chart)
    trajectory = Trajectory(t, states, "astrocentric", energy)
    log.info("three-body integration: %d steps, relative energy drift %.3e.", steps, energy_drift(trajectory))
    return trajectory


# polynomial and series flows


PolyHamiltonian = Union[Jet, DiagonalHamiltonian, SqrtSeries, ActionSeries]


def _field_and_energy(H: PolyHamiltonian):
    if isinstance(H, ActionSeries):
        return _flow.series_vector_field(H), lambda z: np.real(H.evaluate(z[:, :2], z[:, 2:])), "pq"
    if isinstance(H, SqrtSeries):
        H = from_action_angle(H)
    jet = H.jet if isinstance(H, DiagonalHamiltonian) else H
    return _flow.jet_vector_field(jet), lambda z: jet.evaluate(z), "YX"


@timeit
def integrate_poly(H: PolyHamiltonian, x0: Sequence[float], T: float, dt: float) -> Trajectory:
    """
    Integrates Hamilton's equations of a polynomial or series Hamiltonian with an adaptive eighth-order Runge–Kutta
    scheme, sampled every ``dt``.

    Series in ``(√J, ϑ)`` are rewritten as polynomials in ``(Y, X)`` first; action series are integrated in ``(p, q)``.
    """
    field, energy, chart = _field_and_energy(H)
    t = np.arange(int(round(T / dt)) + 1) * dt
    states = _flow.integrate(field, x0, t)
    trajectory = Trajectory(t, states, chart, energy(states))
    log.info("polynomial flow: %d samples, relative energy drift %.3e.", len(t), energy_drift(trajectory))
    return trajectory


# reconstructions


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """
    The transformations between the diagonal chart and a straight or integrable flow.

    With ``kolmogorov`` set, the torus ``p = 0``, ``q = ωt + q₀`` is mapped back through the Kolmogorov chain, the
    adapted chart and the Birkhoff chain. Otherwise the flow of ``normal_form`` is integrated in the normalized
    variables and mapped back through the Birkhoff chain.
    """

    birkhoff: TransformChain
    normal_form: Optional[SqrtSeries] = None
    chart: Optional[AdaptedChart] = None
    kolmogorov: Optional[TransformChain] = None
    omega: Optional[FrequencyVector] = None

    def __post_init__(self):
        if self.kolmogorov is not None:
            assert self.chart is not None and self.omega is not None, "chart and omega must be specified."
        else:
            assert self.normal_form is not None, "normal_form must be specified."


def _torus(reconstruction: Reconstruction, start: np.ndarray, t: np.ndarray) -> np.ndarray:
    normalized = chain_eval(reconstruction.birkhoff, start, "inverse")
    action = reconstruction.chart.chart_to_action(normalized)
    torus = chain_eval(reconstruction.kolmogorov, action, "inverse")
    q = np.asarray(reconstruction.omega.as_array())[None, :] * t[:, None] + torus[2:][None, :]
    points = np.column_stack([np.zeros((len(t), 2)), q])
    action = chain_eval(reconstruction.kolmogorov, points, "forward")
    return reconstruction.chart.action_to_chart(action)


@timeit
def reconstruct(reconstruction: Reconstruction, start: Sequence[float], t: np.ndarray) -> Trajectory:
    """
    Returns the semi-analytic solution in the diagonal ``(Y₁, Y₂, X₁, X₂)`` chart at the times ``t``.

    Raises:
        ConvergenceError: When a chain is evaluated outside the domain where its Lie series contract.
    """
    start = np.asarray(start, dtype=float)
    t = np.asarray(t, dtype=float)
    if reconstruction.kolmogorov is not None:
        normalized = _torus(reconstruction, start, t)
    else:
        field = _flow.jet_vector_field(from_action_angle(reconstruction.normal_form))
        normalized = _flow.integrate(field, chain_eval(reconstruction.birkhoff, start, "inverse"), t)
    states = chain_eval(reconstruction.birkhoff, normalized, "forward")
    return Trajectory(t, np.atleast_2d(states), "YX")


# diagnostics


def _resample(a: Trajectory, b: Trajectory) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(a.t) == len(b.t) and np.array_equal(a.t, b.t):
        return a.t, a.states, b.states
    lo, hi = max(a.t[0], b.t[0]), min(a.t[-1], b.t[-1])
    keep = (a.t >= lo) & (a.t <= hi)
    if keep.sum() < 2:
        raise ValueError("the trajectories do not overlap.")
    return a.t[keep], a.states[keep], CubicSpline(b.t, b.states, axis=0)(a.t[keep])


def dominant_frequency(t: np.ndarray, signal: np.ndarray) -> float:
    """
    Returns the signed frequency of the strongest oscillating line of a complex signal.
    """
    # clean orbits may carry fewer than three lines
    for n in (3, 2, 1):
        try:
            decomposition = naff_decompose(t, signal, n_components=n)
        except DecompositionError:
            if n == 1:
                raise
            continue
        return next((c.frequency for c in decomposition.components if c.k != 0), decomposition.components[0].frequency)


def compare(a: Trajectory, b: Trajectory, library: Optional[DataFrameLibrary] = None) -> DataFrame:
    """
    Compares two trajectories in the same chart, resampling ``b`` on the times of ``a`` by cubic splines.

    Returns:
        One row per signal with ``rms`` (the RMS difference), ``amplitude`` (``|A_b / A_a - 1|`` with ``A`` the
        half peak-to-peak), ``frequency`` (``|ν_b - ν_a|`` of the pair the signal belongs to, or NaN), ``nu``
        (``ν_a``) and ``scale`` (``A_a``).

    Raises:
        ValueError: When the charts differ.
    """
    if a.chart != b.chart:
        raise ValueError(f"{b.chart} is not a valid value")
    library = library or PandasDataFrameLibrary()
    t, x, y = _resample(a, b)
    frequency: Dict[str, Tuple[float, float]] = {}
    for first, second in PAIRS[a.chart]:
        i, j = a.columns.index(first), a.columns.index(second)
        try:
            nu = dominant_frequency(t, x[:, i] + 1j * x[:, j])
            difference = abs(dominant_frequency(t, y[:, i] + 1j * y[:, j]) - nu)
        except DecompositionError as e:
            log.warning("no frequency for %s/%s: %s", first, second, e)
            nu = difference = math.nan
        frequency[first] = frequency[second] = (difference, nu)
    records = []
    for i, name in enumerate(a.columns):
        reference = 0.5 * np.ptp(x[:, i])
        amplitude = abs(0.5 * np.ptp(y[:, i]) / reference - 1) if reference > 0 else math.nan
        difference, nu = frequency.get(name, (math.nan, math.nan))
        records.append(
            {
                "signal": name,
                "rms": float(np.sqrt(np.mean((x[:, i] - y[:, i]) ** 2))),
                "amplitude": amplitude,
                "frequency": difference,
                "nu": nu,
                "scale": reference,
            }
        )
    return library.create(records)


@dataclass(frozen=True, eq=False)
class ResonantAngles:
    t: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def to_frame(self, library: Optional[DataFrameLibrary] = None) -> DataFrame:
        library = library or PandasDataFrameLibrary()
        return library.from_columns(
            {"t": self.t, "sigma": self.sigma, "delta": self.delta, "e1": self.e1, "e2": self.e2}
        )


def resonant_angles(trajectory: Trajectory, cfg: OrbitalConfig) -> ResonantAngles:
    """
    Returns ``σ = qλ₁ - pλ₂ + (p-q)ϖ₁`` and ``δ = ϖ₂ - ϖ₁`` in ``[0, 2π)``, with the eccentricities.
    """
    if trajectory.chart != "astrocentric":
        raise ValueError(f"{trajectory.chart} is not a valid value")
    chart = PoincareChart.from_config(cfg)
    r1, v1, r2, v2 = _split(trajectory.states)
    first = orbital_elements(r1, v1, chart.mu[0])
    second = orbital_elements(r2, v2, chart.mu[1])
    p, q = cfg.resonance
    sigma = q * first.mean_longitude - p * second.mean_longitude + (p - q) * first.varpi
    return ResonantAngles(
        t=trajectory.t,
        sigma=np.mod(sigma, 2 * np.pi),
        delta=np.mod(second.varpi - first.varpi, 2 * np.pi),
        e1=np.asarray(first.e),
        e2=np.asarray(second.e),
    )


@dataclass(frozen=True)
class Libration:
    center: float
    width: float
    librates: bool


def libration(angle: np.ndarray) -> Libration:
    """
    An angle librates when its unwrapped range stays below ``2π``; the width is that range.
    """
    unwrapped = np.unwrap(np.asarray(angle, dtype=float))
    low, high = float(unwrapped.min()), float(unwrapped.max())
    width = high - low
    return Libration(center=float(np.mod(0.5 * (low + high), 2 * np.pi)), width=width, librates=width < 2 * np.pi)


def energy_drift(trajectory: Trajectory) -> float:
    """
    Returns ``max |E - E₀| / |E₀|``.
    """
    if trajectory.energy is None:
        raise ValueError("the trajectory carries no energy.")
    energy = trajectory.energy
    return float(np.abs(energy - energy[0]).max() / max(abs(energy[0]), 1e-300))
