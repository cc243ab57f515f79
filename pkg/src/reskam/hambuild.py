"""
The planar three-body Hamiltonian around a first-kind mean-motion resonance.

The chain of this module is::

    OrbitalConfig ─▶ build_expansion ─▶ to_resonant_average ─▶ find_equilibrium ─▶ diagonalize ─▶ to_action_angle

Masses are in solar masses (divided by ``mass_unit``), lengths in AU and times in years. The
perturbation ``r̃₁·r̃₂/m₀ - 𝒢m₁m₂/|r₁-r₂|`` is expanded by evaluating truncated Taylor jets in
``(L, ξ, η)`` on a uniform grid of mean longitudes and projecting with a 2-D FFT.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb

from ._decorators import timeit
from ._elements import G_AU_YR, JUPITER_MASS, Elements
from ._jet import Jet, JetSpace
from .errors import ConvergenceError, EquilibriumError, ExpansionError
from .pseries import SqrtSeries

__all__ = (
    "Planet",
    "OrbitalConfig",
    "ExpansionCaps",
    "PoincareChart",
    "PoincareExpansion",
    "PoincareState",
    "ResonantChart",
    "ResonantHamiltonian",
    "Equilibrium",
    "DiagonalHamiltonian",
    "InitialCondition",
    "build_expansion",
    "to_resonant_average",
    "find_equilibrium",
    "diagonalize",
    "to_action_angle",
    "from_action_angle",
    "poincare_state",
    "initial_condition",
)

log = logging.getLogger(__name__)

GRID_FACTOR = 4
PHI_TOLERANCE = 1e-10
EXPANSION_PRUNE = 1e-15
SYMPLECTIC = np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
_KEPLER_ITERATIONS = 6
_GRID_CHUNK = 256


@dataclass(frozen=True)
class Planet:
    """
    Osculating elements of one planet; angles in degrees, mass in Jupiter masses.
    """

    name: str
    mass: float
    a: float
    e: float
    omega: float
    mean_anomaly: float

    def __post_init__(self):
        assert self.mass >= 0, "masses must be non-negative."
        assert self.a > 0, "semi-major axes must be positive."
        assert 0 <= self.e < 1, "eccentricities must be in [0, 1)."


@dataclass(frozen=True)
class OrbitalConfig:
    """
    A star with two planets on coplanar orbits.

    Args:
        m0: Stellar mass in solar masses.
        planets: The inner and the outer planet.
        inclination: Inclination of the orbital plane to the sky, in degrees; planetary masses are
            divided by its sine.
        G: Gravitational constant in AU³ M☉⁻¹ yr⁻².
        mass_unit: The mass, in solar masses, taken as unit. Actions scale as its inverse while
            frequencies are unchanged.
        resonance: The ``(p, q)`` commensurability ``q n₁ ≈ p n₂``.
    """

    m0: float
    planets: Tuple[Planet, Planet]
    inclination: float = 20.0
    G: float = G_AU_YR
    mass_unit: float = 1.0
    resonance: Tuple[int, int] = (3, 1)

    def __post_init__(self):
        assert self.m0 > 0, "masses must be positive."
        assert len(self.planets) == 2, "two planets must be specified."
        assert self.planets[0].a < self.planets[1].a, "planets must be ordered by semi-major axis."
        assert math.sin(math.radians(self.inclination)) != 0, "sin(i) must be non-zero."
        assert self.mass_unit > 0, "mass_unit must be positive."
        object.__setattr__(self, "planets", tuple(self.planets))
        object.__setattr__(self, "resonance", tuple(int(x) for x in self.resonance))

    @classmethod
    def hd60532(cls) -> OrbitalConfig:
        return cls(
            m0=1.44,
            planets=(
                Planet("b", mass=3.1548, a=0.7606, e=0.278, omega=352.83, mean_anomaly=21.950),
                Planet("c", mass=7.4634, a=1.5854, e=0.038, omega=119.49, mean_anomaly=197.53),
            ),
            inclination=20.0,
        )

    def replace(self, **changes) -> OrbitalConfig:
        return replace(self, **changes)

    @property
    def star_mass(self) -> float:
        return self.m0 / self.mass_unit

    @property
    def planet_masses(self) -> np.ndarray:
        sin_i = math.sin(math.radians(self.inclination))
        return np.array([p.mass * JUPITER_MASS / sin_i for p in self.planets]) / self.mass_unit

    @property
    def gravity(self) -> float:
        return self.G * self.mass_unit

    @property
    def mu(self) -> float:
        """
        The small parameter ``max(m₁/m₀, m₂/m₀)``.
        """
        return float(self.planet_masses.max() / self.star_mass)

    def elements(self, j: int) -> Elements:
        planet = self.planets[j]
        return Elements(
            a=planet.a,
            e=planet.e,
            varpi=math.radians(planet.omega),
            mean_anomaly=math.radians(planet.mean_anomaly),
        )


@dataclass(frozen=True)
class ExpansionCaps:
    """
    Truncation of the initial expansion.

    Args:
        secular_degree: Total degree in ``(ξ₁, η₁, ξ₂, η₂)``.
        kepler_degree: Total degree in ``(L₁, L₂)``.
        fourier: Largest ``|k₁| + |k₂|`` in the mean longitudes.
        grid: FFT points per angle; must be at least four times ``fourier``.
        method: ``"jet"`` (Taylor jets on the grid) or ``"stencil"`` (least-squares fit of sampled values).
    """

    secular_degree: int = 6
    kepler_degree: int = 2
    fourier: int = 12
    grid: int = 64
    method: str = "jet"
    stencil_points: Optional[int] = None
    stencil_scale: float = 0.1

    def __post_init__(self):
        assert self.secular_degree >= 0 and self.kepler_degree >= 0, "degrees must be non-negative."
        assert self.fourier >= 0, "the Fourier cap must be non-negative."
        if self.method not in ("jet", "stencil"):
            raise ValueError(f"{self.method} is not a valid value")


@dataclass(frozen=True, eq=False)
class PoincareChart:
    """
    Reference values of the Poincaré chart: ``Λ* = β√(μa*)`` and ``n* = √(μ/a*³)``.
    """

    Lambda_star: np.ndarray
    n_star: np.ndarray
    a_star: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    masses: np.ndarray
    m0: float
    G: float

    @classmethod
    def from_config(cls, cfg: OrbitalConfig) -> PoincareChart:
        m0, masses, G = cfg.star_mass, cfg.planet_masses, cfg.gravity
        a = np.array([p.a for p in cfg.planets])
        beta = m0 * masses / (m0 + masses)
        mu = G * (m0 + masses)
        return cls(
            Lambda_star=beta * np.sqrt(mu * a),
            n_star=np.sqrt(mu / a**3),
            a_star=a,
            beta=beta,
            mu=mu,
            masses=masses,
            m0=m0,
            G=G,
        )

    def kepler_coefficients(self, j: int, degree: int) -> np.ndarray:
        """
        Taylor coefficients in ``L`` of ``-μ²β³ / (2(Λ* + L)²)``.
        """
        n, Lambda = self.n_star[j], self.Lambda_star[j]
        out = np.zeros(degree + 1)
        for d in range(degree + 1):
            if Lambda == 0:
                out[d] = n if d == 1 else 0.0
            else:
                out[d] = -0.5 * n * Lambda ** (1 - d) * (-1) ** d * (d + 1)
        return out


POINCARE_VARIABLES = ("L1", "L2", "xi1", "eta1", "xi2", "eta2")


@dataclass(frozen=True, eq=False)
class PoincareExpansion:
    """
    ``H = Σ c L₁^l₁ L₂^l₂ ξ₁^a₁ η₁^b₁ ξ₂^a₂ η₂^b₂ exp(i(k₁λ₁ + k₂λ₂))`` with exponents in the order of
    :data:`POINCARE_VARIABLES`.
    """

    chart: PoincareChart
    caps: ExpansionCaps
    exponents: np.ndarray
    harmonics: np.ndarray
    coefficients: np.ndarray

    def __len__(self):
        return len(self.coefficients)

    def evaluate(self, L, lam, xi, eta) -> np.ndarray:
        """
        Evaluates at points given as arrays of shape (P, 2) per variable pair.
        """
        L, lam, xi, eta = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (L, lam, xi, eta))
        variables = np.stack([L[:, 0], L[:, 1], xi[:, 0], eta[:, 0], xi[:, 1], eta[:, 1]], axis=1)
        monomials = np.prod(variables[:, None, :] ** self.exponents[None, :, :], axis=2)
        phases = np.exp(1j * (lam @ self.harmonics.T))
        return ((monomials * phases) @ self.coefficients).real

    def coefficient(self, exponent: Sequence[int], harmonic: Sequence[int]) -> complex:
        mask = np.all(self.exponents == np.asarray(exponent), axis=1) & np.all(
            self.harmonics == np.asarray(harmonic), axis=1
        )
        return complex(self.coefficients[mask].sum())

    def save(self, path: Union[str, Path]):
        np.savez(
            path,
            exponents=self.exponents,
            harmonics=self.harmonics,
            coefficients=self.coefficients,
        )

    @classmethod
    def load(cls, path: Union[str, Path], chart: PoincareChart, caps: ExpansionCaps) -> PoincareExpansion:
        with np.load(path) as data:
            return cls(chart, caps, data["exponents"], data["harmonics"], data["coefficients"])


def _planet_jets(chart: PoincareChart, j: int, lam: np.ndarray, space: JetSpace, origin) -> Tuple[Jet, ...]:
    batch = np.broadcast_shapes(np.shape(lam), *(np.shape(o) for o in origin))
    L = space.variable(0, origin[0], batch)
    xi = space.variable(1, origin[1], batch)
    eta = space.variable(2, origin[2], batch)
    beta, mu = chart.beta[j], chart.mu[j]

    Lam = chart.Lambda_star[j] + L
    rho = (xi * xi + eta * eta) * 0.5 / Lam
    two_minus = 2 - rho
    f = two_minus.sqrt() / (2 * Lam).sqrt()
    k = xi * f
    h = -(eta * f)
    bprime = 1 / two_minus
    a = Lam * Lam / (beta * beta * mu)
    n = math.sqrt(mu) * a ** (-1.5)

    F = space.constant(np.broadcast_to(lam, batch), batch)
    for _ in range(_KEPLER_ITERATIONS):
        sin, cos = F.sincos()
        F = F - (F - k * sin + h * cos - lam) / (1 - k * cos - h * sin)
    sin, cos = F.sincos()
    hk = h * k * bprime
    one_h = 1 - h * h * bprime
    one_k = 1 - k * k * bprime
    x = a * (one_h * cos + hk * sin - k)
    y = a * (one_k * sin + hk * cos - h)
    r = a * (1 - k * cos - h * sin)
    factor = n * a * a / r
    vx = factor * (hk * cos - one_h * sin)
    vy = factor * (one_k * cos - hk * sin)
    return x, y, vx, vy


def _interaction(chart: PoincareChart, first: Sequence[Jet], second: Sequence[Jet]) -> Jet:
    x1, y1, vx1, vy1 = first
    x2, y2, vx2, vy2 = second
    dx, dy = x1 - x2, y1 - y2
    inverse = (dx * dx + dy * dy) ** (-0.5)
    kinetic = (vx1 * vx2 + vy1 * vy2) * (chart.beta[0] * chart.beta[1] / chart.m0)
    return kinetic - inverse * (chart.G * chart.masses[0] * chart.masses[1])


def _planet_space(caps: ExpansionCaps) -> JetSpace:
    return JetSpace([(1, caps.kepler_degree), (2, caps.secular_degree)])


def _full_space(caps: ExpansionCaps) -> JetSpace:
    return JetSpace([(2, caps.kepler_degree), (4, caps.secular_degree)])


def _embed_planet(full: JetSpace, jets: Sequence[Jet], j: int) -> List[Jet]:
    return [full.embed(jet, [j, 2 + 2 * j, 3 + 2 * j]) for jet in jets]


@timeit
def _grid_by_jets(chart: PoincareChart, caps: ExpansionCaps, grid: np.ndarray) -> np.ndarray:
    space, full = _planet_space(caps), _full_space(caps)
    zero = (0.0, 0.0, 0.0)
    planets = [_embed_planet(full, _planet_jets(chart, j, grid, space, zero), j) for j in (0, 1)]
    N = len(grid)
    i1, i2 = (x.ravel() for x in np.meshgrid(np.arange(N), np.arange(N), indexing="ij"))
    out = np.empty((N * N, full.size))
    for start in range(0, N * N, _GRID_CHUNK):
        rows = slice(start, start + _GRID_CHUNK)
        first = [Jet(full, jet.c[i1[rows]]) for jet in planets[0]]
        second = [Jet(full, jet.c[i2[rows]]) for jet in planets[1]]
        out[rows] = _interaction(chart, first, second).c
    return out.reshape(N, N, full.size)


@timeit
def _grid_by_stencil(chart: PoincareChart, caps: ExpansionCaps, grid: np.ndarray) -> np.ndarray:
    full = _full_space(caps)
    count = caps.stencil_points or 2 * full.size
    if count < full.size:
        raise ExpansionError(f"singular stencil: {count} points for {full.size} monomials.")
    rng = np.random.default_rng(0)
    unit = rng.uniform(-1.0, 1.0, size=(count, 6))
    scales = np.array(
        [chart.Lambda_star[0], chart.Lambda_star[1]]
        + [math.sqrt(2 * chart.Lambda_star[0])] * 2
        + [math.sqrt(2 * chart.Lambda_star[1])] * 2
    )
    scales = scales * caps.stencil_scale
    points = unit * scales
    scalar = JetSpace([(1, 0), (2, 0)])
    design = full.monomials_at(unit)
    rank = np.linalg.matrix_rank(design)
    if rank < full.size:
        raise ExpansionError(f"singular stencil: rank {rank} for {full.size} monomials.")
    N = len(grid)
    values = np.empty((count, N, N))
    for start in range(0, count, 8):
        p = points[start : start + 8]
        q = p[:, :, None, None]
        first = _planet_jets(chart, 0, grid[None, :, None], scalar, (q[:, 0], q[:, 2], q[:, 3]))
        second = _planet_jets(chart, 1, grid[None, None, :], scalar, (q[:, 1], q[:, 4], q[:, 5]))
        values[start : start + 8] = _interaction(chart, first, second).c[..., 0]
    fitted, *_ = np.linalg.lstsq(design, values.reshape(count, N * N), rcond=None)
    fitted /= np.prod(scales ** full.exponents, axis=1)[:, None]
    return fitted.T.reshape(N, N, full.size)


@timeit
def build_expansion(cfg: OrbitalConfig, caps: ExpansionCaps = ExpansionCaps()) -> PoincareExpansion:
    """
    Expands the Hamiltonian in Taylor–Fourier series around circular orbits at the reference semi-axes.

    Raises:
        ExpansionError: When the FFT grid is too coarse for the Fourier cap, or the stencil is singular.
    """
    if caps.grid < GRID_FACTOR * caps.fourier:
        raise ExpansionError(
            f"FFT grid of {caps.grid} points is too coarse for Fourier cap {caps.fourier} "
            f"(at least {GRID_FACTOR * caps.fourier} required)."
        )
    chart = PoincareChart.from_config(cfg)
    full = _full_space(caps)
    exponents_list, harmonics_list, coefficients_list = [], [], []

    if np.all(chart.masses > 0):
        grid = 2 * np.pi * np.arange(caps.grid) / caps.grid
        if caps.method == "jet":
            values = _grid_by_jets(chart, caps, grid)
        else:
            values = _grid_by_stencil(chart, caps, grid)
        spectrum = np.fft.fft2(values, axes=(0, 1)) / caps.grid**2
        k = np.rint(np.fft.fftfreq(caps.grid, 1.0 / caps.grid)).astype(np.int64)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        within = np.abs(k1) + np.abs(k2) <= caps.fourier
        selected = spectrum[within]
        harmonics = np.stack([k1[within], k2[within]], axis=1)
        threshold = EXPANSION_PRUNE * max(np.abs(selected).max(), 1e-300)
        rows, monomials = np.nonzero(np.abs(selected) > threshold)
        exponents_list.append(full.exponents[monomials])
        harmonics_list.append(harmonics[rows])
        coefficients_list.append(selected[rows, monomials])
    else:
        log.info("massless planet: the perturbation vanishes.")

    for j in (0, 1):
        coefficients = chart.kepler_coefficients(j, caps.kepler_degree)
        exponents = np.zeros((len(coefficients), 6), dtype=np.int64)
        exponents[:, j] = np.arange(len(coefficients))
        exponents_list.append(exponents)
        harmonics_list.append(np.zeros((len(coefficients), 2), dtype=np.int64))
        coefficients_list.append(coefficients.astype(complex))

    exponents = np.concatenate(exponents_list)
    harmonics = np.concatenate(harmonics_list)
    coefficients = np.concatenate(coefficients_list)
    keys, inverse = np.unique(np.column_stack([exponents, harmonics]), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    summed = np.zeros(len(keys), dtype=complex)
    np.add.at(summed, inverse, coefficients)
    keep = summed != 0
    log.info("expansion: %d terms.", int(keep.sum()))
    return PoincareExpansion(chart, caps, keys[keep, :6], keys[keep, 6:], summed[keep])


@dataclass(frozen=True, eq=False)
class PoincareState:
    """
    A point in Poincaré variables, with the derived ``(L, I, ϖ)``.
    """

    Lambda: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    L: np.ndarray
    I: np.ndarray  # noqa: E741
    varpi: np.ndarray


def poincare_state(cfg: OrbitalConfig, chart: Optional[PoincareChart] = None) -> PoincareState:
    """
    Maps the configured elements to Poincaré variables.
    """
    chart = chart or PoincareChart.from_config(cfg)
    a = np.array([p.a for p in cfg.planets])
    e = np.array([p.e for p in cfg.planets])
    varpi = np.radians([p.omega for p in cfg.planets])
    lam = np.mod(np.radians([p.mean_anomaly for p in cfg.planets]) + varpi, 2 * np.pi)
    Lambda = chart.beta * np.sqrt(chart.mu * a)
    gamma = Lambda * (1 - np.sqrt(1 - e**2))
    return PoincareState(
        Lambda=Lambda,
        lam=lam,
        xi=np.sqrt(2 * gamma) * np.cos(varpi),
        eta=-np.sqrt(2 * gamma) * np.sin(varpi),
        L=Lambda - chart.Lambda_star,
        I=gamma,
        varpi=varpi,
    )


@dataclass(frozen=True, eq=False)
class ResonantChart:
    """
    The unimodular change to resonant variables and the data completed by later stages.

    The angle map acts on ``(-ϖ₁, -ϖ₂, λ₁, λ₂)`` and yields ``(δ, σ, φ, θ)`` with ``δ = ϖ₂ - ϖ₁``,
    ``σ = qλ₁ - pλ₂ + (p-q)ϖ₁``, ``φ = -ϖ₂`` and ``θ = λ₂``. The action map is its inverse transpose,
    acting on ``(I₁, I₂, L₁, L₂)`` and yielding ``(p_δ, p_σ, p_φ, p_θ)``.
    """

    resonance: Tuple[int, int]
    angle_matrix: np.ndarray
    p_phi: Optional[float] = None
    p_theta: Optional[float] = None
    equilibrium: Optional[Tuple[float, float]] = None
    C: Optional[np.ndarray] = None
    omega: Optional[Tuple[float, float]] = None

    @classmethod
    def for_resonance(cls, p: int, q: int) -> ResonantChart:
        assert p > q > 0, "p must exceed q."
        B = np.array(
            [
                [1, -1, 0, 0],
                [-(p - q), 0, q, -p],
                [0, 1, 0, 0],
                [0, 0, 0, 1],
            ],
            dtype=np.int64,
        )
        if abs(round(np.linalg.det(B))) != 1:
            raise ValueError(f"{(p, q)} is not a valid value")
        return cls(resonance=(p, q), angle_matrix=B)

    @property
    def inverse_angle_matrix(self) -> np.ndarray:
        return np.rint(np.linalg.inv(self.angle_matrix)).astype(np.int64)

    @property
    def action_matrix(self) -> np.ndarray:
        return self.inverse_angle_matrix.T

    def is_canonical(self) -> bool:
        return bool(np.array_equal(self.action_matrix.T @ self.angle_matrix, np.eye(4, dtype=np.int64)))

    def bind(self, state: PoincareState) -> ResonantChart:
        """
        Fixes the cyclic actions ``p_φ`` and ``p_θ`` to their values at ``state``.
        """
        p, _ = self.to_resonant(state)
        return replace(self, p_phi=float(p[2]), p_theta=float(p[3]))

    def to_resonant(self, state: PoincareState) -> Tuple[np.ndarray, np.ndarray]:
        actions = np.concatenate([state.I, state.L])
        angles = np.concatenate([-np.asarray(state.varpi), state.lam])
        return self.action_matrix @ actions, self.angle_matrix @ angles

    def from_resonant(self, p: np.ndarray, angles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns ``(I₁, I₂, L₁, L₂)`` and ``(ϖ₁, ϖ₂, λ₁, λ₂)``.
        """
        actions = self.angle_matrix.T @ np.asarray(p, dtype=float)
        old = self.inverse_angle_matrix @ np.asarray(angles, dtype=float)
        return actions, np.array([-old[0], -old[1], old[2], old[3]])

    def harmonics(self, m: np.ndarray, k: np.ndarray) -> np.ndarray:
        """
        Maps harmonics ``m`` on ``(ϖ₁, ϖ₂)`` and ``k`` on ``(λ₁, λ₂)`` to harmonics on ``(δ, σ, φ, θ)``.
        """
        kappa = np.column_stack([-np.asarray(m)[:, 0], -np.asarray(m)[:, 1], np.asarray(k)])
        return kappa @ self.inverse_angle_matrix

    def forms(self) -> np.ndarray:
        """
        The old actions ``(I₁, I₂, L₁, L₂)`` as affine forms ``c₀ + c_δ p_δ + c_σ p_σ``.
        """
        assert self.p_phi is not None and self.p_theta is not None, "the chart is not bound."
        B = self.angle_matrix.astype(float)
        return np.column_stack([B[2] * self.p_phi + B[3] * self.p_theta, B[0], B[1]])


@dataclass(frozen=True, eq=False)
class ResonantHamiltonian:
    """
    ``H̄ = Σ c Π_f F_f(p_δ, p_σ)^{e_f} exp(i(n_δ δ + n_σ σ))`` for affine forms ``F_f = c₀ + c_δ p_δ + c_σ p_σ``.

    Exponents may be half-integers; the forms carrying them must stay positive.
    """

    forms: np.ndarray
    exponents: np.ndarray
    harmonics: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        assert self.forms.shape[1] == 3, "forms must be affine in (p_delta, p_sigma)."
        assert self.exponents.shape == (len(self.coefficients), len(self.forms)), "one exponent per form."
        assert self.harmonics.shape == (len(self.coefficients), 2), "two harmonics per term."

    def __len__(self):
        return len(self.coefficients)

    def form_values(self, p_delta, p_sigma) -> np.ndarray:
        return self.forms[:, 0] + self.forms[:, 1] * np.asarray(p_delta)[..., None] + self.forms[:, 2] * np.asarray(
            p_sigma
        )[..., None]

    def evaluate(self, p_delta, p_sigma, delta, sigma) -> np.ndarray:
        values = self.form_values(p_delta, p_sigma)
        monomials = np.prod(values[..., None, :] ** self.exponents, axis=-1)
        angles = np.stack(np.broadcast_arrays(delta, sigma), axis=-1)
        phases = np.exp(1j * (angles @ self.harmonics.T))
        return ((monomials * phases) @ self.coefficients).real

    def taylor(self, point: Sequence[float], degree: int) -> Jet:
        """
        Returns the Taylor jet in ``(y₁, y₂, x₁, x₂) = (p_δ, p_σ, δ, σ) - point``.

        Raises:
            EquilibriumError: When a form raised to a fractional power is not positive at the point.
        """
        space = JetSpace([(4, degree)])
        p_delta, p_sigma, delta, sigma = point
        y1, y2 = space.variable(0), space.variable(1)
        values = self.form_values(p_delta, p_sigma)
        fractional = np.any(self.exponents != np.rint(self.exponents), axis=0)
        if np.any(fractional & (values <= 0)):
            raise EquilibriumError(f"an action is not positive at {tuple(point)}.")
        forms = [values[f] + self.forms[f, 1] * y1 + self.forms[f, 2] * y2 for f in range(len(self.forms))]
        tuples, tuple_index = np.unique(self.exponents, axis=0, return_inverse=True)
        harmonics, harmonic_index = np.unique(self.harmonics, axis=0, return_inverse=True)
        powers: Dict[Tuple[int, float], Jet] = {}
        rows = []
        for exponents in tuples:
            product = space.constant(1.0)
            for f, e in enumerate(exponents):
                if e == 0:
                    continue
                if (f, e) not in powers:
                    powers[(f, e)] = forms[f] ** (int(e) if e == int(e) else float(e))
                product = product * powers[(f, e)]
            rows.append(product.c)
        monomials = np.array(rows)
        weights = np.zeros((len(harmonics), len(tuples)), dtype=complex)
        np.add.at(weights, (harmonic_index.ravel(), tuple_index.ravel()), self.coefficients)
        secular = weights @ monomials
        phase = np.zeros((len(harmonics), space.size))
        phase[:, 0] = harmonics @ np.array([delta, sigma])
        phase[:, space.index([0, 0, 1, 0])] = harmonics[:, 0]
        phase[:, space.index([0, 0, 0, 1])] = harmonics[:, 1]
        trig = Jet(space, phase).exp_i()
        total = Jet(space, secular) * trig
        return Jet(space, total.c.sum(axis=0).real.copy())

    def save(self, path: Union[str, Path]):
        np.savez(
            path, forms=self.forms, exponents=self.exponents, harmonics=self.harmonics, coefficients=self.coefficients
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> ResonantHamiltonian:
        with np.load(path) as data:
            return cls(data["forms"], data["exponents"], data["harmonics"], data["coefficients"])


def _polar_table(a: int, b: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``ξ^a η^b = (√I)^{a+b} Σ c_m e^{imϖ}`` for ``ξ = √(2I) cos ϖ``, ``η = -√(2I) sin ϖ``.
    """
    out: Dict[int, complex] = {}
    scale = 2 ** (-(a + b) / 2) * (1j**b)
    for r in range(a + 1):
        for s in range(b + 1):
            m = 2 * r - a + 2 * s - b
            out[m] = out.get(m, 0) + scale * comb(a, r, exact=True) * comb(b, s, exact=True) * (-1) ** (b - s)
    ms = np.array(sorted(out), dtype=np.int64)
    return ms, np.array([out[m] for m in ms])


@timeit
def to_resonant_average(expansion: PoincareExpansion, chart: ResonantChart) -> ResonantHamiltonian:
    """
    Rewrites the expansion in resonant variables and keeps the terms independent of ``θ``.

    Raises:
        ExpansionError: When a surviving term depends on ``φ``.
    """
    zero_m = np.zeros((len(expansion), 2), dtype=np.int64)
    theta = chart.harmonics(zero_m, expansion.harmonics)[:, 3]
    assert np.all(chart.inverse_angle_matrix[:2, 3] == 0), "θ must not involve the perihelia."
    keep = theta == 0
    exponents, harmonics, coefficients = (
        expansion.exponents[keep],
        expansion.harmonics[keep],
        expansion.coefficients[keep],
    )

    out_exponents, out_harmonics, out_coefficients = [], [], []
    secular = exponents[:, 2:]
    groups, group_index = np.unique(secular, axis=0, return_inverse=True)
    group_index = group_index.ravel()
    for g, (a1, b1, a2, b2) in enumerate(groups):
        rows = np.nonzero(group_index == g)[0]
        m1, c1 = _polar_table(int(a1), int(b1))
        m2, c2 = _polar_table(int(a2), int(b2))
        for (mm1, cc1), (mm2, cc2) in itertools.product(zip(m1, c1), zip(m2, c2)):
            m = np.tile([mm1, mm2], (len(rows), 1))
            resonant = chart.harmonics(m, harmonics[rows])
            out_harmonics.append(resonant)
            out_coefficients.append(coefficients[rows] * cc1 * cc2)
            e = np.empty((len(rows), 4))
            e[:, 0] = (a1 + b1) / 2
            e[:, 1] = (a2 + b2) / 2
            e[:, 2] = exponents[rows, 0]
            e[:, 3] = exponents[rows, 1]
            out_exponents.append(e)

    exponents = np.concatenate(out_exponents)
    harmonics = np.concatenate(out_harmonics)
    coefficients = np.concatenate(out_coefficients)
    keys, inverse = np.unique(np.column_stack([exponents, harmonics[:, :3]]), axis=0, return_inverse=True)
    summed = np.zeros(len(keys), dtype=complex)
    np.add.at(summed, inverse.ravel(), coefficients)
    scale = max(np.abs(summed).max(initial=0.0), 1e-300)
    phi = keys[:, 6] != 0
    worst = np.abs(summed[phi]).max(initial=0.0)
    if worst > PHI_TOLERANCE * scale:
        raise ExpansionError(f"a term depends on φ with coefficient {worst:.3e}; the resonant map is wrong.")
    keep = ~phi & (np.abs(summed) > EXPANSION_PRUNE * scale)
    log.info("resonant average: %d terms (largest φ residue %.3e).", int(keep.sum()), worst)
    return ResonantHamiltonian(
        forms=chart.forms(),
        exponents=keys[keep, :4],
        harmonics=np.rint(keys[keep, 4:6]).astype(np.int64),
        coefficients=summed[keep],
    )


@dataclass(frozen=True)
class Equilibrium:
    p_delta: float
    p_sigma: float
    angles: Tuple[float, float] = (math.pi, math.pi)
    iterations: int = 0
    residual: float = 0.0

    @property
    def point(self) -> Tuple[float, float, float, float]:
        return (self.p_delta, self.p_sigma) + tuple(self.angles)


@timeit
def find_equilibrium(
    H: ResonantHamiltonian,
    guess: Sequence[float],
    angles: Tuple[float, float] = (math.pi, math.pi),
    tol: float = 1e-12,
    max_iter: int = 50,
) -> Equilibrium:
    """
    Newton's method on the action gradient of ``H`` at fixed angles.

    Raises:
        ConvergenceError: When the Hessian is singular, an action turns negative, or ``max_iter`` is reached.
    """
    p = np.array(guess, dtype=float)
    residuals: List[float] = []
    for iteration in range(1, max_iter + 1):
        try:
            jet = H.taylor((p[0], p[1]) + tuple(angles), 2)
        except EquilibriumError as e:
            raise ConvergenceError(f"equilibrium search left the domain: {e}") from e
        gradient = jet.gradient()[:2]
        residual = float(np.abs(gradient).max())
        residuals.append(residual)
        log.debug("equilibrium iteration %d: p=%s residual=%.3e", iteration, p, residual)
        if residual < tol:
            return Equilibrium(float(p[0]), float(p[1]), tuple(angles), iteration, residual)
        hessian = jet.hessian()[:2, :2]
        try:
            step = np.linalg.solve(hessian, -gradient)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError("singular Hessian in the equilibrium search.") from e
        p = p + step
        stagnant = len(residuals) > 3 and residual >= 0.5 * min(residuals[:-1])
        if stagnant and np.abs(step).max() <= 1e-13 * np.abs(p).max():
            log.info("equilibrium: stopped at round-off with residual %.3e.", residual)
            return Equilibrium(float(p[0]), float(p[1]), tuple(angles), iteration, residual)
    raise ConvergenceError(f"equilibrium search did not converge in {max_iter} iterations.")


@dataclass(frozen=True, eq=False)
class DiagonalHamiltonian:
    """
    A polynomial in ``(Y₁, Y₂, X₁, X₂)`` whose quadratic part is ``Σ ω_j (Y_j² + X_j²) / 2``.

    ``Y`` are momenta: ``Ẏ = -∂H/∂X`` and ``Ẋ = ∂H/∂Y``. The old variables are ``origin + C @ (Y, X)``.
    """

    jet: Jet
    omega: Tuple[float, float]
    C: np.ndarray
    origin: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    gradient_jets: List[Jet] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if not self.gradient_jets:
            self.gradient_jets.extend(self.jet.derivative(v) for v in range(4))

    @property
    def degree(self) -> int:
        return self.jet.space.max_degree

    def evaluate(self, Z: np.ndarray) -> np.ndarray:
        return self.jet.evaluate(np.atleast_2d(Z))

    def vector_field(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        gradient = np.stack([g.evaluate(Z) for g in self.gradient_jets], axis=-1)
        return np.concatenate([-gradient[:, 2:], gradient[:, :2]], axis=1)

    def to_resonant(self, Z: np.ndarray) -> np.ndarray:
        """
        Returns ``(p_δ, p_σ, δ, σ)`` for rows of ``Z``.
        """
        return np.asarray(self.origin) + np.atleast_2d(Z) @ self.C.T

    def from_resonant(self, point: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(point) - np.asarray(self.origin)
        z[:, 2:] = np.mod(z[:, 2:] + np.pi, 2 * np.pi) - np.pi
        return np.linalg.solve(self.C, z.T).T

    def save(self, path: Union[str, Path]):
        np.savez(
            path,
            c=self.jet.c,
            degree=self.degree,
            omega=np.asarray(self.omega),
            C=self.C,
            origin=np.asarray(self.origin),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> DiagonalHamiltonian:
        with np.load(path) as data:
            space = JetSpace([(4, int(data["degree"]))])
            return cls(
                jet=Jet(space, data["c"].copy()),
                omega=tuple(float(x) for x in data["omega"]),
                C=data["C"].copy(),
                origin=tuple(float(x) for x in data["origin"]),
            )


def _normal_modes(S: np.ndarray) -> Tuple[np.ndarray, Tuple[float, float]]:
    A = SYMPLECTIC @ S
    values, vectors = np.linalg.eig(A)
    scale = np.abs(values).max()
    if scale == 0 or np.any(np.abs(values.real) > 1e-8 * scale) or np.any(np.abs(values.imag) < 1e-12 * scale):
        raise EquilibriumError(f"the quadratic part is not elliptic (eigenvalues {values}).")
    modes = []
    for i in np.nonzero(values.imag > 0)[0]:
        nu = float(values[i].imag)
        a, b = vectors[:, i].real, vectors[:, i].imag
        energy = float(a @ S @ a)
        if energy == 0:
            a, b = b, -a
            energy = float(a @ S @ a)
        omega = math.copysign(nu, energy)
        s = math.sqrt(abs(omega) / abs(energy))
        modes.append((omega, s * a, -s * b if omega > 0 else s * b))
    if len(modes) != 2:
        raise EquilibriumError("the quadratic part is not elliptic.")
    modes.sort(key=lambda m: abs(m[0]))
    C = np.column_stack([modes[0][1], modes[1][1], modes[0][2], modes[1][2]])
    residual = np.abs(C.T @ SYMPLECTIC @ C - SYMPLECTIC).max()
    if residual > 1e-8:
        raise EquilibriumError(f"the diagonalizing map is not symplectic (residual {residual:.3e}).")
    return C, (modes[0][0], modes[1][0])


@timeit
def diagonalize(
    H: Union[ResonantHamiltonian, Jet],
    equilibrium: Optional[Equilibrium] = None,
    degree: int = 6,
) -> DiagonalHamiltonian:
    """
    Translates to the equilibrium and brings the quadratic part to a pair of harmonic oscillators.

    ``H`` is either a resonant Hamiltonian with its equilibrium, or a polynomial jet in
    ``(y₁, y₂, x₁, x₂)`` (momenta first) already centered at the equilibrium.

    Raises:
        EquilibriumError: When the quadratic part is not elliptic.
    """
    if isinstance(H, ResonantHamiltonian):
        assert equilibrium is not None, "an equilibrium must be specified."
        jet = H.taylor(equilibrium.point, degree)
        origin = equilibrium.point
    else:
        jet, origin = H, (0.0, 0.0, 0.0, 0.0)
    S = jet.hessian()
    C, omega = _normal_modes(S)
    diagonal = jet.compose_linear(C).real()
    space = diagonal.space
    target = np.diag([omega[0], omega[1], omega[0], omega[1]])
    residual = np.abs(diagonal.hessian() - target).max() / max(abs(omega[1]), 1e-300)
    if residual > 1e-8:
        raise EquilibriumError(f"quadratic part is not diagonal after the transform (residual {residual:.3e}).")
    for i in range(4):
        for j in range(i, 4):
            e = np.zeros(4, dtype=np.int64)
            e[i] += 1
            e[j] += 1
            diagonal.c[space.index(e)] = 0.5 * target[i, i] if i == j else 0.0
    linear = [space.index(e) for e in np.eye(4, dtype=np.int64)]
    log.info(
        "diagonalize: ω=(%.10g, %.10g), dropped linear residue %.3e.",
        omega[0],
        omega[1],
        np.abs(diagonal.c[linear]).max(),
    )
    diagonal.c[linear] = 0.0
    return DiagonalHamiltonian(jet=diagonal, omega=omega, C=C, origin=tuple(float(x) for x in origin))


def _action_angle_table(a: int, b: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``Y^a X^b = (√J)^{a+b} Σ c_k e^{ikϑ}`` for ``Y = √(2J) cos ϑ``, ``X = √(2J) sin ϑ``.
    """
    out: Dict[int, complex] = {}
    scale = 2 ** (-(a + b) / 2) * ((-1j) ** b)
    for r in range(a + 1):
        for s in range(b + 1):
            k = 2 * r - a + 2 * s - b
            out[k] = out.get(k, 0) + scale * comb(a, r, exact=True) * comb(b, s, exact=True) * (-1) ** (b - s)
    ks = np.array(sorted(out), dtype=np.int64)
    return ks, np.array([out[k] for k in ks])


def to_action_angle(H: Union[DiagonalHamiltonian, Jet], degree_cap: Optional[int] = None) -> SqrtSeries:
    """
    Rewrites a polynomial in ``(Y₁, Y₂, X₁, X₂)`` exactly as a series in ``(√J, ϑ)``.
    """
    jet = H.jet if isinstance(H, DiagonalHamiltonian) else H
    assert jet.c.ndim == 1 and jet.space.nvars == 4, "a batch-less jet in four variables is required."
    cap = jet.space.max_degree if degree_cap is None else degree_cap
    exponents, harmonics, coefficients = [], [], []
    for position in np.nonzero(jet.c)[0]:
        a1, a2, b1, b2 = (int(x) for x in jet.space.exponents[position])
        k1, c1 = _action_angle_table(a1, b1)
        k2, c2 = _action_angle_table(a2, b2)
        grid1, grid2 = np.meshgrid(np.arange(len(k1)), np.arange(len(k2)), indexing="ij")
        grid1, grid2 = grid1.ravel(), grid2.ravel()
        exponents.append(np.tile([a1 + b1, a2 + b2], (len(grid1), 1)))
        harmonics.append(np.column_stack([k1[grid1], k2[grid2]]))
        coefficients.append(jet.c[position] * c1[grid1] * c2[grid2])
    if not coefficients:
        return SqrtSeries.zero(degree_cap=cap)
    return SqrtSeries.from_arrays(
        np.concatenate(exponents), np.concatenate(harmonics), np.concatenate(coefficients), degree_cap=cap
    )


def from_action_angle(series: SqrtSeries, degree: Optional[int] = None) -> Jet:
    """
    Rewrites a series in ``(√J, ϑ)`` as a polynomial jet in ``(Y₁, Y₂, X₁, X₂)``.
    """
    space = JetSpace([(4, series.degree_cap if degree is None else degree)])
    plus = [space.variable(j).c + 1j * space.variable(2 + j).c for j in (0, 1)]
    minus = [space.variable(j).c - 1j * space.variable(2 + j).c for j in (0, 1)]
    cache: Dict[Tuple[int, int, int], np.ndarray] = {}

    def power(j: int, sign: int, n: int) -> np.ndarray:
        key = (j, sign, n)
        if key not in cache:
            if n == 0:
                cache[key] = space.constant(1.0).c.astype(complex)
            else:
                base = plus[j] if sign > 0 else minus[j]
                cache[key] = space._multiply(power(j, sign, n - 1), base)
        return cache[key]

    out = np.zeros(space.size, dtype=complex)
    for (l1, l2), (k1, k2), c in series.terms():
        term = c * 2 ** (-(l1 + l2) / 2)
        product = space._multiply(power(0, 1, (l1 + k1) // 2), power(0, -1, (l1 - k1) // 2))
        product = space._multiply(product, power(1, 1, (l2 + k2) // 2))
        product = space._multiply(product, power(1, -1, (l2 - k2) // 2))
        out += term * product
    return Jet(space, out.real.copy())


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """
    The configured state in every chart of the chain.
    """

    poincare: PoincareState
    resonant_actions: np.ndarray
    resonant_angles: np.ndarray
    translated: np.ndarray
    diagonal: np.ndarray

    @property
    def actions(self) -> np.ndarray:
        return 0.5 * (self.diagonal[:2] ** 2 + self.diagonal[2:] ** 2)

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.diagonal[2:], self.diagonal[:2])


def initial_condition(cfg: OrbitalConfig, chart: ResonantChart, diagonal: DiagonalHamiltonian) -> InitialCondition:
    """
    Maps the configured elements through the Poincaré, resonant, translated and diagonal charts.
    """
    state = poincare_state(cfg)
    p, angles = chart.to_resonant(state)
    point = np.array([p[0], p[1], angles[0], angles[1]])
    translated = point - np.asarray(diagonal.origin)
    translated[2:] = np.mod(translated[2:] + np.pi, 2 * np.pi) - np.pi
    Z = np.linalg.solve(diagonal.C, translated)
    return InitialCondition(
        poincare=state,
        resonant_actions=p,
        resonant_angles=np.mod(angles, 2 * np.pi),
        translated=translated,
        diagonal=Z,
    )
