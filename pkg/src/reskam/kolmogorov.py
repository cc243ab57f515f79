"""
Kolmogorov normalization without action translations.

The Hamiltonian in the adapted variables is graded as ``f_ℓ^(r,s)``: action degree ``ℓ`` and order ``s``, the
Fourier degree of a block being at most ``K·s``. Step ``r`` removes ``f₀^(r-1,r)`` with ``χ₀^(r)(q)`` and then
``f₁^(r-1,r)`` with ``χ₁^(r)(p, q)``, linear in the actions; the angle-free part of ``f₁`` updates the frequencies,
so the torus frequency is found by the algorithm rather than fixed in advance::

    H^(r) = E^(r) + ω^(r)·p + Σ_{ℓ≥2} f_ℓ^(r,s) + Σ_{s>r} (f₀^(r,s) + f₁^(r,s))
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._chain import TransformChain
from ._decorators import timeit
from ._ledger import NormLedger
from .adapt import K, AdaptedChart, adapted_chart
from .birkhoff import homological_residual
from .errors import ConvergenceError
from .pseries import ActionSeries, FrequencyVector, Grade, SolvedBlock, SqrtSeries, lie_transform

__all__ = (
    "KolmogorovOptions",
    "KolmogorovState",
    "CalibrationResult",
    "solve_chi0",
    "solve_chi1",
    "kolmo_step",
    "kolmogorov_normalize",
    "frequency_map",
    "newton_calibrate",
    "homological_residual",
    "grade_hamiltonian",
)

log = logging.getLogger(__name__)

ENERGY: Grade = (0, 0)
KERNEL: Grade = (1, 0)


@dataclass(frozen=True)
class KolmogorovOptions:
    """
    Args:
        steps: The number of normalization steps ``r̄``.
        order_cap: The largest order ``s`` kept in the grading.
        divisor_floor: The smallest accepted ``|k·ω|``, relative to ``‖ω‖``.
        carry_frequency_shift: Whether the brackets of the frequency correction ``⟨f̂₁⟩`` are carried to the
            higher orders; when false ``f₁^(r,ir)`` gets only the ``(i-1)/i!`` term of ``f̂₁^(r,r)``.
    """

    steps: int = 5
    order_cap: int = 12
    divisor_floor: float = 1e-10
    carry_frequency_shift: bool = True

    def __post_init__(self):
        assert self.steps >= 0, "steps must be non-negative."
        assert self.order_cap >= 1, "order_cap must be positive."
        assert self.divisor_floor >= 0, "divisor_floor must be non-negative."

    def floor(self, omega: Sequence[float]) -> float:
        return self.divisor_floor * float(np.linalg.norm(np.asarray(omega, dtype=float)))


def grade_hamiltonian(hamiltonian: ActionSeries, order_cap: int) -> Dict[Grade, ActionSeries]:
    """
    Splits a series into the blocks ``f_ℓ^(0,s)`` with ``s = ⌈|k| / K⌉``.
    """
    if not hamiltonian:
        return {}
    ell = hamiltonian.degrees()
    order = -(-hamiltonian.fourier_degrees() // K)
    out = {}
    for grade in sorted({(int(a), int(b)) for a, b in zip(ell, order)}):
        if grade[1] > order_cap:
            continue
        block = hamiltonian.filter(
            lambda e, k, g=grade: (e.sum(axis=1) == g[0]) & (-(-np.abs(k).sum(axis=1) // K) == g[1])
        )
        out[grade] = block
    return out


@dataclass(frozen=True, eq=False)
class KolmogorovState:
    """
    The Hamiltonian after ``step`` Kolmogorov steps.

    Args:
        step: The number of steps performed.
        terms: The blocks ``f_ℓ^(r,s)`` keyed by ``(ℓ, s)``; ``(0, 0)`` is the energy and ``(1, 0)`` is ``ω^(r)·p``.
        chain: The generating functions ``χ₀^(1), χ₁^(1), χ₀^(2), ...``.
        ledger: Norms of the generating functions, of the remainder and the frequencies.
    """

    step: int
    terms: Dict[Grade, ActionSeries]
    chain: TransformChain = field(default_factory=TransformChain)
    ledger: NormLedger = field(default_factory=NormLedger)
    options: KolmogorovOptions = field(default_factory=KolmogorovOptions)

    @classmethod
    def from_hamiltonian(
        cls, hamiltonian: ActionSeries, options: Optional[KolmogorovOptions] = None
    ) -> KolmogorovState:
        """
        Grades ``H^(0)``.

        Raises:
            ValueError: When the Hamiltonian has no angle-free linear part.
        """
        options = options or KolmogorovOptions()
        terms = grade_hamiltonian(hamiltonian, options.order_cap)
        if KERNEL not in terms:
            raise ValueError("the Hamiltonian has no term ω·p.")
        terms.setdefault(ENERGY, ActionSeries.zero(**hamiltonian.caps))
        return cls(step=0, terms=terms, options=options)

    @property
    def caps(self) -> Dict[str, int]:
        return self.terms[KERNEL].caps

    @property
    def omega(self) -> FrequencyVector:
        kernel = self.terms[KERNEL]
        return FrequencyVector((kernel.coefficient((1, 0), (0, 0)).real, kernel.coefficient((0, 1), (0, 0)).real))

    @property
    def energy(self) -> float:
        return self.block(0, 0).coefficient((0, 0), (0, 0)).real

    def block(self, ell: int, s: int) -> ActionSeries:
        return self.terms.get((ell, s), ActionSeries.zero(**self.caps))

    def hamiltonian(self) -> ActionSeries:
        return ActionSeries.sum(list(self.terms.values()), **self.caps)

    def perturbation_norms(self) -> Dict[Grade, float]:
        """
        Norms of the blocks ``f₀`` and ``f₁`` still to be removed.
        """
        return {g: f.norm() for g, f in sorted(self.terms.items()) if g[0] <= 1 and g[1] > self.step}

    def is_normalized(self) -> bool:
        """
        True when ``f₀^(r,s) = f₁^(r,s) = 0`` for ``1 ≤ s ≤ r``.
        """
        return not any(f for (ell, s), f in self.terms.items() if ell <= 1 and 1 <= s <= self.step)

    @property
    def generators(self) -> List[Tuple[ActionSeries, ActionSeries]]:
        pairs = list(self.chain)
        return [(pairs[i], pairs[i + 1]) for i in range(0, len(pairs), 2)]


def solve_chi0(
    f0: ActionSeries, omega: Sequence[float], floor: Optional[float] = None
) -> Tuple[ActionSeries, float]:
    """
    Solves ``L_χ₀(ω·p) + f₀ = ⟨f₀⟩_q``.

    Returns:
        ``χ₀`` and the energy correction ``ΔE = ⟨f₀⟩_q``.

    Raises:
        SmallDivisorError: When a harmonic of ``f₀`` meets a divisor below the floor.
    """
    if floor is None:
        floor = KolmogorovOptions().floor(omega)
    average, oscillating = f0.harmonic_split()
    return oscillating.divide_by_divisors(omega, floor), average.coefficient((0, 0), (0, 0)).real


def solve_chi1(
    f1: ActionSeries, omega: Sequence[float], floor: Optional[float] = None
) -> Tuple[ActionSeries, np.ndarray]:
    """
    Solves ``L_χ₁(ω·p) + f̂₁ = ⟨f̂₁⟩_q``.

    Returns:
        ``χ₁`` and the frequency correction ``Δω``, the coefficients of ``p₁`` and ``p₂`` in ``⟨f̂₁⟩_q``.

    Raises:
        SmallDivisorError: When a harmonic of ``f̂₁`` meets a divisor below the floor.
    """
    if floor is None:
        floor = KolmogorovOptions().floor(omega)
    average, oscillating = f1.harmonic_split()
    shift = np.array([average.coefficient((1, 0), (0, 0)).real, average.coefficient((0, 1), (0, 0)).real])
    return oscillating.divide_by_divisors(omega, floor), shift


def _within(state: KolmogorovState, order_cap: int) -> Callable[[Grade], bool]:
    action_cap = state.caps["action_cap"]
    return lambda g: 0 <= g[0] <= action_cap and g[1] <= order_cap


def _absorb(terms: Dict[Grade, ActionSeries], source: Grade, into: Grade) -> Dict[Grade, ActionSeries]:
    terms = dict(terms)
    moved = terms.pop(source, None)
    if moved is not None:
        terms[into] = terms[into] + moved if into in terms else moved
    return terms


def remove_f0(state: KolmogorovState, r: int) -> Tuple[Dict[Grade, ActionSeries], ActionSeries]:
    """
    Applies ``exp(L_χ₀^(r))``; the average of ``f₀^(r-1,r)`` joins the energy.
    """
    caps = state.caps
    chi0, dE = solve_chi0(state.block(0, r), state.omega, state.options.floor(state.omega))
    hat = lie_transform(
        state.terms,
        chi0,
        delta=(-1, r),
        within=_within(state, state.options.order_cap),
        solved=SolvedBlock(kernel=KERNEL, target=(0, r), normal=ActionSeries.constant(dE, **caps)),
    )
    return _absorb(hat, (0, r), ENERGY), chi0


def remove_f1(
    state: KolmogorovState, terms: Dict[Grade, ActionSeries], r: int
) -> Tuple[Dict[Grade, ActionSeries], ActionSeries, np.ndarray]:
    """
    Applies ``exp(L_χ₁^(r))``; the average of ``f̂₁^(r,r)`` joins ``ω·p``.
    """
    caps = state.caps
    f1 = terms.get((1, r), ActionSeries.zero(**caps))
    chi1, dw = solve_chi1(f1, state.omega, state.options.floor(state.omega))
    out = lie_transform(
        terms,
        chi1,
        delta=(0, r),
        within=_within(state, state.options.order_cap),
        solved=SolvedBlock(kernel=KERNEL, target=(1, r), normal=ActionSeries.frequency_term(dw, **caps)),
        carry_normal=state.options.carry_frequency_shift,
    )
    return _absorb(out, (1, r), KERNEL), chi1, dw


def kolmo_step(state: KolmogorovState) -> KolmogorovState:
    """
    Performs one normalization step: ``H^(r) = exp(L_χ₁^(r)) exp(L_χ₀^(r)) H^(r-1)``.

    Raises:
        SmallDivisorError: When a homological equation meets a small divisor.
    """
    r = state.step + 1
    hat, chi0 = remove_f0(state, r)
    terms, chi1, dw = remove_f1(replace(state, terms=hat), hat, r)
    stepped = replace(state, step=r, terms=terms, chain=state.chain.append(chi0).append(chi1))
    omega = stepped.omega
    ledger = state.ledger.append(
        r,
        norm_chi0=chi0.norm(),
        norm_chi1=chi1.norm(),
        norm_remainder=sum(stepped.perturbation_norms().values()),
        omega1=abs(omega[0]),
        omega2=abs(omega[1]),
        norm_domega=float(np.abs(dw).sum()),
    )
    log.info(
        "kolmogorov step %d: ‖χ₀‖ = %.3e, ‖χ₁‖ = %.3e, ω = (%.15g, %.15g).",
        r,
        chi0.norm(),
        chi1.norm(),
        omega[0],
        omega[1],
    )
    return replace(stepped, ledger=ledger)


@timeit
def kolmogorov_normalize(
    hamiltonian: Union[ActionSeries, KolmogorovState],
    steps: Optional[int] = None,
    options: Optional[KolmogorovOptions] = None,
) -> KolmogorovState:
    """
    Runs ``steps`` Kolmogorov steps on ``H^(0)`` (or continues from a state) and returns the final state.
    """
    if isinstance(hamiltonian, KolmogorovState):
        state = hamiltonian if options is None else replace(hamiltonian, options=options)
    else:
        state = KolmogorovState.from_hamiltonian(hamiltonian, options)
    for _ in range(state.options.steps if steps is None else steps):
        state = kolmo_step(state)
    return state


def frequency_map(
    hamiltonian: SqrtSeries,
    chart: AdaptedChart,
    options: Optional[KolmogorovOptions] = None,
    action_cap: int = 2,
    fourier_cap: int = 12,
) -> Callable[[float], FrequencyVector]:
    """
    Returns ``Ĩ₁ ↦ ω^(r̄)(Ĩ₁)``: re-expansion in the adapted chart shifted by ``Ĩ₁`` followed by ``r̄`` steps.
    """
    options = options or KolmogorovOptions()

    def omega(shift: float) -> FrequencyVector:
        series = adapted_chart(hamiltonian, chart.with_shift(shift), action_cap, fourier_cap)
        return kolmogorov_normalize(series, options=options).omega

    return omega


@dataclass(frozen=True)
class CalibrationResult:
    """
    Args:
        shift: The calibrated ``Ĩ₁``.
        value: ``ω₁^(r̄)`` at the calibrated shift.
        iterations: The number of Newton updates.
        history: ``(n, Ĩ₁^(n), ω₁^(r̄) - ω₁*)`` for every evaluation at an iterate.
    """

    shift: float
    value: float
    iterations: int
    history: Tuple[Tuple[int, float, float], ...]


@timeit
def newton_calibrate(
    frequency: Callable[[float], Union[float, Sequence[float]]],
    target: float,
    initial: float,
    tol: float = 1e-12,
    max_iter: int = 10,
    step: Optional[float] = None,
) -> CalibrationResult:
    """
    Solves ``ω₁(Ĩ₁) = ω₁*`` by Newton iterations from ``Ĩ₁^(0) = initial``.

    The derivative is a central difference with step ``h = 1e-2 · Ĩ₁^(0)`` unless ``step`` is given. When
    ``frequency`` returns a vector its first component is used.

    Raises:
        ConvergenceError: When the derivative vanishes or ``max_iter`` updates do not reach ``tol``.
    """
    h = 1e-2 * abs(initial) if step is None else step
    if h <= 0:
        raise ValueError(f"{h} is not a valid value")

    def omega1(shift: float) -> float:
        value = frequency(shift)
        if isinstance(value, FrequencyVector):
            return value[0]
        return float(np.ravel(np.asarray(value, dtype=float))[0])

    shift = float(initial)
    history: List[Tuple[int, float, float]] = []
    for n in range(max_iter + 1):
        value = omega1(shift)
        history.append((n, shift, value - target))
        log.info("calibration %d: Ĩ₁ = %.15g, ω₁ - ω₁* = %.3e.", n, shift, value - target)
        if abs(value - target) < tol:
            return CalibrationResult(shift, value, n, tuple(history))
        if n == max_iter:
            break
        derivative = (omega1(shift + h) - omega1(shift - h)) / (2 * h)
        if derivative == 0 or not math.isfinite(derivative):
            raise ConvergenceError(f"the frequency map is degenerate at Ĩ₁ = {shift:.15g}.")
        shift += (target - value) / derivative
    raise ConvergenceError(f"calibration did not reach {tol:.1e} in {max_iter} iterations.")
