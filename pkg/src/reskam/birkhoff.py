"""
Resonant Birkhoff normalization: removes the fast libration angle ϑ₂ order by order.

The Hamiltonian is graded by homogeneous degree in √J: grade ``ℓ`` holds the terms of degree ``ℓ + 2``, so grade 0
is ``ω·J`` and a generating function removing grade ``r`` moves every term ``r`` grades up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ._chain import TransformChain, chain_eval
from ._decorators import timeit
from ._ledger import NormLedger
from .pseries import FrequencyVector, Grade, Series, SolvedBlock, SqrtSeries, lie_transform

__all__ = (
    "BirkhoffOptions",
    "BirkhoffState",
    "TransformChain",
    "solve_homological_fast",
    "homological_residual",
    "birkhoff_step",
    "birkhoff_normalize",
    "chain_eval",
)

log = logging.getLogger(__name__)

KERNEL: Grade = (0,)


@dataclass(frozen=True)
class BirkhoffOptions:
    """
    Args:
        steps: The number of normalization steps.
        divisor_floor: The smallest accepted ``|k·ω|``, relative to ``‖ω‖``.
        intermediate_steps: The step whose Hamiltonian and chain feed the adapted chart and the Kolmogorov
            normalization; capped at ``steps``.
    """

    steps: int = 6
    divisor_floor: float = 1e-10
    intermediate_steps: int = 5

    def __post_init__(self):
        assert self.steps >= 0, "steps must be non-negative."
        assert self.intermediate_steps >= 0, "intermediate_steps must be non-negative."
        assert self.divisor_floor >= 0, "divisor_floor must be non-negative."

    def floor(self, omega: Sequence[float]) -> float:
        return self.divisor_floor * float(np.linalg.norm(np.asarray(omega, dtype=float)))


def _grade(series: SqrtSeries) -> Dict[Grade, SqrtSeries]:
    if not series:
        return {}
    return {(int(d) - 2,): series.homogeneous(int(d)) for d in np.unique(series.degrees())}


@dataclass(frozen=True, eq=False)
class BirkhoffState:
    """
    The Hamiltonian after ``step`` normalization steps.

    Args:
        step: The number of steps performed.
        omega: The frequencies of the quadratic part.
        terms: The Hamiltonian keyed by grade; grades up to ``step`` are in normal form.
        normal: The normal-form blocks ``Z₁, ..., Z_step``.
        chain: The generating functions ``χ₁, ..., χ_step``.
        ledger: Norms of the generating functions and of the remainder.
    """

    step: int
    omega: FrequencyVector
    terms: Dict[Grade, SqrtSeries]
    normal: Tuple[SqrtSeries, ...] = ()
    chain: TransformChain = field(default_factory=TransformChain)
    ledger: NormLedger = field(default_factory=NormLedger)
    options: BirkhoffOptions = field(default_factory=BirkhoffOptions)

    @classmethod
    def from_hamiltonian(
        cls,
        hamiltonian: SqrtSeries,
        omega: Optional[Sequence[float]] = None,
        options: Optional[BirkhoffOptions] = None,
    ) -> BirkhoffState:
        """
        Grades ``ℋ⁽⁰⁾``. When omitted, ``ω`` is read from the coefficients of ``J₁`` and ``J₂``.

        Raises:
            ValueError: When the quadratic part is not ``ω·J``.
        """
        if omega is None:
            omega = (
                hamiltonian.coefficient((2, 0), (0, 0)).real,
                hamiltonian.coefficient((0, 2), (0, 0)).real,
            )
        omega = FrequencyVector(tuple(omega))
        terms = _grade(hamiltonian)
        quadratic = terms.get(KERNEL, SqrtSeries.zero(**hamiltonian.caps))
        mismatch = (quadratic - SqrtSeries.frequency_term(omega, **hamiltonian.caps)).norm()
        if mismatch > 1e-12 * max(quadratic.norm(), 1e-300):
            raise ValueError(f"quadratic part is not ω·J (mismatch {mismatch:.3e}).")
        return cls(step=0, omega=omega, terms=terms, options=options or BirkhoffOptions())

    @property
    def degree_cap(self) -> int:
        return next(iter(self.terms.values())).degree_cap

    @property
    def caps(self) -> Dict[str, int]:
        return next(iter(self.terms.values())).caps

    def hamiltonian(self, upto: Optional[int] = None) -> SqrtSeries:
        """
        Returns ``ℋ⁽ʳ⁾`` with the grades above ``upto`` dropped.
        """
        parts = [f for (g,), f in self.terms.items() if upto is None or g <= upto]
        return SqrtSeries.sum(parts, **self.caps)

    def normal_form(self) -> SqrtSeries:
        """
        Returns ``𝒵⁽ʳ⁾``: the energy, ``ω·J`` and ``Z₁, ..., Z_r``.
        """
        return self.hamiltonian(self.step)

    def remainder(self) -> SqrtSeries:
        parts = [f for (g,), f in self.terms.items() if g > self.step]
        return SqrtSeries.sum(parts, **self.caps)

    def remainder_norms(self) -> Dict[int, float]:
        return {g: f.norm() for (g,), f in sorted(self.terms.items()) if g > self.step}


def solve_homological_fast(
    h: SqrtSeries, omega: Sequence[float], floor: Optional[float] = None
) -> Tuple[SqrtSeries, SqrtSeries]:
    """
    Solves ``L_χ(ω·J) + h - Z = 0`` with ``Z = ⟨h⟩_ϑ₂``.

    Args:
        h: The block to normalize.
        omega: The frequencies of ``ω·J``.
        floor: The smallest accepted ``|k·ω|``; ``1e-10·‖ω‖`` when omitted.

    Returns:
        The generating function ``χ`` and the normal part ``Z``.

    Raises:
        SmallDivisorError: When a harmonic with ``k₂ ≠ 0`` meets a divisor below the floor.
    """
    if floor is None:
        floor = BirkhoffOptions().floor(omega)
    normal, oscillating = h.harmonic_split(2)
    return oscillating.divide_by_divisors(omega, floor), normal


def homological_residual(chi: Series, h: Series, normal: Series, omega: Sequence[float]) -> float:
    """
    Returns ``‖L_χ(ω·J) + h - Z‖ / ‖h‖``; works for both series kinds.
    """
    linear = type(h).frequency_term(omega, **h.caps)
    residual = linear.bracket(chi) + h - normal
    return residual.norm() / max(h.norm(), 1e-300)


def birkhoff_step(state: BirkhoffState) -> BirkhoffState:
    """
    Performs one normalization step: ``ℋ⁽ʳ⁺¹⁾ = exp(L_χ) ℋ⁽ʳ⁾``.

    Raises:
        SmallDivisorError: When the homological equation meets a small divisor.
    """
    r = state.step + 1
    target: Grade = (r,)
    caps = state.caps
    cap = state.degree_cap
    h = state.terms.get(target, SqrtSeries.zero(**caps))
    chi, normal = solve_homological_fast(h, state.omega, state.options.floor(state.omega))
    if chi:
        terms = lie_transform(
            state.terms,
            chi,
            delta=target,
            within=lambda g: g[0] + 2 <= cap,
            solved=SolvedBlock(kernel=KERNEL, target=target, normal=normal),
        )
    else:
        terms = dict(state.terms)
    ledger = state.ledger.append(
        r,
        norm_chi=chi.norm(),
        norm_normal=normal.norm(),
        norm_remainder=sum(f.norm() for (g,), f in terms.items() if g > r),
    )
    log.info("birkhoff step %d: ‖χ‖ = %.3e, ‖Z‖ = %.3e.", r, chi.norm(), normal.norm())
    return replace(
        state,
        step=r,
        terms=terms,
        normal=(*state.normal, normal),
        chain=state.chain.append(chi),
        ledger=ledger,
    )


@timeit
def birkhoff_normalize(
    hamiltonian: SqrtSeries,
    omega: Optional[Sequence[float]] = None,
    steps: Optional[int] = None,
    options: Optional[BirkhoffOptions] = None,
) -> BirkhoffState:
    """
    Runs ``steps`` Birkhoff steps on ``ℋ⁽⁰⁾`` and returns the final state.

    The normal form is ``state.normal_form()``, the canonical transformation ``state.chain`` and the norms
    ``state.ledger``.
    """
    options = options or BirkhoffOptions()
    if steps is not None:
        options = replace(options, steps=steps)
    state = BirkhoffState.from_hamiltonian(hamiltonian, omega, options)
    for _ in range(options.steps):
        state = birkhoff_step(state)
    return state
