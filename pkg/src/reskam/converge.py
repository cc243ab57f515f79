"""
The convergence stage: explicit steps of the classical Kolmogorov algorithm at fixed frequency ``ω*``, followed by
a propagation of scalar norm bounds through the same Lie triangles, and a decay check on the result.

The bounds are floating point numbers inflated by ``1 + 1e-12`` after every operation. They are not interval
arithmetic and the decay check is not a proof.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._decorators import timeit
from ._ledger import NormLedger
from ._libraries import DataFrame, DataFrameLibrary, PandasDataFrameLibrary
from .adapt import K
from .errors import BoundBlowUpError, ConvergenceError, ResonanceError
from .kolmogorov import ENERGY, KERNEL, KolmogorovState, _absorb, _within, solve_chi0, solve_chi1
from .pseries import ActionSeries, FrequencyVector, Grade, SolvedBlock, lie_transform

__all__ = (
    "ConvergeOptions",
    "DiophantineWitness",
    "TailBounds",
    "CertificateReport",
    "diophantine_gamma",
    "explicit_stage",
    "tail_seed",
    "tail_iterate",
    "certify",
    "tail_bound_frame",
)

log = logging.getLogger(__name__)

INFLATION = 1 + 1e-12
BLOW_UP = 1e6
STALL_STEPS = 10


@dataclass(frozen=True)
class ConvergeOptions:
    """
    Args:
        r_i: The number of explicit steps.
        r_ii: The number of steps of the bound propagation.
        tau: The Diophantine exponent.
        cutoff: The largest ``|k|`` scanned for the Diophantine constant.
        threshold: The largest decay ratio of ``‖χ₁‖`` bounds that passes.
    """

    r_i: int = 20
    r_ii: int = 200
    tau: float = 1.0
    cutoff: int = 64
    threshold: float = 0.95

    def __post_init__(self):
        assert self.r_i >= 0, "r_i must be non-negative."
        assert self.r_ii >= 0, "r_ii must be non-negative."
        assert self.tau >= 1, "tau must be at least one."
        assert self.cutoff >= 1, "cutoff must be positive."
        assert 0 < self.threshold, "threshold must be positive."


@dataclass(frozen=True)
class DiophantineWitness:
    gamma: float
    tau: float
    cutoff: int
    k: Tuple[int, int]

    def __post_init__(self):
        assert self.gamma > 0, "gamma must be positive."


def diophantine_gamma(omega: Sequence[float], tau: float = 1.0, cutoff: int = 64) -> DiophantineWitness:
    """
    Returns ``γ = min |k·ω| |k|^τ`` over ``0 < |k₁| + |k₂| ≤ cutoff`` together with the minimizing ``k``.

    Raises:
        ResonanceError: When ``k·ω = 0`` for some scanned ``k``.
    """
    omega = np.asarray(tuple(omega), dtype=float)
    if not np.any(omega):
        raise ValueError(f"{tuple(omega)} is not a valid value")
    k1, k2 = np.meshgrid(np.arange(-cutoff, cutoff + 1), np.arange(-cutoff, cutoff + 1), indexing="ij")
    size = np.abs(k1) + np.abs(k2)
    keep = (size > 0) & (size <= cutoff)
    k = np.stack([k1[keep], k2[keep]], axis=1)
    divisors = np.abs(k @ omega)
    if np.any(divisors == 0):
        resonant = np.flatnonzero(divisors == 0)
        raise ResonanceError(k[resonant[np.argmin(size[keep][resonant])]])
    weighted = divisors * size[keep].astype(float) ** tau
    best = int(np.argmin(weighted))
    witness = DiophantineWitness(float(weighted[best]), float(tau), int(cutoff), (int(k[best, 0]), int(k[best, 1])))
    log.info("diophantine constant γ = %.16e at k = %s (τ = %g, |k| ≤ %d).", witness.gamma, witness.k, tau, cutoff)
    return witness


def _translate(terms: Dict[Grade, ActionSeries], shift: np.ndarray, r: int, within) -> Dict[Grade, ActionSeries]:
    """
    Replaces ``p`` by ``p + shift`` in every block, the shift being of order ``r``.
    """
    parts: Dict[Grade, List[ActionSeries]] = {}
    for (ell, s), f in terms.items():
        parts.setdefault((ell, s), []).append(f)
        for d, piece in f.translate(shift).items():
            grade = (ell - d, s + d * r)
            if within(grade):
                parts.setdefault(grade, []).append(piece)
    out = {g: ActionSeries.sum(p, **p[0].caps) for g, p in parts.items()}
    return {g: f for g, f in out.items() if f or g == KERNEL}


def _twist(state: KolmogorovState) -> np.ndarray:
    f2 = state.block(2, 0)
    c20, c11, c02 = (f2.coefficient(e, (0, 0)).real for e in ((2, 0), (1, 1), (0, 2)))
    return np.array([[2 * c20, c11], [c11, 2 * c02]])


def classical_step(state: KolmogorovState, omega_star: Sequence[float]) -> Tuple[KolmogorovState, Dict[str, float]]:
    """
    One step of the Kolmogorov algorithm at fixed frequency: ``χ₀``, a translation of the actions that cancels the
    average of ``f₁``, then ``χ₁``.

    Raises:
        ConvergenceError: When the twist matrix is singular.
    """
    r = state.step + 1
    caps = state.caps
    within = _within(state, state.options.order_cap)
    floor = state.options.floor(omega_star)

    chi0, dE = solve_chi0(state.block(0, r), omega_star, floor)
    terms = lie_transform(
        state.terms,
        chi0,
        delta=(-1, r),
        within=within,
        solved=SolvedBlock(kernel=KERNEL, target=(0, r), normal=ActionSeries.constant(dE, **caps)),
    )
    terms = _absorb(terms, (0, r), ENERGY)

    twist = _twist(state)
    average = terms.get((1, r), ActionSeries.zero(**caps)).average()
    drift = np.array([average.coefficient((1, 0), (0, 0)).real, average.coefficient((0, 1), (0, 0)).real])
    try:
        eta = -np.linalg.solve(twist, drift)
    except np.linalg.LinAlgError as error:
        raise ConvergenceError(f"the twist matrix is singular at step {r}.") from error
    terms = _absorb(_translate(terms, eta, r, within), (0, r), ENERGY)

    chi1, dw = solve_chi1(terms.get((1, r), ActionSeries.zero(**caps)), omega_star, floor)
    terms = lie_transform(
        terms,
        chi1,
        delta=(0, r),
        within=within,
        solved=SolvedBlock(kernel=KERNEL, target=(1, r), normal=ActionSeries.frequency_term(dw, **caps)),
    )
    # round-off average; ω* stays exact
    if within((1, r + 1)):
        terms = _absorb(terms, (1, r), (1, r + 1))
    else:
        terms.pop((1, r), None)

    stepped = replace(state, step=r, terms=terms)
    norms = dict(
        norm_chi0=chi0.norm(),
        norm_chi1=chi1.norm(),
        norm_eta=float(np.abs(eta).sum()),
        norm_remainder=sum(stepped.perturbation_norms().values()),
    )
    log.info(
        "classical step %d: ‖χ₀‖ = %.3e, ‖χ₁‖ = %.3e, ‖η‖ = %.3e.",
        r,
        norms["norm_chi0"],
        norms["norm_chi1"],
        norms["norm_eta"],
    )
    return stepped, norms


@timeit
def explicit_stage(
    state: KolmogorovState, omega_star: Sequence[float], r_i: int
) -> Tuple[KolmogorovState, NormLedger]:
    """
    Performs ``r_i`` classical Kolmogorov steps with the frequency pinned to ``ω*``.

    The difference ``ω^(r) - ω*`` is moved into ``f₁`` of the next order before the first step. The returned state
    keeps the generating functions of ``state`` only: the translations make the classical steps unsuitable for
    ``chain_eval``.

    Raises:
        ConvergenceError: When the translation grows over ten consecutive steps or the twist is singular.
    """
    ledger = NormLedger()
    if r_i == 0:
        return state, ledger
    omega_star = FrequencyVector(tuple(omega_star))
    caps = state.caps
    options = replace(state.options, order_cap=max(state.options.order_cap, state.step + r_i + 1))
    terms = dict(state.terms)
    delta = state.omega.as_array() - omega_star.as_array()
    drift = (1, state.step + 1)
    if np.any(delta):
        terms[drift] = terms.get(drift, ActionSeries.zero(**caps)) + ActionSeries.frequency_term(delta, **caps)
    terms[KERNEL] = ActionSeries.frequency_term(omega_star, **caps)
    current = replace(state, terms=terms, options=options)

    previous, growing = math.inf, 0
    for _ in range(r_i):
        current, norms = classical_step(current, omega_star)
        ledger = ledger.append(current.step, **norms)
        growing = growing + 1 if norms["norm_eta"] > previous else 0
        previous = norms["norm_eta"]
        if growing >= STALL_STEPS:
            raise ConvergenceError(f"the action translation grew over {STALL_STEPS} steps up to step {current.step}.")
    return current, ledger


@dataclass(frozen=True)
class TailBounds:
    """
    Norm bounds for the virtual steps ``r_i < r ≤ r_i + r_ii``.

    Args:
        steps: The step indices.
        chi0: Bounds on ``‖χ₀^(r)‖``.
        chi1: Bounds on ``‖χ₁^(r)‖``.
        remainder: Bounds on ``Σ_{s>r} ‖f₀^(r,s)‖ + ‖f₁^(r,s)‖``.
    """

    steps: np.ndarray
    chi0: np.ndarray
    chi1: np.ndarray
    remainder: np.ndarray
    gamma: float
    tau: float
    r_i: int
    r_ii: int

    def __len__(self) -> int:
        return len(self.steps)


def tail_seed(state: KolmogorovState, r_ii: int) -> np.ndarray:
    """
    Returns the block norms ``‖f_ℓ^(r,s)‖`` as an array of shape ``(3, r + r_ii + 1)``; ``ℓ ≥ 2`` share the last row
    and the energy and ``ω·p`` are left out.
    """
    size = state.step + r_ii + 1
    seed = np.zeros((3, size))
    for (ell, s), f in state.terms.items():
        if (ell, s) in (ENERGY, KERNEL) or s >= size:
            continue
        seed[min(ell, 2), s] += f.norm()
    return seed


def _chi0_bounds(b: np.ndarray, chi: float, r: int) -> np.ndarray:
    # ‖{f, χ₀}‖ ≤ 2r ℓ ‖f‖ ‖χ₀‖; χ₀ lowers ℓ by one
    out = b.copy()
    size = b.shape[1]
    for ell in (1, 2):
        factor = 1.0
        for j in range(1, ell + 1):
            if j * r >= size:
                break
            factor *= 2 * r * (ell - j + 1) * chi / j
            out[ell - j, j * r :] += factor * b[ell, : size - j * r]
    out[0, r] = 0.0
    return out * INFLATION


def _chi1_bounds(b: np.ndarray, chi: float, r: int) -> np.ndarray:
    # ‖{f, χ₁}‖ ≤ (2s + 2r ℓ) ‖f‖ ‖χ₁‖; χ₁ keeps ℓ
    out = b.copy()
    size = b.shape[1]
    s = np.arange(size, dtype=float)
    for ell in range(3):
        term = b[ell].copy()
        j = 0
        while (j + 1) * r < size and term.any():
            j += 1
            shifted = np.zeros(size)
            shifted[r:] = term[: size - r] * (2 * s[: size - r] + 2 * r * ell) * chi / j
            term = shifted
            out[ell] += term
    out[1, r] = 0.0
    return out * INFLATION


@timeit
def tail_iterate(seed: np.ndarray, gamma: float, tau: float, r_i: int, r_ii: int) -> TailBounds:
    """
    Propagates norm bounds through ``r_ii`` steps after step ``r_i``, with every divisor bounded below by
    ``γ / (K r)^τ``.

    Raises:
        BoundBlowUpError: When a bound exceeds the largest seed by a factor of a million.
    """
    assert gamma > 0, "gamma must be positive."
    b = np.asarray(seed, dtype=float).copy()
    if b.shape[1] < r_i + r_ii + 1:
        b = np.pad(b, ((0, 0), (0, r_i + r_ii + 1 - b.shape[1])))
    limit = BLOW_UP * float(b.max(initial=0.0))
    steps, chi0s, chi1s, remainders = [], [], [], []
    for r in range(r_i + 1, r_i + r_ii + 1):
        divisor = gamma / (K * r) ** tau
        chi0 = b[0, r] / divisor * INFLATION
        b = _chi0_bounds(b, chi0, r)
        chi1 = b[1, r] / divisor * INFLATION
        b = _chi1_bounds(b, chi1, r)
        worst = float(b.max(initial=0.0))
        if worst > limit:
            raise BoundBlowUpError(r, worst, limit)
        steps.append(r)
        chi0s.append(chi0)
        chi1s.append(chi1)
        remainders.append(float(b[:2, r + 1 :].sum()))
    log.info("tail bounds: %d steps, final ‖χ₁‖ ≤ %.3e.", r_ii, chi1s[-1] if chi1s else 0.0)
    return TailBounds(
        steps=np.array(steps, dtype=int),
        chi0=np.array(chi0s),
        chi1=np.array(chi1s),
        remainder=np.array(remainders),
        gamma=float(gamma),
        tau=float(tau),
        r_i=int(r_i),
        r_ii=int(r_ii),
    )


@dataclass(frozen=True)
class CertificateReport:
    passed: bool
    ratio: float
    threshold: float
    gamma: float
    tau: float
    r_i: int
    r_ii: int
    final_chi0: float
    final_chi1: float
    final_remainder: float

    def as_dict(self) -> Dict[str, object]:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "ratio": self.ratio,
            "threshold": self.threshold,
            "gamma": self.gamma,
            "tau": self.tau,
            "r_i": self.r_i,
            "r_ii": self.r_ii,
            "final_chi0": self.final_chi0,
            "final_chi1": self.final_chi1,
            "final_remainder": self.final_remainder,
        }

    def to_text(self) -> str:
        lines = [f"{key}: {value}" for key, value in self.as_dict().items()]
        lines.append("rigor: floating point bounds with multiplicative inflation; this is not a proof")
        return "\n".join(lines) + "\n"


def certify(bounds: TailBounds, threshold: float = 0.95) -> CertificateReport:
    """
    Fits ``log ‖χ₁^(r)‖`` linearly over the last half of the tail; passes when the per-step ratio is below
    ``threshold``. Vanishing bounds give a ratio of zero.
    """
    chi1 = bounds.chi1[len(bounds.chi1) // 2 :]
    steps = bounds.steps[len(bounds.steps) // 2 :]
    positive = chi1 > 0
    if positive.sum() < 2:
        ratio = 0.0
    else:
        slope = np.polyfit(steps[positive].astype(float), np.log(chi1[positive]), 1)[0]
        ratio = float(np.exp(slope))

    def last(values: np.ndarray) -> float:
        return float(values[-1]) if len(values) else 0.0

    report = CertificateReport(
        passed=ratio < threshold,
        ratio=ratio,
        threshold=threshold,
        gamma=bounds.gamma,
        tau=bounds.tau,
        r_i=bounds.r_i,
        r_ii=bounds.r_ii,
        final_chi0=last(bounds.chi0),
        final_chi1=last(bounds.chi1),
        final_remainder=last(bounds.remainder),
    )
    log.info("certificate: %s (ratio %.4f).", "PASS" if report.passed else "FAIL", ratio)
    return report


def tail_bound_frame(bounds: TailBounds, library: Optional[DataFrameLibrary] = None) -> DataFrame:
    library = library or PandasDataFrameLibrary()
    return library.from_columns(
        {
            "step": bounds.steps,
            "chi0": bounds.chi0,
            "chi1": bounds.chi1,
            "remainder": bounds.remainder,
        }
    )
