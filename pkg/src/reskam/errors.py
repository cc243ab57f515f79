from typing import Sequence, Tuple

__all__ = (
    "ReskamError",
    "SeriesError",
    "SmallDivisorError",
    "ResonanceError",
    "ConvergenceError",
    "ExpansionError",
    "EquilibriumError",
    "DecompositionError",
    "BoundBlowUpError",
    "StageError",
)


class ReskamError(RuntimeError):
    """
    The base class of every domain failure raised by reskam.
    """


class SeriesError(ReskamError):
    """
    Raised when series of different kinds or caps are combined, or when a term breaks the parity lattice.
    """


class SmallDivisorError(ReskamError):
    """
    Raised when a homological equation meets a divisor below the configured floor.

    Args:
        k: The offending harmonic.
        divisor: The value of |k·ω|.
    """

    def __init__(self, k: Sequence[int], divisor: float, floor: float = 0.0):
        self.k: Tuple[int, ...] = tuple(int(x) for x in k)
        self.divisor = float(divisor)
        self.floor = float(floor)
        super().__init__(
            f"small divisor |k·ω| = {self.divisor:.3e} below {self.floor:.3e} at k = {self.k}."
        )


class ResonanceError(ReskamError):
    """
    Raised when a frequency vector is exactly resonant.

    Args:
        k: The harmonic for which k·ω vanishes.
    """

    def __init__(self, k: Sequence[int]):
        self.k: Tuple[int, ...] = tuple(int(x) for x in k)
        super().__init__(f"frequency vector is resonant at k = {self.k}.")


class ConvergenceError(ReskamError):
    """
    Raised when an iteration (Newton, Lie series, Kepler solver, calibration) fails to converge.
    """


class ExpansionError(ReskamError):
    """
    Raised when the Hamiltonian expansion cannot be trusted (aliasing, singular stencil, wrong resonant map).
    """


class EquilibriumError(ReskamError):
    """
    Raised when the quadratic part at the equilibrium is not a pair of elliptic oscillators.
    """


class DecompositionError(ReskamError):
    """
    Raised when a frequency decomposition or an elliptic fit is not possible.
    """


class BoundBlowUpError(ReskamError):
    """
    Raised when a propagated norm bound exceeds its seed by the blow-up factor.

    Args:
        step: The virtual normalization step.
        bound: The offending bound.
        limit: The allowed maximum.
    """

    def __init__(self, step: int, bound: float, limit: float):
        self.step = int(step)
        self.bound = float(bound)
        self.limit = float(limit)
        super().__init__(
            f"norm bound {self.bound:.3e} exceeds {self.limit:.3e} at step {self.step}."
        )


class StageError(ReskamError):
    """
    Raised when a pipeline stage cannot run (missing upstream artifact, hash or cap mismatch).
    """
