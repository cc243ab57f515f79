"""
Composed Lie-series canonical transformations and their numerical evaluation on coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import pseries
from .errors import ConvergenceError
from .pseries import ActionSeries, Series, SqrtSeries

__all__ = ("TransformChain", "chain_eval")

DIRECTIONS = ("forward", "inverse")


@dataclass(frozen=True)
class TransformChain:
    """
    An ordered list of generating functions ``χ₁, ..., χ_r``.

    The forward map is ``exp L_χ₁ ∘ ... ∘ exp L_χ_r`` applied to the coordinate functions: it sends the variables of
    the last normal form to those of the starting Hamiltonian, so ``H_r(x) = H_0(forward(x))``.
    """

    generators: Tuple[Series, ...] = ()

    def __post_init__(self):
        kinds = {type(g) for g in self.generators}
        assert len(kinds) <= 1, "generators must share one series kind."
        object.__setattr__(self, "generators", tuple(self.generators))

    def __len__(self) -> int:
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def append(self, chi: Series) -> TransformChain:
        return TransformChain((*self.generators, chi))

    def extend(self, other: TransformChain) -> TransformChain:
        return TransformChain((*self.generators, *other.generators))

    def truncated(self, n: int) -> TransformChain:
        """
        Returns the chain made of the first ``n`` generators.
        """
        if not 0 <= n <= len(self):
            raise ValueError(f"{n} is not a valid value")
        return TransformChain(self.generators[:n])

    def save(self, directory: Union[str, Path]):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, chi in enumerate(self.generators, start=1):
            pseries.write(chi, directory / f"chi_{i:03d}.series")

    @classmethod
    def load(cls, directory: Union[str, Path]) -> TransformChain:
        paths = sorted(Path(directory).glob("chi_*.series"))
        return cls(tuple(pseries.read(p) for p in paths))


class _LieMap:
    """
    The Lie series ``exp(L_χ) z`` of the four coordinate functions, with terms built on demand.
    """

    def __init__(self, chi: Series):
        self.chi = chi
        caps = chi.caps
        if isinstance(chi, SqrtSeries):
            first = [SqrtSeries.cartesian(j, which, **caps).bracket(chi) for which in ("Y", "X") for j in (1, 2)]
        else:
            first = [ActionSeries.action(j, **caps).bracket(chi) for j in (1, 2)]
            first += [chi.derivative("action", j) for j in (1, 2)]
        self._terms: List[List[Series]] = [[t] for t in first]

    def term(self, coordinate: int, order: int) -> Series:
        column = self._terms[coordinate]
        while len(column) < order:
            column.append(column[-1].bracket(self.chi) / (len(column) + 1))
        return column[order - 1]


def _to_series_point(kind: type, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if kind is SqrtSeries:
        y, x = points[:, :2], points[:, 2:]
        return (y**2 + x**2) / 2, np.arctan2(x, y)
    return points[:, :2], points[:, 2:]


def _apply(lie: _LieMap, points: np.ndarray, tol: float, max_terms: int) -> np.ndarray:
    actions, angles = _to_series_point(type(lie.chi), points)
    out = points.copy()
    scale = max(float(np.abs(points).max()), 1e-300)
    history: List[float] = []
    for order in range(1, max_terms + 1):
        pieces = [lie.term(c, order) for c in range(4)]
        if not any(pieces):
            return out
        values = np.stack([p.evaluate(actions, angles) for p in pieces], axis=1)
        out += values
        size = float(np.abs(values).max())
        history.append(size)
        if size <= tol * scale:
            return out
        if order >= 8 and size > history[-5]:
            raise ConvergenceError(f"Lie series of the coordinates does not contract (term {order} = {size:.3e}).")
    raise ConvergenceError(f"Lie series of the coordinates did not converge in {max_terms} terms.")


def chain_eval(
    chain: TransformChain,
    point,
    direction: str = "forward",
    caps: Optional[Dict[str, int]] = None,
    tol: float = 1e-15,
    max_terms: int = 60,
) -> np.ndarray:
    """
    Maps a point (or points of shape (P, 4)) through the chain.

    Points are ``(Y₁, Y₂, X₁, X₂)`` for square-root chains and ``(p₁, p₂, q₁, q₂)`` for action chains.

    Args:
        chain: The generating functions.
        direction: ``"forward"`` applies ``exp L_χ₁ ∘ ... ∘ exp L_χ_r``; ``"inverse"`` applies the generators in
            the opposite order with their signs flipped.
        caps: Caps used for the coordinate series; by default twice the generators' caps.
        tol: Relative size of the last Lie-series term kept.
        max_terms: The longest Lie series tried per generator.

    Raises:
        ConvergenceError: When the coordinate series fail to contract at the point.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"{direction} is not a valid value")
    points = np.asarray(point, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points).copy()
    if not chain:
        return points[0] if single else points
    if caps is None:
        caps = {name: 2 * value for name, value in chain.generators[0].caps.items()}
        if "action_cap" in caps:
            caps["action_cap"] = chain.generators[0].caps["action_cap"]
    generators = reversed(chain.generators) if direction == "forward" else chain.generators
    sign = 1.0 if direction == "forward" else -1.0
    for chi in generators:
        if not chi:
            continue
        lie = _LieMap(sign * chi.with_caps(**caps))
        points = _apply(lie, points, tol, max_terms)
    return points[0] if single else points
