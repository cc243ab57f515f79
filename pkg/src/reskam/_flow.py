"""
Hamilton's equations of polynomial and series Hamiltonians, integrated with an adaptive Runge–Kutta scheme.
"""

from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from ._jet import Jet
from .errors import ConvergenceError
from .pseries import ActionSeries

VectorField = Callable[[np.ndarray], np.ndarray]


def jet_vector_field(jet: Jet) -> VectorField:
    """
    Returns the vector field of a polynomial in ``(Y₁, Y₂, X₁, X₂)`` with ``Y`` as momenta.
    """
    gradient = [jet.derivative(v) for v in range(4)]

    def field(z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        g = np.stack([d.evaluate(z) for d in gradient], axis=-1)
        return np.concatenate([-g[:, 2:], g[:, :2]], axis=1)

    return field


def series_vector_field(series: ActionSeries) -> VectorField:
    """
    Returns the vector field of a series in ``(p, q)``: ``ṗ = -∂H/∂q``, ``q̇ = ∂H/∂p``.
    """
    dq = [series.derivative("angle", j) for j in (1, 2)]
    dp = [series.derivative("action", j) for j in (1, 2)]

    def field(z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        p, q = z[:, :2], z[:, 2:]
        rates = [-d.evaluate(p, q) for d in dq] + [d.evaluate(p, q) for d in dp]
        return np.stack([np.atleast_1d(r) for r in rates], axis=-1)

    return field


def vector_field(hamiltonian: Union[Jet, ActionSeries]) -> VectorField:
    if isinstance(hamiltonian, ActionSeries):
        return series_vector_field(hamiltonian)
    return jet_vector_field(hamiltonian)


def integrate(
    field: VectorField,
    x0: Sequence[float],
    t: np.ndarray,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> np.ndarray:
    """
    Integrates ``ż = field(z)`` from ``x0`` at ``t[0]`` and returns the states at the times ``t``, shape (N, 4).

    Raises:
        ConvergenceError: When the integrator gives up.
    """
    t = np.asarray(t, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if len(t) == 1:
        return x0[None, :].copy()
    solution = solve_ivp(
        lambda _, z: field(z)[0],
        (t[0], t[-1]),
        x0,
        method="DOP853",
        t_eval=t,
        rtol=rtol,
        atol=atol,
    )
    if not solution.success:
        raise ConvergenceError(f"integration failed: {solution.message}")
    return solution.y.T
