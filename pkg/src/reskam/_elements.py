"""
Two-body helpers in the plane: orbital elements, Kepler's equation and the Kepler flow.

Angles are in radians, lengths in AU and times in years unless a caller says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import ConvergenceError

__all__ = (
    "GAUSS_K",
    "G_AU_YR",
    "JUPITER_MASS",
    "Elements",
    "solve_kepler",
    "elements_to_state",
    "orbital_elements",
    "kepler_drift",
)

GAUSS_K = 0.01720209895
G_AU_YR = (GAUSS_K * 365.25) ** 2
JUPITER_MASS = 1 / 1047.348644

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Elements:
    a: ArrayLike
    e: ArrayLike
    varpi: ArrayLike
    mean_anomaly: ArrayLike

    @property
    def mean_longitude(self) -> ArrayLike:
        return np.mod(self.mean_anomaly + self.varpi, 2 * np.pi)


def solve_kepler(mean_anomaly: ArrayLike, e: ArrayLike, tol: float = 1e-15, max_iter: int = 50) -> ArrayLike:
    """
    Solves ``E - e sin E = M`` by Newton's method.

    Raises:
        ConvergenceError: When the iteration does not settle in ``max_iter`` steps.
    """
    mean_anomaly = np.asarray(mean_anomaly, dtype=float)
    e = np.asarray(e, dtype=float)
    E = mean_anomaly + e * np.sin(mean_anomaly)
    for _ in range(max_iter):
        step = (E - e * np.sin(E) - mean_anomaly) / (1 - e * np.cos(E))
        E = E - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(E))):
            return E if E.ndim else float(E)
    raise ConvergenceError(f"Kepler's equation did not converge in {max_iter} iterations.")


def elements_to_state(mu: float, elements: Elements) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns the position and velocity of a planar Keplerian orbit.
    """
    a, e = np.asarray(elements.a, dtype=float), np.asarray(elements.e, dtype=float)
    E = solve_kepler(elements.mean_anomaly, e)
    n = np.sqrt(mu / a**3)
    root = np.sqrt(1 - e**2)
    denominator = 1 - e * np.cos(E)
    x, y = a * (np.cos(E) - e), a * root * np.sin(E)
    vx, vy = -n * a * np.sin(E) / denominator, n * a * root * np.cos(E) / denominator
    c, s = np.cos(elements.varpi), np.sin(elements.varpi)
    position = np.stack([c * x - s * y, s * x + c * y], axis=-1)
    velocity = np.stack([c * vx - s * vy, s * vx + c * vy], axis=-1)
    return position, velocity


def orbital_elements(r: np.ndarray, v: np.ndarray, mu: float) -> Elements:
    """
    Returns the osculating elements of planar states ``r``, ``v`` of shape (..., 2).
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    distance = np.hypot(r[..., 0], r[..., 1])
    speed2 = (v**2).sum(axis=-1)
    radial = (r * v).sum(axis=-1)
    a = 1 / (2 / distance - speed2 / mu)
    ecc = ((speed2 - mu / distance)[..., None] * r - radial[..., None] * v) / mu
    e = np.hypot(ecc[..., 0], ecc[..., 1])
    varpi = np.arctan2(ecc[..., 1], ecc[..., 0])
    true_anomaly = np.arctan2(r[..., 1], r[..., 0]) - varpi
    E = 2 * np.arctan(np.sqrt((1 - e) / (1 + e)) * np.tan(true_anomaly / 2))
    mean_anomaly = E - e * np.sin(E)
    return Elements(a=a, e=e, varpi=np.mod(varpi, 2 * np.pi), mean_anomaly=np.mod(mean_anomaly, 2 * np.pi))


def _stumpff(z: float) -> Tuple[float, float]:
    if z > 1e-6:
        root = math.sqrt(z)
        return (1 - math.cos(root)) / z, (root - math.sin(root)) / (root * z)
    if z < -1e-6:
        root = math.sqrt(-z)
        return (math.cosh(root) - 1) / (-z), (math.sinh(root) - root) / (root * -z)
    return 0.5 - z / 24 + z * z / 720, 1 / 6 - z / 120 + z * z / 5040


def kepler_drift(
    x: float, y: float, vx: float, vy: float, mu: float, dt: float, tol: float = 1e-14, max_iter: int = 50
) -> Tuple[float, float, float, float]:
    """
    Advances a two-body state by ``dt`` with the universal-variable form of the Kepler flow.

    Raises:
        ConvergenceError: When the universal anomaly does not converge.
    """
    r0 = math.hypot(x, y)
    v2 = vx * vx + vy * vy
    radial = (x * vx + y * vy) / r0
    alpha = 2 / r0 - v2 / mu
    sqrt_mu = math.sqrt(mu)
    chi = sqrt_mu * abs(alpha) * dt if alpha > 0 else sqrt_mu * dt / r0
    for _ in range(max_iter):
        z = alpha * chi * chi
        c, s = _stumpff(z)
        r = r0 * radial / sqrt_mu * chi * (1 - z * s) + (1 - alpha * r0) * chi * chi * c + r0
        f = (
            r0 * radial / sqrt_mu * chi * chi * c
            + (1 - alpha * r0) * chi**3 * s
            + r0 * chi
            - sqrt_mu * dt
        )
        step = f / r
        chi -= step
        if abs(step) <= tol * max(1.0, abs(chi)):
            break
    else:
        raise ConvergenceError(f"universal Kepler solver did not converge in {max_iter} iterations.")
    z = alpha * chi * chi
    c, s = _stumpff(z)
    f = 1 - chi * chi / r0 * c
    g = dt - chi**3 * s / sqrt_mu
    nx, ny = f * x + g * vx, f * y + g * vy
    r = math.hypot(nx, ny)
    fdot = sqrt_mu / (r * r0) * (alpha * chi**3 * s - chi)
    gdot = 1 - chi * chi / r * c
    return nx, ny, fdot * x + gdot * vx, fdot * y + gdot * vy
