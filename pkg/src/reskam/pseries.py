"""
Truncated Taylor–Fourier series in two degrees of freedom.

Two representations share one sparse engine:

* :class:`SqrtSeries` holds terms ``c (√J₁)^ℓ₁ (√J₂)^ℓ₂ exp(i k·ϑ)`` with the parity rule
  ``k_j ∈ {-ℓ_j, -ℓ_j+2, ..., ℓ_j}``; it is the natural home of polynomials in cartesian variables
  ``Y_j = √(2J_j) cos ϑ_j``, ``X_j = √(2J_j) sin ϑ_j`` around an elliptic equilibrium.
* :class:`ActionSeries` holds terms ``c p₁^j₁ p₂^j₂ exp(i k·q)``, truncated in the action degree and
  in the Fourier degree ``|k| = |k₁| + |k₂|``.

Terms are keyed by a packed 64-bit integer (two exponents, two harmonics) and coefficients are
complex; the reality of the represented function is the symmetry ``c(ℓ, -k) = conj c(ℓ, k)``.
Every value is immutable and every operation returns a new series.

Poisson brackets use the angle as coordinate and the action as momentum::

    {f, g} = Σ_j ∂f/∂ϑ_j ∂g/∂J_j - ∂f/∂J_j ∂g/∂ϑ_j

and the Lie derivative generated by χ is ``L_χ f = {f, χ}``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Callable,
    ClassVar,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Type,
    TypeVar,
    Union,
)

import numpy as np

from .errors import SeriesError, SmallDivisorError

__all__ = (
    "SqrtSeries",
    "ActionSeries",
    "FrequencyVector",
    "SolvedBlock",
    "bracket",
    "lie_series",
    "lie_transform",
    "angle_average",
    "norm",
    "evaluate",
    "dumps",
    "loads",
    "write",
    "read",
)

PRUNE = 1e-300

_OFFSET = 1 << 15
_MASK = 0xFFFF
_PAIR_CHUNK = 1 << 20

Grade = Tuple[int, ...]
Term = Tuple[Tuple[int, int], Tuple[int, int], complex]
S = TypeVar("S", bound="_Series")


def pack(exponents: np.ndarray, harmonics: np.ndarray) -> np.ndarray:
    exponents = np.asarray(exponents, dtype=np.int64).reshape(-1, 2)
    harmonics = np.asarray(harmonics, dtype=np.int64).reshape(-1, 2)
    if len(exponents) and (
        exponents.min() < 0
        or exponents.max() >= _OFFSET
        or np.abs(harmonics).max() >= _OFFSET
    ):
        raise SeriesError("exponents or harmonics are out of the representable range.")
    return (
        (exponents[:, 0] << 48)
        | (exponents[:, 1] << 32)
        | ((harmonics[:, 0] + _OFFSET) << 16)
        | (harmonics[:, 1] + _OFFSET)
    )


def unpack(keys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    keys = np.asarray(keys, dtype=np.int64)
    exponents = np.stack([(keys >> 48) & _MASK, (keys >> 32) & _MASK], axis=1)
    harmonics = np.stack([((keys >> 16) & _MASK) - _OFFSET, (keys & _MASK) - _OFFSET], axis=1)
    return exponents, harmonics


def _aggregate(keys: np.ndarray, coefficients: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if len(keys) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
    unique, inverse = np.unique(keys, return_inverse=True)
    inverse = inverse.ravel()
    re = np.bincount(inverse, weights=coefficients.real, minlength=len(unique))
    im = np.bincount(inverse, weights=coefficients.imag, minlength=len(unique))
    summed = re + 1j * im
    keep = np.abs(summed) > PRUNE
    return unique[keep], summed[keep]


@dataclass(frozen=True)
class FrequencyVector:
    """
    A pair of angular velocities (radians per unit of time).
    """

    omega: Tuple[float, float]

    def __post_init__(self):
        assert len(self.omega) == 2, "two frequencies must be specified."
        assert all(math.isfinite(w) for w in self.omega), "frequencies must be finite."
        object.__setattr__(self, "omega", (float(self.omega[0]), float(self.omega[1])))

    def __iter__(self):
        return iter(self.omega)

    def __getitem__(self, i):
        return self.omega[i]

    def __len__(self):
        return 2

    def __array__(self, dtype=None, copy=None):
        return np.array(self.omega, dtype=dtype)

    def as_array(self) -> np.ndarray:
        return np.array(self.omega)

    def divisors(self, harmonics: np.ndarray) -> np.ndarray:
        return np.asarray(harmonics) @ self.as_array()


class _Series:
    kind: ClassVar[str] = ""
    cap_names: ClassVar[Tuple[str, ...]] = ()
    _degree_shift: ClassVar[int] = 1
    _bracket_scale: ClassVar[float] = 1.0

    __slots__ = ("_keys", "_coefficients", "_caps")

    def __init__(self, keys: np.ndarray, coefficients: np.ndarray, caps: Tuple[int, ...]):
        keys = np.asarray(keys, dtype=np.int64)
        coefficients = np.asarray(coefficients, dtype=complex)
        keys.setflags(write=False)
        coefficients.setflags(write=False)
        self._keys = keys
        self._coefficients = coefficients
        self._caps = tuple(int(c) for c in caps)

    # construction

    @classmethod
    def from_arrays(
        cls: Type[S],
        exponents: np.ndarray,
        harmonics: np.ndarray,
        coefficients: np.ndarray,
        **caps: int,
    ) -> S:
        """
        Builds a series from parallel arrays, summing duplicates, pruning zeros and truncating to the caps.
        """
        caps_tuple = cls._caps_from(caps)
        exponents = np.asarray(exponents, dtype=np.int64).reshape(-1, 2)
        harmonics = np.asarray(harmonics, dtype=np.int64).reshape(-1, 2)
        coefficients = np.asarray(coefficients, dtype=complex).reshape(-1)
        if not (len(exponents) == len(harmonics) == len(coefficients)):
            raise SeriesError("exponents, harmonics and coefficients must have the same length.")
        cls._validate(exponents, harmonics)
        keep = cls._within_caps(exponents, harmonics, caps_tuple)
        keys, summed = _aggregate(pack(exponents[keep], harmonics[keep]), coefficients[keep])
        return cls(keys, summed, caps_tuple)

    @classmethod
    def from_terms(
        cls: Type[S],
        terms: Union[Mapping[Tuple[Tuple[int, int], Tuple[int, int]], complex], Iterable[Term]],
        **caps: int,
    ) -> S:
        """
        Builds a series from ``{(exponent, harmonic): coefficient}`` or from
        ``(exponent, harmonic, coefficient)`` triples.
        """
        if isinstance(terms, Mapping):
            items = [(e, k, c) for (e, k), c in terms.items()]
        else:
            items = list(terms)
        if not items:
            return cls.zero(**caps)
        exponents = np.array([e for e, _, _ in items], dtype=np.int64)
        harmonics = np.array([k for _, k, _ in items], dtype=np.int64)
        coefficients = np.array([c for _, _, c in items], dtype=complex)
        return cls.from_arrays(exponents, harmonics, coefficients, **caps)

    @classmethod
    def zero(cls: Type[S], **caps: int) -> S:
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex), cls._caps_from(caps))

    @classmethod
    def constant(cls: Type[S], value: complex, **caps: int) -> S:
        return cls.from_terms([((0, 0), (0, 0), value)], **caps)

    @classmethod
    def sum(cls: Type[S], parts: Sequence[S], **caps: int) -> S:
        parts = [p for p in parts if p is not None]
        if not parts:
            return cls.zero(**caps)
        first = parts[0]
        for other in parts[1:]:
            first._check_compatible(other)
        keys = np.concatenate([p._keys for p in parts])
        coefficients = np.concatenate([p._coefficients for p in parts])
        keys, coefficients = _aggregate(keys, coefficients)
        return type(first)(keys, coefficients, first._caps)

    @classmethod
    def _caps_from(cls, caps: Mapping[str, int]) -> Tuple[int, ...]:
        unknown = set(caps) - set(cls.cap_names)
        if unknown:
            raise ValueError(f"{sorted(unknown)} is not a valid value")
        missing = [name for name in cls.cap_names if name not in caps]
        if missing:
            raise ValueError(f"{missing} must be specified.")
        values = tuple(int(caps[name]) for name in cls.cap_names)
        assert all(v >= 0 for v in values), "caps must be non-negative."
        return values

    @classmethod
    def _validate(cls, exponents: np.ndarray, harmonics: np.ndarray):
        if len(exponents) and exponents.min() < 0:
            raise SeriesError("negative exponent in series term.")

    @classmethod
    def _within_caps(cls, exponents, harmonics, caps) -> np.ndarray:
        raise NotImplementedError()

    # inspection

    @property
    def caps(self) -> Dict[str, int]:
        return dict(zip(self.cap_names, self._caps))

    @property
    def keys(self) -> np.ndarray:
        return self._keys

    @property
    def coefficients(self) -> np.ndarray:
        return self._coefficients

    @property
    def exponents(self) -> np.ndarray:
        return unpack(self._keys)[0]

    @property
    def harmonics(self) -> np.ndarray:
        return unpack(self._keys)[1]

    def terms(self) -> Iterator[Term]:
        exponents, harmonics = unpack(self._keys)
        for e, k, c in zip(exponents, harmonics, self._coefficients):
            yield (int(e[0]), int(e[1])), (int(k[0]), int(k[1])), complex(c)

    def coefficient(self, exponent: Sequence[int], harmonic: Sequence[int]) -> complex:
        key = pack(np.array([exponent]), np.array([harmonic]))[0]
        position = np.searchsorted(self._keys, key)
        if position < len(self._keys) and self._keys[position] == key:
            return complex(self._coefficients[position])
        return 0j

    def __len__(self) -> int:
        return len(self._keys)

    def __bool__(self) -> bool:
        return len(self._keys) > 0

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self._caps == other._caps
            and np.array_equal(self._keys, other._keys)
            and np.array_equal(self._coefficients, other._coefficients)
        )

    def __hash__(self):
        return hash((self.kind, self._caps, self._keys.tobytes(), self._coefficients.tobytes()))

    def __repr__(self) -> str:
        caps = ", ".join(f"{k}={v}" for k, v in self.caps.items())
        return f"{type(self).__name__}({len(self)} terms, {caps})"

    def norm(self) -> float:
        """
        Returns the sum of the moduli of the complex coefficients.
        """
        return float(np.abs(self._coefficients).sum())

    def max_abs(self) -> float:
        return float(np.abs(self._coefficients).max()) if len(self) else 0.0

    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    def fourier_degrees(self) -> np.ndarray:
        return np.abs(self.harmonics).sum(axis=1)

    def is_real(self, rtol: float = 1e-12) -> bool:
        difference = (self - self.conjugate()).norm()
        return difference <= rtol * max(self.norm(), PRUNE)

    # algebra

    def _check_compatible(self, other: _Series):
        if type(other) is not type(self):
            raise SeriesError(f"cannot combine {type(self).__name__} with {type(other).__name__}.")
        if other._caps != self._caps:
            raise SeriesError(f"caps differ: {self.caps} and {other.caps}.")

    def _new(self: S, keys: np.ndarray, coefficients: np.ndarray) -> S:
        return type(self)(keys, coefficients, self._caps)

    def _select(self: S, mask: np.ndarray) -> S:
        return self._new(self._keys[mask], self._coefficients[mask])

    def __add__(self: S, other: S) -> S:
        if isinstance(other, (int, float, complex)):
            return self + self.constant(other, **self.caps)
        self._check_compatible(other)
        keys, coefficients = _aggregate(
            np.concatenate([self._keys, other._keys]),
            np.concatenate([self._coefficients, other._coefficients]),
        )
        return self._new(keys, coefficients)

    __radd__ = __add__

    def __neg__(self: S) -> S:
        return self._new(self._keys, -self._coefficients)

    def __sub__(self: S, other: S) -> S:
        return self + (-other)

    def __mul__(self: S, other) -> S:
        if isinstance(other, _Series):
            return self._product(other)
        value = complex(other)
        if value == 0:
            return self.zero(**self.caps)
        coefficients = self._coefficients * value
        keep = np.abs(coefficients) > PRUNE
        return self._new(self._keys[keep], coefficients[keep])

    def __rmul__(self: S, other) -> S:
        return self * other

    def __truediv__(self: S, other) -> S:
        return self * (1.0 / complex(other))

    def conjugate(self: S) -> S:
        """
        Returns the series of the complex-conjugate function.
        """
        exponents, harmonics = unpack(self._keys)
        keys, coefficients = _aggregate(pack(exponents, -harmonics), np.conj(self._coefficients))
        return self._new(keys, coefficients)

    def real_part(self: S) -> S:
        """
        Projects onto real functions, enforcing ``c(ℓ, -k) = conj c(ℓ, k)``.
        """
        return (self + self.conjugate()) * 0.5

    def with_caps(self: S, **caps: int) -> S:
        """
        Returns the same terms under new caps (terms beyond the new caps are dropped).
        """
        merged = {**self.caps, **caps}
        caps_tuple = self._caps_from(merged)
        exponents, harmonics = unpack(self._keys)
        keep = self._within_caps(exponents, harmonics, caps_tuple)
        return type(self)(self._keys[keep], self._coefficients[keep], caps_tuple)

    def average(self: S, which: Optional[int] = None) -> S:
        """
        Returns the angular average over angle ``which`` (1 or 2), or over both angles when omitted.
        """
        harmonics = self.harmonics
        if which is None:
            return self._select(np.all(harmonics == 0, axis=1))
        if which not in (1, 2):
            raise ValueError(f"{which} is not a valid value")
        return self._select(harmonics[:, which - 1] == 0)

    def harmonic_split(self: S, which: Optional[int] = None) -> Tuple[S, S]:
        """
        Splits into the angular average and the oscillating remainder.
        """
        average = self.average(which)
        return average, self - average

    def divide_by_divisors(self: S, omega: Sequence[float], floor: float = 0.0) -> S:
        """
        Returns the series with every coefficient ``c_k`` replaced by ``c_k / (i k·ω)``.

        Raises:
            SmallDivisorError: When a harmonic of the series has ``|k·ω|`` below ``floor`` or exactly zero.
        """
        if not self:
            return self
        harmonics = self.harmonics
        divisors = harmonics @ np.asarray(omega, dtype=float)
        bad = (np.abs(divisors) < floor) | (divisors == 0)
        if bad.any():
            worst = int(np.argmin(np.where(bad, np.abs(divisors), np.inf)))
            raise SmallDivisorError(harmonics[worst], abs(divisors[worst]), floor)
        return self._new(self._keys, self._coefficients / (1j * divisors))

    def filter(self: S, predicate: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> S:
        exponents, harmonics = unpack(self._keys)
        return self._select(np.asarray(predicate(exponents, harmonics), dtype=bool))

    def derivative(self: S, var: str, which: int) -> S:
        """
        Differentiates with respect to the ``which``-th (1 or 2) action (``var="action"``) or angle (``var="angle"``).
        """
        if which not in (1, 2):
            raise ValueError(f"{which} is not a valid value")
        j = which - 1
        exponents, harmonics = unpack(self._keys)
        if var == "angle":
            coefficients = 1j * harmonics[:, j] * self._coefficients
            keep = harmonics[:, j] != 0
            return self._new(self._keys[keep], coefficients[keep])
        if var != "action":
            raise ValueError(f"{var} is not a valid value")
        keep = exponents[:, j] != 0
        exponents, harmonics = exponents[keep].copy(), harmonics[keep]
        factor = exponents[:, j] / self._degree_shift
        exponents[:, j] -= self._degree_shift
        if len(exponents) and exponents.min() < 0:
            raise SeriesError("action derivative leaves the representable class (odd power of √J).")
        keys, coefficients = _aggregate(pack(exponents, harmonics), factor * self._coefficients[keep])
        return self._new(keys, coefficients)

    def _product(self: S, other: S) -> S:
        self._check_compatible(other)
        if not self or not other:
            return self.zero(**self.caps)
        ef, kf = unpack(self._keys)
        eg, kg = unpack(other._keys)
        cf, cg = self._coefficients, other._coefficients
        all_keys, all_coefficients = [], []
        for rows in _row_chunks(len(self), len(other)):
            e = (ef[rows, None, :] + eg[None, :, :]).reshape(-1, 2)
            k = (kf[rows, None, :] + kg[None, :, :]).reshape(-1, 2)
            c = (cf[rows, None] * cg[None, :]).reshape(-1)
            keep = self._within_caps(e, k, self._caps)
            all_keys.append(pack(e[keep], k[keep]))
            all_coefficients.append(c[keep])
        keys, coefficients = _aggregate(np.concatenate(all_keys), np.concatenate(all_coefficients))
        return self._new(keys, coefficients)

    def bracket(self: S, other: S) -> S:
        """
        Returns the Poisson bracket ``{self, other}`` truncated to the shared caps.
        """
        self._check_compatible(other)
        if not self or not other:
            return self.zero(**self.caps)
        ef, kf = unpack(self._keys)
        eg, kg = unpack(other._keys)
        cf, cg = self._coefficients, other._coefficients
        shift = self._degree_shift
        scale = 1j / shift
        all_keys, all_coefficients = [], []
        for rows in _row_chunks(len(self), len(other)):
            e_sum = ef[rows, None, :] + eg[None, :, :]
            k_sum = (kf[rows, None, :] + kg[None, :, :]).reshape(-1, 2)
            base = cf[rows, None] * cg[None, :]
            for j in (0, 1):
                factor = kf[rows, None, j] * eg[None, :, j] - ef[rows, None, j] * kg[None, :, j]
                mask = (factor != 0).reshape(-1)
                if not mask.any():
                    continue
                e = e_sum.reshape(-1, 2)[mask].copy()
                e[:, j] -= shift
                if e.min() < 0:
                    raise SeriesError("bracket produced an exponent outside the parity lattice.")
                k = k_sum[mask]
                c = scale * (base * factor).reshape(-1)[mask]
                keep = self._within_caps(e, k, self._caps)
                all_keys.append(pack(e[keep], k[keep]))
                all_coefficients.append(c[keep])
        if not all_keys:
            return self.zero(**self.caps)
        keys, coefficients = _aggregate(np.concatenate(all_keys), np.concatenate(all_coefficients))
        return self._new(keys, coefficients)

    # evaluation

    def _monomials(self, actions: np.ndarray, exponents: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    def evaluate(self, actions, angles) -> Union[float, np.ndarray]:
        """
        Evaluates the (real) function at one point or at arrays of points of shape (P, 2).

        The imaginary residue left by the reality symmetry is discarded.
        """
        actions = np.asarray(actions, dtype=float)
        angles = np.asarray(angles, dtype=float)
        single = actions.ndim == 1
        actions = np.atleast_2d(actions)
        angles = np.atleast_2d(angles)
        actions, angles = np.broadcast_arrays(actions, angles)
        out = np.zeros(len(actions))
        if self:
            exponents, harmonics = unpack(self._keys)
            step = max(1, _PAIR_CHUNK // len(self))
            for start in range(0, len(actions), step):
                a = actions[start : start + step]
                q = angles[start : start + step]
                monomials = self._monomials(a, exponents)
                phases = np.exp(1j * (q @ harmonics.T))
                out[start : start + step] = ((monomials * phases) @ self._coefficients).real
        return float(out[0]) if single else out


class SqrtSeries(_Series):
    """
    A series in powers of the square roots of the actions, with harmonics obeying the parity rule.

    Args:
        degree_cap: The largest total degree ``|ℓ| = ℓ₁ + ℓ₂`` retained.
    """

    kind = "sqrt"
    cap_names = ("degree_cap",)
    _degree_shift = 2

    @property
    def degree_cap(self) -> int:
        return self._caps[0]

    @classmethod
    def _validate(cls, exponents, harmonics):
        super()._validate(exponents, harmonics)
        if len(exponents) and (
            np.any(np.abs(harmonics) > exponents) or np.any((exponents - harmonics) % 2 != 0)
        ):
            raise SeriesError("harmonic violates the parity rule of the square-root class.")

    @classmethod
    def _within_caps(cls, exponents, harmonics, caps) -> np.ndarray:
        return exponents.sum(axis=1) <= caps[0]

    @classmethod
    def action(cls, j: int, **caps: int) -> SqrtSeries:
        """
        Returns the coordinate function ``J_j``.
        """
        exponent = (2, 0) if j == 1 else (0, 2)
        if j not in (1, 2):
            raise ValueError(f"{j} is not a valid value")
        return cls.from_terms([(exponent, (0, 0), 1.0)], **caps)

    @classmethod
    def cartesian(cls, j: int, which: str, **caps: int) -> SqrtSeries:
        """
        Returns ``Y_j = √(2J_j) cos ϑ_j`` (``which="Y"``) or ``X_j = √(2J_j) sin ϑ_j`` (``which="X"``).
        """
        if j not in (1, 2):
            raise ValueError(f"{j} is not a valid value")
        e = (1, 0) if j == 1 else (0, 1)
        k = e
        minus = (-k[0], -k[1])
        r = 1 / math.sqrt(2)
        if which == "Y":
            terms = [(e, k, r), (e, minus, r)]
        elif which == "X":
            terms = [(e, k, -1j * r), (e, minus, 1j * r)]
        else:
            raise ValueError(f"{which} is not a valid value")
        return cls.from_terms(terms, **caps)

    @classmethod
    def frequency_term(cls, omega: Sequence[float], **caps: int) -> SqrtSeries:
        """
        Returns ``ω·J``.
        """
        return cls.from_terms([((2, 0), (0, 0), omega[0]), ((0, 2), (0, 0), omega[1])], **caps)

    def is_in_class(self, s: int) -> bool:
        """
        True when every term is homogeneous of degree ``s`` in √J.
        """
        return bool(np.all(self.degrees() == s))

    def homogeneous(self, s: int) -> SqrtSeries:
        return self._select(self.degrees() == s)

    def _monomials(self, actions, exponents) -> np.ndarray:
        if np.any(actions < 0):
            raise SeriesError("negative action under a square root.")
        roots = np.sqrt(actions)
        return (roots[:, None, 0] ** exponents[None, :, 0]) * (roots[:, None, 1] ** exponents[None, :, 1])


class ActionSeries(_Series):
    """
    A series in integer powers of the actions and a Fourier polynomial in the angles.

    Args:
        action_cap: The largest total action degree ``|j|`` retained.
        fourier_cap: The largest Fourier degree ``|k| = |k₁| + |k₂|`` retained.
    """

    kind = "action"
    cap_names = ("action_cap", "fourier_cap")
    _degree_shift = 1

    @property
    def action_cap(self) -> int:
        return self._caps[0]

    @property
    def fourier_cap(self) -> int:
        return self._caps[1]

    @classmethod
    def _within_caps(cls, exponents, harmonics, caps) -> np.ndarray:
        return (exponents.sum(axis=1) <= caps[0]) & (np.abs(harmonics).sum(axis=1) <= caps[1])

    @classmethod
    def action(cls, j: int, **caps: int) -> ActionSeries:
        """
        Returns the coordinate function ``p_j``.
        """
        if j not in (1, 2):
            raise ValueError(f"{j} is not a valid value")
        return cls.from_terms([((1, 0) if j == 1 else (0, 1), (0, 0), 1.0)], **caps)

    @classmethod
    def frequency_term(cls, omega: Sequence[float], **caps: int) -> ActionSeries:
        """
        Returns ``ω·p``.
        """
        return cls.from_terms([((1, 0), (0, 0), omega[0]), ((0, 1), (0, 0), omega[1])], **caps)

    def is_in_class(self, ell: int, fourier: int) -> bool:
        """
        True when every term has action degree ``ell`` and Fourier degree at most ``fourier``.
        """
        return bool(np.all(self.degrees() == ell) and np.all(self.fourier_degrees() <= fourier))

    def action_part(self, ell: int) -> ActionSeries:
        return self._select(self.degrees() == ell)

    def translate(self, shift: Sequence[float]) -> Dict[int, ActionSeries]:
        """
        Expands ``f(p + shift, q)`` and returns the pieces keyed by how many powers of the shift they carry.
        """
        shift = np.asarray(shift, dtype=float)
        exponents, harmonics = unpack(self._keys)
        pieces: Dict[int, List[Tuple[np.ndarray, np.ndarray, np.ndarray]]] = defaultdict(list)
        for a in range(int(exponents[:, 0].max(initial=0)) + 1):
            for b in range(int(exponents[:, 1].max(initial=0)) + 1):
                if a == 0 and b == 0:
                    continue
                ok = (exponents[:, 0] >= a) & (exponents[:, 1] >= b)
                if not ok.any():
                    continue
                e = exponents[ok] - np.array([a, b])
                factor = (
                    _binomial(exponents[ok, 0], a)
                    * _binomial(exponents[ok, 1], b)
                    * shift[0] ** a
                    * shift[1] ** b
                )
                pieces[a + b].append((e, harmonics[ok], self._coefficients[ok] * factor))
        out = {}
        for d, parts in pieces.items():
            e = np.concatenate([p[0] for p in parts])
            k = np.concatenate([p[1] for p in parts])
            c = np.concatenate([p[2] for p in parts])
            keys, coefficients = _aggregate(pack(e, k), c)
            out[d] = self._new(keys, coefficients)
        return out

    def _monomials(self, actions, exponents) -> np.ndarray:
        return (actions[:, None, 0] ** exponents[None, :, 0]) * (actions[:, None, 1] ** exponents[None, :, 1])


def _binomial(n: np.ndarray, k: int) -> np.ndarray:
    return np.array([math.comb(int(x), k) for x in n], dtype=float)


def _row_chunks(rows: int, columns: int) -> Iterator[slice]:
    step = max(1, _PAIR_CHUNK // max(1, columns))
    for start in range(0, rows, step):
        yield slice(start, min(rows, start + step))


Series = Union[SqrtSeries, ActionSeries]


def bracket(f: Series, g: Series) -> Series:
    """
    Returns the Poisson bracket ``{f, g}``.

    Raises:
        SeriesError: When the series are of different kinds or caps.
    """
    return f.bracket(g)


def angle_average(g: Series, which: int) -> Series:
    """
    Keeps exactly the terms whose harmonic on angle ``which`` (1 or 2) vanishes.
    """
    return g.average(which)


def norm(g: Series) -> float:
    return g.norm()


def evaluate(g: Series, actions, angles):
    return g.evaluate(actions, angles)


def lie_series(f: S, chi: S, order: int) -> S:
    """
    Returns ``Σ_{j≤order} L_χ^j f / j!``.
    """
    total = [f]
    term = f
    for j in range(1, order + 1):
        term = term.bracket(chi) / j
        if not term:
            break
        total.append(term)
    return type(f).sum(total, **f.caps)


@dataclass(frozen=True)
class SolvedBlock:
    """
    Marks a homological equation solved inside a graded Lie transform.

    ``L_χ(kernel) = normal - target`` holds by construction, so the brackets of the kernel are replaced by
    brackets of ``normal - target``; the grade of the target receives exactly the normal part.

    Args:
        kernel: The grade holding the linear frequency term.
        target: The grade whose oscillating part the generating function removes.
        normal: The part of the target that is left in place (its average).
    """

    kernel: Grade
    target: Grade
    normal: Series


def _shift(grade: Grade, delta: Grade) -> Grade:
    return tuple(a + b for a, b in zip(grade, delta))


def lie_transform(
    terms: Mapping[Grade, S],
    chi: S,
    delta: Grade,
    within: Callable[[Grade], bool],
    solved: Optional[SolvedBlock] = None,
    carry_normal: bool = True,
) -> Dict[Grade, S]:
    """
    Applies ``exp(L_χ)`` to a graded Hamiltonian.

    Args:
        terms: The Hamiltonian, keyed by grade.
        chi: The generating function; each application of ``L_χ`` moves a term by ``delta``.
        within: True for grades that are kept; the triangle stops at the first grade outside.
        solved: The homological equation solved by ``chi``, if any.
        carry_normal: Whether the brackets of the normal part are carried to higher grades. When false
            the target grade ``t`` contributes only ``(i-1)/i! L_χ^{i-1}`` of itself at ``t + (i-1)·delta``.

    Returns:
        The transformed Hamiltonian, keyed by grade (zero grades are omitted).
    """
    if not chi and solved is None:
        return {g: f for g, f in terms.items() if f}
    caps = chi.caps
    parts: Dict[Grade, List[S]] = defaultdict(list)
    for grade, f in terms.items():
        if solved is not None and grade == solved.kernel:
            parts[grade].append(f)
            continue
        if solved is not None and grade == solved.target:
            parts[grade].append(solved.normal)
            target_term, normal_term, current = f, solved.normal, grade
            i = 1
            while True:
                i += 1
                current = _shift(current, delta)
                if not within(current):
                    break
                target_term = target_term.bracket(chi) / (i - 1)
                piece = target_term * ((i - 1) / i)
                if carry_normal:
                    normal_term = normal_term.bracket(chi) / (i - 1)
                    piece = piece + normal_term / i
                if not target_term and not (carry_normal and normal_term):
                    break
                parts[current].append(piece)
            continue
        if not f:
            continue
        parts[grade].append(f)
        term, current, j = f, grade, 0
        while True:
            j += 1
            current = _shift(current, delta)
            if not within(current):
                break
            term = term.bracket(chi) / j
            if not term:
                break
            parts[current].append(term)
    if solved is not None and solved.target not in terms:
        parts[solved.target].append(solved.normal)
    out = {}
    for grade, pieces in parts.items():
        total = type(chi).sum(pieces, **caps)
        if total or (solved is not None and grade == solved.kernel):
            out[grade] = total
    return out


# text format


def dumps(series: Series) -> str:
    """
    Serializes a series as text: a header with the kind and caps, then ``ℓ1 ℓ2 k1 k2 re im`` per term.
    """
    caps = " ".join(f"{k}={v}" for k, v in series.caps.items())
    lines = [f"# kind: {series.kind}", f"# caps: {caps}"]
    for (e1, e2), (k1, k2), c in series.terms():
        lines.append(f"{e1} {e2} {k1} {k2} {float.hex(c.real)} {float.hex(c.imag)}")
    return "\n".join(lines) + "\n"


_KINDS: Dict[str, Type[_Series]] = {"sqrt": SqrtSeries, "action": ActionSeries}


def loads(text: str) -> Series:
    kind = None
    caps: Dict[str, int] = {}
    exponents, harmonics, coefficients = [], [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key, value = key.strip(), value.strip()
            if key == "kind":
                kind = value
            elif key == "caps":
                for item in value.split():
                    name, _, number = item.partition("=")
                    caps[name] = int(number)
            continue
        fields = line.split()
        if len(fields) != 6:
            raise SeriesError(f"malformed series line: {line!r}.")
        exponents.append((int(fields[0]), int(fields[1])))
        harmonics.append((int(fields[2]), int(fields[3])))
        coefficients.append(complex(float.fromhex(fields[4]), float.fromhex(fields[5])))
    if kind not in _KINDS:
        raise SeriesError(f"{kind} is not a valid series kind.")
    cls = _KINDS[kind]
    if not coefficients:
        return cls.zero(**caps)
    return cls.from_arrays(np.array(exponents), np.array(harmonics), np.array(coefficients), **caps)


def write(series: Series, path: Union[str, Path]):
    Path(path).write_text(dumps(series))


def read(path: Union[str, Path]) -> Series:
    return loads(Path(path).read_text())
