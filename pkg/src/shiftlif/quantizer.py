"""Stateless spike quantizers.

Three alphabets with the same number of outputs (K + 2):

* ``SHIFT``   : {0, 2^-K, ..., 2^-1, 1}, power-of-two levels
* ``INT``     : {0, 1, ..., K+1}, nearest-integer rounding
* ``UNIFORM`` : {0, 1/(K+1), ..., 1}, nearest level on [0, 1]

Every quantizer has a scalar form returning a :class:`SpikeLevel` and an
array form returning integer *level positions* (indices into
``LevelSet.levels``; position 0 is always the silent level).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ParameterError

K_MAX = 30


class Kind(str, enum.Enum):
    SHIFT = "shift"
    INT = "int"
    UNIFORM = "uniform"


class ShiftMode(str, enum.Enum):
    # exponent clamped to K: the bottom shell [2^-(K+1), 2^-K) emits 2^-K
    ALGORITHMIC_CLAMP = "clamp"
    # largest level not exceeding v: the bottom shell emits 0
    FLOOR_ADMISSIBLE = "floor"


@dataclass(frozen=True)
class LevelSet:
    """Output alphabet of one quantizer together with its decision rule."""

    kind: Kind
    K: int
    levels: tuple[float, ...]
    shift_mode: ShiftMode = ShiftMode.ALGORITHMIC_CLAMP

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def max_amplitude(self) -> float:
        return self.levels[-1]

    def amplitudes(self, positions) -> np.ndarray:
        """Map level positions to real amplitudes."""
        return np.asarray(self.levels, dtype=np.float64)[np.asarray(positions)]

    def exponents(self, positions) -> np.ndarray:
        """Shift exponents k (amplitude 2^-k) for SHIFT level sets; -1 marks silence."""
        if self.kind is not Kind.SHIFT:
            raise ParameterError(f"exponents are only defined for shift level sets, got {self.kind.value}")
        pos = np.asarray(positions, dtype=np.int64)
        return np.where(pos == 0, -1, self.K + 1 - pos)

    def quantize(self, values) -> np.ndarray:
        """Vectorised quantization to level positions (int8 array)."""
        if self.kind is Kind.SHIFT:
            return shift_positions(values, self.K, self.shift_mode)
        if self.kind is Kind.INT:
            return int_positions(values, self.K)
        return uniform_positions(values, self.K)

    def spike(self, position: int) -> SpikeLevel:
        position = int(position)
        exponent = None
        if self.kind is Kind.SHIFT and position > 0:
            exponent = self.K + 1 - position
        return SpikeLevel(position, self.levels[position], exponent)


class SpikeLevel(NamedTuple):
    """One quantized output.

    ``position`` indexes ``LevelSet.levels``. For shift alphabets
    ``exponent`` is the k of amplitude 2^-k (None for a silent output); for
    the integer and uniform alphabets ``position`` is the level number j.
    """

    position: int
    amplitude: float
    exponent: int | None = None

    @property
    def is_zero(self) -> bool:
        return self.position == 0


def _check_K(K) -> int:
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)):
        raise ParameterError(f"K must be an integer, got {K!r}")
    if not 0 <= K <= K_MAX:
        raise ParameterError(f"K must lie in [0, {K_MAX}], got {K}")
    return int(K)


def make_level_set(kind, K: int, shift_mode=ShiftMode.ALGORITHMIC_CLAMP) -> LevelSet:
    K = _check_K(K)
    kind = Kind(kind)
    shift_mode = ShiftMode(shift_mode)
    if kind is Kind.SHIFT:
        levels = (0.0,) + tuple(math.ldexp(1.0, -k) for k in range(K, -1, -1))
    elif kind is Kind.INT:
        levels = tuple(float(j) for j in range(K + 2))
    else:
        n = K + 1
        levels = tuple(j / n for j in range(n + 1))
    return LevelSet(kind, K, levels, shift_mode)


def _as_checked_array(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if np.isnan(v).any():
        raise DomainError("quantizer input contains NaN")
    return v


def shift_positions(values, K: int, mode=ShiftMode.ALGORITHMIC_CLAMP) -> np.ndarray:
    K = _check_K(K)
    mode = ShiftMode(mode)
    x = np.clip(_as_checked_array(values), 0.0, 1.0)
    # x = m * 2^e with m in [0.5, 1), so ceil(-log2 x) == 1 - e, exactly,
    # including at powers of two
    _, e = np.frexp(x)
    k = 1 - e.astype(np.int64)
    if mode is ShiftMode.ALGORITHMIC_CLAMP:
        active = x >= math.ldexp(1.0, -(K + 1))
        k = np.minimum(k, K)
    else:
        active = x >= math.ldexp(1.0, -K)
    return np.where(active, K + 1 - k, 0).astype(np.int8)


def int_positions(values, K: int) -> np.ndarray:
    K = _check_K(K)
    v = np.maximum(_as_checked_array(values), 0.0)
    whole = np.floor(v)
    # v - floor(v) is exact, so the half-way test never misclassifies
    j = whole + (v - whole >= 0.5)
    return np.minimum(j, K + 1).astype(np.int8)


def uniform_positions(values, K: int) -> np.ndarray:
    K = _check_K(K)
    n = K + 1
    x = np.clip(_as_checked_array(values), 0.0, 1.0)
    guess = np.floor(x * n).astype(np.int64)
    best = np.zeros_like(guess)
    best_dist = np.full(x.shape, np.inf)
    # scan the neighbourhood of the guess in ascending order; "<=" keeps the
    # larger level on ties
    for offset in (-1, 0, 1, 2):
        j = np.clip(guess + offset, 0, n)
        dist = np.abs(x - j / n)
        take = dist <= best_dist
        best = np.where(take, j, best)
        best_dist = np.where(take, dist, best_dist)
    return best.astype(np.int8)


def _scalar(v) -> float:
    v = float(v)
    if math.isnan(v):
        raise DomainError("quantizer input is NaN")
    return v


def q_shift(v: float, K: int, mode=ShiftMode.ALGORITHMIC_CLAMP) -> SpikeLevel:
    """Quantize one membrane value to the power-of-two alphabet."""
    level_set = make_level_set(Kind.SHIFT, K, mode)
    return level_set.spike(shift_positions(_scalar(v), K, mode))


def q_int(v: float, K: int) -> SpikeLevel:
    """Round one membrane value to the nearest integer level in {0, ..., K+1}."""
    return make_level_set(Kind.INT, K).spike(int_positions(_scalar(v), K))


def q_uniform(v: float, K: int) -> SpikeLevel:
    """Nearest level of {j/(K+1)} after clamping to [0, 1]; ties go up."""
    return make_level_set(Kind.UNIFORM, K).spike(uniform_positions(_scalar(v), K))
