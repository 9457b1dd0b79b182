"""Multiplier-free synaptic accumulation for power-of-two spikes.

A weight W (integer, ``frac_bits`` fractional bits) times a spike 2^-k is
either

* ``LOSSY``: ``W >> k``, an arithmetic right shift (floors toward -inf, drops
  the low bits), which is the plain hardware path, or
* ``EXACT``: ``W << (K - k)`` into an accumulator carrying K extra fractional
  bits, which loses nothing.

Silent inputs are never visited.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, RangeError
from .neuron import SpikeTensor
from .quantizer import Kind

# numpy int64 holds the accumulator; one bit is the sign
MAX_ACC_BITS = 64


class Mode(str, enum.Enum):
    EXACT = "exact"
    LOSSY = "lossy"


@dataclass(frozen=True)
class FixedPointMatrix:
    """Integer weights with a shared binary point: value = data / 2**frac_bits."""

    data: np.ndarray
    frac_bits: int
    weight_bits: int = 16

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionError(f"weight matrix must be 2-D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise ParameterError("fixed-point data must be integer")
        if self.frac_bits < 0:
            raise ParameterError(f"frac_bits must be >= 0, got {self.frac_bits}")
        if not 2 <= self.weight_bits <= MAX_ACC_BITS:
            raise ParameterError(f"weight_bits must lie in [2, {MAX_ACC_BITS}], got {self.weight_bits}")
        lo, hi = -(1 << (self.weight_bits - 1)), (1 << (self.weight_bits - 1)) - 1
        if data.size and (data.min() < lo or data.max() > hi):
            raise RangeError(f"weights do not fit in {self.weight_bits} signed bits")
        object.__setattr__(self, "data", data.astype(np.int64))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def to_float(self) -> np.ndarray:
        return np.ldexp(self.data.astype(np.float64), -self.frac_bits)


@dataclass(frozen=True)
class Accumulator:
    values: np.ndarray
    frac_bits: int
    visits: int = 0

    def to_float(self) -> np.ndarray:
        return np.ldexp(self.values.astype(np.float64), -self.frac_bits)


def quantize_weights(w, frac_bits: int, weight_bits: int = 16) -> FixedPointMatrix:
    """Round real weights to the nearest multiple of 2^-frac_bits (ties to even)."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise DimensionError(f"weight matrix must be 2-D, got shape {w.shape}")
    if frac_bits < 0:
        raise ParameterError(f"frac_bits must be >= 0, got {frac_bits}")
    if not np.isfinite(w).all():
        raise RangeError("weights must be finite")
    bound = math.ldexp(1.0, weight_bits - frac_bits - 1)
    if w.size and np.abs(w).max() >= bound:
        raise RangeError(f"|w| must be < {bound} for {weight_bits}-bit storage with {frac_bits} fractional bits")
    data = np.rint(np.ldexp(w, frac_bits)).astype(np.int64)
    return FixedPointMatrix(data, frac_bits, weight_bits)


def required_acc_bits(W: FixedPointMatrix, K: int) -> int:
    return W.weight_bits + K + math.ceil(math.log2(max(W.cols, 1))) + 1


def shift_accumulate(W: FixedPointMatrix, spikes: SpikeTensor, mode=Mode.EXACT,
                     acc_bits: int = MAX_ACC_BITS) -> Accumulator:
    """Accumulate ``W @ spikes`` using shifts and adds only.

    ``spikes`` is a single time step (1-D, length ``W.cols``) of a shift
    alphabet. The result carries ``frac_bits + K`` fractional bits in exact
    mode and ``frac_bits`` in lossy mode.
    """
    mode = Mode(mode)
    if spikes.level_set.kind is not Kind.SHIFT:
        raise ParameterError(f"shift_accumulate needs shift spikes, got {spikes.level_set.kind.value}")
    if spikes.positions.ndim != 1 or spikes.positions.shape[0] != W.cols:
        raise DimensionError(f"spike vector shape {spikes.shape} does not match {W.cols} columns")
    K = spikes.level_set.K
    if acc_bits > MAX_ACC_BITS:
        raise RangeError(f"accumulators wider than {MAX_ACC_BITS} bits are not supported")
    if required_acc_bits(W, K) > acc_bits:
        raise RangeError(
            f"accumulator needs {required_acc_bits(W, K)} bits for {W.weight_bits}-bit weights, "
            f"K={K} and {W.cols} inputs; only {acc_bits} available"
        )
    k = spikes.exponents
    active = np.flatnonzero(k >= 0)
    cols = W.data[:, active]
    if mode is Mode.EXACT:
        terms = np.left_shift(cols, (K - k[active])[None, :])
        frac = W.frac_bits + K
    else:
        terms = np.right_shift(cols, k[active][None, :])
        frac = W.frac_bits
    values = terms.sum(axis=1, dtype=np.int64) if active.size else np.zeros(W.rows, dtype=np.int64)
    return Accumulator(values, frac, visits=int(active.size) * W.rows)


def float_reference(w, amplitudes) -> np.ndarray:
    """Dense real matrix-vector product, the ground truth for the kernel."""
    w = np.asarray(w, dtype=np.float64)
    a = np.asarray(amplitudes, dtype=np.float64)
    if w.ndim != 2 or a.ndim != 1 or w.shape[1] != a.shape[0]:
        raise DimensionError(f"cannot multiply {w.shape} by {a.shape}")
    return w @ a


@dataclass(frozen=True)
class OpCounts:
    synaptic_visits: int
    skipped: int
    shift_ops: int
    acc_ops: int


def op_counter(spikes: SpikeTensor, fan_out: int) -> OpCounts:
    """Event counts for a spike train driving ``fan_out`` synapses per input.

    ``shift_ops`` counts visits whose amplitude is not 1 (a non-trivial shift).
    """
    if fan_out < 0:
        raise ParameterError(f"fan_out must be >= 0, got {fan_out}")
    nonzero = spikes.nonzero
    zeros = int(spikes.positions.size) - nonzero
    full_scale = int(np.count_nonzero(spikes.positions == len(spikes.level_set) - 1))
    return OpCounts(
        synaptic_visits=nonzero * fan_out,
        skipped=zeros * fan_out,
        shift_ops=(nonzero - full_scale) * fan_out,
        acc_ops=nonzero * fan_out,
    )
