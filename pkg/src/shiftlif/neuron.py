"""Discrete-time neuron layers: binary LIF, ShiftLIF, INT-LIF and a uniform
multi-level variant used for grid ablations.

All step functions are vectorised over leading axes, so a state of shape
``(batch, N)`` steps a whole mini-batch at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .quantizer import (
    Kind,
    LevelSet,
    ShiftMode,
    int_positions,
    make_level_set,
    shift_positions,
    uniform_positions,
)


class NeuronKind(str, enum.Enum):
    LIF = "lif"
    SHIFT_LIF = "shiftlif"
    INT_LIF = "intlif"
    UNIFORM_LIF = "uniformlif"


@dataclass(frozen=True)
class NeuronParams:
    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    K: int = 2
    kind: NeuronKind = NeuronKind.SHIFT_LIF

    def __post_init__(self):
        object.__setattr__(self, "kind", NeuronKind(self.kind))
        problems = self.problems()
        if problems:
            raise ParameterError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not np.isfinite(self.tau) or self.tau < 1:
            out.append(f"tau must be >= 1, got {self.tau}")
        if not self.v_th > self.v_reset:
            out.append(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")
        if isinstance(self.K, bool) or not isinstance(self.K, (int, np.integer)) or not 0 <= self.K <= 30:
            out.append(f"K must be an integer in [0, 30], got {self.K!r}")
        return out

    @property
    def leak(self) -> float:
        """Per-step retention factor, 1 - 1/tau."""
        return 1.0 - 1.0 / self.tau

    @property
    def level_set(self) -> LevelSet:
        if self.kind is NeuronKind.LIF:
            return make_level_set(Kind.INT, 0)
        if self.kind is NeuronKind.SHIFT_LIF:
            return make_level_set(Kind.SHIFT, self.K, ShiftMode.ALGORITHMIC_CLAMP)
        if self.kind is NeuronKind.INT_LIF:
            return make_level_set(Kind.INT, self.K)
        return make_level_set(Kind.UNIFORM, self.K)


@dataclass
class NeuronState:
    """Membrane state.

    ``v`` is the membrane after the last step's reset, except for binary LIF
    whose reset is applied at the start of the following step; there ``v`` is
    the pre-reset potential and ``s_prev`` carries the pending reset.
    ``charged`` is the post-integration, pre-reset membrane of the last step.
    """

    v: np.ndarray
    s_prev: np.ndarray
    charged: np.ndarray

    @classmethod
    def initial(cls, shape, params: NeuronParams) -> NeuronState:
        v = np.full(shape, float(params.v_reset))
        return cls(v, np.zeros(shape), v.copy())


@dataclass
class SpikeTensor:
    """Spike outputs stored as level positions into ``level_set.levels``.

    Axis 0 is time; the last axis indexes neurons.
    """

    positions: np.ndarray
    level_set: LevelSet

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int8)
        if self.positions.size and (self.positions.min() < 0 or self.positions.max() >= len(self.level_set)):
            raise ParameterError("spike positions fall outside the level set")

    @property
    def shape(self):
        return self.positions.shape

    @property
    def amplitudes(self) -> np.ndarray:
        return self.level_set.amplitudes(self.positions)

    @property
    def exponents(self) -> np.ndarray:
        return self.level_set.exponents(self.positions)

    @property
    def nonzero(self) -> int:
        return int(np.count_nonzero(self.positions))

    def __getitem__(self, item) -> SpikeTensor:
        return SpikeTensor(self.positions[item], self.level_set)

    @classmethod
    def concatenate(cls, tensors) -> SpikeTensor:
        tensors = list(tensors)
        level_set = tensors[0].level_set
        if any(t.level_set != level_set for t in tensors):
            raise ParameterError("cannot concatenate spike tensors with different level sets")
        return cls(np.concatenate([t.positions for t in tensors], axis=0), level_set)


def _check_shapes(state: NeuronState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != state.v.shape:
        raise DimensionError(f"input shape {x.shape} does not match state shape {state.v.shape}")
    return x


def _charge(state: NeuronState, x, params: NeuronParams) -> np.ndarray:
    v = state.v
    return v + (params.v_reset - v) / params.tau + x


def lif_step(state: NeuronState, x_t, params: NeuronParams):
    """Binary LIF: u <- leak*u + x - s_prev*v_th, spike iff u >= v_th."""
    if params.kind is not NeuronKind.LIF:
        raise ParameterError(f"lif_step needs kind=lif, got {params.kind.value}")
    x = _check_shapes(state, x_t)
    u = params.v_reset + params.leak * (state.v - params.v_reset) + x - state.s_prev * params.v_th
    positions = (u >= params.v_th).astype(np.int8)
    return positions, NeuronState(u, positions.astype(np.float64), u)


def _multilevel_step(state, x_t, params, quantize):
    x = _check_shapes(state, x_t)
    charged = _charge(state, x, params)
    positions = quantize(charged)
    s = params.level_set.amplitudes(positions)
    v = charged - s * params.v_th
    return positions, NeuronState(v, s, charged)


def shiftlif_step(state: NeuronState, x_t, params: NeuronParams):
    """ShiftLIF: leaky charge, clamp to [0, v_th], power-of-two spike, proportional soft reset."""
    if params.kind is not NeuronKind.SHIFT_LIF:
        raise ParameterError(f"shiftlif_step needs kind=shiftlif, got {params.kind.value}")

    def quantize(charged):
        bounded = np.clip(charged, 0.0, params.v_th) / params.v_th
        return shift_positions(bounded, params.K, ShiftMode.ALGORITHMIC_CLAMP)

    return _multilevel_step(state, x_t, params, quantize)


def intlif_step(state: NeuronState, x_t, params: NeuronParams):
    """INT-LIF: nearest-integer spike of the non-negative membrane, proportional reset."""
    if params.kind is not NeuronKind.INT_LIF:
        raise ParameterError(f"intlif_step needs kind=intlif, got {params.kind.value}")

    def quantize(charged):
        return int_positions(np.maximum(charged, 0.0) / params.v_th, params.K)

    return _multilevel_step(state, x_t, params, quantize)


def uniformlif_step(state: NeuronState, x_t, params: NeuronParams):
    """Uniform multi-level spike on [0, 1], same charge and reset as ShiftLIF."""
    if params.kind is not NeuronKind.UNIFORM_LIF:
        raise ParameterError(f"uniformlif_step needs kind=uniformlif, got {params.kind.value}")

    def quantize(charged):
        return uniform_positions(np.clip(charged, 0.0, params.v_th) / params.v_th, params.K)

    return _multilevel_step(state, x_t, params, quantize)


STEP_FUNCTIONS = {
    NeuronKind.LIF: lif_step,
    NeuronKind.SHIFT_LIF: shiftlif_step,
    NeuronKind.INT_LIF: intlif_step,
    NeuronKind.UNIFORM_LIF: uniformlif_step,
}


def step(state: NeuronState, x_t, params: NeuronParams):
    return STEP_FUNCTIONS[params.kind](state, x_t, params)


@dataclass
class NeuronLayer:
    """A population of ``n`` neurons sharing one parameter set."""

    n: int
    params: NeuronParams = field(default_factory=NeuronParams)
    state: NeuronState | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"layer width must be >= 1, got {self.n}")

    @property
    def level_set(self) -> LevelSet:
        return self.params.level_set

    def reset(self, batch_shape=()):
        self.state = NeuronState.initial(tuple(batch_shape) + (self.n,), self.params)

    def step(self, x_t) -> np.ndarray:
        if self.state is None:
            self.reset(np.shape(x_t)[:-1])
        positions, self.state = step(self.state, x_t, self.params)
        return positions


def run_sequence(layer: NeuronLayer, inputs, record_membrane: bool = False):
    """Drive ``layer`` with a (T, ..., N) current array from a fresh resting state.

    Returns the spike tensor and, when ``record_membrane`` is set, the
    post-charge, pre-reset membrane trace with the same shape as ``inputs``.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim < 2:
        raise DimensionError(f"inputs must be at least (T, N), got shape {inputs.shape}")
    if inputs.shape[0] == 0:
        raise ParameterError("sequence length T must be >= 1")
    if inputs.shape[-1] != layer.n:
        raise DimensionError(f"inputs have {inputs.shape[-1]} channels, layer has {layer.n}")
    layer.reset(inputs.shape[1:-1])
    positions = np.empty(inputs.shape, dtype=np.int8)
    trace = np.empty(inputs.shape) if record_membrane else None
    for t, x_t in enumerate(inputs):
        positions[t] = layer.step(x_t)
        if record_membrane:
            trace[t] = layer.state.charged
    return SpikeTensor(positions, layer.level_set), trace
