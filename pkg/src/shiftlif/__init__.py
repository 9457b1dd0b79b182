"""Power-of-two multi-level spiking neurons (ShiftLIF) and their baselines."""

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    ParameterError,
    RangeError,
    ShiftLIFError,
    TrainingFault,
)
from .neuron import NeuronKind, NeuronLayer, NeuronParams, NeuronState, SpikeTensor, run_sequence
from .quantizer import Kind, LevelSet, ShiftMode, SpikeLevel, make_level_set, q_int, q_shift, q_uniform

__version__ = "0.1.0"
