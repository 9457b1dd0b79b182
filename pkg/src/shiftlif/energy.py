"""Event-driven energy estimate for spiking layers.

A layer with T time steps, mean spike magnitude s and M synapses costs

    E = T * s * M * (e_acc + e_move + e_weight)

with the per-event constants in picojoules. The synapse factor M is an
extension of the per-layer formula so that layer size matters. Constants
are configuration; the defaults are placeholders, not silicon data.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError
from .neuron import SpikeTensor

PJ_PER_MJ = 1e9


@dataclass(frozen=True)
class EnergyConstants:
    e_acc: float = 0.03
    e_move: float = 0.01
    e_weight: float = 0.05
    profile: str = "default"

    def __post_init__(self):
        for name in ("e_acc", "e_move", "e_weight"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {value}")

    @property
    def per_event(self) -> float:
        return self.e_acc + self.e_move + self.e_weight


# per-kind profiles; an integer-amplitude alphabet pays for a multiply
DEFAULT_PROFILES = {
    "lif": EnergyConstants(0.03, 0.01, 0.05, "lif"),
    "shiftlif": EnergyConstants(0.035, 0.01, 0.05, "shiftlif"),
    "intlif": EnergyConstants(0.2, 0.01, 0.05, "intlif"),
    "uniformlif": EnergyConstants(0.2, 0.01, 0.05, "uniformlif"),
}


def spike_rate(spikes) -> float:
    """Mean absolute spike amplitude over every (time, neuron) entry."""
    amplitudes = spikes.amplitudes if isinstance(spikes, SpikeTensor) else np.asarray(spikes, dtype=np.float64)
    if amplitudes.size == 0:
        raise ParameterError("cannot take the spike rate of an empty tensor")
    return math.fsum(np.abs(amplitudes).ravel()) / amplitudes.size


def event_rate(spikes) -> float:
    """Fraction of entries carrying a non-zero spike."""
    amplitudes = spikes.amplitudes if isinstance(spikes, SpikeTensor) else np.asarray(spikes, dtype=np.float64)
    if amplitudes.size == 0:
        raise ParameterError("cannot take the event rate of an empty tensor")
    return np.count_nonzero(amplitudes) / amplitudes.size


def layer_energy(T: int, s: float, synapse_count: int, constants: EnergyConstants) -> float:
    """Layer energy in millijoules."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if s < 0 or synapse_count < 0:
        raise ParameterError("spike rate and synapse count must be non-negative")
    return T * s * constants.per_event * synapse_count / PJ_PER_MJ


@dataclass
class LayerEnergy:
    name: str
    T: int
    spike_rate: float
    event_rate: float
    synapses: int
    synaptic_events: float
    energy_mj: float


@dataclass
class EnergyReport:
    profile: str
    layers: list = field(default_factory=list)

    @property
    def total_mj(self) -> float:
        return math.fsum(layer.energy_mj for layer in self.layers)

    def add(self, name: str, spikes: SpikeTensor, synapses: int, constants: EnergyConstants,
            T: int | None = None) -> LayerEnergy:
        """Append a layer measured from its recorded spike tensor (time on axis 0)."""
        T = spikes.shape[0] if T is None else T
        s = spike_rate(spikes)
        layer = LayerEnergy(
            name=name, T=T, spike_rate=s, event_rate=event_rate(spikes), synapses=synapses,
            synaptic_events=T * event_rate(spikes) * synapses,
            energy_mj=layer_energy(T, s, synapses, constants),
        )
        self.layers.append(layer)
        return layer

    def to_dict(self) -> dict:
        return {"profile": self.profile, "layers": [asdict(x) for x in self.layers], "total_mj": self.total_mj}
