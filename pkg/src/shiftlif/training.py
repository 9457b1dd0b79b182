"""Backpropagation-through-time for small fully connected spiking networks.

Architecture: input currents -> [Linear -> spiking layer] x L -> Linear
readout averaged over T -> softmax cross-entropy. The quantizer's zero
derivative is replaced by a surrogate:

* ShiftLIF / uniform: 1[0 <= u <= v_th] / v_th (the quantizer's support)
* INT-LIF: 1[0 <= u <= (K+1) v_th] / v_th
* binary LIF: 1[|u - v_th| <= v_th/2] / v_th (unit-width rectangle)

The reset term -S*v_th is detached in the backward pass unless
``detach_reset=False`` is requested.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import neuron as nrn
from .errors import DimensionError, ParameterError, TrainingFault
from .neuron import NeuronKind, NeuronParams, NeuronState, SpikeTensor
from .quantizer import Kind
from .synapse_kernel import Mode, quantize_weights, shift_accumulate

CHECKPOINT_FORMAT = "shiftlif-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    widths: tuple  # (input, hidden..., classes)
    neurons: tuple  # one NeuronParams per hidden layer
    T: int = 4
    readout: str = "mean"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        neurons = self.neurons
        if isinstance(neurons, NeuronParams):
            neurons = (neurons,) * max(len(widths) - 2, 0)
        object.__setattr__(self, "neurons", tuple(neurons))
        if len(widths) < 3:
            raise ParameterError("need at least one hidden spiking layer")
        if min(widths) < 1:
            raise ParameterError(f"layer widths must be >= 1, got {widths}")
        if len(self.neurons) != len(widths) - 2:
            raise ParameterError(f"{len(widths) - 2} hidden layers but {len(self.neurons)} neuron parameter sets")
        if self.T < 1:
            raise ParameterError(f"T must be >= 1, got {self.T}")
        if self.readout != "mean":
            raise ParameterError(f"unsupported readout {self.readout!r}")

    @classmethod
    def build(cls, widths, kind=NeuronKind.SHIFT_LIF, K=2, T=4, tau=2.0, v_th=1.0, v_reset=0.0):
        params = NeuronParams(tau=tau, v_th=v_th, v_reset=v_reset, K=K, kind=kind)
        return cls(tuple(widths), params, T)

    @property
    def n_spiking(self) -> int:
        return len(self.neurons)

    @property
    def synapse_counts(self) -> list[int]:
        """Synapses driven by each spiking layer's output (its fan-out)."""
        return [self.widths[i + 1] * self.widths[i + 2] for i in range(self.n_spiking)]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.5
    lambda_sr: float = 0.0
    r_target: float = 0.05
    seed: int = 0
    batch_size: int = 16

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ParameterError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.epochs < 0:
            out.append(f"epochs must be >= 0, got {self.epochs}")
        if not self.lr > 0:
            out.append(f"learning rate must be > 0, got {self.lr}")
        if self.lambda_sr < 0:
            out.append(f"lambda_sr must be >= 0, got {self.lambda_sr}")
        if not 0 <= self.r_target <= 1:
            out.append(f"r_target must lie in [0, 1], got {self.r_target}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        return out


def init_params(spec: NetworkSpec, seed: int) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases: [W1, b1, ..., W_out, b_out]."""
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


class SpikeBuffer:
    """Per-layer spike outputs collected during one forward pass."""

    def __init__(self, n_layers: int):
        self.layers = [[] for _ in range(n_layers)]

    def collect(self, layer: int, spikes: np.ndarray):
        self.layers[layer].append(spikes)

    def clear(self):
        for layer in self.layers:
            layer.clear()

    @property
    def empty(self) -> bool:
        return not any(self.layers)

    def stacked(self, layer: int) -> np.ndarray:
        return np.stack(self.layers[layer])

    def mean_magnitudes(self) -> list[float]:
        if any(not layer for layer in self.layers):
            raise ParameterError("spike buffer is empty")
        return [float(np.abs(self.stacked(i)).mean()) for i in range(len(self.layers))]


def ste_mask(u, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """1 on the closed interval [lo, hi], else 0."""
    u = np.asarray(u, dtype=np.float64)
    return ((u >= lo) & (u <= hi)).astype(np.float64)


def surrogate_grad(charged: np.ndarray, params: NeuronParams) -> np.ndarray:
    v_th = params.v_th
    if params.kind is NeuronKind.LIF:
        return ste_mask(charged, 0.5 * v_th, 1.5 * v_th) / v_th
    if params.kind is NeuronKind.INT_LIF:
        return ste_mask(charged, 0.0, (params.K + 1) * v_th) / v_th
    return ste_mask(charged, 0.0, v_th) / v_th


def _support_hi(params: NeuronParams) -> float:
    return params.K + 1.0 if params.kind is NeuronKind.INT_LIF else 1.0


def spike_rate_loss(buffers, r_target: float) -> float:
    """Mean over layers of max(0, mean|S| - r_target)."""
    magnitudes = buffers.mean_magnitudes() if isinstance(buffers, SpikeBuffer) else _magnitudes(buffers)
    if not magnitudes:
        raise ParameterError("spike buffer holds no layers")
    return math.fsum(max(0.0, m - r_target) for m in magnitudes) / len(magnitudes)


def _magnitudes(layers) -> list[float]:
    out = []
    for layer in layers:
        a = np.asarray(layer, dtype=np.float64)
        if a.size == 0:
            raise ParameterError("spike buffer is empty")
        out.append(float(np.abs(a).mean()))
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} do not conform")
    return float(-_log_softmax(logits)[np.arange(len(labels)), labels].mean())


def total_loss(logits, labels, buffers, lambda_sr: float, r_target: float) -> float:
    """Cross-entropy (natural log, batch mean) plus lambda_sr times the rate penalty."""
    ce = cross_entropy(logits, labels)
    if lambda_sr == 0:
        return ce
    return ce + lambda_sr * spike_rate_loss(buffers, r_target)


@dataclass
class ForwardTrace:
    logits: np.ndarray
    inputs: list  # per layer, per t: the layer's presynaptic activity
    charged: list  # per layer, per t: pre-reset membrane
    spikes: list  # per layer, per t: spike amplitudes
    positions: list  # per layer, per t: level positions (None in smooth mode)


def forward(params, spec: NetworkSpec, x, buffer: SpikeBuffer | None = None, smooth: bool = False) -> ForwardTrace:
    """Simulate the network on a (batch, T, input) current array.

    With ``smooth=True`` each quantizer is replaced by clamp(u / v_th, 0, hi),
    whose exact derivative equals the surrogate; this is for gradient checks.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != spec.T or x.shape[2] != spec.widths[0]:
        raise DimensionError(f"expected input (batch, {spec.T}, {spec.widths[0]}), got {x.shape}")
    if buffer is not None and not buffer.empty:
        raise ParameterError("spike buffer must be cleared before a forward pass")
    batch = x.shape[0]
    L = spec.n_spiking
    states = [NeuronState.initial((batch, spec.widths[i + 1]), spec.neurons[i]) for i in range(L)]
    inputs = [[] for _ in range(L)]
    charged = [[] for _ in range(L)]
    spikes = [[] for _ in range(L)]
    positions = [[] for _ in range(L)]
    W_out, b_out = params[-2], params[-1]
    logits = np.zeros((batch, spec.widths[-1]))
    for t in range(spec.T):
        activity = x[:, t, :]
        for i in range(L):
            p = spec.neurons[i]
            z = activity @ params[2 * i] + params[2 * i + 1]
            if smooth:
                state = states[i]
                if p.kind is NeuronKind.LIF:
                    u = p.v_reset + p.leak * (state.v - p.v_reset) + z - state.s_prev * p.v_th
                else:
                    u = state.v + (p.v_reset - state.v) / p.tau + z
                s = np.clip(u / p.v_th, 0.0, _support_hi(p))
                v_next = u if p.kind is NeuronKind.LIF else u - s * p.v_th
                states[i] = NeuronState(v_next, s, u)
                pos = None
            else:
                pos, states[i] = nrn.step(states[i], z, p)
                s = states[i].s_prev
            inputs[i].append(activity)
            charged[i].append(states[i].charged)
            spikes[i].append(s)
            positions[i].append(pos)
            if buffer is not None:
                buffer.collect(i, s)
            activity = s
        logits += activity @ W_out + b_out
    logits /= spec.T
    return ForwardTrace(logits, inputs, charged, spikes, positions)


@dataclass
class StepMetrics:
    loss: float
    loss_ce: float
    loss_sr: float
    accuracy: float
    spike_rates: list


def forward_backward(params, spec: NetworkSpec, x, y, config: TrainConfig, buffer: SpikeBuffer | None = None,
                     smooth: bool = False, detach_reset: bool = True):
    """Loss, gradients (same layout as ``params``) and metrics for one batch."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ParameterError("batch is empty")
    own_buffer = buffer is None
    buffer = SpikeBuffer(spec.n_spiking) if own_buffer else buffer
    trace = forward(params, spec, x, buffer, smooth=smooth)
    batch, T, L = len(y), spec.T, spec.n_spiking

    loss_ce = cross_entropy(trace.logits, y)
    magnitudes = buffer.mean_magnitudes()
    loss_sr = spike_rate_loss(buffer, config.r_target)
    loss = loss_ce + config.lambda_sr * loss_sr
    if own_buffer:
        buffer.clear()
    if not math.isfinite(loss):
        raise TrainingFault(
            "non-finite loss",
            {"loss_ce": loss_ce, "loss_sr": loss_sr, "spike_rates": magnitudes,
             "max_abs_param": max(float(np.abs(p).max()) for p in params)},
        )

    probs = np.exp(_log_softmax(trace.logits))
    probs[np.arange(batch), y] -= 1.0
    d_logits = probs / batch
    grads = [np.zeros_like(p) for p in params]
    W_out = params[-2]
    grads[-2] = sum(s.T @ d_logits for s in trace.spikes[-1]) / T
    grads[-1] = d_logits.sum(axis=0)
    d_spikes = [d_logits @ W_out.T / T for _ in range(T)]

    for i in reversed(range(L)):
        p = spec.neurons[i]
        if config.lambda_sr and magnitudes[i] > config.r_target:
            scale = config.lambda_sr / (L * trace.spikes[i][0].size * T)
            d_spikes = [d + scale * np.sign(s) for d, s in zip(d_spikes, trace.spikes[i])]
        # dC_{t+1}/dS_t through the reset: -v_th (LIF, reset applied next
        # step) or -leak * v_th (reset applied before the next leak)
        reset_gain = p.v_th if p.kind is NeuronKind.LIF else p.leak * p.v_th
        d_charged_next = np.zeros_like(d_spikes[0])
        d_z = [None] * T
        for t in reversed(range(T)):
            d_s = d_spikes[t]
            if not detach_reset:
                d_s = d_s - reset_gain * d_charged_next
            d_c = d_s * surrogate_grad(trace.charged[i][t], p) + p.leak * d_charged_next
            d_z[t] = d_c
            d_charged_next = d_c
        W = params[2 * i]
        grads[2 * i] = sum(a.T @ d for a, d in zip(trace.inputs[i], d_z))
        grads[2 * i + 1] = sum(d.sum(axis=0) for d in d_z)
        if i > 0:
            d_spikes = [d @ W.T for d in d_z]

    accuracy = float(np.mean(trace.logits.argmax(axis=1) == y))
    return loss, grads, StepMetrics(loss, loss_ce, loss_sr, accuracy, magnitudes)


def sgd_step(params, grads, lr: float):
    return [p - lr * g for p, g in zip(params, grads)]


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    meta: dict = field(default_factory=dict)


def synth_dataset(seed: int = 0, classes: int = 3, samples_per_class: int = 100, T: int = 4,
                  input_dim: int = 16, noise: float = 0.4, test_fraction: float = 0.3,
                  gain: float = 1.0) -> Dataset:
    """Seeded temporal classification task.

    Class c drives channel i with gain * a[c, i] * (1 + sin(2 pi t / T + phi[c, i])) / 2
    plus Gaussian noise; amplitudes a and phases phi are drawn once per class.
    Every class has exactly ``samples_per_class`` samples, split by class.
    """
    if classes < 2:
        raise ParameterError(f"need at least 2 classes, got {classes}")
    if samples_per_class < 2 or T < 1 or input_dim < 1:
        raise ParameterError("samples_per_class >= 2, T >= 1 and input_dim >= 1 required")
    if not 0 < test_fraction < 1 or noise < 0:
        raise ParameterError("test_fraction must lie in (0, 1) and noise must be >= 0")
    rng = np.random.default_rng(seed)
    amplitude = rng.uniform(0.1, 1.0, (classes, input_dim))
    phase = rng.uniform(0.0, 2 * np.pi, (classes, input_dim))
    t = np.arange(T)[:, None]
    n_test = max(1, int(round(samples_per_class * test_fraction)))
    splits = {"train": ([], []), "test": ([], [])}
    for c in range(classes):
        template = gain * amplitude[c] * 0.5 * (1.0 + np.sin(2 * np.pi * t / T + phase[c]))
        samples = template[None] + noise * rng.standard_normal((samples_per_class, T, input_dim))
        for name, chunk in (("test", samples[:n_test]), ("train", samples[n_test:])):
            splits[name][0].append(chunk)
            splits[name][1].append(np.full(len(chunk), c))
    arrays = {name: (np.concatenate(xs), np.concatenate(ys)) for name, (xs, ys) in splits.items()}
    order = rng.permutation(len(arrays["train"][1]))
    x_train, y_train = arrays["train"][0][order], arrays["train"][1][order]
    meta = dict(seed=seed, classes=classes, samples_per_class=samples_per_class, T=T, input_dim=input_dim,
                noise=noise, test_fraction=test_fraction, gain=gain)
    return Dataset(x_train, y_train, arrays["test"][0], arrays["test"][1], meta)


def evaluate(params, spec: NetworkSpec, x, y):
    """Accuracy and per-layer spike tensors on a dataset."""
    trace = forward(params, spec, x)
    accuracy = float(np.mean(trace.logits.argmax(axis=1) == np.asarray(y)))
    tensors = [SpikeTensor(np.stack(trace.positions[i]), spec.neurons[i].level_set) for i in range(spec.n_spiking)]
    return accuracy, tensors, trace


@dataclass
class FitResult:
    params: list  # best test-accuracy parameters
    final_params: list
    history: list
    best_accuracy: float
    best_epoch: int


def fit(spec: NetworkSpec, dataset: Dataset, config: TrainConfig, params=None) -> FitResult:
    """Mini-batch SGD with per-epoch test evaluation and best-accuracy checkpointing."""
    if len(dataset.y_train) == 0:
        raise ParameterError("training set is empty")
    params = init_params(spec, config.seed) if params is None else [p.copy() for p in params]
    rng = np.random.default_rng(config.seed + 1)
    buffer = SpikeBuffer(spec.n_spiking)
    best = [p.copy() for p in params]
    best_acc, best_epoch = 0.0, 0
    history = []
    n = len(dataset.y_train)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        rates = np.zeros(spec.n_spiking)
        correct = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads, m = forward_backward(params, spec, dataset.x_train[idx], dataset.y_train[idx], config, buffer)
            params = sgd_step(params, grads, config.lr)
            buffer.clear()
            sums += np.array([m.loss_ce, m.loss_sr, m.loss]) * len(idx)
            rates += np.asarray(m.spike_rates) * len(idx)
            correct += m.accuracy * len(idx)
        test_acc, tensors, _ = evaluate(params, spec, dataset.x_test, dataset.y_test)
        if test_acc > best_acc:
            best, best_acc, best_epoch = [p.copy() for p in params], test_acc, epoch
        history.append({
            "epoch": epoch, "loss_ce": sums[0] / n, "loss_sr": sums[1] / n, "loss": sums[2] / n,
            "train_accuracy": correct / n, "test_accuracy": test_acc,
            "spike_rates": [float(r) for r in rates / n],
            "test_spike_rates": [float(np.abs(t.amplitudes).mean()) for t in tensors],
        })
    return FitResult(best, params, history, best_acc, best_epoch)


def evaluate_fixed_point(params, spec: NetworkSpec, x, y, frac_bits: int = 8, weight_bits: int = 16) -> float:
    """Deployment accuracy with fixed-point weights and biases.

    Layers fed by power-of-two spikes go through the exact shift-accumulate
    kernel; the first layer (real input currents) and layers fed by other
    alphabets use a dense product of the quantized weights.
    """
    n_linear = len(params) // 2
    weights = [quantize_weights(params[2 * i].T, frac_bits, weight_bits) for i in range(n_linear)]
    biases = [quantize_weights(params[2 * i + 1][None, :], frac_bits, weight_bits).to_float()[0]
              for i in range(n_linear)]
    dense = [w.to_float() for w in weights]
    L = spec.n_spiking
    correct = 0
    for sample, label in zip(np.asarray(x, dtype=np.float64), y):
        states = [NeuronState.initial((spec.widths[i + 1],), spec.neurons[i]) for i in range(L)]
        logits = np.zeros(spec.widths[-1])
        for t in range(spec.T):
            activity, spikes = sample[t], None
            for i in range(n_linear):
                if spikes is not None and spikes.level_set.kind is Kind.SHIFT:
                    z = shift_accumulate(weights[i], spikes, Mode.EXACT).to_float()
                else:
                    z = dense[i] @ activity
                z = z + biases[i]
                if i == L:
                    logits += z
                    break
                positions, states[i] = nrn.step(states[i], z, spec.neurons[i])
                spikes = SpikeTensor(positions, spec.neurons[i].level_set)
                activity = states[i].s_prev
        correct += int(np.argmax(logits) == label)
    return correct / len(y)


def save_checkpoint(path, params, spec: NetworkSpec, meta: dict | None = None):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {
            "widths": list(spec.widths), "T": spec.T, "readout": spec.readout,
            "neurons": [{**asdict(p), "kind": p.kind.value} for p in spec.neurons],
        },
        "meta": meta or {},
        "params": [p.tolist() for p in params],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ParameterError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {payload.get('version')}")
    s = payload["spec"]
    spec = NetworkSpec(tuple(s["widths"]), tuple(NeuronParams(**n) for n in s["neurons"]), s["T"], s["readout"])
    return [np.asarray(p, dtype=np.float64) for p in payload["params"]], spec, payload["meta"]
