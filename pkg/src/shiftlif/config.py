"""INI-style experiment configuration.

Sections mirror the modules: ``[experiment]``, ``[neuron]``, ``[network]``,
``[train]``, ``[data]``, ``[analysis]``, ``[energy]`` (plus optional
``[energy.<kind>]`` per-neuron-kind profiles) and ``[kernel]``. Every key
has a default, so an empty file is a valid configuration.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .energy import DEFAULT_PROFILES, EnergyConstants
from .errors import ConfigError, ParameterError
from .neuron import NeuronKind, NeuronParams
from .training import TrainConfig

log = logging.getLogger(__name__)

EXPERIMENTS = ("analyze", "train", "ablate-K", "ablate-grid", "energy", "kernel-check", "gen-data")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.replace(" ", "").split(",") if part)


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "experiment": {"kind": (str, ""), "seed": (int, 0), "out": (str, "results")},
    "neuron": {"kind": (str, "shiftlif"), "K": (int, 2), "tau": (float, 2.0), "v_th": (float, 1.0),
               "v_reset": (float, 0.0)},
    "network": {"hidden": (_int_list, (32, 32)), "T": (int, 4)},
    "train": {"epochs": (int, 40), "lr": (float, 0.5), "lambda_sr": (float, 0.0), "r_target": (float, 0.05),
              "batch_size": (int, 16), "frac_bits": (int, 8)},
    "data": {"classes": (int, 3), "samples_per_class": (int, 100), "input_dim": (int, 16), "noise": (float, 0.4),
             "test_fraction": (float, 0.3)},
    "analysis": {"distribution": (str, "exponential"), "rate": (float, 4.0), "low": (float, 0.0),
                 "high": (float, 1.0), "value": (float, 0.9), "weight": (float, 0.7), "n_samples": (int, 1_000_000),
                 "K_values": (_int_list, (1, 2, 3)), "bins": (int, 40), "v_max": (float, 2.0)},
    "ablation": {"K_values": (_int_list, (1, 2, 3, 4)), "grids": (_str_list, ("shiftlif", "uniformlif"))},
    "energy": {"kinds": (_str_list, ("lif", "intlif", "shiftlif", "shiftlif*")), "lambda_sr": (float, 0.1),
               "r_target": (float, 0.05)},
    "kernel": {"instances": (int, 100), "max_size": (int, 256), "K_max": (int, 8), "frac_bits": (int, 8),
               "weight_bits": (int, 16)},
}
PROFILE_KEYS = {"e_acc": float, "e_move": float, "e_weight": float}


@dataclass
class ExperimentConfig:
    kind: str = ""
    seed: int = 0
    out: str = "results"
    neuron: NeuronParams = field(default_factory=NeuronParams)
    hidden: tuple = (32, 32)
    T: int = 4
    train: TrainConfig = field(default_factory=TrainConfig)
    frac_bits: int = 8
    data: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    kernel: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)

    def with_overrides(self, seed=None, out=None, kind=None) -> ExperimentConfig:
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, train=replace(cfg.train, seed=seed))
            cfg.resolved = {**cfg.resolved, "experiment": {**cfg.resolved.get("experiment", {}), "seed": seed}}
        if out is not None:
            cfg = replace(cfg, out=out)
            cfg.resolved = {**cfg.resolved, "experiment": {**cfg.resolved.get("experiment", {}), "out": out}}
        if kind is not None:
            cfg = replace(cfg, kind=kind)
            cfg.resolved = {**cfg.resolved, "experiment": {**cfg.resolved.get("experiment", {}), "kind": kind}}
        return cfg


def _read(text: str, source: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (K vs k)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc
    return parser


def parse_config(text: str, source: str = "<config>", strict: bool = False) -> ExperimentConfig:
    parser = _read(text, source)
    problems: list[str] = []
    unknown: list[str] = []
    values: dict[str, dict] = {name: {k: d for k, (_, d) in keys.items()} for name, keys in SCHEMA.items()}
    profiles = dict(DEFAULT_PROFILES)
    resolved_profiles = {}

    for section in parser.sections():
        if section.startswith("energy."):
            name = section.split(".", 1)[1]
            base = profiles.get(name, EnergyConstants(profile=name))
            fields = {"e_acc": base.e_acc, "e_move": base.e_move, "e_weight": base.e_weight}
            for key, raw in parser.items(section):
                if key not in PROFILE_KEYS:
                    unknown.append(f"[{section}] {key}")
                    continue
                try:
                    fields[key] = float(raw)
                except ValueError:
                    problems.append(f"[{section}] {key}: expected a number, got {raw!r}")
            try:
                profiles[name] = EnergyConstants(**fields, profile=name)
            except ParameterError as exc:
                problems.append(f"[{section}] {exc}")
            continue
        if section not in SCHEMA:
            unknown.append(f"[{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                unknown.append(f"[{section}] {key}")
                continue
            convert = SCHEMA[section][key][0]
            try:
                values[section][key] = convert(raw)
            except ValueError:
                problems.append(f"[{section}] {key}: cannot interpret {raw!r}")

    if unknown:
        message = f"{source}: unknown keys: {', '.join(unknown)}"
        if strict:
            problems.append(message)
        else:
            log.warning(message)

    for name, profile in profiles.items():
        resolved_profiles[name] = {"e_acc": profile.e_acc, "e_move": profile.e_move, "e_weight": profile.e_weight}

    exp, nrn, net, trn = values["experiment"], values["neuron"], values["network"], values["train"]
    if exp["kind"] and exp["kind"] not in EXPERIMENTS:
        problems.append(f"[experiment] kind: unknown experiment {exp['kind']!r}")
    try:
        kind = NeuronKind(nrn["kind"])
    except ValueError:
        problems.append(f"[neuron] kind: unknown neuron kind {nrn['kind']!r}")
        kind = NeuronKind.SHIFT_LIF
    neuron_fields = dict(tau=nrn["tau"], v_th=nrn["v_th"], v_reset=nrn["v_reset"], K=nrn["K"], kind=kind)
    problems += [f"[neuron] {p}" for p in NeuronParams.problems(_Probe(**neuron_fields))]
    train_fields = dict(epochs=trn["epochs"], lr=trn["lr"], lambda_sr=trn["lambda_sr"],
                        r_target=trn["r_target"], seed=exp["seed"], batch_size=trn["batch_size"])
    problems += [f"[train] {p}" for p in TrainConfig.problems(_Probe(**train_fields))]
    if net["T"] < 1:
        problems.append(f"[network] T must be >= 1, got {net['T']}")
    if not net["hidden"] or min(net["hidden"]) < 1:
        problems.append(f"[network] hidden needs at least one layer of width >= 1, got {net['hidden']}")
    if not 0 <= trn["frac_bits"] <= 30:
        problems.append(f"[train] frac_bits must lie in [0, 30], got {trn['frac_bits']}")
    data, ana, abl, kern = values["data"], values["analysis"], values["ablation"], values["kernel"]
    if data["classes"] < 2:
        problems.append(f"[data] classes must be >= 2, got {data['classes']}")
    if data["samples_per_class"] < 2 or data["input_dim"] < 1:
        problems.append("[data] samples_per_class must be >= 2 and input_dim >= 1")
    if data["noise"] < 0 or not 0 < data["test_fraction"] < 1:
        problems.append("[data] noise must be >= 0 and test_fraction in (0, 1)")
    if ana["distribution"] not in ("exponential", "uniform", "point", "mixture", "membrane"):
        problems.append(f"[analysis] distribution: unknown kind {ana['distribution']!r}")
    if ana["n_samples"] < 1:
        problems.append(f"[analysis] n_samples must be >= 1, got {ana['n_samples']}")
    for K in ana["K_values"] + abl["K_values"]:
        if not 0 <= K <= 30:
            problems.append(f"K must lie in [0, 30], got {K}")
    for grid in abl["grids"]:
        if grid not in {k.value for k in NeuronKind}:
            problems.append(f"[ablation] grids: unknown neuron kind {grid!r}")
    for kind_name in values["energy"]["kinds"]:
        if kind_name.rstrip("*") not in {k.value for k in NeuronKind}:
            problems.append(f"[energy] kinds: unknown neuron kind {kind_name!r}")
    if not 1 <= kern["K_max"] <= 30 or kern["instances"] < 1 or kern["max_size"] < 1:
        problems.append("[kernel] need 1 <= K_max <= 30, instances >= 1 and max_size >= 1")
    if problems:
        raise ConfigError(f"{source}: invalid configuration", problems)

    resolved = {name: {k: (list(v) if isinstance(v, tuple) else v) for k, v in sec.items()}
                for name, sec in values.items()}
    resolved["energy_profiles"] = resolved_profiles
    return ExperimentConfig(
        kind=exp["kind"], seed=exp["seed"], out=exp["out"], neuron=NeuronParams(**neuron_fields),
        hidden=tuple(net["hidden"]), T=net["T"], train=TrainConfig(**train_fields), frac_bits=trn["frac_bits"],
        data=dict(data), analysis=dict(ana), ablation=dict(abl), energy=dict(values["energy"]),
        profiles=profiles, kernel=dict(kern), resolved=resolved,
    )


class _Probe:
    """Attribute bag so validation can run without constructing (and raising)."""

    def __init__(self, **kwargs):
        self.__dict__.update(kwargs)


def load_config(path, strict: bool = False) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path), strict)
