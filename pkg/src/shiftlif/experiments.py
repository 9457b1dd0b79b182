"""Experiment drivers behind the command-line subcommands.

Each driver takes a resolved :class:`ExperimentConfig` and a
:class:`RunWriter`, writes its artifacts and returns a list of failed
checks (empty on success).
"""

from __future__ import annotations

import math

import numpy as np

from . import analysis as ana
from . import energy as en
from . import synapse_kernel as sk
from . import training as tr
from .config import ExperimentConfig
from .neuron import NeuronKind, SpikeTensor
from .quantizer import Kind, make_level_set
from .reports import RunWriter

IDENTITY_TOLERANCE = 1e-9


def dataset_for(cfg: ExperimentConfig) -> tr.Dataset:
    d = cfg.data
    return tr.synth_dataset(seed=cfg.seed, classes=d["classes"], samples_per_class=d["samples_per_class"],
                            T=cfg.T, input_dim=d["input_dim"], noise=d["noise"], test_fraction=d["test_fraction"])


def network_for(cfg: ExperimentConfig, kind=None, K=None) -> tr.NetworkSpec:
    p = cfg.neuron
    return tr.NetworkSpec.build((cfg.data["input_dim"],) + tuple(cfg.hidden) + (cfg.data["classes"],),
                                kind=kind or p.kind, K=p.K if K is None else K, T=cfg.T, tau=p.tau,
                                v_th=p.v_th, v_reset=p.v_reset)


def _history_rows(history, n_layers):
    rows = []
    for h in history:
        row = {k: h[k] for k in ("epoch", "loss_ce", "loss_sr", "loss", "train_accuracy", "test_accuracy")}
        for i in range(n_layers):
            row[f"spike_rate_l{i + 1}"] = h["spike_rates"][i]
            row[f"test_spike_rate_l{i + 1}"] = h["test_spike_rates"][i]
        rows.append(row)
    return rows


def membrane_samples(cfg: ExperimentConfig) -> ana.SampleSet:
    """Threshold-normalised membranes of a network trained on the synthetic task."""
    spec = network_for(cfg, kind=NeuronKind.SHIFT_LIF)
    dataset = dataset_for(cfg)
    result = tr.fit(spec, dataset, cfg.train)
    trace = tr.forward(result.params, spec, dataset.x_test)
    charged = np.concatenate([np.ravel(c) for layer in trace.charged for c in layer])
    return ana.SampleSet.from_trace(charged, cfg.neuron.v_th, network=list(spec.widths), epochs=cfg.train.epochs,
                                    seed=cfg.seed)


def run_analyze(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    a = cfg.analysis
    if a["distribution"] == "membrane":
        samples = membrane_samples(cfg)
    else:
        samples = ana.sample_distribution(dict(a, kind=a["distribution"]), a["n_samples"], cfg.seed)
    failures = []
    rows, lemma_rows, hist_rows = [], [], []
    for K in a["K_values"]:
        report = ana.analysis_report(samples, K, a["bins"], a["v_max"])
        writer.json(f"analysis_K{K}.json", report)
        for name, q in report["quantizers"].items():
            rows.append({"K": K, "quantizer": name, "E_abs": q["E_abs"], "entropy": q["entropy"],
                         "utilization": q["utilization"]})
        if "lemma1" in report:
            l1, l2 = report["lemma1"], report["lemma2"]
            lemma_rows.append({
                "K": K, "lhs": l1["lhs"], "rhs": l1["rhs"], "holds": l1["holds"], "e_shift": l1["e_shift"],
                "e_int": l1["e_int"], "gap": l1["empirical_gap"], "gap_stderr": l1["gap_stderr"],
                "r": l2["r"], "H_shift": l2["H_shift_direct"], "H_int": l2["H_int_direct"],
                "shift_residual": l2["shift_residual"], "int_residual": l2["int_residual"],
                "criterion_lhs": l2["criterion_lhs"], "criterion_rhs": l2["criterion_rhs"],
                "criterion_verdict": l2["criterion_verdict"], "direct_verdict": l2["direct_verdict"],
            })
            if not l1["sound"]:
                failures.append(f"K={K}: error condition holds but shift error is not lower")
            if max(l2["shift_residual"], l2["int_residual"]) > IDENTITY_TOLERANCE:
                failures.append(f"K={K}: entropy chain-rule residual exceeds {IDENTITY_TOLERANCE}")
            if not l2["consistent"]:
                failures.append(f"K={K}: entropy criterion disagrees with direct utilization comparison")
        for lo, hi, frac in zip(report["histogram"]["edges"][:-1], report["histogram"]["edges"][1:],
                                report["histogram"]["fractions"]):
            hist_rows.append({"K": K, "bin_lo": lo, "bin_hi": hi, "fraction": frac})
    writer.csv("analysis.csv", rows)
    if lemma_rows:
        writer.csv("lemmas.csv", lemma_rows)
    writer.csv("histogram.csv", hist_rows)
    writer.json("summary.json", {"experiment": "analyze", "source": samples.source, "failures": failures})
    return failures


def _train_one(cfg, spec, dataset, train_cfg=None):
    result = tr.fit(spec, dataset, train_cfg or cfg.train)
    accuracy, tensors, _ = tr.evaluate(result.params, spec, dataset.x_test, dataset.y_test)
    return result, accuracy, tensors


def run_train(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    spec = network_for(cfg)
    dataset = dataset_for(cfg)
    result, accuracy, tensors = _train_one(cfg, spec, dataset)
    writer.csv("history.csv", _history_rows(result.history, spec.n_spiking))
    tr.save_checkpoint(writer.out / "checkpoint.json", result.params, spec,
                       {"best_epoch": result.best_epoch, "best_accuracy": result.best_accuracy})
    writer.written.append("checkpoint.json")
    deployed = tr.evaluate_fixed_point(result.params, spec, dataset.x_test, dataset.y_test, cfg.frac_bits)
    failures = []
    if result.history and not all(math.isfinite(h["loss"]) for h in result.history):
        failures.append("non-finite loss in history")
    writer.json("summary.json", {
        "experiment": "train", "neuron": spec.neurons[0].kind.value, "K": spec.neurons[0].K,
        "widths": list(spec.widths), "best_epoch": result.best_epoch, "best_test_accuracy": result.best_accuracy,
        "checkpoint_test_accuracy": accuracy, "fixed_point_test_accuracy": deployed, "frac_bits": cfg.frac_bits,
        "spike_rates": [en.spike_rate(t) for t in tensors], "failures": failures,
    })
    return failures


def run_ablate_k(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    dataset = dataset_for(cfg)
    rows, failures = [], []
    for K in cfg.ablation["K_values"]:
        spec = network_for(cfg, kind=NeuronKind.SHIFT_LIF, K=K)
        result, accuracy, tensors = _train_one(cfg, spec, dataset)
        final = result.history[-1]["test_accuracy"] if result.history else accuracy
        rows.append({"K": K, "levels": K + 2, "best_test_accuracy": result.best_accuracy,
                     "final_test_accuracy": final, "mean_spike_rate": float(np.mean([en.spike_rate(t) for t in tensors]))})
        if not math.isfinite(result.best_accuracy):
            failures.append(f"K={K}: accuracy is not finite")
    writer.csv("accuracy_vs_K.csv", rows)
    writer.json("summary.json", {"experiment": "ablate-K", "rows": rows, "failures": failures})
    return failures


def run_ablate_grid(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    dataset = dataset_for(cfg)
    K = cfg.neuron.K
    rows, failures = [], []
    for grid in cfg.ablation["grids"]:
        spec = network_for(cfg, kind=NeuronKind(grid), K=K)
        result, accuracy, tensors = _train_one(cfg, spec, dataset)
        trace = tr.forward(result.params, spec, dataset.x_test)
        membrane = ana.SampleSet.from_trace(
            np.concatenate([np.ravel(c) for layer in trace.charged for c in layer]), cfg.neuron.v_th)
        row = {"grid": grid, "K": K, "best_test_accuracy": result.best_accuracy,
               "mean_spike_rate": float(np.mean([en.spike_rate(t) for t in tensors]))}
        # quantization quality of both grids on this network's own membrane distribution
        for name, ls in (("log", ana.shift_floor(K)), ("uniform", make_level_set(Kind.UNIFORM, K))):
            row[f"E_abs_{name}"] = ana.expected_abs_error(membrane, ls)
            row[f"U_{name}"] = ana.bit_utilization(membrane, ls)
        rows.append(row)
        if not math.isfinite(result.best_accuracy):
            failures.append(f"{grid}: accuracy is not finite")
    writer.csv("grid_ablation.csv", rows)
    writer.json("summary.json", {"experiment": "ablate-grid", "rows": rows, "failures": failures})
    return failures


def run_energy(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    dataset = dataset_for(cfg)
    rows, models = [], []
    for name in cfg.energy["kinds"]:
        kind = NeuronKind(name.rstrip("*"))
        train_cfg = cfg.train
        if name.endswith("*"):
            train_cfg = tr.TrainConfig(**{**train_cfg.__dict__, "lambda_sr": cfg.energy["lambda_sr"],
                                          "r_target": cfg.energy["r_target"]})
        spec = network_for(cfg, kind=kind)
        result, accuracy, tensors = _train_one(cfg, spec, dataset, train_cfg)
        constants = cfg.profiles.get(kind.value, en.EnergyConstants(profile=kind.value))
        report = en.EnergyReport(constants.profile)
        for i, (tensor, synapses) in enumerate(zip(tensors, spec.synapse_counts)):
            layer = report.add(f"l{i + 1}", tensor, synapses, constants)
            rows.append({"model": name, "layer": layer.name, "T": layer.T, "spike_rate": layer.spike_rate,
                         "event_rate": layer.event_rate, "synapses": layer.synapses,
                         "synaptic_events": layer.synaptic_events, "energy_mj": layer.energy_mj})
        models.append({"model": name, "accuracy": accuracy, "profile": constants.profile,
                       "spike_rate": en.spike_rate(np.concatenate([t.amplitudes.ravel() for t in tensors])),
                       "total_mj": report.total_mj, "layers": report.to_dict()["layers"]})
    writer.csv("energy.csv", rows)
    writer.csv("energy_models.csv", [{k: m[k] for k in ("model", "accuracy", "spike_rate", "total_mj", "profile")}
                                     for m in models])
    failures = [f"{m['model']}: negative or non-finite energy" for m in models
                if not (math.isfinite(m["total_mj"]) and m["total_mj"] >= 0)]
    writer.json("summary.json", {"experiment": "energy", "models": models, "failures": failures})
    return failures


def kernel_instance(rng: np.random.Generator, max_size: int, K_max: int, weight_bits: int, frac_bits: int):
    rows, cols = (int(v) for v in rng.integers(1, max_size + 1, 2))
    K = int(rng.integers(0, K_max + 1))
    hi = 1 << (weight_bits - 1)
    W = sk.FixedPointMatrix(rng.integers(-hi, hi, (rows, cols)), frac_bits, weight_bits)
    level_set = make_level_set(Kind.SHIFT, K)
    silent = rng.random(cols) < 0.5
    positions = np.where(silent, 0, rng.integers(1, K + 2, cols))
    return W, SpikeTensor(positions, level_set)


def check_kernel_instance(W: sk.FixedPointMatrix, spikes: SpikeTensor) -> dict:
    """Exact-mode equality, lossy error bounds and visit counts for one instance."""
    K = spikes.level_set.K
    exact = sk.shift_accumulate(W, spikes, sk.Mode.EXACT)
    lossy = sk.shift_accumulate(W, spikes, sk.Mode.LOSSY)
    reference = sk.float_reference(W.to_float(), spikes.amplitudes)
    k = spikes.exponents
    active = k >= 0
    kk = k[active]
    cols = W.data[:, active]
    # per-term loss in units of 2^-(f+K); a term loses bits when k exceeds its trailing zeros
    dropped = (cols - ((cols >> kk) << kk)) << (K - kk)
    per_term_ok = bool((dropped < (1 << K)).all()) if dropped.size else True
    lossy_terms = np.count_nonzero(dropped, axis=1) if dropped.size else np.zeros(W.rows, dtype=np.int64)
    gap = np.abs((lossy.values << K) - exact.values)
    counts = sk.op_counter(spikes, W.rows)
    return {
        "rows": W.rows, "cols": W.cols, "K": K,
        "exact_equal": bool(np.array_equal(exact.to_float(), reference)),
        "lossy_per_term_ok": per_term_ok,
        "lossy_bound_ok": bool((gap <= lossy_terms * (1 << K)).all()),
        "max_lossy_gap_lsb": float(gap.max() / (1 << K)) if gap.size else 0.0,
        "visits_ok": exact.visits == counts.synaptic_visits == spikes.nonzero * W.rows,
        "visits": counts.synaptic_visits, "skipped": counts.skipped,
    }


def run_kernel_check(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    k = cfg.kernel
    rng = np.random.default_rng(cfg.seed)
    rows = [check_kernel_instance(*kernel_instance(rng, k["max_size"], k["K_max"], k["weight_bits"], k["frac_bits"]))
            for _ in range(k["instances"])]
    checks = ("exact_equal", "lossy_per_term_ok", "lossy_bound_ok", "visits_ok")
    failures = [f"instance {i}: {c} failed" for i, row in enumerate(rows) for c in checks if not row[c]]
    writer.csv("kernel_check.csv", [{"instance": i, **row} for i, row in enumerate(rows)])
    writer.json("summary.json", {"experiment": "kernel-check", "instances": len(rows),
                                 "all_pass": not failures, "failures": failures})
    return failures


def run_gen_data(cfg: ExperimentConfig, writer: RunWriter) -> list[str]:
    dataset = dataset_for(cfg)
    D = dataset.x_train.shape[2]
    rows = []
    for split, xs, ys in (("train", dataset.x_train, dataset.y_train), ("test", dataset.x_test, dataset.y_test)):
        for i, (sample, label) in enumerate(zip(xs, ys)):
            for t, frame in enumerate(sample):
                rows.append({"split": split, "sample": i, "label": int(label), "t": t,
                             **{f"x{j}": float(frame[j]) for j in range(D)}})
    writer.csv("dataset.csv", rows)
    counts = {int(c): int(np.sum(dataset.y_train == c) + np.sum(dataset.y_test == c)) for c in range(cfg.data["classes"])}
    writer.json("summary.json", {"experiment": "gen-data", "meta": dataset.meta, "class_counts": counts,
                                 "n_train": len(dataset.y_train), "n_test": len(dataset.y_test), "failures": []})
    return []


RUNNERS = {
    "analyze": run_analyze,
    "train": run_train,
    "ablate-K": run_ablate_k,
    "ablate-grid": run_ablate_grid,
    "energy": run_energy,
    "kernel-check": run_kernel_check,
    "gen-data": run_gen_data,
}
