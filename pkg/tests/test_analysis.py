import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from shiftlif import analysis as ana
from shiftlif import training as tr
from shiftlif.errors import ParameterError
from shiftlif.neuron import NeuronLayer, NeuronParams, run_sequence
from shiftlif.quantizer import Kind, ShiftMode, make_level_set

SHIFT2 = make_level_set(Kind.SHIFT, 2, ShiftMode.FLOOR_ADMISSIBLE)
INT2 = make_level_set(Kind.INT, 2)


def counter_entropy(outputs):
    """Entropy of a list of outputs by explicit counting."""
    n = len(outputs)
    return -math.fsum(c / n * math.log2(c / n) for c in Counter(outputs).values())


class TestErrors:
    def test_on_level_samples(self):
        assert ana.expected_abs_error([0.0, 0.25, 0.5, 1.0], SHIFT2) == 0.0
        assert ana.expected_abs_error([0.0, 1.0, 2.0, 3.0], INT2) == 0.0

    def test_examples(self):
        assert ana.expected_abs_error([0.6, 0.2], SHIFT2) == pytest.approx(0.15, abs=1e-15)
        assert ana.expected_abs_error([0.6, 0.2], INT2) == pytest.approx(0.3, abs=1e-15)

    def test_rejects_clamp_mode_and_bad_samples(self):
        with pytest.raises(ParameterError):
            ana.expected_abs_error([0.1], make_level_set(Kind.SHIFT, 2))
        with pytest.raises(ParameterError):
            ana.expected_abs_error([], SHIFT2)
        with pytest.raises(ParameterError):
            ana.expected_abs_error([-0.1], SHIFT2)

    def test_order_independent(self):
        x = np.random.default_rng(0).exponential(0.25, 10000)
        assert ana.expected_abs_error(x, SHIFT2) == ana.expected_abs_error(x[::-1], SHIFT2)


class TestDelta:
    def test_examples(self):
        assert ana.delta_pointwise(0.0, 2) == (0.0, 0.0)
        d, b = ana.delta_pointwise(0.3, 2)
        assert d == pytest.approx(0.25, abs=1e-15) and b == 0.25
        d, b = ana.delta_pointwise(0.9, 2)
        assert d == pytest.approx(-0.3, abs=1e-15) and b == -0.5

    @settings(max_examples=500)
    @given(st.floats(0, 8, allow_nan=False), st.integers(1, 6))
    def test_bound_holds(self, v, K):
        d, b = ana.delta_pointwise(v, K)
        assert d >= b

    def test_negative(self):
        with pytest.raises(ParameterError):
            ana.delta_pointwise(-1.0, 2)


class TestLemma1:
    def test_point_mass_fails(self):
        res = ana.lemma1_condition(np.full(100, 0.9), 2)
        assert not res.holds
        assert res.e_int < res.e_shift

    def test_needs_K_at_least_one(self):
        with pytest.raises(ParameterError):
            ana.lemma1_condition([0.1], 0)

    @settings(max_examples=200)
    @given(hnp.arrays(np.float64, st.integers(1, 50), elements=st.floats(0, 3, allow_nan=False)),
           st.integers(1, 4))
    def test_soundness(self, x, K):
        res = ana.lemma1_condition(x, K)
        if res.holds:
            assert res.e_shift < res.e_int


class TestEntropy:
    def test_point_mass(self):
        assert ana.output_entropy(np.full(10, 0.7), SHIFT2) == 0.0
        assert ana.bit_utilization(np.full(10, 0.7), SHIFT2) == 0.0

    def test_two_outcomes(self):
        x = np.array([0.3, 0.9] * 50)
        assert ana.output_entropy(x, SHIFT2) == 1.0
        assert ana.output_entropy(x, INT2) == 1.0

    def test_budget(self):
        assert ana.bit_budget(7) == 4
        assert ana.bit_budget(2) == 2
        assert ana.bit_budget(0) == 1

    @pytest.mark.parametrize("K", [0, 1, 2, 3, 6])
    def test_uniform_output_utilization(self, K):
        ls = make_level_set(Kind.SHIFT, K, ShiftMode.FLOOR_ADMISSIBLE)
        x = np.array(ls.levels * 10)
        expected = math.log2(K + 2) / math.ceil(math.log2(K + 2))
        assert ana.bit_utilization(x, ls) == pytest.approx(expected, rel=1e-14)
        if K + 2 in (2, 4, 8):
            assert ana.bit_utilization(x, ls) == 1.0

    def test_matches_counting_oracle(self):
        x = np.random.default_rng(1).exponential(0.3, 5000)
        for ls in (SHIFT2, INT2, make_level_set(Kind.UNIFORM, 2)):
            assert ana.output_entropy(x, ls) == pytest.approx(counter_entropy(ana.quantized(x, ls).tolist()), abs=1e-12)

    @settings(max_examples=100)
    @given(hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(0, 5, allow_nan=False)),
           st.integers(0, 8))
    def test_bounds(self, x, K):
        for kind in Kind:
            ls = make_level_set(kind, K, ShiftMode.FLOOR_ADMISSIBLE)
            H = ana.output_entropy(x, ls)
            assert -1e-12 <= H <= math.log2(K + 2) + 1e-12


def family_samples():
    rng = np.random.default_rng(7)
    return {
        "exponential": rng.exponential(0.25, 20000),
        "uniform": rng.uniform(0, 1, 20000),
        "r1": rng.uniform(0, 0.5, 20000) * 0.999,
        "r0": np.concatenate([rng.uniform(0.5, 1, 5000), rng.uniform(1, 1.5, 5000)]),
        "mixture": np.where(rng.random(20000) < 0.7, rng.exponential(0.125, 20000), rng.uniform(0.5, 2, 20000)),
    }


class TestDecomposition:
    @pytest.mark.parametrize("name,x", list(family_samples().items()))
    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_identities_and_verdict(self, name, x, K):
        d = ana.entropy_decomposition(x, K)
        assert d.shift_residual < 1e-9 and d.int_residual < 1e-9
        assert d.r + d.m + d.c == pytest.approx(1.0, abs=1e-12)
        for dist in (d.R, d.Vdist, d.Tdist):
            if dist:
                assert math.fsum(dist) == pytest.approx(1.0, abs=1e-12)
        assert d.consistent
        ls_shift = make_level_set(Kind.SHIFT, K, ShiftMode.FLOOR_ADMISSIBLE)
        ls_int = make_level_set(Kind.INT, K)
        assert d.H_shift_direct == pytest.approx(counter_entropy(ana.quantized(x, ls_shift).tolist()), abs=1e-12)
        assert d.H_int_direct == pytest.approx(counter_entropy(ana.quantized(x, ls_int).tolist()), abs=1e-12)

    def test_r_equals_one(self):
        d = ana.entropy_decomposition(family_samples()["r1"], 2)
        assert d.r == 1.0 and d.Vdist == [] and d.Tdist == []
        assert d.H_shift_direct == pytest.approx(d.H_R, abs=1e-12)
        assert d.H_int_direct == 0.0

    def test_r_equals_zero(self):
        d = ana.entropy_decomposition(family_samples()["r0"], 2)
        assert d.r == 0.0 and d.R == []
        assert d.H_shift_direct == d.H_V == 1.0

    def test_needs_K(self):
        with pytest.raises(ParameterError):
            ana.entropy_decomposition([0.1], 0)


class TestHistogram:
    def test_constant(self):
        h = ana.membrane_histogram(np.full(30, 0.37), bins=10, v_max=1.0)
        assert np.count_nonzero(h.fractions) == 1 and h.fractions.sum() == 1.0

    def test_zero_input_run(self):
        _, trace = run_sequence(NeuronLayer(4, NeuronParams()), np.zeros((5, 4)), record_membrane=True)
        h = ana.membrane_histogram(trace)
        assert h.fractions[0] == 1.0

    def test_driven_network_concentrates_low(self):
        data = tr.synth_dataset(seed=0, noise=0.4)
        spec = tr.NetworkSpec.build((16, 32, 32, 3))
        result = tr.fit(spec, data, tr.TrainConfig(epochs=10, seed=0))
        trace = tr.forward(result.params, spec, data.x_test)
        charged = np.concatenate([np.ravel(c) for layer in trace.charged for c in layer])
        h = ana.membrane_histogram(charged, bins=40, v_max=2.0)
        assert h.mode_bin < 20

    def test_errors(self):
        with pytest.raises(ParameterError):
            ana.membrane_histogram([])
        with pytest.raises(ParameterError):
            ana.membrane_histogram([0.1], bins=0)


def test_sample_distribution_is_seeded():
    spec = {"kind": "mixture"}
    a = ana.sample_distribution(spec, 100, 3)
    assert (a.values == ana.sample_distribution(spec, 100, 3).values).all()
    assert a.source["weight"] == 0.7
    with pytest.raises(ParameterError):
        ana.sample_distribution({"kind": "cauchy"}, 10, 0)


def test_report_shape():
    samples = ana.sample_distribution({"kind": "exponential", "rate": 4}, 5000, 0)
    report = ana.analysis_report(samples, 2)
    assert set(report["quantizers"]) == {"shift", "int", "uniform"}
    for q in report["quantizers"].values():
        assert 0 <= q["utilization"] <= 1 and q["E_abs"] >= 0
    assert report["lemma1"]["sound"]
