from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from shiftlif.errors import DimensionError, ParameterError
from shiftlif.neuron import (
    NeuronKind,
    NeuronLayer,
    NeuronParams,
    NeuronState,
    SpikeTensor,
    intlif_step,
    lif_step,
    run_sequence,
    shiftlif_step,
    step,
)

ALL_KINDS = list(NeuronKind)


def fresh(kind, n=1, **kw):
    params = NeuronParams(kind=kind, **kw)
    return params, NeuronState.initial((n,), params)


def shift_trace_oracle(drive, T, K, tau):
    """Rational-arithmetic hand trace of a single ShiftLIF neuron (v_th = 1, v_reset = 0)."""
    levels = [Fraction(0)] + [Fraction(1, 2 ** k) for k in range(K, -1, -1)]
    V, out = Fraction(0), []
    x = Fraction(drive)
    for _ in range(T):
        V = V - V / tau + x
        v = min(max(V, Fraction(0)), Fraction(1))
        if v < Fraction(1, 2 ** (K + 1)):
            s = Fraction(0)
        else:
            s = max(level for level in levels if level <= v) if v >= levels[1] else levels[1]
        out.append(s)
        V -= s
    return out


class TestSingleSteps:
    def test_lif_resting(self):
        p, st0 = fresh(NeuronKind.LIF)
        pos, new = lif_step(st0, [0.0], p)
        assert pos.tolist() == [0] and new.v.tolist() == [0.0]

    def test_lif_fires_at_threshold(self):
        p, st0 = fresh(NeuronKind.LIF)
        pos, _ = lif_step(st0, [1.0], p)
        assert pos.tolist() == [1]

    def test_shiftlif_examples(self):
        p, st0 = fresh(NeuronKind.SHIFT_LIF, K=2, tau=2)
        pos, new = shiftlif_step(st0, [0.0], p)
        assert pos.tolist() == [0] and new.v.tolist() == [0.0]
        pos, new = shiftlif_step(st0, [0.6], p)
        assert new.charged.tolist() == [0.6]
        assert p.level_set.amplitudes(pos).tolist() == [0.5]
        assert new.v[0] == pytest.approx(0.1, abs=1e-15)
        pos, new = shiftlif_step(st0, [1.5], p)
        assert p.level_set.amplitudes(pos).tolist() == [1.0]
        assert new.v.tolist() == [0.5]

    def test_intlif_examples(self):
        p, st0 = fresh(NeuronKind.INT_LIF, K=2)
        pos, new = intlif_step(st0, [0.4], p)
        assert pos.tolist() == [0] and new.v.tolist() == [0.4]
        pos, new = intlif_step(st0, [1.6], p)
        assert p.level_set.amplitudes(pos).tolist() == [2.0]
        assert new.v[0] == pytest.approx(-0.4, abs=1e-15)

    def test_kind_mismatch(self):
        p, st0 = fresh(NeuronKind.LIF)
        with pytest.raises(ParameterError):
            shiftlif_step(st0, [0.0], p)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_shape_mismatch(self, kind):
        p, st0 = fresh(kind, n=3)
        with pytest.raises(DimensionError):
            step(st0, np.zeros(2), p)

    @pytest.mark.parametrize("bad", [dict(tau=0.5), dict(v_th=0.0), dict(K=-1), dict(K=31), dict(K=1.5)])
    def test_bad_params(self, bad):
        with pytest.raises(ParameterError):
            NeuronParams(**bad)


class TestSequences:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_inputs(self, kind):
        spikes, trace = run_sequence(NeuronLayer(5, NeuronParams(kind=kind)), np.zeros((6, 5)), True)
        assert spikes.nonzero == 0
        assert not trace.any()

    def test_constant_drive_matches_hand_trace(self):
        layer = NeuronLayer(1, NeuronParams(kind=NeuronKind.SHIFT_LIF, K=2, tau=2))
        spikes, _ = run_sequence(layer, np.full((4, 1), 0.3))
        expected = shift_trace_oracle(Fraction(3, 10), 4, 2, 2)
        assert expected == [Fraction(1, 4)] * 4
        assert spikes.amplitudes[:, 0].tolist() == [float(s) for s in expected]

    @pytest.mark.parametrize("drive", [0.05, 0.3, 0.45, 0.8, 1.7])
    @pytest.mark.parametrize("K", [1, 2, 4])
    def test_matches_rational_trace(self, drive, K):
        layer = NeuronLayer(1, NeuronParams(kind=NeuronKind.SHIFT_LIF, K=K, tau=2))
        spikes, _ = run_sequence(layer, np.full((8, 1), drive))
        assert spikes.amplitudes[:, 0].tolist() == [float(s) for s in shift_trace_oracle(drive, 8, K, 2)]

    def test_saturating_drive_gives_identical_binary_trains(self):
        x = np.full((6, 3), 2.0)
        lif, _ = run_sequence(NeuronLayer(3, NeuronParams(kind=NeuronKind.LIF)), x)
        shift, _ = run_sequence(NeuronLayer(3, NeuronParams(kind=NeuronKind.SHIFT_LIF, K=0)), x)
        assert lif.amplitudes.tolist() == shift.amplitudes.tolist() == np.ones((6, 3)).tolist()

    def test_lif_unit_drive_does_not_fire_every_step(self):
        # u = 1, 0.5, 1.25, 0.625: the reset lands one step late
        spikes, _ = run_sequence(NeuronLayer(1, NeuronParams(kind=NeuronKind.LIF)), np.ones((4, 1)))
        assert spikes.amplitudes[:, 0].tolist() == [1.0, 0.0, 1.0, 0.0]

    def test_empty_sequence(self):
        with pytest.raises(ParameterError):
            run_sequence(NeuronLayer(2), np.zeros((0, 2)))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            run_sequence(NeuronLayer(2), np.zeros((3, 4)))

    def test_batched(self):
        layer = NeuronLayer(4, NeuronParams())
        x = np.random.default_rng(0).uniform(0, 1, (5, 3, 4))
        batch, _ = run_sequence(layer, x)
        for b in range(3):
            single, _ = run_sequence(layer, x[:, b])
            assert (batch.positions[:, b] == single.positions).all()

    def test_spike_tensor_concat_and_slice(self):
        ls = NeuronParams().level_set
        a, b = SpikeTensor([[1, 0]], ls), SpikeTensor([[3, 2]], ls)
        joined = SpikeTensor.concatenate([a, b])
        assert joined.shape == (2, 2)
        assert joined[1].amplitudes.tolist() == [1.0, 0.5]
        with pytest.raises(ParameterError):
            SpikeTensor.concatenate([a, SpikeTensor([[1, 0]], NeuronParams(K=3).level_set)])
        with pytest.raises(ParameterError):
            SpikeTensor([[4]], ls)


membranes = hnp.arrays(np.float64, 6, elements=st.floats(-3, 3, allow_nan=False))
drives = hnp.arrays(np.float64, 6, elements=st.floats(-2, 3, allow_nan=False))


class TestInvariants:
    @settings(max_examples=200)
    @given(membranes, drives, st.sampled_from(ALL_KINDS), st.integers(0, 6))
    def test_alphabet_closure_and_determinism(self, v, x, kind, K):
        p = NeuronParams(kind=kind, K=K, tau=3.0)
        state = NeuronState(v, np.zeros(6), v.copy())
        pos1, s1 = step(state, x, p)
        pos2, s2 = step(state, x, p)
        assert (pos1 == pos2).all() and (s1.v == s2.v).all()
        assert set(p.level_set.amplitudes(pos1).tolist()) <= set(p.level_set.levels)

    @settings(max_examples=200)
    @given(membranes, drives, st.integers(0, 6), st.sampled_from([0.5, 1.0, 2.0]))
    def test_charge_conservation(self, v, x, K, v_th):
        p = NeuronParams(kind=NeuronKind.SHIFT_LIF, K=K, v_th=v_th)
        pos, new = step(NeuronState(v, np.zeros(6), v.copy()), x, p)
        assert (new.v == new.charged - p.level_set.amplitudes(pos) * v_th).all()

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_fixed_point(self, kind):
        p, state = fresh(kind, n=4)
        for _ in range(10):
            pos, state = step(state, np.zeros(4), p)
            assert not pos.any() and not state.v.any()

    @pytest.mark.parametrize("kind", ALL_KINDS)
    @pytest.mark.parametrize("tau", [2.0, 4.0])
    def test_leak_contraction(self, kind, tau):
        p = NeuronParams(kind=kind, tau=tau)
        v0 = np.array([-0.9, -0.37, -2.5, -1e-3])
        state = NeuronState(v0, np.zeros(4), v0.copy())
        for _ in range(6):
            prev = np.abs(state.v)
            pos, state = step(state, np.zeros(4), p)
            assert not pos.any()
            assert (np.abs(state.v) == p.leak * prev).all()
