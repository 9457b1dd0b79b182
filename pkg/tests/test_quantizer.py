import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftlif.errors import DomainError, ParameterError
from shiftlif.quantizer import (
    Kind,
    ShiftMode,
    int_positions,
    make_level_set,
    q_int,
    q_shift,
    q_uniform,
    shift_positions,
    uniform_positions,
)

CLAMP, FLOOR = ShiftMode.ALGORITHMIC_CLAMP, ShiftMode.FLOOR_ADMISSIBLE
values = st.floats(min_value=-2.0, max_value=64.0, allow_nan=False)
small_K = st.integers(min_value=0, max_value=12)


def floor_oracle(v, K):
    """Largest shift level not exceeding clamp(v, 0, 1), by scanning the list."""
    x = min(max(v, 0.0), 1.0)
    return max(s for s in make_level_set(Kind.SHIFT, K).levels if s <= x)


def clamp_oracle(v, K):
    """Line-by-line transcription of the forward-pass pseudocode."""
    x = max(0.0, min(v, 1.0))
    if x < 2.0 ** -(K + 1):
        return 0.0
    k = math.ceil(-math.log2(x))
    return 2.0 ** -min(k, K)


def int_oracle(v, K):
    if v < 0.5:
        return 0
    for j in range(1, K + 1):
        if j - 0.5 <= v < j + 0.5:
            return j
    return K + 1


def uniform_oracle(v, K):
    x = min(max(v, 0.0), 1.0)
    n = K + 1
    best, best_d = 0, math.inf
    for j in range(n + 1):
        d = abs(x - j / n)
        if d <= best_d:
            best, best_d = j, d
    return best / n


class TestLevelSet:
    @pytest.mark.parametrize("K", range(0, 11))
    def test_sizes(self, K):
        for kind in Kind:
            levels = make_level_set(kind, K).levels
            assert len(levels) == K + 2
            assert levels[0] == 0
            assert all(a < b for a, b in zip(levels, levels[1:]))

    def test_shift_K2(self):
        assert make_level_set(Kind.SHIFT, 2).levels == (0.0, 0.25, 0.5, 1.0)

    def test_shift_K7_has_nine_levels(self):
        assert len(make_level_set(Kind.SHIFT, 7)) == 9

    def test_int_K0_is_binary(self):
        assert make_level_set(Kind.INT, 0).levels == (0.0, 1.0)

    def test_uniform_levels(self):
        assert make_level_set(Kind.UNIFORM, 2).levels == (0.0, 1 / 3, 2 / 3, 1.0)

    @pytest.mark.parametrize("K", [-1, 31, 2.5, True])
    def test_bad_K(self, K):
        with pytest.raises(ParameterError):
            make_level_set(Kind.SHIFT, K)

    def test_shift_amplitudes_are_exact_powers_of_two(self):
        levels = make_level_set(Kind.SHIFT, 30).levels
        for k, s in zip(range(30, -1, -1), levels[1:]):
            assert s == math.ldexp(1.0, -k)
            assert math.frexp(s)[0] == 0.5

    def test_exponents(self):
        ls = make_level_set(Kind.SHIFT, 2)
        assert ls.exponents([0, 1, 2, 3]).tolist() == [-1, 2, 1, 0]
        with pytest.raises(ParameterError):
            make_level_set(Kind.INT, 2).exponents([0])


class TestQShift:
    @pytest.mark.parametrize("mode", list(ShiftMode))
    def test_examples_both_modes(self, mode):
        assert q_shift(0.6, 2, mode).amplitude == 0.5
        assert q_shift(0.0, 5, mode).amplitude == 0.0
        assert q_shift(1.0, 2, mode).amplitude == 1.0

    def test_bottom_shell_differs_by_mode(self):
        assert q_shift(0.2, 2, CLAMP).amplitude == 0.25
        assert q_shift(0.2, 2, CLAMP).exponent == 2
        assert q_shift(0.2, 2, FLOOR).amplitude == 0.0
        assert q_shift(0.2, 2, FLOOR).exponent is None

    def test_unclamped_input(self):
        assert q_shift(7.5, 3).amplitude == 1.0
        assert q_shift(-3.0, 3).amplitude == 0.0

    @pytest.mark.parametrize("K", [0, 1, 2, 7, 30])
    @pytest.mark.parametrize("mode", list(ShiftMode))
    def test_powers_of_two_map_to_themselves(self, K, mode):
        for k in range(K + 1):
            s = q_shift(math.ldexp(1.0, -k), K, mode)
            assert s.amplitude == math.ldexp(1.0, -k)
            assert s.exponent == k

    def test_just_below_power_of_two(self):
        v = np.nextafter(0.5, 0.0)
        assert q_shift(v, 4).amplitude == 0.25

    def test_nan(self):
        with pytest.raises(DomainError):
            q_shift(float("nan"), 2)
        with pytest.raises(DomainError):
            shift_positions([0.1, np.nan], 2)

    @pytest.mark.parametrize("K", [1, 2, 3, 8])
    def test_floor_matches_level_scan(self, K):
        v = np.random.default_rng(K).uniform(0, 2 * K, 20000)
        got = make_level_set(Kind.SHIFT, K, FLOOR).amplitudes(shift_positions(v, K, FLOOR))
        assert got.tolist() == [floor_oracle(x, K) for x in v]

    @pytest.mark.parametrize("K", [0, 1, 2, 3, 8])
    def test_clamp_matches_pseudocode(self, K):
        v = np.random.default_rng(100 + K).uniform(-0.5, 1.5, 20000)
        got = make_level_set(Kind.SHIFT, K).amplitudes(shift_positions(v, K, CLAMP))
        assert got.tolist() == [clamp_oracle(x, K) for x in v]


class TestQInt:
    def test_examples(self):
        assert q_int(0.4, 2).amplitude == 0
        assert q_int(0.5, 2).amplitude == 1
        assert q_int(2.6, 2).amplitude == 3
        assert q_int(1.49, 2).position == 1

    def test_half_boundary_below(self):
        assert q_int(np.nextafter(0.5, 0), 3).amplitude == 0
        assert q_int(np.nextafter(1.5, 0), 3).amplitude == 1

    def test_nan(self):
        with pytest.raises(DomainError):
            q_int(float("nan"), 1)

    @pytest.mark.parametrize("K", [0, 1, 2, 5])
    def test_matches_interval_scan(self, K):
        v = np.random.default_rng(K).uniform(0, 2 * K + 2, 20000)
        assert int_positions(v, K).tolist() == [int_oracle(x, K) for x in v]


class TestQUniform:
    def test_examples(self):
        assert q_uniform(0.0, 2).amplitude == 0
        assert q_uniform(0.49, 2).amplitude == 1 / 3
        assert q_uniform(1.2, 2).amplitude == 1.0

    def test_tie_rounds_up(self):
        # 0.25 is equidistant from 0 and 0.5 when K = 1
        assert q_uniform(0.25, 1).amplitude == 0.5

    @pytest.mark.parametrize("K", [0, 1, 2, 6])
    def test_matches_nearest_scan(self, K):
        v = np.random.default_rng(K).uniform(-0.2, 1.2, 20000)
        ls = make_level_set(Kind.UNIFORM, K)
        assert ls.amplitudes(uniform_positions(v, K)).tolist() == [uniform_oracle(x, K) for x in v]


def _quantizers(K):
    return [
        make_level_set(Kind.SHIFT, K, CLAMP),
        make_level_set(Kind.SHIFT, K, FLOOR),
        make_level_set(Kind.INT, K),
        make_level_set(Kind.UNIFORM, K),
    ]


class TestProperties:
    @settings(max_examples=300)
    @given(values, small_K)
    def test_idempotent(self, v, K):
        for ls in _quantizers(K):
            once = ls.amplitudes(ls.quantize(v))
            assert ls.amplitudes(ls.quantize(once)) == once

    @settings(max_examples=300)
    @given(values, values, small_K)
    def test_monotone(self, a, b, K):
        lo, hi = min(a, b), max(a, b)
        for ls in _quantizers(K):
            assert ls.amplitudes(ls.quantize(lo)) <= ls.amplitudes(ls.quantize(hi))

    @settings(max_examples=300)
    @given(values, small_K)
    def test_floor_never_exceeds_input(self, v, K):
        s = q_shift(v, K, FLOOR).amplitude
        assert s <= min(max(v, 0.0), 1.0)

    @settings(max_examples=300)
    @given(values, small_K)
    def test_output_in_alphabet(self, v, K):
        for ls in _quantizers(K):
            assert float(ls.amplitudes(ls.quantize(v))) in ls.levels

    @given(st.floats(min_value=0, max_value=1, allow_nan=False), small_K)
    def test_modes_agree_outside_bottom_shell(self, v, K):
        if not 2.0 ** -(K + 1) <= v < 2.0 ** -K:
            assert q_shift(v, K, CLAMP) == q_shift(v, K, FLOOR)
