"""Distribution-level comparison of the power-of-two and integer quantizers.

Everything here works on empirical samples of the threshold-normalised
membrane potential X >= 0. Probabilities are plain frequencies and all sums
go through :func:`math.fsum`, so results do not depend on sample order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ParameterError
from .quantizer import Kind, LevelSet, ShiftMode, make_level_set

# differences smaller than this are treated as ties when comparing entropies
TIE_TOLERANCE = 1e-12


@dataclass
class SampleSet:
    values: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size == 0:
            raise ParameterError("sample set is empty")
        if not np.isfinite(self.values).all():
            raise ParameterError("samples must be finite")
        if (self.values < 0).any():
            raise ParameterError("samples must be non-negative")

    def __len__(self):
        return self.values.size

    @classmethod
    def from_trace(cls, trace, v_th: float = 1.0, **source) -> SampleSet:
        """Samples from a recorded membrane trace, normalised by threshold.

        Negative potentials are clipped to zero.
        """
        values = np.maximum(np.asarray(trace, dtype=np.float64).ravel() / v_th, 0.0)
        return cls(values, {"kind": "membrane", "v_th": v_th, **source})


def sample_distribution(spec: dict, n: int, seed: int) -> SampleSet:
    """Draw ``n`` samples from a named synthetic distribution.

    Supported ``spec["kind"]`` values: ``exponential`` (rate), ``uniform``
    (low, high), ``point`` (value) and ``mixture`` (weight of an
    exponential(rate) component, remainder uniform(low, high)).
    """
    if n < 1:
        raise ParameterError(f"need at least one sample, got n={n}")
    rng = np.random.default_rng(seed)
    kind = spec.get("kind", "exponential")
    if kind == "exponential":
        rate = float(spec.get("rate", 4.0))
        if rate <= 0:
            raise ParameterError(f"exponential rate must be > 0, got {rate}")
        values = rng.exponential(1.0 / rate, n)
        params = {"rate": rate}
    elif kind == "uniform":
        low, high = float(spec.get("low", 0.0)), float(spec.get("high", 1.0))
        if not 0 <= low < high:
            raise ParameterError(f"uniform bounds need 0 <= low < high, got [{low}, {high})")
        values = rng.uniform(low, high, n)
        params = {"low": low, "high": high}
    elif kind == "point":
        value = float(spec.get("value", 0.9))
        values = np.full(n, value)
        params = {"value": value}
    elif kind == "mixture":
        weight = float(spec.get("weight", 0.7))
        rate = float(spec.get("rate", 8.0))
        low, high = float(spec.get("low", 0.5)), float(spec.get("high", 2.0))
        if not 0 <= weight <= 1:
            raise ParameterError(f"mixture weight must lie in [0, 1], got {weight}")
        pick = rng.random(n) < weight
        values = np.where(pick, rng.exponential(1.0 / rate, n), rng.uniform(low, high, n))
        params = {"weight": weight, "rate": rate, "low": low, "high": high}
    else:
        raise ParameterError(f"unknown distribution kind {kind!r}")
    return SampleSet(values, {"kind": kind, "n": n, "seed": seed, **params})


def _analysis_quantizer(level_set: LevelSet) -> LevelSet:
    if level_set.kind is Kind.SHIFT and level_set.shift_mode is not ShiftMode.FLOOR_ADMISSIBLE:
        raise ParameterError("error analysis requires the floor-admissible shift quantizer")
    return level_set


def shift_floor(K: int) -> LevelSet:
    return make_level_set(Kind.SHIFT, K, ShiftMode.FLOOR_ADMISSIBLE)


def _mean(x: np.ndarray) -> float:
    return math.fsum(x) / x.size


def _values(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.values
    return SampleSet(samples).values


def quantized(samples, level_set: LevelSet) -> np.ndarray:
    return level_set.amplitudes(level_set.quantize(_values(samples)))


def expected_abs_error(samples, level_set: LevelSet) -> float:
    """Mean |x - Q(x)| over the samples."""
    x = _values(samples)
    return _mean(np.abs(x - quantized(x, _analysis_quantizer(level_set))))


class Lemma1Result(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    empirical_gap: float  # E_int - E_shift
    gap_stderr: float
    e_shift: float
    e_int: float


def lemma1_condition(samples, K: int) -> Lemma1Result:
    """Both sides of the sufficient condition for a lower shift-quantizer error.

    lhs = 2^-K P(2^-K <= X < 1/2),  rhs = P(3/4 <= X < 1)/2 + K P(X >= 3/2)
    """
    if K < 1:
        raise ParameterError(f"lemma condition needs K >= 1, got {K}")
    x = _values(samples)
    n = x.size
    floor = math.ldexp(1.0, -K)
    lhs = floor * np.count_nonzero((x >= floor) & (x < 0.5)) / n
    rhs = 0.5 * np.count_nonzero((x >= 0.75) & (x < 1.0)) / n + K * np.count_nonzero(x >= 1.5) / n
    delta, _ = delta_pointwise(x, K)
    gap = _mean(delta)
    stderr = float(np.std(delta, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    e_shift = expected_abs_error(x, shift_floor(K))
    e_int = expected_abs_error(x, make_level_set(Kind.INT, K))
    return Lemma1Result(float(lhs), float(rhs), bool(lhs > rhs), gap, stderr, e_shift, e_int)


def delta_pointwise(v, K: int):
    """Pointwise error advantage of the shift quantizer and its lower bound.

    delta = |v - Q_int(v)| - (v - Q_shift(v)); the bound is
    2^-K on [2^-K, 1/2), -1/2 on [3/4, 1), -K on [3/2, inf), 0 elsewhere.
    Scalars in, scalars out; arrays in, arrays out.
    """
    scalar = np.ndim(v) == 0
    x = np.asarray(v, dtype=np.float64)
    if (x < 0).any():
        raise ParameterError("delta_pointwise needs v >= 0")
    q_int = quantized(x, make_level_set(Kind.INT, K)).reshape(x.shape)
    q_shift = quantized(x, shift_floor(K)).reshape(x.shape)
    delta = np.abs(x - q_int) - (x - q_shift)
    floor = math.ldexp(1.0, -K)
    bound = (
        floor * ((x >= floor) & (x < 0.5))
        - 0.5 * ((x >= 0.75) & (x < 1.0))
        - K * (x >= 1.5)
    )
    if scalar:
        return float(delta), float(bound)
    return delta, bound


def entropy_bits(probabilities) -> float:
    """Shannon entropy in bits with 0 log 0 := 0."""
    p = np.asarray(probabilities, dtype=np.float64)
    p = p[p > 0]
    return math.fsum(-p * np.log2(p)) if p.size else 0.0


def _pmf(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    return counts / total if total else np.zeros(len(counts))


def output_distribution(samples, level_set: LevelSet) -> np.ndarray:
    positions = level_set.quantize(_values(samples))
    return _pmf(np.bincount(positions.astype(np.int64), minlength=len(level_set)))


def output_entropy(samples, level_set: LevelSet) -> float:
    return entropy_bits(output_distribution(samples, level_set))


def bit_budget(K: int) -> int:
    """Bits needed to index K + 2 levels."""
    return math.ceil(math.log2(K + 2))


def bit_utilization(samples, level_set: LevelSet, K: int | None = None) -> float:
    """Output entropy divided by the bit budget of K + 2 levels."""
    K = level_set.K if K is None else K
    if K < 0:
        raise ParameterError(f"K must be >= 0, got {K}")
    return output_entropy(samples, level_set) / bit_budget(K)


def binary_entropy(r: float) -> float:
    return entropy_bits([r, 1.0 - r])


@dataclass
class EntropyDecomposition:
    K: int
    r: float
    m: float
    c: float
    R: list  # (R_0, R_2, ..., R_K); empty when r == 0
    Vdist: list  # (m, c) / (1 - r); empty when r == 1
    Tdist: list  # (T_1, ..., T_{K+1}); empty when r == 1
    h2_r: float
    H_R: float
    H_V: float
    H_T: float
    H_shift_direct: float
    H_int_direct: float
    H_shift_chain: float
    H_int_chain: float
    criterion_lhs: float
    criterion_rhs: float
    criterion_verdict: bool
    direct_verdict: bool
    U_shift: float
    U_int: float

    @property
    def shift_residual(self) -> float:
        return abs(self.H_shift_chain - self.H_shift_direct)

    @property
    def int_residual(self) -> float:
        return abs(self.H_int_chain - self.H_int_direct)

    @property
    def consistent(self) -> bool:
        return self.criterion_verdict == self.direct_verdict

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(shift_residual=self.shift_residual, int_residual=self.int_residual, consistent=self.consistent)
        return out


def _greater(a: float, b: float) -> bool:
    return a - b > TIE_TOLERANCE


def entropy_decomposition(samples, K: int) -> EntropyDecomposition:
    """Chain-rule split of both output entropies at X = 1/2.

    The conditional distributions are built from interval membership of the
    samples, not from the quantizers, so the reconstruction is an
    independent check of the directly measured entropies.
    """
    if K < 1:
        raise ParameterError(f"entropy decomposition needs K >= 1, got {K}")
    x = _values(samples)
    n = x.size
    low = x < 0.5
    n_low = int(np.count_nonzero(low))
    n_mid = int(np.count_nonzero((x >= 0.5) & (x < 1.0)))
    n_high = n - n_low - n_mid
    r, m, c = n_low / n, n_mid / n, n_high / n

    R: list = []
    if n_low:
        xl = x[low]
        floor = math.ldexp(1.0, -K)
        counts = [np.count_nonzero(xl < floor)]
        for k in range(2, K + 1):
            lo, hi = math.ldexp(1.0, -k), math.ldexp(1.0, -k + 1)
            counts.append(np.count_nonzero((xl >= lo) & (xl < hi)))
        R = list(_pmf(np.array(counts, dtype=np.float64)))

    Vdist: list = []
    Tdist: list = []
    if n_low < n:
        Vdist = [n_mid / (n - n_low), n_high / (n - n_low)]
        xu = x[~low]
        counts = [np.count_nonzero((xu >= j - 0.5) & (xu < j + 0.5)) for j in range(1, K + 1)]
        counts.append(np.count_nonzero(xu >= K + 0.5))
        Tdist = list(_pmf(np.array(counts, dtype=np.float64)))

    h2 = binary_entropy(r)
    H_R, H_V, H_T = entropy_bits(R), entropy_bits(Vdist), entropy_bits(Tdist)
    shift_ls, int_ls = shift_floor(K), make_level_set(Kind.INT, K)
    H_shift = output_entropy(x, shift_ls)
    H_int = output_entropy(x, int_ls)
    lhs = r * H_R + (1 - r) * H_V
    rhs = (1 - r) * H_T
    budget = bit_budget(K)
    U_shift, U_int = H_shift / budget, H_int / budget
    return EntropyDecomposition(
        K=K, r=r, m=m, c=c, R=[float(p) for p in R], Vdist=[float(p) for p in Vdist],
        Tdist=[float(p) for p in Tdist], h2_r=h2, H_R=H_R, H_V=H_V, H_T=H_T,
        H_shift_direct=H_shift, H_int_direct=H_int,
        H_shift_chain=h2 + lhs, H_int_chain=h2 + rhs,
        criterion_lhs=lhs, criterion_rhs=rhs,
        criterion_verdict=_greater(lhs, rhs), direct_verdict=_greater(U_shift, U_int),
        U_shift=U_shift, U_int=U_int,
    )


class Histogram(NamedTuple):
    edges: np.ndarray
    fractions: np.ndarray

    @property
    def mode_bin(self) -> int:
        return int(np.argmax(self.fractions))


def membrane_histogram(trace, bins: int = 40, v_max: float = 2.0) -> Histogram:
    """Normalised histogram of a membrane trace clamped to [0, v_max]."""
    values = np.asarray(trace, dtype=np.float64).ravel()
    if values.size == 0:
        raise ParameterError("membrane trace is empty")
    if bins < 1 or v_max <= 0:
        raise ParameterError("need bins >= 1 and v_max > 0")
    counts, edges = np.histogram(np.clip(values, 0.0, v_max), bins=bins, range=(0.0, v_max))
    return Histogram(edges, counts / values.size)


def analysis_report(samples: SampleSet, K: int, bins: int = 40, v_max: float = 2.0) -> dict:
    """Per-quantizer error, entropy and utilization plus both lemma checks."""
    x = samples.values
    quantizers = {
        "shift": shift_floor(K),
        "int": make_level_set(Kind.INT, K),
        "uniform": make_level_set(Kind.UNIFORM, K),
    }
    per_quantizer = {}
    for name, ls in quantizers.items():
        H = output_entropy(x, ls)
        per_quantizer[name] = {
            "E_abs": expected_abs_error(x, ls),
            "entropy": H,
            "utilization": H / bit_budget(K),
            "levels": list(ls.levels),
            "output_pmf": [float(p) for p in output_distribution(x, ls)],
        }
    report = {"K": K, "source": samples.source, "n": len(samples), "quantizers": per_quantizer}
    if K >= 1:
        lemma1 = lemma1_condition(x, K)
        report["lemma1"] = {
            **lemma1._asdict(),
            "shift_lower_error": lemma1.e_shift < lemma1.e_int,
            "sound": (not lemma1.holds) or lemma1.e_shift < lemma1.e_int,
        }
        report["lemma2"] = entropy_decomposition(x, K).to_dict()
    hist = membrane_histogram(x, bins, v_max)
    report["histogram"] = {"edges": hist.edges.tolist(), "fractions": hist.fractions.tolist()}
    return report
