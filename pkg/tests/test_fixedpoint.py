from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import galois_step, is_maximal_length, lfsr_period, rational_switch
from spikefit.bench import SyntheticSpec, gen_integer_line_instance
from spikefit.engine import SnnConfig
from spikefit.errors import (
    ConfigError,
    ConfigOverflow,
    InvalidSeed,
    NonIntegerData,
    WeightOverflow,
)
from spikefit.fixedpoint import (
    LFSR_TAPS,
    FixedPointConfig,
    LfsrBank,
    LfsrState,
    asr,
    integer_eps,
    lfsr_next,
    neuron_seeds,
    quantize_alpha,
    quantize_dataset,
    run_fixed,
    sample_switch,
    saturate,
    shift_gd_update,
)
from spikefit.model import Dataset

# -- LFSR --------------------------------------------------------------------------


def test_lfsr_reads_then_advances():
    value, nxt = lfsr_next(LfsrState(0xACE1))
    assert value == 0xACE1
    assert nxt.register == galois_step(0xACE1, LFSR_TAPS[16])


@pytest.mark.parametrize("seed", [1, 0xACE1, 0xFFFF])
def test_lfsr16_full_period(seed):
    state = LfsrState(seed)
    for n in range(1, 1 << 16):
        _, state = lfsr_next(state)
        if state.register == seed:
            break
    assert n == (1 << 16) - 1


def test_lfsr16_period_by_reference_walk():
    assert lfsr_period(0x1234, LFSR_TAPS[16], 16) == 65535


def test_lfsr24_taps_are_maximal_length():
    assert is_maximal_length(LFSR_TAPS[24], 24)
    assert is_maximal_length(LFSR_TAPS[16], 16)
    # a non-primitive mask is rejected by the same check
    assert not is_maximal_length(0x8000 | 0x0001, 16)


def test_lfsr_zero_register_rejected():
    with pytest.raises(InvalidSeed):
        LfsrState(0)
    with pytest.raises(InvalidSeed):
        LfsrState(1 << 16)


def test_lfsr_bit_balance():
    bank = LfsrBank(seed=7, n=1, bits=16)
    draws = np.array([bank.draw()[0] for _ in range(100_000)])
    bits = (draws[:, None] >> np.arange(16)) & 1
    means = bits.mean(axis=0)
    assert np.all((means >= 0.45) & (means <= 0.55)), means


def test_bank_matches_scalar_lfsr():
    bank = LfsrBank(seed=3, n=4, bits=16, stride=1)
    states = [LfsrState(int(s)) for s in bank.registers]
    for _ in range(50):
        got = bank.draw()
        for j in range(4):
            v, states[j] = lfsr_next(states[j])
            assert got[j] == v


def test_neuron_seeds_nonzero_and_deterministic():
    a = neuron_seeds(123, 500)
    assert np.all(a > 0) and np.all(a < (1 << 16))
    np.testing.assert_array_equal(a, neuron_seeds(123, 500))
    assert len(set(a.tolist())) > 450


# -- switching test ------------------------------------------------------------------


def test_sample_switch_examples():
    assert sample_switch(2, 10, 0) is True
    assert (10 * 65535) >> 16 == 9
    assert sample_switch(2, 10, 65535) is False


@given(N=st.integers(1, 256), v=st.integers(0, 65535), data=st.data())
def test_sample_switch_matches_rational(N, v, data):
    d = data.draw(st.integers(1, N))
    assert sample_switch(d, N, v) == rational_switch(d, N, v)


def test_sample_switch_rate():
    rng = np.random.default_rng(0)
    v = rng.integers(0, 1 << 16, 1_000_000)
    rate = sample_switch(8, 200, v).mean()
    # acceptance probability of the integer test is exactly (floor(d 2^16 / N) + 1) / 2^16
    p = 8 / 200
    sigma = np.sqrt(p * (1 - p) / v.size)
    assert abs(rate - p) <= 3 * sigma + 2**-16


def test_sample_switch_rejects_bad_scalars():
    with pytest.raises(ValueError):
        sample_switch(0, 10, 5)
    with pytest.raises(ValueError):
        sample_switch(2, 10, 1 << 16)


# -- learning rate and update ----------------------------------------------------------


def test_quantize_alpha_examples():
    assert quantize_alpha(0.02, 10) == 21
    assert quantize_alpha(0.5, 1) == 1
    assert quantize_alpha(1.0, 0) == 1


@given(alpha=st.floats(1e-6, 10.0), beta=st.integers(0, 16))
def test_quantize_alpha_is_exact_ceiling(alpha, beta):
    exact = Fraction(alpha) * 2**beta
    q = quantize_alpha(alpha, beta)
    assert q - 1 < exact <= q


def test_quantize_alpha_overflow_and_bad_input():
    with pytest.raises(ConfigOverflow):
        quantize_alpha(2.0**30, 0)
    with pytest.raises(ConfigError):
        quantize_alpha(0.0, 10)


def test_shift_update_examples():
    theta, n = shift_gd_update(np.array([100]), np.array([64]), 21, 10)
    assert theta[0] == 99 and n == 0
    theta, _ = shift_gd_update(np.array([100]), np.array([0]), 21, 10)
    assert theta[0] == 100
    assert asr(-64 * 21, 10) == -2
    theta, _ = shift_gd_update(np.array([100]), np.array([-64]), 21, 10)
    assert theta[0] == 102


@given(theta=st.integers(-1000, 1000), grad=st.integers(-10**6, 10**6))
def test_shift_update_is_floor_division(theta, grad):
    got, _ = shift_gd_update(np.array([theta]), np.array([grad]), 21, 10)
    assert got[0] == theta - (grad * 21) // 1024


def test_saturation_counts():
    clipped, n = saturate(np.array([2**23, -(2**23) - 1, 5]), 24)
    np.testing.assert_array_equal(clipped, [2**23 - 1, -(2**23), 5])
    assert n == 2
    theta, n = shift_gd_update(np.array([2**23 - 1]), np.array([-(2**20)]), 21, 10)
    assert theta[0] == 2**23 - 1 and n == 1


# -- weight validation -----------------------------------------------------------------


def test_quantize_accepts_generator_output():
    for eta in (0, 10, 30, 50):
        for s in range(20):
            ds, _ = gen_integer_line_instance(
                SyntheticSpec(N=20, d=2, eta_percent=eta, seed=s, integer_mode=True))
            qds, scale = quantize_dataset(ds)
            assert scale == 1
            np.testing.assert_array_equal(qds.X, ds.X)


def test_quantize_overflow_names_entry():
    ds = Dataset(np.array([[1.0, 1.0], [12.0, 1.0]]), np.array([1.0, 2.0]))
    with pytest.raises(WeightOverflow) as info:
        quantize_dataset(ds)
    assert info.value.value == 144
    assert info.value.entry == ("Q'", 1, 0, 0)


def test_quantize_scales_rationals():
    ds = Dataset(np.array([[0.5, 1.0], [1.5, 1.0]]), np.array([1.0, 2.5]))
    with pytest.raises(NonIntegerData):
        quantize_dataset(ds)
    qds, scale = quantize_dataset(ds, scale=2)
    assert scale == 2 and qds.meta["scale"] == 2
    np.testing.assert_array_equal(qds.X, [[1, 2], [3, 2]])
    np.testing.assert_array_equal(qds.y, [2, 5])


def test_integer_eps():
    assert integer_eps(4.0) == 4
    with pytest.raises(ConfigError):
        integer_eps(0.5)


def test_config_validation():
    with pytest.raises(ConfigError):
        FixedPointConfig(lfsr_bits=12)
    assert FixedPointConfig().alpha_bar(0.02) == 21


# -- integer network runs --------------------------------------------------------------


def exact_line(N=20, slope=3, intercept=-2):
    x = np.arange(N) % 7 - 3
    X = np.column_stack([x, np.ones(N)])
    return Dataset(X, slope * x + intercept)


def test_fixed_exact_line_reaches_full_consensus():
    ds = exact_line()
    r = run_fixed(ds, SnnConfig(K=100, M=200, eps_inlier=4, seed=1))
    assert r.psi_best == ds.N
    assert r.method == "snn-fixed"


def test_fixed_zero_selection_keeps_theta_zero():
    ds = exact_line()
    sel = np.zeros((2, ds.N), dtype=int)
    r = run_fixed(ds, SnnConfig(K=2, M=5, eps_inlier=4, seed=0), selections=sel)
    for e in r.trace:
        np.testing.assert_array_equal(e.theta, [0, 0])


def test_fixed_states_are_integers():
    ds = exact_line()
    seen = []
    run_fixed(ds, SnnConfig(K=2, M=10, eps_inlier=4, seed=2),
              observer=lambda t, prev, cur: seen.append(cur))
    for st_ in seen:
        assert st_.theta.dtype == np.int64 and st_.theta_prime.dtype == np.int64
        assert st_.z.dtype == np.int64


def test_fixed_rejects_non_integer_threshold():
    with pytest.raises(ConfigError):
        run_fixed(exact_line(), SnnConfig(K=1, M=1, eps_inlier=0.5))
