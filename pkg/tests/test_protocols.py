import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from dxchange.protocols import (
    BaselineSW,
    CandidateSpace,
    DataExchange,
    ExchangeParams,
    InteractiveSW,
    InteractiveSwParams,
    baseline_sw,
    conditional_decode,
    conditional_encode,
    conditional_interval,
    data_exchange,
    interactive_sw,
    theorem2_budget,
)
from dxchange.session import ErrorKind, Kind, SessionRandomness, monte_carlo, run_trial
from dxchange.sources import JointSource, SequenceSource, exact_sum_density_distribution, sample
from dxchange.spectrum import SpectrumPlan, make_plan, slice_probabilities


@pytest.fixture(scope="module")
def z8():
    return SequenceSource.iid(JointSource.z_channel(), 8)


@pytest.fixture(scope="module")
def z8_params(z8):
    plan = make_plan(exact_sum_density_distribution(z8, "x_given_y"), integral_delta=True)
    return InteractiveSwParams.from_plan(plan, 6)


def test_first_message_length(z8_params):
    # lambda_min + delta + eta = 0 + 3 + 6
    assert z8_params.l == 9
    assert z8_params.eta_effective == 6
    assert [z8_params.phase1_bits(i) for i in (1, 2, 3)] == [10, 14, 18]


def test_params_validation():
    plan = SpectrumPlan(0.0, 3.0, 1.5, 2)
    with pytest.raises(ValueError):
        InteractiveSwParams.from_plan(plan, 2)
    ok = InteractiveSwParams.from_plan(SpectrumPlan(0.0, 4.0, 2.0, 2), 1.5)
    assert ok.l == 4 and ok.eta_effective == 2
    with pytest.raises(ValueError):
        ExchangeParams(ok, 3)


def test_theorem2_recipe(z8, z8_params):
    dist = exact_sum_density_distribution(z8, "sum")
    t2 = theorem2_budget(dist, 0.1, z8_params.plan, 6)
    lam = oracles.zchannel_sum_quantile(8, 0.1)
    assert t2.lambda_eps == lam == 12
    assert t2.l_max == math.floor(lam + 3 + 3 + 6 + 1) == 25
    assert t2.bound == pytest.approx(0.1 + 3 * 2**-6)


def test_phase1_bit_law(z8, z8_params):
    proto = InteractiveSW(z8, z8_params)
    mc = monte_carlo(proto, z8, 300, master_seed=4)
    good = [o for o in mc.outcomes if o.correct]
    assert len(good) > 280
    for o in good:
        assert o.bits_phase1 == z8_params.phase1_bits(o.stop_round)
        assert o.bits_phase2 == 0


def test_interactive_outcome_kinds(z8, z8_params):
    mc = monte_carlo(InteractiveSW(z8, z8_params), z8, 200, master_seed=11)
    assert set(mc.error_kinds) <= {"none", "ambiguous", "no_candidate"}
    for o in mc.outcomes:
        assert o.aborted == (o.error_kind != ErrorKind.NONE)


def test_data_exchange_budget_and_correctness(z8, z8_params):
    proto = DataExchange(z8, ExchangeParams(z8_params, 25))
    mc = monte_carlo(proto, z8, 300, master_seed=2, budget=25)
    assert all(o.total_bits <= 25 for o in mc.outcomes)
    assert mc.error_rate < 0.15
    for o in mc.outcomes:
        if o.correct:
            assert o.bits_phase2 >= 1


def test_wrapper_functions_agree(z8, z8_params):
    rnd = SessionRandomness.derive(3, 0)
    x, y = sample(z8, np.random.default_rng(0))
    a, ta = data_exchange(x, y, z8, ExchangeParams(z8_params, 25), rnd)
    b, tb = DataExchange(z8, z8_params), None
    out, tb = run_trial(b, z8, 3, 0, 25)[2:]
    assert ta.total_bits == a.total_bits
    i, ti = interactive_sw(x, y, z8, z8_params, rnd)
    assert all(m.kind in (Kind.HASH_BLOCK, Kind.ACK, Kind.NACK) for m in ti.entries)


def test_baseline(z8):
    out, tr = baseline_sw(np.array([1, 0, 1, 1, 0, 1, 1, 0]), np.array([0, 0, 1, 1, 0, 0, 1, 0]), z8, 12, 6,
                          SessionRandomness(1, 2, 3))
    assert tr.total_bits == 12 and len(tr) == 1
    # threshold l - eta = 9 covers the whole support of h(X|Y)
    mc = monte_carlo(BaselineSW(z8, 15, 6), z8, 200, master_seed=1)
    assert mc.error_rate < 0.05
    with pytest.raises(ValueError):
        BaselineSW(z8, 3, 5)


def test_determinism(z8, z8_params):
    a = run_trial(DataExchange(z8, z8_params), z8, 77, 5, 25)[3]
    b = run_trial(DataExchange(z8, z8_params), z8, 77, 5, 25)[3]
    assert a.to_bytes() == b.to_bytes()


def test_decoder_gate():
    with pytest.raises(ValueError):
        CandidateSpace(SequenceSource.iid(JointSource.z_channel(), 25))


def _cond_prob(table, x, y):
    p = Fraction(1)
    for a, b in zip(x, y):
        row = sum(table[a])
        p *= table[a][b] / row
    return p


@given(st.lists(st.sampled_from([(0, 0), (1, 0), (1, 1)]), min_size=1, max_size=10))
def test_conditional_code_round_trip(pairs):
    src = SequenceSource.iid(JointSource.z_channel(), len(pairs))
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    value, nbits = conditional_encode(src, x, y)
    w = _cond_prob(JointSource.z_channel().exact_table(), x, y)
    k = 0
    while Fraction(1, 2**k) > w:
        k += 1
    assert nbits == k + 1
    assert np.array_equal(conditional_decode(src, x, value, nbits), y)


def test_conditional_code_prefix_free():
    src = SequenceSource.iid(JointSource([["1/2", "1/8", "1/8"], ["1/16", "1/16", "1/8"]]), 3)
    x = np.array([0, 1, 0])
    words = []
    for y in itertools.product(range(3), repeat=3):
        v, k = conditional_encode(src, x, np.array(y))
        words.append(format(v, f"0{k}b"))
    for a, b in itertools.permutations(words, 2):
        assert not b.startswith(a)
    lo, w = conditional_interval(src, x, np.array([0, 0, 0]))
    assert w == _cond_prob(src.sources[0].exact_table(), x, [0, 0, 0]) == Fraction(1, 9)


def test_deterministic_conditional_costs_one_bit():
    src = SequenceSource.iid(JointSource([["1/2", 0], [0, "1/2"]]), 6)
    x = np.array([0, 1, 1, 0, 0, 1])
    v, k = conditional_encode(src, x, x)
    assert k == 1
    assert np.array_equal(conditional_decode(src, x, v, k), x)


def test_mixture_exchange_runs():
    skew = JointSource([[Fraction(1, 2), 0], [Fraction(1, 4), Fraction(1, 4)]])
    mix = SequenceSource.mixture([(Fraction(1, 2), skew), (Fraction(1, 2), skew.transpose())], 6)
    x, y = sample(mix, np.random.default_rng(5))
    v, k = conditional_encode(mix, x, y)
    assert np.array_equal(conditional_decode(mix, x, v, k), y)
    from dxchange.sources import enumerate_density_distribution
    plan = make_plan(enumerate_density_distribution(mix, "x_given_y"), integral_delta=True)
    params = InteractiveSwParams.from_plan(plan, 5)
    mc = monte_carlo(DataExchange(mix, params), mix, 50, master_seed=1)
    assert mc.error_rate < 0.3
