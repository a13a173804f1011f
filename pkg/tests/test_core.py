import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wctransfer.core import (
    DiscreteDistribution,
    EstimateResult,
    EvalLog,
    MetricVector,
    RewardConfig,
    quantize,
    reward_of_step,
    rewards_of_steps,
)
from wctransfer.errors import ConfigError, DimensionError, DomainError, EmptyInputError, InputError

ALL_ON = RewardConfig(("r_x", "r_xdot", "r_j", "r_jdot", "r_h", "r_a"), (1, 1, 1, 1, 1, 1))


def test_reward_unit_case():
    assert reward_of_step([1] * 6, ALL_ON) == 6.0


def test_reward_selector():
    cfg = RewardConfig(ALL_ON.term_names, (1, 0, 0, 0, 0, 0))
    assert reward_of_step([2, 3, 5, 7, 11, 13], cfg) == 2.0


def test_reward_stability_mask():
    cfg = RewardConfig(ALL_ON.term_names, (1,) * 6, (True, True, False, False, False, False))
    assert reward_of_step([2, 3, 5, 7, 11, 13], cfg) == 5.0
    assert RewardConfig.stability((1,) * 6).mask == cfg.mask


def test_masked_terms_ignore_weight():
    cfg = RewardConfig(("a", "b"), (1.0, 1e9), (True, False))
    assert reward_of_step([3.0, 100.0], cfg) == 3.0


def test_reward_length_mismatch():
    with pytest.raises(DimensionError):
        reward_of_step([1, 2], ALL_ON)


def test_reward_config_validation():
    with pytest.raises(ConfigError):
        RewardConfig(("a", "b"), (1.0,))
    with pytest.raises(ConfigError):
        RewardConfig(("a",), (1.0,), (False,))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-100, 100), min_size=4, max_size=4),
    st.lists(st.floats(-100, 100), min_size=4, max_size=4),
    st.floats(-10, 10),
    st.floats(-10, 10),
)
def test_reward_linear(f1, f2, a, b):
    cfg = RewardConfig(("a", "b", "c", "d"), (0.5, -2.0, 3.0, 1.25), (True, False, True, True))
    mixed = [a * x + b * y for x, y in zip(f1, f2)]
    lhs = reward_of_step(mixed, cfg)
    rhs = a * reward_of_step(f1, cfg) + b * reward_of_step(f2, cfg)
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)) + 1e-9)


def test_vectorized_reward_matches_scalar(rng):
    f = rng.normal(size=(50, 6))
    cfg = RewardConfig(ALL_ON.term_names, tuple(rng.normal(size=6)), (True, False, True, True, False, True))
    np.testing.assert_allclose(rewards_of_steps(f, cfg), [reward_of_step(r, cfg) for r in f], rtol=1e-12)


def test_quantize_half_away_from_zero():
    assert quantize([0.5, -0.5, 1.5, -1.5, 0.49], 0).tolist() == [1, -1, 2, -2, 0]
    assert quantize([0.04, 0.04999], 1).tolist() == [0, 0]


def test_distribution_normalizes_and_sorts():
    d = DiscreteDistribution(1, [[30], [10], [20]], [1, 2, 1])
    assert d.points[:, 0].tolist() == [10, 20, 30]
    np.testing.assert_array_equal(d.probs, [0.5, 0.25, 0.25])
    assert abs(d.probs.sum() - 1) < 1e-12


def test_distribution_is_immutable():
    d = DiscreteDistribution(0, [0, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


def test_distribution_rejects_bad_input():
    with pytest.raises(InputError):
        DiscreteDistribution(0, [[1], [1]], [0.5, 0.5])
    with pytest.raises(DomainError):
        DiscreteDistribution(0, [0, 1], [-0.1, 1.1])
    with pytest.raises(EmptyInputError):
        DiscreteDistribution(0, np.zeros((0, 1)), [])
    with pytest.raises(DimensionError):
        DiscreteDistribution(0, [0, 1], [1.0])


def test_lexicographic_order_multidim():
    d = DiscreteDistribution(0, [[1, 0], [0, 5], [0, 2]], [1, 1, 1])
    assert d.support == [(0, 2), (0, 5), (1, 0)]


@settings(max_examples=40, deadline=None)
@given(st.permutations(list(range(6))))
def test_canonical_serialization_order_free(perm):
    pts = [[3, 1], [0, 0], [2, 7], [-1, 4], [5, 5], [2, 6]]
    probs = [0.1, 0.2, 0.15, 0.25, 0.05, 0.25]
    a = DiscreteDistribution.from_pairs(zip(pts, probs), 2)
    b = DiscreteDistribution.from_pairs([(pts[i], probs[i]) for i in perm], 2)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_distribution_json_roundtrip():
    d = DiscreteDistribution(3, [[1], [5], [-2]], [0.2, 0.3, 0.5])
    back = DiscreteDistribution.from_dict(json.loads(json.dumps(d.to_dict())))
    assert back == d


def test_metric_vector_rejects_nonfinite():
    with pytest.raises(DomainError):
        MetricVector([1.0, np.nan])


def test_evallog_checks():
    with pytest.raises(EmptyInputError):
        EvalLog("a", ())
    with pytest.raises(DimensionError):
        EvalLog("a", (np.ones((2, 3)), np.ones((2, 4))))
    log = EvalLog("a", (np.ones((3, 2)), np.zeros((2, 2))))
    assert log.n_steps == 5
    assert log.steps(burn_in=2).shape == (1, 2)


def test_estimate_result_roundtrip():
    r = EstimateResult(1.5, 0.1, 0.1 / 1.5, 200, 0.05, False)
    assert EstimateResult.from_dict(json.loads(json.dumps(r.to_dict()))) == r
    z = EstimateResult(0.0, 0.1, None, 10, 0.05, True)
    assert EstimateResult.from_dict(json.loads(json.dumps(z.to_dict()))) == z
