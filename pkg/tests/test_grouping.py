import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmpo import InvalidInputError, group_advantages


@pytest.mark.parametrize(
    "rewards, expected",
    [
        ([1, 0, 0, 0], [0.75, -0.25, -0.25, -0.25]),
        ([1, 1, 1, 1], [0, 0, 0, 0]),
        ([1, 1, 0, 0], [0.5, 0.5, -0.5, -0.5]),
    ],
)
def test_examples(rewards, expected):
    np.testing.assert_allclose(group_advantages(rewards), expected)


def test_too_small():
    with pytest.raises(InvalidInputError):
        group_advantages([1.0])


rewards_st = st.lists(st.floats(-10, 10), min_size=2, max_size=16)


@given(rewards_st)
def test_zero_sum(r):
    assert abs(np.sum(group_advantages(r))) <= 1e-12 * max(1.0, np.max(np.abs(r))) * len(r)


@given(rewards_st, st.floats(-5, 5))
def test_translation_invariant(r, c):
    np.testing.assert_allclose(group_advantages(np.array(r) + c), group_advantages(r), atol=1e-9)


def test_std_normalization_is_opt_in():
    adv = group_advantages([1, 0, 0, 0], std_normalize=True)
    assert np.std(adv) == pytest.approx(1.0, rel=1e-4)
