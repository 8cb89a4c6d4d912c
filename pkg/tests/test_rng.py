import numpy as np
import pytest

from sfsopt.rng import SEED_LIMIT, GaussianStream, check_seed, derive_seed


def test_check_seed():
    assert check_seed(0) == 0
    assert check_seed(SEED_LIMIT - 1) == SEED_LIMIT - 1
    with pytest.raises(ValueError):
        check_seed(-1)
    with pytest.raises(ValueError):
        check_seed(SEED_LIMIT)


def test_derive_seed():
    seeds = [derive_seed(2023, i) for i in range(100)]
    assert seeds == [derive_seed(2023, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert all(0 <= s < SEED_LIMIT for s in seeds)
    assert derive_seed(2024, 0) != derive_seed(2023, 0)
    with pytest.raises(ValueError):
        derive_seed(2023, -1)


def test_gaussian_stream():
    stream = GaussianStream(7)
    first = stream.normal((3, 2))
    second = stream.normal(4)
    assert stream.consumed == 10

    replay = GaussianStream(7)
    np.testing.assert_array_equal(replay.normal((3, 2)), first)
    np.testing.assert_array_equal(replay.normal(4), second)
    # the stream is sequential: one big block equals the concatenated small ones
    whole = GaussianStream(7).normal(10)
    np.testing.assert_array_equal(whole, np.concatenate([first.ravel(), second]))
