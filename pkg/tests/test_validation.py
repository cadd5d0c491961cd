import numpy as np
import pytest

from msgan.exceptions import InvalidArgument
from msgan.validation import as_configs, as_matrix, as_vector, check_bounds


def test_as_vector():
    np.testing.assert_array_equal(as_vector(3.0), [3.0])
    np.testing.assert_array_equal(as_vector([1, 2], dim=2), [1.0, 2.0])
    for bad, kw in (([[1.0]], {}), ([1.0, 2.0], {"dim": 3}), ([np.nan], {})):
        with pytest.raises(InvalidArgument):
            as_vector(bad, **kw)


def test_as_configs_accepts_batches():
    assert as_configs(np.zeros((4, 5, 3)), 3).shape == (4, 5, 3)
    with pytest.raises(InvalidArgument):
        as_configs(np.zeros((4, 2)), 3)
    with pytest.raises(InvalidArgument):
        as_configs(1.0, 1)


def test_as_matrix_promotes_single_row():
    assert as_matrix([1.0, 2.0], n_cols=2).shape == (1, 2)
    with pytest.raises(InvalidArgument):
        as_matrix(np.zeros((2, 3)), n_cols=2)
    with pytest.raises(InvalidArgument):
        as_matrix([[np.inf, 0.0]])


def test_check_bounds():
    lo, hi = check_bounds([0, 0], [1, 1])
    assert lo.dtype == float and hi.dtype == float
    with pytest.raises(InvalidArgument):
        check_bounds([0, 2], [1, 1])
    with pytest.raises(InvalidArgument):
        check_bounds([0], [1, 1])
