"""Shared fixtures: the worked three-item example network and its value table."""

import numpy as np
import pytest

from mvnn_auction import Bundle, MvnnParams

# value table of the worked example: substitutes {1,2}, complements {1,3},
# independent {2,3}; order 000,100,010,001,110,101,011,111
TABLE_VALUES = {
    "000": 0.0, "100": 1.0, "010": 1.0, "001": 1.0,
    "110": 1.0, "101": 3.0, "011": 2.0, "111": 4.0,
}


@pytest.fixture(scope="session")
def table_pairs():
    return [(Bundle.from_string(bits), v) for bits, v in TABLE_VALUES.items()]


@pytest.fixture(scope="session")
def golden_net():
    """Hand-fitted two-neuron network reproducing TABLE_VALUES exactly."""
    return MvnnParams(
        weights=(
            np.array([[1.0, 1.0, 1.0], [0.5, 0.25, 1.0]]),
            np.array([[1.0, 4.0]]),
        ),
        biases=(np.array([0.0, -1.0]),),
        cutoff=1.0,
    )
