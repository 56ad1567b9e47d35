import numpy as np
import pytest

from mvnn_auction import (
    Bundle,
    ValueTable,
    exact_mvnn,
    forward,
    forward_batch,
    interpolate,
    is_projected,
)
from mvnn_auction.errors import (
    DataError,
    InstanceTooLargeError,
    MonotonicityError,
)
from mvnn_auction.mvnn import all_bundles_matrix
from mvnn_auction.prefgen import random_monotone_table
from tests.conftest import TABLE_VALUES


def B(s):
    return Bundle.from_string(s)


class TestValueTable:
    def test_complete_and_validated(self, table_pairs):
        table = ValueTable.from_dict(dict(table_pairs), 3)
        table.check_monotone_normalized()
        assert table.value(B("101")) == 3.0

    def test_incomplete_rejected(self):
        with pytest.raises(DataError):
            ValueTable.from_dict({B("00"): 0.0, B("11"): 1.0}, 2)

    def test_monotonicity_violation_reports_witness(self):
        values = {0: 0.0, 1: 2.0, 2: 0.5, 3: 1.0}  # {item0} worth 2 > {both}
        table = ValueTable(2, [values[k] for k in range(4)])
        with pytest.raises(MonotonicityError) as err:
            table.check_monotone_normalized()
        small, large = err.value.witness
        assert small.issubset(large)

    def test_nonzero_empty_rejected(self):
        table = ValueTable(1, [0.5, 1.0])
        with pytest.raises(MonotonicityError):
            table.check_monotone_normalized()


class TestExactNetwork:
    def test_single_item_construction(self):
        table = ValueTable(1, [0.0, 5.0])
        net = exact_mvnn(table)
        assert net.widths == (1, 1, 1, 1)
        assert np.array_equal(net.weights[0], [[1.0]])
        assert np.array_equal(net.weights[1], [[1.0]])
        assert np.array_equal(net.biases[1], [0.0])
        assert np.array_equal(net.weights[2], [[5.0]])
        assert forward(net, B("1")) == pytest.approx(5.0, abs=1e-12)
        assert forward(net, B("0")) == 0.0

    def test_worked_example_table(self, table_pairs):
        net = exact_mvnn(ValueTable.from_dict(dict(table_pairs), 3))
        assert net.widths == (3, 7, 7, 1)
        for bits, want in TABLE_VALUES.items():
            assert forward(net, B(bits)) == pytest.approx(want, abs=1e-12)

    def test_constant_zero_table(self):
        net = exact_mvnn(ValueTable(3, np.zeros(8)))
        assert np.array_equal(net.weights[-1], np.zeros((1, 7)))
        assert np.all(forward_batch(net, all_bundles_matrix(3)) == 0.0)

    def test_structure_matches_construction(self, table_pairs):
        net = exact_mvnn(ValueTable.from_dict(dict(table_pairs), 3))
        # second layer: lower-triangular ones with stepped bias
        assert np.array_equal(net.weights[1], np.tril(np.ones((7, 7))))
        assert np.array_equal(net.biases[1], -np.arange(7.0))
        # readout: nonnegative successive differences summing to the maximum
        assert np.all(net.weights[2] >= 0.0)
        assert net.weights[2].sum() == pytest.approx(4.0)

    def test_round_trip_random_tables(self):
        rng = np.random.default_rng(123)
        for trial in range(50):
            m = int(rng.integers(2, 5))
            table = random_monotone_table(m, rng)
            net = exact_mvnn(table)
            assert is_projected(net)
            got = forward_batch(net, all_bundles_matrix(m))
            assert np.max(np.abs(got - table.values)) <= 1e-12

    def test_size_cap(self):
        with pytest.raises(InstanceTooLargeError):
            exact_mvnn(ValueTable(13, np.zeros(1 << 13)))


class TestInterpolate:
    def test_single_point(self):
        net = interpolate([(B("10"), 7.0)])
        assert net.widths == (2, 1, 1, 1)
        assert forward(net, B("10")) == pytest.approx(7.0, abs=1e-12)
        assert forward(net, B("00")) == 0.0

    def test_full_table_agrees_with_exact(self, table_pairs):
        net_i = interpolate(table_pairs)
        net_e = exact_mvnn(ValueTable.from_dict(dict(table_pairs), 3))
        xs = all_bundles_matrix(3)
        assert np.allclose(forward_batch(net_i, xs), forward_batch(net_e, xs),
                           atol=1e-12)

    def test_architecture_size_law(self):
        rng = np.random.default_rng(5)
        table = random_monotone_table(6, rng)
        masks = rng.choice(63, size=9, replace=False) + 1  # nonempty points
        data = [(Bundle(int(mk), 6), float(table.values[mk])) for mk in masks]
        net = interpolate(data)
        assert net.widths == (6, 9, 9, 1)

    def test_random_monotone_samples_fit_exactly_and_stay_monotone(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            table = random_monotone_table(10, rng)
            masks = rng.choice(1 << 10, size=20, replace=False)
            data = [(Bundle(int(mk), 10), float(table.values[mk])) for mk in masks]
            net = interpolate(data)
            for b, v in data:
                assert forward(net, b) == pytest.approx(v, abs=1e-12)
            # off-sample predictions respect single-item monotonicity
            probe = rng.integers(0, 1 << 10, size=40)
            for mask in probe:
                mask = int(mask)
                for j in range(10):
                    if not mask & (1 << j):
                        lo = forward(net, Bundle(mask, 10))
                        hi = forward(net, Bundle(mask | (1 << j), 10))
                        assert lo <= hi + 1e-12

    def test_duplicate_bundles_rejected(self):
        with pytest.raises(DataError):
            interpolate([(B("10"), 1.0), (B("10"), 1.0)])

    def test_inconsistent_data_reports_witness(self):
        with pytest.raises(MonotonicityError) as err:
            interpolate([(B("10"), 3.0), (B("11"), 1.0)])
        small, large = err.value.witness
        assert small == B("10") and large == B("11")

    def test_nonzero_empty_value_rejected(self):
        with pytest.raises(DataError):
            interpolate([(B("00"), 1.0)])
