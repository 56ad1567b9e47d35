import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvnn_auction import (
    Allocation,
    Bundle,
    ReportSet,
    TableOracle,
    efficiency_loss,
    is_feasible,
    relative_revenue,
    reported_social_welfare,
    social_welfare,
)
from mvnn_auction.errors import (
    DataError,
    DegenerateInstanceError,
    DimensionError,
    FeasibilityError,
)
from tests.conftest import TABLE_VALUES


def B(s):
    return Bundle.from_string(s)


class TestBundle:
    def test_round_trips(self):
        b = B("10110")
        assert b.bits == (1, 0, 1, 1, 0)
        assert str(b) == "10110"
        assert Bundle.from_bits(b.bits) == b
        assert b.size == 3

    def test_vector_is_float_and_frozen(self):
        v = B("101").vector
        assert v.dtype == np.float64
        assert not v.flags.writeable

    def test_subset_and_union(self):
        assert B("001").issubset(B("011"))
        assert not B("100").issubset(B("011"))
        assert B("100").union(B("001")) == B("101")

    def test_rejects_bad_entries(self):
        with pytest.raises(DataError):
            Bundle.from_bits([0, 2, 1])
        with pytest.raises(DimensionError):
            Bundle(mask=8, m=3)


class TestFeasibility:
    def test_disjoint_is_feasible(self):
        assert is_feasible([B("101"), B("010")])

    def test_shared_item_is_infeasible(self):
        assert not is_feasible([B("101"), B("100")])

    def test_all_empty_is_feasible(self):
        assert is_feasible([B("000"), B("000")])

    def test_length_mismatch_raises(self):
        with pytest.raises(DimensionError):
            is_feasible([B("101"), B("01")])

    @given(st.lists(st.integers(0, 63), min_size=1, max_size=5))
    def test_invariant_under_bidder_permutation(self, masks):
        bundles = [Bundle(mask, 6) for mask in masks]
        expected = is_feasible(bundles)
        for perm in itertools.permutations(bundles):
            assert is_feasible(list(perm)) == expected

    def test_allocation_constructor_enforces_feasibility(self):
        with pytest.raises(FeasibilityError):
            Allocation((B("110"), B("010")))


@pytest.fixture
def table_oracle():
    return TableOracle(
        {Bundle.from_string(k): v for k, v in TABLE_VALUES.items()}, 3,
        monotone=True,
    )


class TestWelfare:
    def test_empty_allocation_is_zero(self, table_oracle):
        a = Allocation.empty(2, 3)
        assert social_welfare(a, [table_oracle, table_oracle]) == 0.0

    def test_single_bidder_full_bundle(self, table_oracle):
        a = Allocation((B("111"),))
        assert social_welfare(a, [table_oracle]) == 4.0

    def test_two_bidder_partition(self, table_oracle):
        a = Allocation((B("100"), B("011")))
        assert social_welfare(a, [table_oracle, table_oracle]) == 3.0

    def test_oracle_count_mismatch(self, table_oracle):
        with pytest.raises(DimensionError):
            social_welfare(Allocation((B("100"),)), [table_oracle, table_oracle])


class TestReportedWelfare:
    def test_all_reported(self):
        r = ReportSet.from_lists([[(B("10"), 5.0)], [(B("01"), 3.0)]])
        a = Allocation((B("10"), B("01")))
        assert reported_social_welfare(a, r) == 8.0

    def test_unreported_bundle_contributes_zero(self):
        r = ReportSet.from_lists([[(B("01"), 5.0)], [(B("01"), 3.0)]])
        a = Allocation((B("10"), B("01")))
        assert reported_social_welfare(a, r) == 3.0

    def test_subset_of_truthful_welfare(self, table_oracle):
        # truthful reports: reported welfare of any allocation never
        # exceeds its true welfare
        reports = [
            [(B("100"), 1.0), (B("011"), 2.0)],
            [(B("010"), 1.0)],
        ]
        r = ReportSet.from_lists(reports)
        for bundles in itertools.product(
            [B("000"), B("100"), B("011")], [B("000"), B("010")]
        ):
            if not is_feasible(list(bundles)):
                continue
            a = Allocation(bundles)
            assert reported_social_welfare(a, r) <= \
                social_welfare(a, [table_oracle, table_oracle]) + 1e-12

    def test_duplicate_bundles_rejected(self):
        with pytest.raises(DataError):
            ReportSet.from_lists([[(B("10"), 1.0), (B("10"), 2.0)]])

    def test_negative_values_rejected(self):
        with pytest.raises(DataError):
            ReportSet.from_lists([[(B("10"), -0.5)]])


class TestMetrics:
    def test_efficiency_loss_basics(self):
        assert efficiency_loss(10.0, 10.0) == 0.0
        assert efficiency_loss(0.0, 10.0) == 1.0
        assert efficiency_loss(9.0, 10.0) == pytest.approx(0.1)

    def test_efficiency_loss_monotone_in_achieved(self):
        losses = [efficiency_loss(x, 10.0) for x in np.linspace(0, 10, 21)]
        assert all(a >= b - 1e-15 for a, b in zip(losses, losses[1:]))

    def test_degenerate_instance(self):
        with pytest.raises(DegenerateInstanceError):
            efficiency_loss(0.0, 0.0)
        with pytest.raises(DegenerateInstanceError):
            relative_revenue([1.0], -1.0)

    def test_relative_revenue(self):
        assert relative_revenue([0.0, 0.0], 4.0) == 0.0
        assert relative_revenue([1.0, 1.0], 4.0) == 0.5
