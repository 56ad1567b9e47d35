import numpy as np
import pytest

from mvnn_auction import (
    Bundle,
    MvnnParams,
    big_m,
    brelu,
    encode_wdp,
    encode_wdp_relu,
    forward,
    forward_batch,
    ia_bounds,
    prune,
)
from mvnn_auction.errors import ConstraintViolationError, DimensionError
from mvnn_auction.milp import (
    DROP_ETA_ROWS,
    DROP_Z_ROWS,
    FIX_ZERO,
    FULL,
    LINEAR_PASSTHROUGH,
    MilpModel,
)
from mvnn_auction.mvnn import all_bundles_matrix, forward_trace
from mvnn_auction.prefgen import sample_mvnn_params


class TestIaBounds:
    def test_golden_layer_one(self, golden_net):
        bounds = ia_bounds(golden_net)
        layer = bounds.layers[0]
        assert np.array_equal(layer.upper_pre, [3.0, 0.75])
        assert np.array_equal(layer.upper_post, [1.0, 0.75])
        assert np.array_equal(layer.lower_pre, [0.0, -1.0])

    def test_dead_network(self):
        p = MvnnParams(
            (np.zeros((2, 3)), np.zeros((1, 2))), (np.array([-0.5, 0.0]),)
        )
        bounds = ia_bounds(p)
        assert np.all(bounds.layers[0].upper_pre <= 0.0)
        assert np.all(bounds.layers[0].upper_post == 0.0)

    def test_clamp_at_cutoff(self):
        p = MvnnParams(
            (np.array([[2.0]]), np.array([[1.0]])), (np.array([-0.5]),)
        )
        bounds = ia_bounds(p)
        assert bounds.layers[0].upper_pre[0] == pytest.approx(1.5)
        assert bounds.layers[0].upper_post[0] == 1.0

    def test_rejects_unprojected(self):
        p = MvnnParams(
            (np.array([[-1.0]]), np.array([[1.0]])), (np.array([0.0]),)
        )
        with pytest.raises(ConstraintViolationError):
            ia_bounds(p)

    def test_tightness_exact_at_extreme_inputs(self):
        # pre-activation bounds equal the pre-activations at the all-ones
        # and all-zeros inputs, bit for bit
        for seed in range(100):
            p = sample_mvnn_params((6, 5, 4, 1), seed=seed,
                                   cutoff=[0.5, 1.0, 2.0][seed % 3])
            bounds = ia_bounds(p)
            _, trace_hi = forward_trace(p, Bundle.full(6))
            _, trace_lo = forward_trace(p, Bundle.empty(6))
            for layer, (pre_hi, _), (pre_lo, _) in zip(
                bounds.layers, trace_hi, trace_lo
            ):
                assert np.array_equal(layer.upper_pre, pre_hi)
                assert np.array_equal(layer.lower_pre, pre_lo)


class TestBigM:
    def test_golden_constants(self, golden_net):
        constants = big_m(golden_net, ia_bounds(golden_net))
        layer = constants.layers[0]
        assert np.array_equal(layer.l1, [0.0, 1.0])
        assert np.array_equal(layer.l2, [3.0, 0.75])
        assert np.array_equal(layer.l3, [2.0, 0.0])
        assert np.array_equal(layer.l4, [1.0, 1.0])

    def test_zero_network(self):
        p = MvnnParams(
            (np.zeros((2, 3)), np.zeros((1, 2))), (np.zeros(2),)
        )
        layer = big_m(p, ia_bounds(p)).layers[0]
        assert np.all(layer.l1 == 0) and np.all(layer.l2 == 0)
        assert np.all(layer.l3 == 0) and np.all(layer.l4 == 1.0)

    def test_formula_substitution(self):
        p = MvnnParams(
            (np.array([[2.5]]), np.array([[1.0]])), (np.array([-2.0]),)
        )
        layer = big_m(p, ia_bounds(p)).layers[0]
        assert layer.l1[0] == 2.0
        assert layer.l2[0] == pytest.approx(0.5)
        assert layer.l3[0] == 0.0
        assert layer.l4[0] == 1.0


class TestPrune:
    def _decisions(self, lower_pre, upper_pre, t=1.0):
        from mvnn_auction.milp import LayerBounds, NeuronBounds

        lo = np.array([lower_pre])
        hi = np.array([upper_pre])
        bounds = NeuronBounds((LayerBounds(lo, hi, brelu(hi, t)),), t)
        return prune(bounds)[0][0]

    def test_case_table(self):
        assert self._decisions(-0.5, -0.1) == FIX_ZERO
        assert self._decisions(0.0, 0.9) == LINEAR_PASSTHROUGH
        assert self._decisions(0.0, 1.5) == DROP_ETA_ROWS
        assert self._decisions(-1.0, 0.75) == DROP_Z_ROWS
        assert self._decisions(-1.0, 1.5) == FULL

    def test_cutoff_dependence(self):
        assert self._decisions(-1.0, 1.5, t=2.0) == DROP_Z_ROWS
        assert self._decisions(0.0, 1.5, t=2.0) == LINEAR_PASSTHROUGH


def _case_assignment(model: MilpModel, networks, bundles):
    """Assemble the forward-pass assignment for fixed input bundles:
    eta = max(0, o), z = brelu(o), y = 1 iff o <= 0, mu = 1 iff o > t."""
    point = np.zeros(len(model.variables))
    names = model.name_index()
    for i, (p, bundle) in enumerate(zip(networks, bundles)):
        for j in range(p.num_items):
            point[names[f"a_{i}_{j}"]] = (bundle.mask >> j) & 1
        _, trace = forward_trace(p, bundle)
        for k, (pre, post) in enumerate(trace, start=1):
            for j, (o, z) in enumerate(zip(pre, post)):
                tag = f"{i}_{k}_{j}"
                if f"z_{tag}" in names:
                    point[names[f"z_{tag}"]] = z
                if f"eta_{tag}" in names:
                    point[names[f"eta_{tag}"]] = max(0.0, o)
                if f"y_{tag}" in names:
                    point[names[f"y_{tag}"]] = 1.0 if o <= 0.0 else 0.0
                if f"mu_{tag}" in names:
                    point[names[f"mu_{tag}"]] = 1.0 if o > p.cutoff else 0.0
    return point


def assert_point_feasible(model: MilpModel, point, tol=1e-9):
    for v, x in zip(model.variables, point):
        assert v.lower - tol <= x <= v.upper + tol, (v.name, x, v.lower, v.upper)
    for c in model.constraints:
        lhs = sum(point[idx] * coef for idx, coef in c.terms)
        if c.relation == "<=":
            assert lhs <= c.rhs + tol, (c.name, lhs, c.rhs)
        elif c.relation == ">=":
            assert lhs >= c.rhs - tol, (c.name, lhs, c.rhs)
        else:
            assert lhs == pytest.approx(c.rhs, abs=tol), (c.name, lhs, c.rhs)


def model_objective(model: MilpModel, point) -> float:
    return float(sum(point[idx] * coef for idx, coef in model.objective))


class TestEncodingSoundness:
    @pytest.mark.parametrize("prune_model", [True, False])
    @pytest.mark.parametrize("cutoff", [0.5, 1.0, 2.0])
    def test_forward_pass_assignment_is_feasible(self, prune_model, cutoff):
        rng = np.random.default_rng(314)
        for trial in range(25):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(2, 7))
            networks = [
                sample_mvnn_params(
                    (m, int(rng.integers(2, 9)), 1),
                    seed=trial, stream=("domain", trial, i), cutoff=cutoff,
                )
                for i in range(n)
            ]
            model = encode_wdp(networks, m, prune_model=prune_model)
            # a random feasible allocation: each item to a bidder or no one
            assign = rng.integers(0, n + 1, size=m)
            bundles = [
                Bundle(int(sum(1 << j for j in range(m) if assign[j] == i + 1)), m)
                for i in range(n)
            ]
            point = _case_assignment(model, networks, bundles)
            assert_point_feasible(model, point)
            want = sum(forward(p, b) for p, b in zip(networks, bundles))
            assert model_objective(model, point) == pytest.approx(want, abs=1e-9)

    def test_fixed_inputs_reproduce_forward_pass_when_solved(self, golden_net):
        # solving with the allocation variables pinned recovers z = brelu(o)
        from mvnn_auction.solver import SolveConfig, solve_milp

        for mask in range(8):
            model = encode_wdp([golden_net], 3, prune_model=False,
                               excluded_bundles=None)
            lower = [v.lower for v in model.variables]
            upper = [v.upper for v in model.variables]
            names = model.name_index()
            for j in range(3):
                bit = (mask >> j) & 1
                lower[names[f"a_0_{j}"]] = upper[names[f"a_0_{j}"]] = bit
            pinned = MilpModel(
                variables=tuple(
                    type(v)(v.name, lo, hi, v.is_binary)
                    for v, lo, hi in zip(model.variables, lower, upper)
                ),
                constraints=model.constraints,
                objective=model.objective,
                num_bidders=1, num_items=3,
                allocation_vars=model.allocation_vars,
            )
            sol = solve_milp(pinned, SolveConfig(gap=0.0, timeout=60))
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(
                forward(golden_net, Bundle(mask, 3)), abs=1e-7
            )

    def test_dead_neuron_pruned_to_nothing(self):
        p = MvnnParams(
            (np.array([[0.1], [0.5]]), np.array([[1.0, 1.0]])),
            (np.array([-0.5, -0.1]),),
        )
        model = encode_wdp([p], 1, prune_model=True)
        names = [v.name for v in model.variables]
        assert "z_0_1_0" not in names  # upper_pre = -0.4 <= 0: removed
        assert "z_0_1_1" in names

    def test_passthrough_neuron_single_equality(self):
        p = MvnnParams(
            (np.array([[0.4, 0.4]]), np.array([[1.0]])), (np.array([0.0]),)
        )
        model = encode_wdp([p], 2, prune_model=True)
        rows = [c for c in model.constraints if c.name.startswith("lin_")]
        assert len(rows) == 1 and rows[0].relation == "="
        assert not any(v.name.startswith(("y_", "mu_", "eta_"))
                       for v in model.variables)


class TestEncodeWdp:
    def test_item_feasibility_rows_present(self, golden_net):
        model = encode_wdp([golden_net, golden_net], 3)
        rows = [c for c in model.constraints if c.name.startswith("item_")]
        assert len(rows) == 3
        for row in rows:
            assert row.relation == "<=" and row.rhs == 1.0
            assert len(row.terms) == 2

    def test_objective_uses_readout_coefficients(self, golden_net):
        model = encode_wdp([golden_net], 3)
        coefs = sorted(coef for _, coef in model.objective)
        assert coefs == [1.0, 4.0]

    def test_width_mismatch(self, golden_net):
        other = sample_mvnn_params((4, 3, 1), seed=0)
        with pytest.raises(DimensionError):
            encode_wdp([golden_net, other])

    def test_unprojected_network_rejected(self):
        p = MvnnParams(
            (np.array([[-1.0, 0.0]]), np.array([[1.0]])), (np.array([0.0]),)
        )
        with pytest.raises(ConstraintViolationError):
            encode_wdp([p], 2)

    def test_excluded_bundle_rows(self, golden_net):
        model = encode_wdp(
            [golden_net], 3,
            excluded_bundles={0: [Bundle.from_string("111")]},
        )
        rows = [c for c in model.constraints if c.name.startswith("novel_")]
        assert len(rows) == 1
        assert rows[0].relation == ">=" and rows[0].rhs == 1.0 - 3


class TestMonotoneBigM:
    def test_enlarging_constants_preserves_optimum(self, golden_net):
        from mvnn_auction import monotone_bnb
        from mvnn_auction.milp import BIG_M_SAFETY
        from mvnn_auction.solver import SolveConfig, solve_milp
        import mvnn_auction.milp as milp_mod

        want = solve_milp(encode_wdp([golden_net, golden_net], 3),
                          SolveConfig(gap=0.0, timeout=60)).objective
        original = milp_mod.BIG_M_SAFETY
        try:
            milp_mod.BIG_M_SAFETY = 7.5  # grossly enlarged constants
            loose = solve_milp(encode_wdp([golden_net, golden_net], 3),
                               SolveConfig(gap=0.0, timeout=60)).objective
        finally:
            milp_mod.BIG_M_SAFETY = original
        assert loose == pytest.approx(want, abs=1e-6)


class TestReluEncodingCrossCheck:
    def _shrink_below_cutoff(self, p: MvnnParams) -> MvnnParams:
        # scale layers until no pre-activation can reach the cutoff; then
        # the bounded and unbounded rectifiers agree everywhere on inputs
        ws = [w.copy() for w in p.weights]
        bs = [b.copy() for b in p.biases]
        for _ in range(60):
            q = MvnnParams(tuple(ws), tuple(bs), p.cutoff)
            bounds = ia_bounds(q)
            hot = [k for k, layer in enumerate(bounds.layers)
                   if np.any(layer.upper_pre > 0.9 * p.cutoff)]
            if not hot:
                return q
            for k in hot:
                ws[k] *= 0.7
                bs[k] *= 0.7
        raise AssertionError("could not scale the network below the cutoff")

    def test_identical_network_identical_optima(self):
        from mvnn_auction.solver import SolveConfig, solve_milp

        for seed in range(5):
            p = self._shrink_below_cutoff(
                sample_mvnn_params((5, 4, 3, 1), seed=seed)
            )
            nets = [p, p]
            a = solve_milp(encode_wdp(nets, 5), SolveConfig(gap=0.0, timeout=60))
            b = solve_milp(encode_wdp_relu(nets, 5),
                           SolveConfig(gap=0.0, timeout=60))
            assert a.objective == pytest.approx(b.objective, abs=1e-6)

    def test_relu_encoding_matches_relu_forward_on_fixed_inputs(self):
        from mvnn_auction.prefgen import sample_relu_params
        from mvnn_auction.solver import SolveConfig, solve_milp

        p = sample_relu_params((4, 3, 1), seed=1)
        model = encode_wdp_relu([p], 4)
        # single bidder: optimum equals the max of the relu forward pass
        xs = all_bundles_matrix(4)
        want = float(np.max(forward_batch(p, xs, activation="relu")))
        sol = solve_milp(model, SolveConfig(gap=0.0, timeout=60))
        assert sol.objective == pytest.approx(max(want, sol.objective), abs=1e-6)
        assert sol.objective == pytest.approx(want, abs=1e-6)
