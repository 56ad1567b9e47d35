import numpy as np
import pytest

from mvnn_auction import Bundle, encode_wdp, parse_lp, write_lp
from mvnn_auction.errors import LpParseError
from mvnn_auction.milp import MilpModel, ModelBuilder
from mvnn_auction.prefgen import sample_mvnn_params
from mvnn_auction.solver import SolveConfig, solve_milp


def _tiny_model() -> MilpModel:
    b = ModelBuilder(num_bidders=1, num_items=2)
    b.allocation_vars.append([
        b.add_var("a_0_0", 0.0, 1.0, binary=True),
        b.add_var("a_0_1", 0.0, 1.0, binary=True),
    ])
    x = b.add_var("x", 0.0, 2.5)
    b.add_constraint("cap", [(0, 1.0), (1, 1.0), (x, -0.5)], "<=", 1.0)
    b.add_constraint("basement", [(x, 1.0), (0, -1e-09)], ">=", 0.25)
    b.add_constraint("tie", [(x, 2.0)], "=", 1.5)
    b.add_objective_term(x, 3.0)
    b.add_objective_term(0, 1.0)
    return b.build()


class TestWriter:
    def test_empty_model(self):
        text = write_lp(ModelBuilder().build())
        assert text == "Maximize\n obj:\nSubject To\nBounds\nBinary\nEnd\n"

    def test_sections_and_names(self, golden_net):
        text = write_lp(encode_wdp([golden_net], 3))
        assert text.startswith("Maximize\n obj: 1 z_0_1_0 + 4 z_0_1_1\n")
        assert "Subject To" in text and "Binary" in text
        assert " a_0_0\n" in text
        assert "item_0: 1 a_0_0 <= 1" in text

    def test_deterministic(self, golden_net):
        first = write_lp(encode_wdp([golden_net, golden_net], 3))
        second = write_lp(encode_wdp([golden_net, golden_net], 3))
        assert first == second


class TestRoundTrip:
    def test_parse_export_parse_fixed_point(self, golden_net):
        text = write_lp(encode_wdp([golden_net, golden_net], 3))
        once = write_lp(parse_lp(text))
        twice = write_lp(parse_lp(once))
        assert once == twice

    def test_tiny_model_semantics_preserved(self):
        model = _tiny_model()
        back = parse_lp(write_lp(model))
        assert write_lp(parse_lp(write_lp(back))) == write_lp(back)
        by_name = {v.name: v for v in back.variables}
        assert by_name["x"].upper == 2.5
        assert by_name["a_0_0"].is_binary
        rows = {c.name: c for c in back.constraints}
        assert rows["tie"].relation == "="
        assert rows["basement"].relation == ">="
        assert rows["basement"].rhs == 0.25
        # scientific-notation coefficient survives
        coefs = {back.variables[i].name: c for i, c in rows["basement"].terms}
        assert coefs["a_0_0"] == -1e-09

    def test_allocation_grid_recovered(self, golden_net):
        back = parse_lp(write_lp(encode_wdp([golden_net, golden_net], 3)))
        assert back.num_bidders == 2 and back.num_items == 3
        assert len(back.allocation_vars) == 2

    def test_parsed_model_solves_identically(self, golden_net):
        model = encode_wdp([golden_net, golden_net], 3)
        back = parse_lp(write_lp(model))
        cfg = SolveConfig(gap=0.0, timeout=60)
        assert solve_milp(back, cfg).objective == pytest.approx(
            solve_milp(model, cfg).objective, abs=1e-9
        )


class TestParserErrors:
    def test_missing_end(self):
        with pytest.raises(LpParseError):
            parse_lp("Maximize\n obj: 1 x\nBounds\n 0 <= x <= 1\n")

    def test_undeclared_variable_with_line_number(self):
        text = "Maximize\n obj: 1 x\nSubject To\nBounds\nBinary\nEnd\n"
        with pytest.raises(LpParseError) as err:
            parse_lp(text)
        assert err.value.line == 2

    def test_minimize_rejected(self):
        with pytest.raises(LpParseError):
            parse_lp("Minimize\n obj: 1 x\nEnd\n")

    def test_malformed_bounds(self):
        text = "Maximize\n obj:\nSubject To\nBounds\n x <= <= 1\nBinary\nEnd\n"
        with pytest.raises(LpParseError):
            parse_lp(text)
