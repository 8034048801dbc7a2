from __future__ import annotations

import csv
import io

import numpy as np
import pytest

from convexlab.errors import BudgetError, ContractViolation
from convexlab.extremal import (CSV_HEADER, build_extremal_lp, reflected_nodes, sequence_report,
                                solve_extremal)


@pytest.mark.parametrize("m", [1, 2, 4, 10])
def test_one_dimensional_values(m):
    inst = build_extremal_lp(1, m)
    assert solve_extremal(inst).epsilon_hat == pytest.approx(0.5, abs=1e-9)
    assert solve_extremal(inst, variant="lipschitz_only").epsilon_hat == pytest.approx(1.0, abs=1e-9)


def test_one_dimensional_counts():
    c = build_extremal_lp(1, 2).counts
    assert c["boundary"] == 2 and c["box"] == 3
    assert c["first_order"] == 4
    assert c["second_order"] == 4


def test_two_dimensional_values():
    inst = build_extremal_lp(2, 4)
    full = solve_extremal(inst)
    assert full.epsilon_hat == pytest.approx(0.25, abs=1e-9)
    assert full.growth == pytest.approx(1.5625, abs=1e-9)
    assert solve_extremal(inst, variant="lipschitz_only").epsilon_hat == pytest.approx(1.0, abs=1e-9)


def test_relaxation_ordering():
    for n, m in [(1, 3), (2, 3), (2, 4)]:
        inst = build_extremal_lp(n, m)
        assert solve_extremal(inst).epsilon_hat <= solve_extremal(inst, variant="lipschitz_only").epsilon_hat + 1e-9
        pruned = build_extremal_lp(n, m, pruning="center_axis")
        assert solve_extremal(inst).epsilon_hat <= solve_extremal(pruned).epsilon_hat + 1e-9


def test_symmetry_of_objective_node():
    inst = build_extremal_lp(2, 4)
    nodes = reflected_nodes((0.25, 0.5))
    assert len(nodes) == 8
    vals = [solve_extremal(inst, objective=p).epsilon_hat for p in nodes]
    assert np.allclose(vals, 0.1875, atol=1e-9)


def test_sweep_finds_centre_value():
    inst = build_extremal_lp(2, 3)
    sw = solve_extremal(inst, sweep=True)
    assert sw.epsilon_hat == pytest.approx(solve_extremal(inst).epsilon_hat, abs=1e-9)


def test_pruning_flags_and_budget():
    inst = build_extremal_lp(2, 4, pruning="center_axis")
    assert inst.pruned and solve_extremal(inst).pruned
    assert inst.counts["second_order"] < inst.counts["second_order_full"]
    assert not build_extremal_lp(2, 4, pruning="auto").pruned
    with pytest.raises(BudgetError):
        build_extremal_lp(2, 8, pruning="none", budget=1000)
    with pytest.raises(BudgetError):
        build_extremal_lp(3, 8, pruning="auto", budget=1000)


def test_auto_pruning_switches_on_budget():
    inst = build_extremal_lp(2, 4, pruning="auto", budget=700)
    assert inst.pruning == "center_axis"
    assert inst.counts["second_order"] <= 700


def test_contracts():
    for bad in [dict(n=4, m=2), dict(n=1, m=0), dict(n=1, m=2, pruning="bogus")]:
        with pytest.raises(ContractViolation):
            build_extremal_lp(**bad)
    inst = build_extremal_lp(1, 2)
    with pytest.raises(ContractViolation):
        solve_extremal(inst, objective=[1.0])
    with pytest.raises(ContractViolation):
        solve_extremal(inst, objective=[0.3])
    with pytest.raises(ContractViolation):
        solve_extremal(inst, variant="bogus")


def test_sequence_csv():
    rep = sequence_report(2, 2)
    text = rep.to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == CSV_HEADER
    assert sum(r == CSV_HEADER for r in rows) == 1
    assert rows[1] == ["1", "2", "full", "0.0", "0.5", "1.5", "false", "upper-estimate"]
    assert len(rows) == 3
    assert "upper estimate" in rep.to_json()["label"]
