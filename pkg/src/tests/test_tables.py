import math

import numpy as np
import pandas as pd
import pytest
from scipy.optimize import linprog

from factor_lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    BoundTable,
    Cell,
    LpInstance,
    TableConfig,
    best_over_k,
    bound_tables,
    build_lp_esp,
    build_lp_esp_n,
    build_lp_spm_n,
    esp_headline_factor,
    solve_cell,
    solve_lp,
)
from helpers import InstanceError, InvariantError


#---------------SIMPLEX------------------------#

@pytest.mark.parametrize("seed", range(8))
def test_simplex_matches_highs(seed):
    rng = np.random.default_rng(seed)
    rows, k = rng.integers(2, 12), rng.integers(2, 12)
    lp = LpInstance(c=rng.uniform(0, 1, k), A=rng.uniform(-0.2, 1, (rows, k)), b=rng.uniform(0.5, 2, rows))
    lp.A[0] = np.abs(lp.A[0]) + 0.1
    reference = linprog(-lp.c, A_ub=lp.A, b_ub=lp.b, bounds=(0, None), method="highs")
    solution = solve_lp(lp)
    assert solution.status == OPTIMAL
    assert solution.objective == pytest.approx(-reference.fun, abs=1e-9)
    assert solution.certify(lp)


def test_simplex_with_negative_right_hand_sides():
    lp = LpInstance(c=[1.0, 1.0], A=[[1.0, 1.0], [-1.0, 0.0]], b=[3.0, -1.0])
    solution = solve_lp(lp)
    assert solution.status == OPTIMAL
    assert solution.objective == pytest.approx(3.0)
    assert solution.primal[0] >= 1.0 - 1e-9


def test_simplex_reports_infeasible_and_unbounded():
    assert solve_lp(LpInstance(c=[1.0], A=[[1.0], [-1.0]], b=[1.0, -2.0])).status == INFEASIBLE
    assert solve_lp(LpInstance(c=[1.0], A=[[-1.0]], b=[1.0])).status == UNBOUNDED


def test_lp_instance_validation():
    with pytest.raises(InstanceError):
        LpInstance(c=[1.0, 1.0], A=[[1.0]], b=[1.0])
    with pytest.raises(InstanceError):
        LpInstance(c=[1.0], A=[[math.nan]], b=[1.0])


def test_degenerate_program_terminates():
    # the cyclic rows are all tight at the origin
    A = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
    lp = LpInstance(c=[1.0, 1.0, 1.0], A=A, b=[0.0, 0.0, 0.0, 3.0])
    solution = solve_lp(lp)
    assert solution.status == OPTIMAL
    assert solution.objective == pytest.approx(3.0)
    assert solution.certify(lp)


#---------------PROGRAMS------------------------#

def test_program_shapes():
    assert build_lp_spm_n(3, 10).shape == (10, 10)
    assert build_lp_esp_n(3, 10).shape == (11, 10)
    assert np.array_equal(build_lp_esp(10).A, build_lp_esp_n(math.inf, 10).A)
    with pytest.raises(ValueError):
        build_lp_spm_n(3, 1)


def test_single_bidder_programs_are_tight():
    for lp in (build_lp_spm_n(1, 100), build_lp_esp_n(1, 100)):
        solution = solve_lp(lp)
        assert solution.certify(lp)
        assert solution.reciprocal == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize(
    "cell, expected",
    [
        (Cell("spm-n", "spm-n", 2.0, 400), 0.7586),
        (Cell("spm-n", "spm-n", 10.0, 400), 0.6708),
        (Cell("esp-k", "esp", math.inf, 50), 0.6606),
        (Cell("esp-k", "esp", math.inf, 400), 0.6618),
        (Cell("esp-n", "esp-n", 2.0, 400), 0.7611),
    ],
)
def test_cells_reproduce_reference_values(cell, expected):
    row = solve_cell(cell)
    assert row["bound"] == pytest.approx(expected, abs=1e-4)
    assert row["method"] == "simplex"


@pytest.mark.slow
def test_finest_esp_discretization():
    assert solve_cell(Cell("esp-k", "esp", math.inf, 1600))["bound"] == pytest.approx(0.6620, abs=1e-4)


def test_headline_esp_factor():
    assert esp_headline_factor() == pytest.approx(0.6620)


#---------------TABLES------------------------#

def test_table_config_grids():
    config = TableConfig()
    assert config.k_grid("esp-k") == (50, 100, 200, 400)
    assert config.k_grid("multiunit") == (0,)
    slow = TableConfig(slow=True)
    assert config.k_grid("small-n") == (200, 400)
    assert slow.k_grid("small-n") == (200, 400, 1600)
    assert slow.k_grid("spm-n")[-1] == 1600
    assert TableConfig(ks=(20,)).k_grid("esp-n") == (20,)
    with pytest.raises(ValueError, match="unknown tables"):
        TableConfig(which=("nope",))


def test_multiunit_table_matches_reference(tmp_path):
    table = bound_tables(TableConfig(which=("multiunit",), jobs=1))
    assert len(table) == 20
    assert table.compare_golden().empty
    assert table.dominance_violations() == []
    assert table.value("multiunit", "spm-H", 1.0) == pytest.approx(0.6543, abs=5e-5)
    assert "### multiunit" in table.to_markdown()
    table.to_csv(tmp_path / "multi.csv")
    written = pd.read_csv(tmp_path / "multi.csv")
    assert "runtime" not in written.columns
    assert len(written) == 20


def test_finite_tables_are_ordered():
    table = bound_tables(TableConfig(which=("spm-n", "esp-n"), ns=(1, 2, 3), ks=(200,), jobs=1))
    assert table.dominance_violations() == []
    assert table.compare_golden(tolerance=1e-4).empty
    records = table.to_records()
    assert {r["table"] for r in records} == {"spm-n", "esp-n"}
    assert "runtime" not in records[0]


@pytest.mark.parametrize(
    "k",
    [200, pytest.param(400, marks=pytest.mark.slow), pytest.param(1600, marks=pytest.mark.slow)],
)
def test_finite_tables_reproduce_reference_values(k):
    table = bound_tables(TableConfig(which=("spm-n", "esp-n"), ks=(k,)))
    assert len(table) == 20
    assert table.compare_golden(tolerance=1e-4).empty
    assert table.dominance_violations() == []


def test_small_n_table_keeps_the_best_discretization():
    table = bound_tables(TableConfig(which=("small-n",), ns=(1, 2, 3), jobs=1))
    frame = table.frame
    assert len(frame) == 9
    spm_rows = frame[frame["setting"] == "spm"].set_index("parameter")
    assert spm_rows.loc[[2.0, 3.0], "k"].tolist() == [400, 400]
    spm = spm_rows["bound"]
    assert spm[2.0] == pytest.approx(0.7586, abs=1e-4)
    assert spm[3.0] == pytest.approx(0.7168, abs=1e-4)
    assert table.compare_golden().empty
    assert table.dominance_violations() == []


def test_small_n_cells_are_compared_at_their_own_k():
    rows = [
        {"table": "small-n", "setting": "baseline", "parameter": 2.0, "k": 0, "bound": 0.75},
        {"table": "small-n", "setting": "spm", "parameter": 2.0, "k": 400, "bound": 0.10},
        {"table": "small-n", "setting": "esp", "parameter": 2.0, "k": 400, "bound": 0.11},
        {"table": "small-n", "setting": "spm", "parameter": 2.0, "k": 50, "bound": 0.75},
    ]
    frame = pd.DataFrame([dict(r, method="x", runtime=0.0) for r in rows])
    diff = BoundTable(frame).compare_golden()
    assert len(diff) == 3
    status = {(r["setting"], r["k"]): r["status"] for r in diff.to_dict(orient="records")}
    assert status == {("spm", 400): "mismatch", ("esp", 400): "mismatch", ("spm", 50): "missing"}
    [missing] = [r for r in diff.to_dict(orient="records") if r["status"] == "missing"]
    assert missing["bound_golden"] is None


def test_best_over_k_keeps_one_row_per_setting():
    rows = [
        {"table": "small-n", "setting": "spm", "parameter": 2.0, "k": 200, "bound": 0.7585},
        {"table": "small-n", "setting": "spm", "parameter": 2.0, "k": 400, "bound": 0.7586},
        {"table": "spm-n", "setting": "spm-n", "parameter": 2.0, "k": 200, "bound": 0.7585},
    ]
    frame = best_over_k(pd.DataFrame([dict(r, method="x", runtime=0.0) for r in rows]))
    assert frame[["table", "k"]].values.tolist() == [["small-n", 400], ["spm-n", 200]]


def test_dominance_violations_are_reported():
    frame = pd.DataFrame(
        [
            {"table": "spm-n", "setting": "spm-n", "parameter": 2.0, "k": 50, "bound": 0.76, "method": "x", "runtime": 0.0},
            {"table": "esp-n", "setting": "esp-n", "parameter": 2.0, "k": 50, "bound": 0.70, "method": "x", "runtime": 0.0},
        ]
    )
    problems = BoundTable(frame).dominance_violations()
    assert len(problems) == 1
    assert "esp" in problems[0]


def test_bounds_outside_the_unit_interval_are_rejected():
    frame = pd.DataFrame([{"table": "spm-n", "setting": "spm-n", "parameter": 2.0, "k": 50, "bound": 1.5, "method": "x", "runtime": 0.0}])
    with pytest.raises(InvariantError):
        BoundTable(frame)
