"""Experiment runner and output-format tests (small, fast configurations)."""
from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from icisim.experiments import (
    ExperimentSpec,
    SweepTable,
    default_sweep,
    emit,
    pick_attack_source,
    resolve_budget_sweep,
    run_allocation_compare,
    run_experiment,
    run_generator_experiments,
    run_power_sweep,
    run_scale_sweep,
    table_to_csv,
    table_to_svg,
)
from icisim.game import StealthLevel
from icisim.scenario import ScenarioConfig

BASE = ScenarioConfig(grid_n=3, seed=100)
LEVELS = (StealthLevel.POWER_SOURCE, StealthLevel.POWER_LINE, StealthLevel.BASE_STATION)


def _spec(experiment: str, **kwargs) -> ExperimentSpec:
    defaults = dict(
        experiment=experiment,
        base=BASE,
        sweep=default_sweep(experiment),
        reps=2,
        levels=LEVELS,
        budgets=(0.0, 50.0),
    )
    defaults.update(kwargs)
    return ExperimentSpec(**defaults)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec("power-sweep", reps=0)
    with pytest.raises(ValueError):
        _spec("power-sweep", sweep=())
    with pytest.raises(ValueError):
        _spec("nonsense")


def test_power_sweep_shape():
    table = run_power_sweep(_spec("power-sweep", sweep=tuple(range(0, 101, 10))))
    means = {row[0]: row[3] for row in table.rows}
    assert means[0.0] == 0.0
    # Monotone, linear to half power, then exactly flat.
    xs = sorted(means)
    values = [means[x] for x in xs]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert means[50.0] == pytest.approx(means[100.0], abs=1e-9)
    low = [x for x in xs if x <= 50.0]
    coeffs = np.polyfit(low, [means[x] for x in low], 1)
    residual = np.max(np.abs(np.polyval(coeffs, low) - [means[x] for x in low]))
    assert residual <= 1e-6 * (max(values) - min(values))


def test_scale_sweep_orderings():
    table = run_scale_sweep(_spec("scale-sweep", sweep=(2.0, 3.0), reps=2))
    rows = {(r[0], r[1], r[2]): r[3] for r in table.rows}
    for grid_n in (2.0, 3.0):
        for level in LEVELS:
            assert rows[(grid_n, level.value, 0.0)] >= rows[(grid_n, level.value, 50.0)] - 1e-9
    # Zero-budget severity ordering: line dominates at each scale point.
    for grid_n in (2.0, 3.0):
        line = rows[(grid_n, "line", 0.0)]
        assert line >= rows[(grid_n, "source", 0.0)] - 1e-9
        assert line >= rows[(grid_n, "bs", 0.0)] - 1e-9


def test_radius_sweep_reports_both_budgets():
    from icisim.experiments import run_radius_sweep

    spec = _spec("radius-sweep", sweep=(0.9, 1.2), reps=1, budgets=(0.0, 50.0))
    table = run_radius_sweep(spec)
    assert table.sweep_name == "cell_radius"
    rows = {(r[0], r[1], r[2]): r[3] for r in table.rows}
    for radius in (0.9, 1.2):
        for level in LEVELS:
            undefended = rows[(radius, level.value, 0.0)]
            defended = rows[(radius, level.value, 50.0)]
            assert undefended >= defended - 1e-9


def test_allocation_compare_dominance():
    spec = _spec("allocation-compare", sweep=(0.0, 0.25, 0.5, 1.0), reps=2)
    table = run_allocation_compare(spec)
    rows = {(r[0], r[1]): r[3] for r in table.rows}
    budgets = sorted({r[0] for r in table.rows})
    assert len(budgets) == 4
    for budget in budgets:
        for level in LEVELS:
            se = rows[(budget, f"{level.value}:se")]
            eq = rows[(budget, f"{level.value}:equal")]
            assert se <= eq + 1e-9


def test_budget_sweep_resolution():
    spec = _spec("allocation-compare", sweep=(0.0, 0.5, 1.0), reps=1)
    budgets = resolve_budget_sweep(spec)
    assert budgets[0] == 0.0
    assert budgets[1] == pytest.approx(budgets[2] / 2.0)
    absolute = _spec("allocation-compare", sweep=(40.0, 90.0), reps=1)
    assert resolve_budget_sweep(absolute) == (40.0, 90.0)


def test_generator_experiments_run_both_modes():
    spec = _spec("generators-all", sweep=(1.0, 2.0), reps=2, budgets=(0.0,))
    table_all = run_generator_experiments(spec, "all")
    table_single = run_generator_experiments(spec, "single")
    assert len(table_all.rows) == len(table_single.rows) == 2 * len(LEVELS)
    rows_all = {(r[0], r[1]): r[3] for r in table_all.rows}
    rows_single = {(r[0], r[1]): r[3] for r in table_single.rows}
    # Attacking one source never exceeds attacking all of them.
    for key, value in rows_single.items():
        assert value <= rows_all[key] + 1e-9
    with pytest.raises(ValueError):
        run_generator_experiments(spec, "some")


def test_pick_attack_source_is_deterministic(grid3_scenario):
    g1 = pick_attack_source(grid3_scenario, StealthLevel.POWER_SOURCE)
    g2 = pick_attack_source(grid3_scenario, StealthLevel.POWER_SOURCE)
    assert g1 == g2
    assert 0 <= g1 < len(grid3_scenario.generators)


def test_run_experiment_dispatch():
    table = run_experiment(_spec("power-sweep", sweep=(0.0, 50.0)))
    assert table.sweep_name == "reduction_pct"


def test_csv_structure_and_round_trip(tmp_path):
    table = run_power_sweep(_spec("power-sweep", sweep=(0.0, 30.0, 60.0)))
    text = table_to_csv(table)
    comments = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert any("seed = 100" in ln for ln in comments)
    assert any("experiment = power-sweep" in ln for ln in comments)
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    parsed = list(csv.DictReader(io.StringIO("\n".join(body))))
    assert len(parsed) == 3
    assert set(parsed[0]) == {"reduction_pct", "level", "P_d", "mean", "std", "n"}
    for row, parsed_row in zip(table.rows, parsed):
        assert float(parsed_row["mean"]) == row[3]
        assert int(parsed_row["n"]) == row[5]
    # emit() writes the same bytes.
    path = tmp_path / "out.csv"
    emit(table, "csv", str(path))
    assert path.read_text(encoding="utf-8") == text


def test_single_row_table_is_valid_csv():
    table = SweepTable("x", ((1.0, "line", 0.0, 2.5, 0.0, 1),), ("k = v",))
    text = table_to_csv(table)
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert len(body) == 2
    parsed = list(csv.DictReader(io.StringIO("\n".join(body))))
    assert parsed[0]["mean"] == "2.5"


def test_svg_is_well_formed_xml(tmp_path):
    table = run_scale_sweep(_spec("scale-sweep", sweep=(2.0, 3.0), reps=1, budgets=(0.0,)))
    text = table_to_svg(table, title="scale")
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert any(child.tag.endswith("polyline") for child in root.iter())
    path = tmp_path / "chart.svg"
    emit(table, "svg", str(path), title="scale")
    ET.fromstring(path.read_text(encoding="utf-8"))


def test_emit_rejects_empty_and_unknown(tmp_path):
    table = SweepTable("x", (), ())
    with pytest.raises(ValueError):
        emit(table, "csv", str(tmp_path / "x.csv"))
    full = SweepTable("x", ((1.0, "line", 0.0, 2.5, 0.0, 1),), ())
    with pytest.raises(ValueError):
        emit(full, "pdf", str(tmp_path / "x.pdf"))


def test_runs_are_reproducible():
    spec = _spec("allocation-compare", sweep=(0.0, 0.5), reps=2)
    assert table_to_csv(run_allocation_compare(spec)) == table_to_csv(
        run_allocation_compare(spec)
    )
