"""Batch experiment runners with CSV and SVG output.

Each runner sweeps one scenario knob, evaluates a batch of seeded
scenarios per sweep point, and aggregates the physical flow deviation into
a table with a fixed column layout (sweep variable, level, P_d, mean, std,
n).  Scenario replicas differ only in seed, so a run is reproducible byte
for byte from its spec.  Replicas are evaluated on a thread pool; rows are
assembled in sweep order, never completion order.
"""
from __future__ import annotations

import xml.sax.saxutils
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .game import (
    StealthLevel,
    attacker_best_response,
    attacker_payoff,
    equal_allocation,
    evaluate_profile,
    stackelberg_equilibrium,
)
from .impact import its_deviation
from .scenario import Scenario, ScenarioConfig, generate

EXPERIMENT_IDS = (
    "power-sweep",
    "scale-sweep",
    "radius-sweep",
    "generators-all",
    "generators-single",
    "allocation-compare",
)

_DEFAULT_LEVELS = (
    StealthLevel.POWER_SOURCE,
    StealthLevel.POWER_LINE,
    StealthLevel.BASE_STATION,
)

_MAX_WORKERS = 8


@dataclass(frozen=True)
class ExperimentSpec:
    """What to sweep, how often, and under which stealth levels."""

    experiment: str
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: tuple[float, ...] = ()
    reps: int = 5
    levels: tuple[StealthLevel, ...] = _DEFAULT_LEVELS
    budgets: tuple[float, ...] = (0.0, 100.0)
    bs_cap_rule: str = "dropped-sum"

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.reps < 1:
            raise ValueError("need at least one repetition per sweep point")
        if not self.sweep:
            raise ValueError("sweep range must be nonempty")
        if not self.levels:
            raise ValueError("need at least one stealth level")


@dataclass(frozen=True)
class SweepTable:
    """Aggregated results plus the resolved configuration for provenance."""

    sweep_name: str
    rows: tuple[tuple[float, str, float, float, float, int], ...]
    config_lines: tuple[str, ...]

    def column_names(self) -> tuple[str, ...]:
        return (self.sweep_name, "level", "P_d", "mean", "std", "n")


def default_sweep(experiment: str) -> tuple[float, ...]:
    """Sweep ranges used when a spec does not pin its own."""
    if experiment == "power-sweep":
        return tuple(float(p) for p in range(0, 101, 5))
    if experiment == "scale-sweep":
        return (4.0, 6.0, 8.0)
    if experiment == "radius-sweep":
        return tuple(round(0.8 + 0.1 * k, 1) for k in range(8))
    if experiment in ("generators-all", "generators-single"):
        return tuple(float(g) for g in range(1, 9))
    if experiment == "allocation-compare":
        # Fractions of the smallest level's total defender cap; resolved
        # against the base scenario when the experiment runs.
        return tuple(k / 8.0 for k in range(9))
    raise ValueError(f"unknown experiment {experiment!r}")


def _config_lines(spec: ExperimentSpec) -> tuple[str, ...]:
    cfg = spec.base
    lines = [
        f"experiment = {spec.experiment}",
        f"reps = {spec.reps}",
        f"levels = {','.join(lv.value for lv in spec.levels)}",
        f"budgets = {','.join(repr(b) for b in spec.budgets)}",
        f"bs_cap_rule = {spec.bs_cap_rule}",
        f"sweep = {','.join(repr(float(v)) for v in spec.sweep)}",
    ]
    for name in (
        "grid_n", "street_length", "cell_radius", "num_generators", "p_activation",
        "power_ratio", "budget", "seed", "bs_per_generator_range", "anchor_street",
        "anchor_flow", "delta",
    ):
        lines.append(f"{name} = {getattr(cfg, name)}")
    return tuple(lines)


def _replicas(base: ScenarioConfig, reps: int) -> list[Scenario]:
    """Generate ``reps`` scenarios differing only in seed, in order."""
    seeds = [replace(base, seed=base.seed + rep) for rep in range(reps)]
    with ThreadPoolExecutor(max_workers=min(_MAX_WORKERS, reps)) as pool:
        return list(pool.map(generate, seeds))


def _stat_row(
    sweep_value: float, level: str, budget: float, samples: Sequence[float]
) -> tuple[float, str, float, float, float, int]:
    arr = np.asarray(samples, dtype=float)
    return (
        float(sweep_value), level, float(budget),
        float(arr.mean()), float(arr.std()), int(arr.size),
    )


def run_power_sweep(spec: ExperimentSpec) -> SweepTable:
    """Uniform percentage cut of all generation versus total flow deviation."""
    scenarios = _replicas(spec.base, spec.reps)
    rows = []
    for pct in spec.sweep:
        samples = []
        for sc in scenarios:
            shortfall = (pct / 100.0) * sc.assignment.p_full
            samples.append(its_deviation(sc.impact, shortfall))
        rows.append(_stat_row(pct, "none", 0.0, samples))
    return SweepTable("reduction_pct", tuple(rows), _config_lines(spec))


def _equilibrium_deviation(
    scenario: Scenario,
    level: StealthLevel,
    budget: float,
    bs_cap_rule: str,
    sources: Sequence[int] | None = None,
) -> float:
    instance = scenario.game_instance()
    _, _, outcome = stackelberg_equilibrium(level, instance, budget, bs_cap_rule, sources)
    return outcome.residual_deviation


def run_scale_sweep(spec: ExperimentSpec) -> SweepTable:
    """Street-grid size versus equilibrium deviation, per level and budget."""
    rows = []
    for grid_n in spec.sweep:
        scenarios = _replicas(replace(spec.base, grid_n=int(grid_n)), spec.reps)
        for level in spec.levels:
            for budget in spec.budgets:
                samples = [
                    _equilibrium_deviation(sc, level, budget, spec.bs_cap_rule)
                    for sc in scenarios
                ]
                rows.append(_stat_row(grid_n, level.value, budget, samples))
    return SweepTable("grid_n", tuple(rows), _config_lines(spec))


def run_radius_sweep(spec: ExperimentSpec) -> SweepTable:
    """Cell radius versus equilibrium deviation, with and without backup."""
    rows = []
    for radius in spec.sweep:
        scenarios = _replicas(replace(spec.base, cell_radius=float(radius)), spec.reps)
        for level in spec.levels:
            for budget in spec.budgets:
                samples = [
                    _equilibrium_deviation(sc, level, budget, spec.bs_cap_rule)
                    for sc in scenarios
                ]
                rows.append(_stat_row(radius, level.value, budget, samples))
    return SweepTable("cell_radius", tuple(rows), _config_lines(spec))


def pick_attack_source(scenario: Scenario, level: StealthLevel) -> int:
    """Generator whose unconstrained single-source attack pays the most."""
    instance = scenario.game_instance()
    zeros = np.zeros(instance.num_stations)
    best_g, best_val = 0, -np.inf
    for g in range(instance.num_generators):
        attack = attacker_best_response(level, instance, zeros, sources=[g])
        if level is StealthLevel.OVERT:
            value = float(instance.impact.z_scores @ attack.per_station)
        else:
            value = attacker_payoff(level, instance, zeros, attack.deviations)
        if value > best_val + 1e-12:
            best_g, best_val = g, value
    return best_g


def run_generator_experiments(spec: ExperimentSpec, mode: str) -> SweepTable:
    """Generator count versus deviation; ``mode`` is 'all' or 'single'."""
    if mode not in ("all", "single"):
        raise ValueError(f"mode must be 'all' or 'single', not {mode!r}")
    extra = ()
    if mode == "single":
        extra = ("single_source_rule = highest unconstrained best-response payoff",)
    rows = []
    for count in spec.sweep:
        scenarios = _replicas(replace(spec.base, num_generators=int(count)), spec.reps)
        for level in spec.levels:
            for budget in spec.budgets:
                samples = []
                for sc in scenarios:
                    sources = None
                    if mode == "single":
                        sources = [pick_attack_source(sc, level)]
                    samples.append(
                        _equilibrium_deviation(sc, level, budget, spec.bs_cap_rule, sources)
                    )
                rows.append(_stat_row(count, level.value, budget, samples))
    return SweepTable("num_generators", tuple(rows), _config_lines(spec) + extra)


def resolve_budget_sweep(spec: ExperimentSpec) -> tuple[float, ...]:
    """Turn allocation-compare sweep fractions into absolute budgets.

    Values at most 1 are read as fractions of the smallest per-level total
    defender cap (half the summed station headroom); larger values are
    taken as watts directly.
    """
    if all(v > 1.0 for v in spec.sweep):
        return tuple(float(v) for v in spec.sweep)
    probe = generate(spec.base)
    saturation = float(probe.impact.headroom.sum()) / 2.0
    return tuple(float(v) * saturation if v <= 1.0 else float(v) for v in spec.sweep)


def run_allocation_compare(spec: ExperimentSpec) -> SweepTable:
    """Equilibrium allocation versus uniform split, over the budget sweep.

    The level column carries the strategy suffix, e.g. ``line:se`` and
    ``line:equal``.
    """
    budgets = resolve_budget_sweep(spec)
    scenarios = _replicas(spec.base, spec.reps)
    rows = []
    for budget in budgets:
        for level in spec.levels:
            se_samples = []
            eq_samples = []
            for sc in scenarios:
                instance = sc.game_instance()
                _, _, outcome = stackelberg_equilibrium(
                    level, instance, budget, spec.bs_cap_rule
                )
                se_samples.append(outcome.residual_deviation)
                defense = equal_allocation(instance.num_stations, budget)
                attack = attacker_best_response(level, instance, defense.allocation)
                eq_samples.append(
                    evaluate_profile(level, instance, defense, attack).residual_deviation
                )
            rows.append(_stat_row(budget, f"{level.value}:se", budget, se_samples))
            rows.append(_stat_row(budget, f"{level.value}:equal", budget, eq_samples))
    return SweepTable("P_d", tuple(rows), _config_lines(spec))


def run_experiment(spec: ExperimentSpec) -> SweepTable:
    """Dispatch on the experiment id."""
    if spec.experiment == "power-sweep":
        return run_power_sweep(spec)
    if spec.experiment == "scale-sweep":
        return run_scale_sweep(spec)
    if spec.experiment == "radius-sweep":
        return run_radius_sweep(spec)
    if spec.experiment == "generators-all":
        return run_generator_experiments(spec, "all")
    if spec.experiment == "generators-single":
        return run_generator_experiments(spec, "single")
    return run_allocation_compare(spec)


# ---------------------------------------------------------------------------
# Output


def table_to_csv(table: SweepTable) -> str:
    """CSV text with the resolved configuration as leading comment lines."""
    out = [f"# {line}" for line in table.config_lines]
    out.append(",".join(table.column_names()))
    for value, level, budget, mean, std, n in table.rows:
        out.append(
            f"{repr(value)},{level},{repr(budget)},{repr(mean)},{repr(std)},{n}"
        )
    return "\n".join(out) + "\n"


def _svg_polyline(points: list[tuple[float, float]], color: str) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'


_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def table_to_svg(table: SweepTable, title: str = "") -> str:
    """Minimal line chart: one series per (level, P_d) pair."""
    width, height = 860.0, 520.0
    left, right, top, bottom = 70.0, 230.0, 40.0, 60.0
    plot_w = width - left - right
    plot_h = height - top - bottom

    series: dict[str, list[tuple[float, float]]] = {}
    for value, level, budget, mean, _, _ in table.rows:
        key = level if table.sweep_name == "P_d" else f"{level} P_d={budget:g}"
        series.setdefault(key, []).append((value, mean))

    xs = [v for pts in series.values() for v, _ in pts]
    ys = [m for pts in series.values() for _, m in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    esc = xml.sax.saxutils.escape
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f'<rect x="0" y="0" width="{width:g}" height="{height:g}" fill="white"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        'stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{left + plot_w / 2:.2f}" y="{top - 14}" text-anchor="middle" '
            f'font-size="15">{esc(title)}</text>'
        )
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4.0
        yv = y_lo + k * (y_hi - y_lo) / 4.0
        parts.append(
            f'<text x="{sx(xv):.2f}" y="{top + plot_h + 18:.2f}" text-anchor="middle" '
            f'font-size="11">{xv:g}</text>'
        )
        parts.append(
            f'<text x="{left - 8:.2f}" y="{sy(yv) + 4:.2f}" text-anchor="end" '
            f'font-size="11">{yv:.4g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 14:.2f}" text-anchor="middle" '
        f'font-size="13">{esc(table.sweep_name)}</text>'
    )
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.2f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {top + plot_h / 2:.2f})">mean flow deviation</text>'
    )
    for idx, (name, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[idx % len(_PALETTE)]
        parts.append(_svg_polyline([(sx(x), sy(y)) for x, y in sorted(pts)], color))
        ly = top + 16.0 * idx
        parts.append(
            f'<line x1="{left + plot_w + 12:.2f}" y1="{ly:.2f}" '
            f'x2="{left + plot_w + 34:.2f}" y2="{ly:.2f}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{left + plot_w + 40:.2f}" y="{ly + 4:.2f}" font-size="11">'
            f'{esc(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit(table: SweepTable, fmt: str, path: str, title: str = "") -> None:
    """Write a table as ``csv`` or ``svg`` to ``path``."""
    if not table.rows:
        raise ValueError("refusing to emit an empty table")
    if fmt == "csv":
        text = table_to_csv(table)
    elif fmt == "svg":
        text = table_to_svg(table, title)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
