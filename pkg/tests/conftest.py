"""Shared builders for small hand-made fixtures."""
from __future__ import annotations

import numpy as np
import pytest

from icisim.game import GameInstance
from icisim.impact import ImpactModel
from icisim.power import PowerAssignment
from icisim.scenario import ScenarioConfig, generate
from icisim.traffic import (
    FlowNetwork,
    build_flow_matrix,
    intersections_from_streets,
    make_street,
)


def cycle_network() -> FlowNetwork:
    """Two streets forming the smallest conserving cycle."""
    positions = {0: (0.0, 0.0), 1: (1.0, 0.0)}
    streets = [
        make_street(0, 0, 1, (positions[0], positions[1])),
        make_street(1, 1, 0, (positions[1], positions[0])),
    ]
    nodes = intersections_from_streets(streets, positions)
    return build_flow_matrix(streets, nodes, {(0, 1): 1.0, (1, 0): 1.0})


def parallel_pair_network(ratio: float = 0.5) -> FlowNetwork:
    """Two intersections joined by two parallel street pairs.

    Each inflow splits ``ratio`` / ``1 - ratio`` between the two outflows on
    the far side, which keeps the network irreducible for any ratio in
    (0, 1).
    """
    positions = {0: (0.0, 0.0), 1: (2.0, 0.0)}
    streets = [
        make_street(0, 0, 1, (positions[0], positions[1])),
        make_street(1, 1, 0, (positions[1], positions[0])),
        make_street(2, 0, 1, (positions[0], positions[1])),
        make_street(3, 1, 0, (positions[1], positions[0])),
    ]
    nodes = intersections_from_streets(streets, positions)
    ratios = {
        (0, 1): ratio, (0, 3): 1.0 - ratio,
        (2, 1): 1.0 - ratio, (2, 3): ratio,
        (1, 0): ratio, (1, 2): 1.0 - ratio,
        (3, 0): 1.0 - ratio, (3, 2): ratio,
    }
    return build_flow_matrix(streets, nodes, ratios)


def synthetic_impact(z_scores: np.ndarray, headroom: np.ndarray, delta: float = 1.0) -> ImpactModel:
    """Impact model with given scores; vectors are score-scaled placeholders."""
    z_scores = np.asarray(z_scores, dtype=float)
    headroom = np.asarray(headroom, dtype=float)
    return ImpactModel(-z_scores[:, None], z_scores, headroom, delta)


def make_instance(
    z_scores,
    T,
    p_activation,
    p_full,
) -> GameInstance:
    """Game instance from raw arrays; T rows must sum to one on support."""
    T = np.asarray(T, dtype=float)
    p_activation = np.asarray(p_activation, dtype=float)
    p_full = np.asarray(p_full, dtype=float)
    impact = synthetic_impact(np.asarray(z_scores, dtype=float), p_full - p_activation)
    assignment = PowerAssignment(T, p_full)
    return GameInstance(impact, assignment, p_activation)


def random_instance(rng: np.random.Generator, B: int, G: int) -> GameInstance:
    """Random connected game instance with heterogeneous powers and scores."""
    wired = rng.random((B, G)) < 0.6
    for b in range(B):
        if not wired[b].any():
            wired[b, rng.integers(G)] = True
    for g in range(G):
        if not wired[:, g].any():
            wired[rng.integers(B), g] = True
    shares = np.where(wired, rng.uniform(0.2, 1.0, (B, G)), 0.0)
    T = shares / shares.sum(axis=1, keepdims=True)
    p_activation = rng.uniform(50.0, 120.0, B)
    p_full = p_activation * rng.uniform(1.5, 3.0, B)
    z = rng.uniform(0.1, 3.0, B)
    return make_instance(z, T, p_activation, p_full)


def random_feasible_defense(
    rng: np.random.Generator, instance: GameInstance, scale: float = 0.5
) -> np.ndarray:
    """Defense respecting the station headroom, for payoff-shape tests."""
    return rng.uniform(0.0, scale, instance.num_stations) * instance.headroom


@pytest.fixture(scope="session")
def grid3_scenario():
    return generate(ScenarioConfig(grid_n=3, seed=0))


@pytest.fixture(scope="session")
def grid2_scenario():
    return generate(ScenarioConfig(grid_n=2, seed=0))
