"""Bipartite generator-to-station power supply model.

Each base station draws its power from the generators it is wired to; the
share matrix ``T`` records, per station, the portion supplied by each
generator.  Rows of ``T`` sum to one, so with no disturbance every station
receives exactly its full-coverage power.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coverage import BaseStation
from .errors import DisconnectedError, NoLineError

Point = tuple[float, float]


@dataclass(frozen=True)
class Generator:
    """Power source at ``position`` wired to the stations in ``connected_bs``."""

    id: int
    position: Point
    connected_bs: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.connected_bs:
            raise ValueError(f"generator {self.id} is connected to no station")


@dataclass(frozen=True, eq=False)
class PowerAssignment:
    """Row-stochastic supply-share matrix with station power ratings.

    ``T[b, g]`` is the share of station ``b``'s power supplied by generator
    ``g`` (zero where no line exists); ``p_full[b]`` is the station's
    full-coverage power in watts.
    """

    T: np.ndarray
    p_full: np.ndarray

    @property
    def num_stations(self) -> int:
        return self.T.shape[0]

    @property
    def num_generators(self) -> int:
        return self.T.shape[1]

    def has_line(self, g: int, b: int) -> bool:
        return self.T[b, g] > 0.0

    def stations_of(self, g: int) -> np.ndarray:
        """Ids of stations wired to generator ``g``."""
        return np.nonzero(self.T[:, g] > 0.0)[0]

    def safe_output(self, g: int) -> float:
        """Power flowing out of generator ``g`` when nothing is disturbed."""
        return float(self.T[:, g] @ self.p_full)


def build_assignment(
    generators: Sequence[Generator],
    base_stations: Sequence[BaseStation],
    shares: np.ndarray,
) -> PowerAssignment:
    """Normalise raw supply weights into a PowerAssignment.

    ``shares[b, g]`` is a nonnegative raw weight, positive exactly where
    generator ``g`` lists station ``b``.  Each station's weights are scaled
    to sum to one; a station with no positive weight raises
    DisconnectedError.
    """
    B = len(base_stations)
    G = len(generators)
    shares = np.asarray(shares, dtype=float)
    if shares.shape != (B, G):
        raise ValueError(f"share matrix has shape {shares.shape}, expected {(B, G)}")
    if np.any(shares < 0.0):
        raise ValueError("supply shares must be nonnegative")

    wired = np.zeros((B, G), dtype=bool)
    for g, gen in enumerate(generators):
        for b in gen.connected_bs:
            if not 0 <= b < B:
                raise ValueError(f"generator {gen.id} references unknown station {b}")
            wired[b, g] = True
    if np.any((shares > 0.0) & ~wired):
        raise ValueError("positive share on a pair with no line")

    totals = shares.sum(axis=1)
    dead = np.nonzero(totals <= 0.0)[0]
    if dead.size:
        raise DisconnectedError(f"stations {dead.tolist()} have no supplying generator")
    T = shares / totals[:, None]
    p_full = np.array([bs.p_full for bs in base_stations])
    return PowerAssignment(T, p_full)


def line_capacity(assignment: PowerAssignment, g: int, b: int) -> float:
    """Undisturbed power on the line from generator ``g`` to station ``b``."""
    if not 0 <= g < assignment.num_generators or not 0 <= b < assignment.num_stations:
        raise NoLineError(f"no line from generator {g} to station {b}")
    if not assignment.has_line(g, b):
        raise NoLineError(f"no line from generator {g} to station {b}")
    return float(assignment.T[b, g] * assignment.p_full[b])
