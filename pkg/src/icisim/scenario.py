"""Seeded scenario generation and the scenario file format.

A scenario bundles one of each ingredient: a square street grid with
sampled turning ratios, a hexagonal cell tiling with its coverage map,
uniformly placed generators wired to nearby stations, and the resulting
impact model.  Generation is deterministic per seed: each random component
(turning ratios, generator placement, connection counts) draws from its own
numbered PCG64 stream, so changing how many draws one component makes never
perturbs the others.  Stream 0 is reserved for topology, which is currently
deterministic.

Scenario files are plain text with a versioned header and ``[its]``,
``[ci]``, ``[pg]`` and optional ``[impact]`` sections; floats are written
with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coverage import BaseStation, CoverageMap, build_coverage, coverage_from_lengths, hex_tiling
from .errors import FormatError, RankError
from .game import GameInstance
from .impact import ImpactModel, build_impact_model
from .power import Generator, build_assignment
from .traffic import (
    FlowNetwork,
    Intersection,
    Street,
    build_flow_matrix,
    intersections_from_streets,
    make_street,
    network_from_matrix,
)

FILE_HEADER = "icisim scenario v1"
_MAX_ATTEMPTS = 10

# Stream indices for per-component PCG64 seeding.
_STREAM_TOPOLOGY = 0
_STREAM_RATIOS = 1
_STREAM_GENERATORS = 2
_STREAM_CONNECTIONS = 3


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of a generated scenario; all dimensions in km and watts.

    ``bs_per_generator_range`` bounds each generator's drawn connection
    count; the default ``None`` scales it with the station-to-generator
    ratio (1 to ``ceil(2B / G)``) so that adding generators shrinks each
    one's footprint.
    """

    grid_n: int = 5
    street_length: float = 1.0
    cell_radius: float = 1.0
    num_generators: int = 3
    p_activation: float = 100.0
    power_ratio: float = 2.0
    budget: float = 100.0
    seed: int = 0
    bs_per_generator_range: tuple[int, int] | None = None
    anchor_street: int = 0
    anchor_flow: float = 1000.0
    delta: float = 1.0

    def __post_init__(self) -> None:
        if self.grid_n < 2:
            raise ValueError("grid_n must be at least 2")
        if self.street_length <= 0.0 or self.cell_radius <= 0.0:
            raise ValueError("street length and cell radius must be positive")
        if self.num_generators < 1:
            raise ValueError("need at least one generator")
        if self.power_ratio <= 1.0:
            raise ValueError("power ratio must exceed 1")
        if self.p_activation <= 0.0:
            raise ValueError("activation power must be positive")
        if self.bs_per_generator_range is not None:
            lo, hi = self.bs_per_generator_range
            if not 1 <= lo <= hi:
                raise ValueError("bs_per_generator_range must satisfy 1 <= min <= max")
        if self.anchor_flow < 0.0 or self.budget < 0.0:
            raise ValueError("anchor flow and budget must be nonnegative")

    @property
    def p_full(self) -> float:
        return self.power_ratio * self.p_activation

    @property
    def extent(self) -> float:
        """Side length of the square covered by the street grid."""
        return (self.grid_n - 1) * self.street_length


@dataclass(frozen=True, eq=False)
class Scenario:
    """One fully wired instance of the three coupled infrastructures."""

    config: ScenarioConfig
    network: FlowNetwork
    base_stations: tuple[BaseStation, ...]
    coverage: CoverageMap
    generators: tuple[Generator, ...]
    assignment: PowerAssignment
    impact: ImpactModel

    def game_instance(self) -> GameInstance:
        p_activation = np.array([bs.p_activation for bs in self.base_stations])
        return GameInstance(self.impact, self.assignment, p_activation)


def _rng(seed: int, attempt: int, stream: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(attempt, stream)))
    )


def _grid_topology(config: ScenarioConfig) -> tuple[tuple[Street, ...], tuple[Intersection, ...]]:
    """Square grid with every undirected edge doubled into two streets.

    Street ids come in pairs: ``2e`` runs low-to-high node id, ``2e + 1``
    is its reverse, so the reverse of street ``s`` is always ``s ^ 1``.
    """
    g = config.grid_n
    length = config.street_length
    positions = {
        iy * g + ix: (ix * length, iy * length) for iy in range(g) for ix in range(g)
    }
    edges: list[tuple[int, int]] = []
    for iy in range(g):
        for ix in range(g):
            node = iy * g + ix
            if ix + 1 < g:
                edges.append((node, node + 1))
            if iy + 1 < g:
                edges.append((node, node + g))
    streets: list[Street] = []
    for e, (a, b) in enumerate(edges):
        geom = (positions[a], positions[b])
        streets.append(make_street(2 * e, a, b, geom))
        streets.append(make_street(2 * e + 1, b, a, (geom[1], geom[0])))
    return tuple(streets), intersections_from_streets(streets, positions)


def _sample_ratios(
    streets: Sequence[Street],
    intersections: Sequence[Intersection],
    rng: np.random.Generator,
) -> dict[tuple[int, int], float]:
    """Per-inflow turning shares over the non-reversing outflows.

    At two-street (corner) intersections the only forward option is the
    reverse street, so there the reverse is kept in the support; this routes
    the flow back along the perimeter and keeps the whole network mixing.
    """
    ratios: dict[tuple[int, int], float] = {}
    for node in sorted(intersections, key=lambda x: x.id):
        outbound = sorted(node.outbound)
        for j in sorted(node.inbound):
            support = [k for k in outbound if k != j ^ 1]
            if len(support) < 2:
                support = outbound
            shares = rng.dirichlet(np.ones(len(support)))
            for k, share in zip(support, shares):
                ratios[(j, k)] = float(share)
    return ratios


def _place_generators(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    side = config.extent
    return rng.uniform(0.0, side, size=(config.num_generators, 2))


def _wire_generators(
    config: ScenarioConfig,
    positions: np.ndarray,
    stations: Sequence[BaseStation],
    rng: np.random.Generator,
) -> tuple[tuple[Generator, ...], np.ndarray]:
    """Connect each generator to its k nearest stations, k drawn uniformly.

    Stations left out by every draw are attached to their nearest generator
    so that no station is dark by construction.  Raw supply weights fall off
    with distance and are row-normalised later.
    """
    B = len(stations)
    G = config.num_generators
    centers = np.array([bs.center for bs in stations])
    dists = np.hypot(
        centers[:, 0][:, None] - positions[:, 0][None, :],
        centers[:, 1][:, None] - positions[:, 1][None, :],
    )  # (B, G)
    if config.bs_per_generator_range is None:
        lo, hi = 1, max(1, -(-2 * B // G))
    else:
        lo, hi = config.bs_per_generator_range
    connected: list[set[int]] = [set() for _ in range(G)]
    for g in range(G):
        k = int(rng.integers(lo, hi + 1))
        k = min(k, B)
        order = np.lexsort((np.arange(B), dists[:, g]))
        connected[g].update(int(b) for b in order[:k])
    claimed = set().union(*connected) if connected else set()
    for b in range(B):
        if b not in claimed:
            g = int(np.lexsort((np.arange(G), dists[b]))[0])
            connected[g].add(b)
    generators = tuple(
        Generator(g, (float(positions[g, 0]), float(positions[g, 1])), tuple(sorted(connected[g])))
        for g in range(G)
    )
    shares = np.zeros((B, G))
    for g in range(G):
        for b in connected[g]:
            shares[b, g] = 1.0 / max(dists[b, g], 1e-9)
    return generators, shares


def generate(config: ScenarioConfig) -> Scenario:
    """Deterministically build a scenario; retries the seed's sub-streams on
    a rank failure up to 10 times before giving up."""
    last_error: RankError | None = None
    for attempt in range(_MAX_ATTEMPTS):
        streets, intersections = _grid_topology(config)
        ratios = _sample_ratios(streets, intersections, _rng(config.seed, attempt, _STREAM_RATIOS))
        try:
            network = build_flow_matrix(streets, intersections, ratios)
        except RankError as err:
            last_error = err
            continue

        side = config.extent
        centers = hex_tiling(((0.0, 0.0), (side, side)), config.cell_radius)
        stations = tuple(
            BaseStation(i, c, config.cell_radius, config.p_activation, config.p_full)
            for i, c in enumerate(centers)
        )
        coverage = build_coverage(streets, stations)
        gen_positions = _place_generators(config, _rng(config.seed, attempt, _STREAM_GENERATORS))
        generators, shares = _wire_generators(
            config, gen_positions, stations, _rng(config.seed, attempt, _STREAM_CONNECTIONS)
        )
        assignment = build_assignment(generators, stations, shares)
        impact = build_impact_model(network, coverage, stations, config.delta)
        return Scenario(config, network, stations, coverage, generators, assignment, impact)
    raise RankError(f"no valid network after {_MAX_ATTEMPTS} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Serialisation


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(scenario: Scenario, include_impact: bool = True) -> str:
    """Render a scenario in the versioned text format."""
    cfg = scenario.config
    out: list[str] = [FILE_HEADER, "[config]"]
    out.append(f"grid_n = {cfg.grid_n}")
    out.append(f"street_length = {_fmt(cfg.street_length)}")
    out.append(f"cell_radius = {_fmt(cfg.cell_radius)}")
    out.append(f"num_generators = {cfg.num_generators}")
    out.append(f"p_activation = {_fmt(cfg.p_activation)}")
    out.append(f"power_ratio = {_fmt(cfg.power_ratio)}")
    out.append(f"budget = {_fmt(cfg.budget)}")
    out.append(f"seed = {cfg.seed}")
    if cfg.bs_per_generator_range is None:
        out.append("bs_per_generator_min = auto")
        out.append("bs_per_generator_max = auto")
    else:
        out.append(f"bs_per_generator_min = {cfg.bs_per_generator_range[0]}")
        out.append(f"bs_per_generator_max = {cfg.bs_per_generator_range[1]}")
    out.append(f"anchor_street = {cfg.anchor_street}")
    out.append(f"anchor_flow = {_fmt(cfg.anchor_flow)}")
    out.append(f"delta = {_fmt(cfg.delta)}")

    net = scenario.network
    out.append("[its]")
    out.append(f"intersections {len(net.intersections)}")
    for x in net.intersections:
        out.append(f"{x.id} {_fmt(x.position[0])} {_fmt(x.position[1])}")
    out.append(f"streets {net.n}")
    for s in net.streets:
        (x0, y0), (x1, y1) = s.geometry
        out.append(
            f"{s.id} {s.tail} {s.head} {_fmt(s.length)} "
            f"{_fmt(x0)} {_fmt(y0)} {_fmt(x1)} {_fmt(y1)}"
        )
    rows, cols = np.nonzero(net.Q)
    out.append(f"ratios {rows.size}")
    for r, c in zip(rows.tolist(), cols.tolist()):
        out.append(f"{r} {c} {_fmt(net.Q[r, c])}")

    out.append("[ci]")
    out.append(f"stations {len(scenario.base_stations)}")
    for bs in scenario.base_stations:
        out.append(
            f"{bs.id} {_fmt(bs.center[0])} {_fmt(bs.center[1])} "
            f"{_fmt(bs.cell_radius)} {_fmt(bs.p_activation)} {_fmt(bs.p_full)}"
        )
    rows, cols = np.nonzero(scenario.coverage.covered_lengths)
    out.append(f"coverage {rows.size}")
    for i, b in zip(rows.tolist(), cols.tolist()):
        out.append(f"{i} {b} {_fmt(scenario.coverage.covered_lengths[i, b])}")

    out.append("[pg]")
    out.append(f"generators {len(scenario.generators)}")
    for gen in scenario.generators:
        out.append(f"{gen.id} {_fmt(gen.position[0])} {_fmt(gen.position[1])}")
    rows, cols = np.nonzero(scenario.assignment.T)
    out.append(f"links {rows.size}")
    for b, g in zip(rows.tolist(), cols.tolist()):
        out.append(f"{b} {g} {_fmt(scenario.assignment.T[b, g])}")

    if include_impact:
        out.append("[impact]")
        imp = scenario.impact
        out.append(f"scores {imp.num_stations}")
        for b in range(imp.num_stations):
            out.append(f"{b} {_fmt(imp.z_scores[b])}")
        out.append(f"vectors {imp.num_stations}")
        for b in range(imp.num_stations):
            out.append(f"{b} " + " ".join(_fmt(v) for v in imp.z_vectors[b]))
    return "\n".join(out) + "\n"


def save(scenario: Scenario, path: str, include_impact: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(scenario, include_impact))


class _Reader:
    """Line cursor that reports the current section on errors."""

    def __init__(self, text: str) -> None:
        self.lines = [ln.rstrip("\n") for ln in text.splitlines()]
        self.pos = 0
        self.section = "header"

    def next_line(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise FormatError(f"file truncated inside section [{self.section}]")

    def expect_section(self, name: str) -> None:
        try:
            line = self.next_line()
        except FormatError:
            raise FormatError(f"missing section [{name}]") from None
        if line != f"[{name}]":
            raise FormatError(f"missing section [{name}], found {line!r}")
        self.section = name

    def counted(self, keyword: str) -> int:
        line = self.next_line()
        parts = line.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise FormatError(f"[{self.section}] expected '{keyword} <count>', found {line!r}")
        try:
            return int(parts[1])
        except ValueError:
            raise FormatError(f"[{self.section}] bad count in {line!r}") from None

    def fields(self, count: int, what: str) -> list[str]:
        line = self.next_line()
        parts = line.split()
        if len(parts) != count:
            raise FormatError(
                f"[{self.section}] {what}: expected {count} fields, found {len(parts)}"
            )
        return parts

    def peek_is(self, line: str) -> bool:
        pos = self.pos
        while pos < len(self.lines):
            candidate = self.lines[pos].strip()
            if candidate:
                return candidate == line
            pos += 1
        return False

    def at_end(self) -> bool:
        return all(not ln.strip() for ln in self.lines[self.pos:])


def _parse_float(reader: _Reader, token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"[{reader.section}] {what}: bad float {token!r}") from None


def _parse_int(reader: _Reader, token: str, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"[{reader.section}] {what}: bad integer {token!r}") from None


def loads(text: str) -> Scenario:
    """Parse the text format back into a fully validated scenario."""
    reader = _Reader(text)
    header = reader.next_line()
    if header != FILE_HEADER:
        raise FormatError(f"unrecognised header {header!r}, expected {FILE_HEADER!r}")

    reader.expect_section("config")
    raw: dict[str, str] = {}
    for _ in range(13):
        parts = reader.fields(3, "config entry")
        if parts[1] != "=":
            raise FormatError(f"[config] malformed entry {' '.join(parts)!r}")
        raw[parts[0]] = parts[2]
    try:
        if raw["bs_per_generator_min"] == "auto":
            bs_range = None
        else:
            bs_range = (int(raw["bs_per_generator_min"]), int(raw["bs_per_generator_max"]))
        config = ScenarioConfig(
            grid_n=int(raw["grid_n"]),
            street_length=float(raw["street_length"]),
            cell_radius=float(raw["cell_radius"]),
            num_generators=int(raw["num_generators"]),
            p_activation=float(raw["p_activation"]),
            power_ratio=float(raw["power_ratio"]),
            budget=float(raw["budget"]),
            seed=int(raw["seed"]),
            bs_per_generator_range=bs_range,
            anchor_street=int(raw["anchor_street"]),
            anchor_flow=float(raw["anchor_flow"]),
            delta=float(raw["delta"]),
        )
    except KeyError as err:
        raise FormatError(f"[config] missing key {err.args[0]!r}") from None
    except ValueError as err:
        raise FormatError(f"[config] {err}") from None

    reader.expect_section("its")
    n_nodes = reader.counted("intersections")
    positions: dict[int, tuple[float, float]] = {}
    for _ in range(n_nodes):
        parts = reader.fields(3, "intersection")
        node = _parse_int(reader, parts[0], "intersection id")
        positions[node] = (
            _parse_float(reader, parts[1], "intersection x"),
            _parse_float(reader, parts[2], "intersection y"),
        )
    n_streets = reader.counted("streets")
    streets: list[Street] = []
    for _ in range(n_streets):
        parts = reader.fields(8, "street")
        ints = [_parse_int(reader, t, "street id") for t in parts[:3]]
        floats = [_parse_float(reader, t, "street field") for t in parts[3:]]
        streets.append(
            Street(
                ints[0], ints[1], ints[2], floats[0],
                ((floats[1], floats[2]), (floats[3], floats[4])),
            )
        )
    n_ratios = reader.counted("ratios")
    Q = np.zeros((n_streets, n_streets))
    for _ in range(n_ratios):
        parts = reader.fields(3, "ratio")
        r = _parse_int(reader, parts[0], "ratio row")
        c = _parse_int(reader, parts[1], "ratio column")
        if not (0 <= r < n_streets and 0 <= c < n_streets):
            raise FormatError(f"[its] ratio indices ({r}, {c}) out of range")
        Q[r, c] = _parse_float(reader, parts[2], "ratio value")

    reader.expect_section("ci")
    n_stations = reader.counted("stations")
    stations: list[BaseStation] = []
    for _ in range(n_stations):
        parts = reader.fields(6, "station")
        sid = _parse_int(reader, parts[0], "station id")
        vals = [_parse_float(reader, t, "station field") for t in parts[1:]]
        try:
            stations.append(BaseStation(sid, (vals[0], vals[1]), vals[2], vals[3], vals[4]))
        except ValueError as err:
            raise FormatError(f"[ci] station {sid}: {err}") from None
    n_cov = reader.counted("coverage")
    covered = np.zeros((n_streets, n_stations))
    for _ in range(n_cov):
        parts = reader.fields(3, "coverage entry")
        i = _parse_int(reader, parts[0], "coverage street")
        b = _parse_int(reader, parts[1], "coverage station")
        if not (0 <= i < n_streets and 0 <= b < n_stations):
            raise FormatError(f"[ci] coverage indices ({i}, {b}) out of range")
        covered[i, b] = _parse_float(reader, parts[2], "covered length")

    reader.expect_section("pg")
    n_gens = reader.counted("generators")
    gen_positions: dict[int, tuple[float, float]] = {}
    for _ in range(n_gens):
        parts = reader.fields(3, "generator")
        gid = _parse_int(reader, parts[0], "generator id")
        gen_positions[gid] = (
            _parse_float(reader, parts[1], "generator x"),
            _parse_float(reader, parts[2], "generator y"),
        )
    n_links = reader.counted("links")
    shares = np.zeros((n_stations, n_gens))
    for _ in range(n_links):
        parts = reader.fields(3, "link")
        b = _parse_int(reader, parts[0], "link station")
        g = _parse_int(reader, parts[1], "link generator")
        if not (0 <= b < n_stations and 0 <= g < n_gens):
            raise FormatError(f"[pg] link indices ({b}, {g}) out of range")
        shares[b, g] = _parse_float(reader, parts[2], "link share")

    impact_given: tuple[np.ndarray, np.ndarray] | None = None
    if reader.peek_is("[impact]"):
        reader.expect_section("impact")
        n_scores = reader.counted("scores")
        if n_scores != n_stations:
            raise FormatError(f"[impact] scores count {n_scores} != station count {n_stations}")
        scores = np.zeros(n_stations)
        for _ in range(n_scores):
            parts = reader.fields(2, "score")
            b = _parse_int(reader, parts[0], "score station")
            scores[b] = _parse_float(reader, parts[1], "score value")
        n_vec = reader.counted("vectors")
        if n_vec != n_stations:
            raise FormatError(f"[impact] vectors count {n_vec} != station count {n_stations}")
        vectors = np.zeros((n_stations, n_streets))
        for _ in range(n_vec):
            parts = reader.fields(1 + n_streets, "vector")
            b = _parse_int(reader, parts[0], "vector station")
            vectors[b] = [_parse_float(reader, t, "vector value") for t in parts[1:]]
        impact_given = (vectors, scores)
    if not reader.at_end():
        raise FormatError(f"unexpected trailing content: {reader.next_line()!r}")

    try:
        intersections = intersections_from_streets(streets, positions)
        network = network_from_matrix(streets, intersections, Q)
    except ValueError as err:
        raise FormatError(f"[its] {err}") from None
    try:
        coverage = coverage_from_lengths(streets, covered)
    except ValueError as err:
        raise FormatError(f"[ci] {err}") from None
    try:
        generators = tuple(
            Generator(
                g, gen_positions[g], tuple(int(b) for b in np.nonzero(shares[:, g] > 0.0)[0])
            )
            for g in sorted(gen_positions)
        )
        assignment = build_assignment(generators, stations, shares)
    except ValueError as err:
        raise FormatError(f"[pg] {err}") from None

    stations_t = tuple(stations)
    if impact_given is not None:
        vectors, scores = impact_given
        headroom = np.array([bs.headroom for bs in stations_t])
        impact = ImpactModel(vectors, scores, headroom, config.delta)
    else:
        impact = build_impact_model(network, coverage, stations_t, config.delta)
    return Scenario(config, network, stations_t, coverage, generators, assignment, impact)


def load(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    """Structural equality, exact on every matrix entry."""
    return (
        a.config == b.config
        and a.network.streets == b.network.streets
        and a.network.intersections == b.network.intersections
        and np.array_equal(a.network.Q, b.network.Q)
        and a.base_stations == b.base_stations
        and np.array_equal(a.coverage.covered_lengths, b.coverage.covered_lengths)
        and np.array_equal(a.coverage.C, b.coverage.C)
        and a.generators == b.generators
        and np.array_equal(a.assignment.T, b.assignment.T)
        and np.array_equal(a.impact.z_vectors, b.impact.z_vectors)
        and np.array_equal(a.impact.z_scores, b.impact.z_scores)
    )
