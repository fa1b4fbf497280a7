"""Graphs, virtual-node augmentation, and the forecasting dataset arithmetic.

The dataset side reproduces, exactly and without any data download, the
bookkeeping of a sea-surface-temperature forecasting benchmark: regular grid
graphs over ocean regions, calendar day counts for year-range splits, and
sliding-window example counts.  A seeded synthetic field stands in for the
real temperatures so the full pipeline can run hermetically.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass, field

import numpy as np

from . import numkit


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with an optional designated virtual node.

    ``n`` counts all nodes, including the virtual node when present.  Edges
    are canonical: (i, j) with i < j, sorted, no duplicates, no self loops.
    The virtual node, when present, must be adjacent to every other node and
    carries no other structural role.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    vn_index: int | None = None

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("node count must be nonnegative")
        canon = []
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError(f"self loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {(i, j)} out of range for n={self.n}")
            canon.append((min(i, j), max(i, j)))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ValueError(f"duplicate edge {a}")
        object.__setattr__(self, "edges", tuple(canon))
        if self.vn_index is not None:
            vi = int(self.vn_index)
            if not 0 <= vi < self.n:
                raise ValueError(f"virtual node index {vi} out of range")
            object.__setattr__(self, "vn_index", vi)
            attached = {j if i == vi else i for i, j in self.edges if vi in (i, j)}
            expected = set(range(self.n)) - {vi}
            if attached != expected:
                raise ValueError(
                    "virtual node must be adjacent to exactly all other nodes"
                )

    @property
    def has_vn(self) -> bool:
        return self.vn_index is not None

    @property
    def graph_nodes(self) -> tuple[int, ...]:
        """Node ids excluding the virtual node, in ascending order."""
        return tuple(i for i in range(self.n) if i != self.vn_index)

    def degree(self, node: int) -> int:
        return sum(1 for i, j in self.edges if node in (i, j))

    def neighbors(self, node: int) -> tuple[int, ...]:
        out = [j if i == node else i for i, j in self.edges if node in (i, j)]
        return tuple(sorted(out))


def add_virtual_node(g: Graph) -> Graph:
    """Append one virtual node adjacent to every existing node."""
    if g.has_vn:
        raise ValueError("graph already has a virtual node")
    vn = g.n
    new_edges = g.edges + tuple((i, vn) for i in range(g.n))
    return Graph(g.n + 1, new_edges, vn_index=vn)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    neighborhood: int = 8  # 4 = rook moves, 8 = rook + diagonal (king moves)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have positive extent")
        if self.neighborhood not in (4, 8):
            raise ValueError("neighborhood must be 4 or 8")


def grid_graph(spec: GridSpec) -> Graph:
    """Regular lattice with nodes indexed row-major (node = r * cols + c)."""
    if spec.neighborhood == 4:
        steps = ((0, 1), (1, 0))
    else:
        steps = ((0, 1), (1, 0), (1, 1), (1, -1))
    edges = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            a = r * spec.cols + c
            for dr, dc in steps:
                rr, cc = r + dr, c + dc
                if 0 <= rr < spec.rows and 0 <= cc < spec.cols:
                    edges.append((a, rr * spec.cols + cc))
    return Graph(spec.rows * spec.cols, tuple(edges))


# ---------------------------------------------------------------------------
# calendar and window arithmetic
# ---------------------------------------------------------------------------


def calendar_days(start_year: int, end_year: int) -> int:
    """Number of calendar days from Jan 1 of start_year through Dec 31 of end_year."""
    if end_year < start_year:
        raise ValueError("end_year must not precede start_year")
    first = datetime.date(start_year, 1, 1)
    last = datetime.date(end_year, 12, 31)
    return (last - first).days + 1


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window shape: history length and prediction length, in days."""

    history: int
    predict: int

    def __post_init__(self):
        if self.history < 1 or self.predict < 1:
            raise ValueError("window lengths must be positive")

    @property
    def span(self) -> int:
        return self.history + self.predict


def window_count(days: int, spec: WindowSpec, regions: int = 1) -> int:
    """Number of sliding-window examples over a day range, times region count.

    A window anchored at day t uses days [t, t + history) as input and
    [t + history, t + history + predict) as target; anchors slide one day at
    a time and the last anchor keeps the target fully inside the range, so a
    range of L days yields L - history - predict windows per region.
    """
    if regions < 1:
        raise ValueError("regions must be positive")
    count = days - spec.span
    if count < 0:
        count = 0
    return count * regions


def make_windows(series, spec: WindowSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut a per-node day series into (input, target) window pairs.

    ``series`` is (n_nodes, days) or 1-D (days,); windows are returned in
    chronological anchor order, each pair shaped (n_nodes, history) and
    (n_nodes, predict).
    """
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError("series must be 1-D or 2-D (nodes x days)")
    days = arr.shape[1]
    if days < spec.span + 1:
        raise ValueError(
            f"series of {days} days is too short for history={spec.history} "
            f"predict={spec.predict} (needs at least {spec.span + 1})"
        )
    out = []
    for t in range(days - spec.span):
        inp = arr[:, t : t + spec.history]
        tgt = arr[:, t + spec.history : t + spec.span]
        out.append((inp.copy(), tgt.copy()))
    return out


@dataclass(frozen=True)
class YearSplit:
    """A named contiguous year range used as a dataset split."""

    name: str
    start_year: int
    end_year: int

    @property
    def days(self) -> int:
        return calendar_days(self.start_year, self.end_year)


BENCHMARK_SPLITS = (
    YearSplit("train", 1982, 2018),
    YearSplit("validation", 2019, 2019),
    YearSplit("test", 2020, 2021),
)

BENCHMARK_WINDOWS = (
    WindowSpec(42, 28),
    WindowSpec(42, 14),
    WindowSpec(42, 7),
)


def split_day_ranges(splits=BENCHMARK_SPLITS) -> dict[str, tuple[int, int]]:
    """Half-open day-index ranges of each split inside the concatenated series."""
    out = {}
    offset = 0
    for s in splits:
        out[s.name] = (offset, offset + s.days)
        offset += s.days
    return out


# ---------------------------------------------------------------------------
# region catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    index: int
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float


def _make_regions() -> tuple[Region, ...]:
    lon_bands = [
        (180.125, 194.875),
        (195.125, 209.875),
        (210.125, 224.875),
        (225.125, 239.875),
        (240.125, 254.875),
        (255.125, 269.875),
    ]
    south = (-14.875, -0.125)
    north = (0.125, 14.875)
    regions = []
    for i, (lo, hi) in enumerate(lon_bands):
        regions.append(Region(i + 1, lo, hi, *south))
    for i, (lo, hi) in enumerate(lon_bands[:5]):
        regions.append(Region(len(lon_bands) + i + 1, lo, hi, *north))
    return tuple(regions)


REGION_CATALOG: tuple[Region, ...] = _make_regions()


# ---------------------------------------------------------------------------
# synthetic field
# ---------------------------------------------------------------------------

# amplitude budget of the three space-time modes plus the noise cap
SYNTH_AMPLITUDES = (0.6, 0.25, 0.1)


def synthetic_field_bound(noise: float = 0.05) -> float:
    """Declared sup bound on |field values| (supports the feature-norm assumption)."""
    return float(sum(SYNTH_AMPLITUDES) + noise)


def synthetic_field(grid: GridSpec, days: int, rng: np.random.Generator,
                    noise: float = 0.05) -> np.ndarray:
    """Smooth deterministic-from-seed field: 3 spatial-temporal modes + noise.

    Each mode is amplitude * s(node) * t(day) with |s|, |t| <= 1, so values
    stay inside [-synthetic_field_bound(noise), +synthetic_field_bound(noise)].
    Noise is uniform on [-noise, noise] to keep the bound hard.
    """
    if days < 1:
        raise ValueError("days must be positive")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rr, cc = np.meshgrid(np.arange(grid.rows), np.arange(grid.cols), indexing="ij")
    rr = rr.ravel() / max(grid.rows - 1, 1)
    cc = cc.ravel() / max(grid.cols - 1, 1)
    t = np.arange(days) / max(days - 1, 1)

    field_vals = np.zeros((grid.rows * grid.cols, days))
    for amp in SYNTH_AMPLITUDES:
        f_r, f_c, f_t = rng.uniform(0.5, 3.0, size=3)
        p_r, p_c, p_t = rng.uniform(0.0, 2.0 * np.pi, size=3)
        spatial = np.sin(2.0 * np.pi * f_r * rr + p_r) * np.sin(2.0 * np.pi * f_c * cc + p_c)
        temporal = np.sin(2.0 * np.pi * f_t * t + p_t)
        field_vals += amp * np.outer(spatial, temporal)
    if noise > 0:
        field_vals += rng.uniform(-noise, noise, size=field_vals.shape)
    return field_vals


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

SERIES_CSV_HEADER = ("node_id", "day_index", "value")


def write_series_csv(path, series: np.ndarray) -> None:
    """Write a (nodes, days) series as rows of (node_id, day_index, value)."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("series must be 2-D (nodes x days)")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_CSV_HEADER)
        for node in range(arr.shape[0]):
            for day in range(arr.shape[1]):
                w.writerow((node, day, repr(float(arr[node, day]))))


def read_series_csv(path) -> np.ndarray:
    """Read a series CSV back into a dense (nodes, days) array.

    Every (node, day) cell must be present exactly once; missing or duplicate
    cells are treated as malformed input.
    """
    cells: dict[tuple[int, int], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SERIES_CSV_HEADER:
            raise ValueError(f"expected header {SERIES_CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                node, day, value = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            if node < 0 or day < 0:
                raise ValueError(f"line {lineno}: negative node or day index")
            key = (node, day)
            if key in cells:
                raise ValueError(f"line {lineno}: duplicate cell {key}")
            cells[key] = value
    if not cells:
        raise ValueError("series CSV contains no data rows")
    n_nodes = max(k[0] for k in cells) + 1
    n_days = max(k[1] for k in cells) + 1
    if len(cells) != n_nodes * n_days:
        raise ValueError(
            f"series CSV is ragged: {len(cells)} cells for {n_nodes}x{n_days} grid"
        )
    out = np.empty((n_nodes, n_days))
    for (node, day), value in cells.items():
        out[node, day] = value
    return out


def graph_to_json(g: Graph) -> dict:
    return {
        "format": "graph/v1",
        "nodes": g.n,
        "edges": [[int(i), int(j)] for i, j in g.edges],
        "virtual_node": g.vn_index,
    }


def graph_from_json(blob: dict) -> Graph:
    if blob.get("format") != "graph/v1":
        raise ValueError("not a graph/v1 document")
    return Graph(
        int(blob["nodes"]),
        tuple((int(i), int(j)) for i, j in blob["edges"]),
        blob.get("virtual_node"),
    )
