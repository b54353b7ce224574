"""Fingerprint maps over a reference grid and sliding-window proposals.

Reference observations collected at grid cells are stacked into a
time-ordered sequence of W x H maps whose pixels are C-channel
fingerprints.  Dense sliding windows of native sizes 1x1 / 2x2 / 3x3 are
cut from each map and warped to a common tensor size for the classifier;
at query time the largest window the recent test observations can fill
is assembled around the current position estimate.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .csi_core import ChannelLayout, CsiObservation

__all__ = [
    "GridSpec",
    "FingerprintMap",
    "MapSequence",
    "Proposal",
    "build_map_sequence",
    "extract_proposals",
    "query_proposal",
    "warp_window",
    "write_map_dataset",
    "read_map_dataset",
]


@dataclass(frozen=True)
class GridSpec:
    """Regular reference grid: W x H cells of ``cell_size_m`` meters.

    ``origin`` is the center of cell (0, 0).  Location classes are
    row-major: class of cell (col, row) is ``row * width + col``; class
    ``n_classes`` (= W*H) is the null / no-location class.
    """

    width_cells: int
    height_cells: int
    cell_size_m: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width_cells < 1 or self.height_cells < 1:
            raise ValueError("grid must have at least one cell per axis")
        if not (self.cell_size_m > 0):
            raise ValueError(f"cell_size_m must be > 0, got {self.cell_size_m}")

    @property
    def n_classes(self) -> int:
        return self.width_cells * self.height_cells

    @property
    def null_class(self) -> int:
        return self.n_classes

    def class_of(self, col: int, row: int) -> int:
        return row * self.width_cells + col

    def cell_of_class(self, label: int) -> tuple[int, int]:
        if not (0 <= label < self.n_classes):
            raise ValueError(f"class {label} out of range")
        return label % self.width_cells, label // self.width_cells

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.origin[0] + col * self.cell_size_m,
            self.origin[1] + row * self.cell_size_m,
        )

    def nearest_cell(self, x: float, y: float) -> tuple[int, int]:
        """Nearest cell by center distance; may fall outside the grid."""
        col = int(round((x - self.origin[0]) / self.cell_size_m))
        row = int(round((y - self.origin[1]) / self.cell_size_m))
        return col, row

    def contains_cell(self, col: int, row: int) -> bool:
        return 0 <= col < self.width_cells and 0 <= row < self.height_cells

    def class_at(self, x: float, y: float) -> int:
        """Location class of the nearest cell, or the null class off-grid."""
        col, row = self.nearest_cell(x, y)
        if self.contains_cell(col, row):
            return self.class_of(col, row)
        return self.null_class


@dataclass(frozen=True)
class FingerprintMap:
    """One complete map: pixel (col, row) holds the C-vector fingerprint
    with observation index ``index`` at that cell, plus its source time."""

    index: int
    grid: GridSpec
    pixels: np.ndarray  # (H, W, C)
    pixel_t_ms: np.ndarray  # (H, W)

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        t = np.asarray(self.pixel_t_ms, dtype=np.int64)
        H, W = self.grid.height_cells, self.grid.width_cells
        if pixels.ndim != 3 or pixels.shape[:2] != (H, W):
            raise ValueError(
                f"pixels must be ({H}, {W}, C), got {pixels.shape}"
            )
        if t.shape != (H, W):
            raise ValueError(f"pixel_t_ms must be ({H}, {W}), got {t.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("map has non-finite pixels; map is incomplete")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "pixel_t_ms", t)

    @property
    def n_channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class MapSequence:
    """Time-ordered maps M^1..M^m: at every cell, map i's source
    observation strictly precedes map i+1's."""

    maps: tuple[FingerprintMap, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        for prev, nxt in zip(maps, maps[1:]):
            if not np.all(prev.pixel_t_ms < nxt.pixel_t_ms):
                bad = np.argwhere(prev.pixel_t_ms >= nxt.pixel_t_ms)[0]
                raise ValueError(
                    f"time ordering violated at cell (col={bad[1]}, row={bad[0]}) "
                    f"between maps {prev.index} and {nxt.index}"
                )
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)

    def __getitem__(self, i: int) -> FingerprintMap:
        return self.maps[i]


@dataclass(frozen=True)
class Proposal:
    """One warped sliding-window sample.

    ``anchor_cell`` is the window's top-left cell (col, row);
    ``native_size`` the pre-warp side length; ``data`` the warped
    U x V x C tensor; ``label`` a location class or the null class.
    """

    anchor_cell: tuple[int, int]
    native_size: int
    data: np.ndarray  # (U, V, C)
    label: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3:
            raise ValueError(f"data must be U x V x C, got shape {data.shape}")
        object.__setattr__(self, "data", data)


def warp_window(window: np.ndarray, out_rows: int, out_cols: int, method: str = "nearest") -> np.ndarray:
    """Spatially upsample an s x s x C window to out_rows x out_cols x C.

    Nearest-neighbor replication introduces no fabricated phase values;
    bilinear is available as an option.  Channels are untouched.
    """
    window = np.asarray(window, dtype=float)
    s_r, s_c = window.shape[:2]
    if (s_r, s_c) == (out_rows, out_cols):
        return window.copy()
    if method == "nearest":
        rows = np.floor(np.arange(out_rows) * s_r / out_rows).astype(int)
        cols = np.floor(np.arange(out_cols) * s_c / out_cols).astype(int)
        return window[np.ix_(rows, cols)]
    if method == "bilinear":
        # sample at cell centers of the target raster mapped into source coords
        r = (np.arange(out_rows) + 0.5) * s_r / out_rows - 0.5
        c = (np.arange(out_cols) + 0.5) * s_c / out_cols - 0.5
        r0 = np.clip(np.floor(r).astype(int), 0, s_r - 1)
        c0 = np.clip(np.floor(c).astype(int), 0, s_c - 1)
        r1 = np.clip(r0 + 1, 0, s_r - 1)
        c1 = np.clip(c0 + 1, 0, s_c - 1)
        fr = np.clip(r - r0, 0.0, 1.0)[:, None, None]
        fc = np.clip(c - c0, 0.0, 1.0)[None, :, None]
        top = window[np.ix_(r0, c0)] * (1 - fc) + window[np.ix_(r0, c1)] * fc
        bot = window[np.ix_(r1, c0)] * (1 - fc) + window[np.ix_(r1, c1)] * fc
        return top * (1 - fr) + bot * fr
    raise ValueError(f"unknown warp method {method!r}")


def build_map_sequence(
    observations: Sequence[CsiObservation],
    grid: GridSpec,
    m: int,
) -> MapSequence:
    """Stack located observations into m complete time-ordered maps.

    Observations are binned to their nearest grid cell; each cell's
    observations are sorted by timestamp and the i-th becomes pixel
    (col, row) of map i.  Cells with fewer than m observations are an
    error; duplicate timestamps at one cell keep input order with a
    warning.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    per_cell: dict[tuple[int, int], list[CsiObservation]] = {
        (c, r): [] for r in range(grid.height_cells) for c in range(grid.width_cells)
    }
    n_channels = None
    for obs in observations:
        if obs.location is None:
            raise ValueError("all observations must carry a location")
        if n_channels is None:
            n_channels = obs.n_channels
        elif obs.n_channels != n_channels:
            raise ValueError("observations must share one channel layout")
        cell = grid.nearest_cell(*obs.location)
        if grid.contains_cell(*cell):
            per_cell[cell].append(obs)

    short = sorted(cell for cell, lst in per_cell.items() if len(lst) < m)
    if short:
        raise ValueError(
            f"cells with fewer than m={m} observations: "
            + ", ".join(f"(col={c}, row={r})" for c, r in short)
        )

    for cell, lst in per_cell.items():
        # stable sort: ties keep input order
        lst.sort(key=lambda o: o.t_ms)
        times = [o.t_ms for o in lst[:m]]
        if len(set(times)) != len(times):
            warnings.warn(
                f"duplicate timestamps at cell (col={cell[0]}, row={cell[1]}); "
                "tie-broken by input order",
                stacklevel=2,
            )

    H, W = grid.height_cells, grid.width_cells
    maps = []
    for i in range(m):
        pixels = np.empty((H, W, n_channels))
        t_ms = np.empty((H, W), dtype=np.int64)
        for (col, row), lst in per_cell.items():
            pixels[row, col] = lst[i].phases
            t_ms[row, col] = lst[i].t_ms
        maps.append(FingerprintMap(i, grid, pixels, t_ms))
    return MapSequence(tuple(maps))


_LABEL_MODES_2X2 = ("top_left", "top_right", "bottom_left", "bottom_right")


def _window_label(grid: GridSpec, col: int, row: int, size: int, label_mode_2x2: str) -> int:
    if size == 1:
        return grid.class_of(col, row)
    if size == 2:
        dc, dr = {
            "top_left": (0, 0),
            "top_right": (1, 0),
            "bottom_left": (0, 1),
            "bottom_right": (1, 1),
        }[label_mode_2x2]
        return grid.class_of(col + dc, row + dr)
    if size == 3:
        return grid.class_of(col + 1, row + 1)
    raise ValueError(f"unsupported native size {size}")


def extract_proposals(
    fp_map: FingerprintMap,
    sizes: Sequence[int] = (1, 2, 3),
    warp_to: tuple[int, int] = (3, 3),
    label_mode_2x2: str = "top_left",
    warp_method: str = "nearest",
) -> list[Proposal]:
    """Cut every dense sliding window of each native size and warp it.

    A size-s window on a W x H map yields exactly (W-s+1)*(H-s+1)
    proposals at stride 1.  1x1 windows are labeled by their own cell,
    2x2 by the ``label_mode_2x2`` corner (top-left by default), 3x3 by
    the center cell.
    """
    if label_mode_2x2 not in _LABEL_MODES_2X2:
        raise ValueError(f"label_mode_2x2 must be one of {_LABEL_MODES_2X2}")
    grid = fp_map.grid
    U, V = warp_to
    W, H = grid.width_cells, grid.height_cells
    proposals = []
    for s in sorted(set(int(s) for s in sizes)):
        if s > min(W, H):
            raise ValueError(f"native size {s} exceeds grid min({W}, {H})")
        if s > min(U, V):
            raise ValueError(f"native size {s} exceeds warp target {warp_to}")
        for row in range(H - s + 1):
            for col in range(W - s + 1):
                window = fp_map.pixels[row : row + s, col : col + s]
                proposals.append(
                    Proposal(
                        anchor_cell=(col, row),
                        native_size=s,
                        data=warp_window(window, U, V, warp_method),
                        label=_window_label(grid, col, row, s, label_mode_2x2),
                    )
                )
    return proposals


def query_proposal(
    test_observations: Sequence[CsiObservation],
    estimated_cell: tuple[int, int] | None,
    grid: GridSpec,
    warp_to: tuple[int, int] = (3, 3),
    window_ms: int = 200,
    warp_method: str = "nearest",
    max_size: int = 3,
) -> Proposal:
    """Assemble the largest fillable window around the current estimate.

    Observations carrying a location (attached from previous position
    estimates) are binned to their nearest cell; locationless ones fall
    back to ``estimated_cell``.  Only observations within ``window_ms``
    of the newest one count as recent.  With no estimate, the newest
    observation forms a 1x1 proposal.  ``max_size`` caps the native
    window size regardless of coverage.  The label is the null class:
    a query has no ground truth.
    """
    if not 1 <= max_size <= 3:
        raise ValueError("max_size must be 1, 2, or 3")
    if not test_observations:
        raise ValueError("no recent test observations")
    newest = max(obs.t_ms for obs in test_observations)
    recent = [o for o in test_observations if newest - o.t_ms <= window_ms]
    if not recent:
        raise ValueError("no recent test observations")

    # latest recent observation per cell
    per_cell: dict[tuple[int, int], CsiObservation] = {}
    fallback = estimated_cell
    for obs in sorted(recent, key=lambda o: o.t_ms):
        if obs.location is not None:
            cell = grid.nearest_cell(*obs.location)
        elif fallback is not None:
            cell = fallback
        else:
            continue
        per_cell[cell] = obs

    n_channels = recent[0].n_channels
    U, V = warp_to

    def try_window(col0: int, row0: int, s: int) -> np.ndarray | None:
        cells = [(col0 + dc, row0 + dr) for dr in range(s) for dc in range(s)]
        if not all(grid.contains_cell(*c) and c in per_cell for c in cells):
            return None
        window = np.empty((s, s, n_channels))
        for dr in range(s):
            for dc in range(s):
                window[dr, dc] = per_cell[(col0 + dc, row0 + dr)].phases
        return window

    if estimated_cell is not None:
        ec, er = estimated_cell
        # 3x3 centered on the estimate, then the four 2x2 windows containing it
        if max_size >= 3:
            w = try_window(ec - 1, er - 1, 3)
            if w is not None:
                return Proposal(
                    (ec - 1, er - 1), 3, warp_window(w, U, V, warp_method), grid.null_class
                )
        if max_size >= 2:
            for dc, dr in ((0, 0), (-1, 0), (0, -1), (-1, -1)):
                w = try_window(ec + dc, er + dr, 2)
                if w is not None:
                    return Proposal(
                        (ec + dc, er + dr), 2, warp_window(w, U, V, warp_method), grid.null_class
                    )

    # minimal-information case: newest observation alone
    newest_obs = max(recent, key=lambda o: o.t_ms)
    anchor = estimated_cell
    if anchor is None and newest_obs.location is not None:
        anchor = grid.nearest_cell(*newest_obs.location)
    if anchor is None:
        anchor = (0, 0)
    window = newest_obs.phases[None, None, :]
    return Proposal(anchor, 1, warp_window(window, U, V, warp_method), grid.null_class)


# --- map dataset directory: meta.json + maps.jsonl -------------------------


def write_map_dataset(path: str | Path, seq: MapSequence, layout: ChannelLayout | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    grid = seq[0].grid
    meta = {
        "grid": {
            "width_cells": grid.width_cells,
            "height_cells": grid.height_cells,
            "cell_size_m": grid.cell_size_m,
            "origin": list(grid.origin),
        },
        "n_channels": seq[0].n_channels,
        "m": len(seq),
    }
    if layout is not None:
        meta["layout"] = {
            "n_tx": layout.n_tx,
            "n_rx": layout.n_rx,
            "n_subcarriers": layout.n_subcarriers,
        }
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    with (path / "maps.jsonl").open("w") as f:
        for fp_map in seq.maps:
            rec = {
                "index": fp_map.index,
                # row-major pixels: H lists of W lists of C floats
                "pixels": fp_map.pixels.tolist(),
                "t_ms": fp_map.pixel_t_ms.tolist(),
            }
            f.write(json.dumps(rec) + "\n")


def read_map_dataset(path: str | Path) -> MapSequence:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    g = meta["grid"]
    grid = GridSpec(
        int(g["width_cells"]),
        int(g["height_cells"]),
        float(g["cell_size_m"]),
        tuple(g["origin"]),
    )
    maps = []
    with (path / "maps.jsonl").open() as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            maps.append(
                FingerprintMap(
                    int(rec["index"]),
                    grid,
                    np.asarray(rec["pixels"], dtype=float),
                    np.asarray(rec["t_ms"], dtype=np.int64),
                )
            )
    return MapSequence(tuple(maps))
