"""Monte-Carlo land-cover fractions inside a disk around each playa center.

Grids are north-up with square cells. Cell ``(row, col)`` covers
``origin_x + col*cell_size <= x < origin_x + (col+1)*cell_size`` and
``origin_y - (row+1)*cell_size < y <= origin_y - row*cell_size``; a point on
a shared edge belongs to the cell with the larger index.

On disk a grid is a JSON header ``{width, height, origin_x, origin_y,
cell_size, nodata, classes, data}`` where ``data`` names a sibling file of
whitespace-separated integers (``.txt``/``.asc``) or raw little-endian int32
(``.bin``), rows ordered top to bottom.
"""

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Union

import numpy as np
import pandas as pd

from . import kernels
from .data import LULC_CLASSES, natural_key

NODATA_KEY = "nodata"
OUTSIDE = np.iinfo(np.int64).min

_MASK64 = (1 << 64) - 1


@dataclass
class RasterGrid:
    width: int
    height: int
    origin_x: float
    origin_y: float
    cell_size: float
    values: np.ndarray
    nodata: int = -9999
    classes: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        values = np.ascontiguousarray(self.values, dtype=np.int64)
        if values.size != self.width * self.height:
            raise ValueError(f"raster has {values.size} values, expected {self.width} x {self.height}")
        self.values = values.reshape(self.height, self.width)


@dataclass
class BufferConfig:
    radius: float = 200.0
    n_points: int = 5000
    base_seed: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit unsigned integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def playa_seed(base_seed: int, playa_id: Union[int, str]) -> int:
    """``splitmix64(splitmix64(base_seed) ^ id)``; string ids are hashed with CRC-32."""
    if isinstance(playa_id, str):
        try:
            pid = int(playa_id)
        except ValueError:
            pid = zlib.crc32(playa_id.encode("utf-8"))
    else:
        pid = int(playa_id)
    return splitmix64(splitmix64(base_seed & _MASK64) ^ (pid & _MASK64))


def playa_rng(base_seed: int, playa_id) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(playa_seed(base_seed, playa_id)))


def sample_point_in_disk(rng: np.random.Generator, center, radius: float):
    """Uniform point in the closed disk by rejection from the bounding square.

    Each candidate consumes two doubles from ``rng`` (x first, then y).
    """
    cx, cy = center
    while True:
        u = rng.random(2)
        dx = radius * (2.0 * u[0] - 1.0)
        dy = radius * (2.0 * u[1] - 1.0)
        if dx * dx + dy * dy <= radius * radius:
            return cx + dx, cy + dy


def sample_points_in_disk(rng: np.random.Generator, center, radius: float, n: int) -> np.ndarray:
    """``n`` points, identical to ``n`` successive :func:`sample_point_in_disk` calls.

    Candidates are drawn in chunks, so the generator may advance past the
    last accepted candidate.
    """
    cx, cy = center
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        need = n - filled
        u = rng.random((int(need * 1.3) + 16, 2))
        d = radius * (2.0 * u - 1.0)
        ok = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] <= radius * radius
        take = d[ok][:need]
        out[filled : filled + len(take)] = take
        filled += len(take)
    out[:, 0] += cx
    out[:, 1] += cy
    return out


def locate_cell(grid: RasterGrid, point):
    """Class code under ``point`` or None when it falls outside the grid."""
    code = int(locate_cells(grid, np.asarray([point], dtype=np.float64))[0])
    return None if code == OUTSIDE else code


def locate_cells(grid: RasterGrid, points: np.ndarray) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=np.float64)
    return kernels.lookup_cells(
        np.ascontiguousarray(points[:, 0]),
        np.ascontiguousarray(points[:, 1]),
        grid.origin_x,
        grid.origin_y,
        grid.cell_size,
        grid.values,
        OUTSIDE,
    )


def class_fractions(codes: np.ndarray, nodata: int) -> Dict:
    """Counts of each code over ``len(codes)``; outside and nodata pool under NODATA_KEY."""
    n = len(codes)
    missing = (codes == OUTSIDE) | (codes == nodata)
    out = {}
    uniq, counts = np.unique(codes[~missing], return_counts=True)
    for code, count in zip(uniq, counts):
        out[int(code)] = count / n
    n_missing = int(np.count_nonzero(missing))
    if n_missing:
        out[NODATA_KEY] = n_missing / n
    return out


def buffer_class_fractions(grid: RasterGrid, center, config: BufferConfig, playa_id) -> Dict:
    """Fraction of ``config.n_points`` random disk points landing in each class."""
    rng = playa_rng(config.base_seed, playa_id)
    points = sample_points_in_disk(rng, center, config.radius, config.n_points)
    return class_fractions(locate_cells(grid, points), grid.nodata)


def group_fractions(fractions: Mapping, classes: Optional[Mapping[str, Iterable[int]]] = None) -> Dict[str, float]:
    """Collapse raw-code fractions into named classes; unmapped codes are dropped."""
    classes = LULC_CLASSES if classes is None else classes
    return {name: float(sum(fractions.get(int(c), 0.0) for c in codes)) for name, codes in classes.items()}


def extract_lulc(
    centers: pd.DataFrame,
    rasters: Mapping[int, RasterGrid],
    config: BufferConfig,
    classes: Optional[Mapping[str, Iterable[int]]] = None,
) -> pd.DataFrame:
    """lulc.csv rows for every playa and every raster year.

    The same per-playa points are reused for each year so year-to-year
    differences reflect the rasters only. Rows are ordered by playa id then year.
    """
    classes = LULC_CLASSES if classes is None else classes
    rows = []
    order = sorted(range(len(centers)), key=lambda k: natural_key(str(centers["playa_id"].iloc[k])))
    for k in order:
        pid = str(centers["playa_id"].iloc[k])
        center = (float(centers["centroid_x"].iloc[k]), float(centers["centroid_y"].iloc[k]))
        points = sample_points_in_disk(playa_rng(config.base_seed, pid), center, config.radius, config.n_points)
        for year in sorted(rasters):
            grid = rasters[year]
            grouped = group_fractions(class_fractions(locate_cells(grid, points), grid.nodata), classes)
            rows.append({"playa_id": pid, "year": int(year), **{f"frac_{c}": grouped[c] for c in classes}})
    return pd.DataFrame(rows, columns=["playa_id", "year", *[f"frac_{c}" for c in classes]])


def read_grid(header_path: Union[str, Path]) -> RasterGrid:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text(encoding="utf-8"))
    data_path = header_path.parent / header["data"]
    count = int(header["width"]) * int(header["height"])
    if data_path.suffix == ".bin":
        values = np.fromfile(data_path, dtype="<i4", count=count)
    else:
        values = np.loadtxt(data_path, dtype=np.int64, ndmin=2).reshape(-1)
    return RasterGrid(
        width=int(header["width"]),
        height=int(header["height"]),
        origin_x=float(header["origin_x"]),
        origin_y=float(header["origin_y"]),
        cell_size=float(header["cell_size"]),
        values=values,
        nodata=int(header.get("nodata", -9999)),
        classes=header.get("classes", {}),
    )


def write_grid(grid: RasterGrid, header_path: Union[str, Path], binary: bool = False) -> None:
    header_path = Path(header_path)
    data_path = header_path.with_suffix(".bin" if binary else ".txt")
    if binary:
        grid.values.astype("<i4").tofile(data_path)
    else:
        np.savetxt(data_path, grid.values, fmt="%d")
    header = {
        "width": grid.width,
        "height": grid.height,
        "origin_x": grid.origin_x,
        "origin_y": grid.origin_y,
        "cell_size": grid.cell_size,
        "nodata": grid.nodata,
        "classes": grid.classes,
        "data": data_path.name,
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")


def read_ascii_grid(path: Union[str, Path]) -> RasterGrid:
    """Read an ESRI ASCII grid (``ncols``/``nrows``/``xllcorner``... header)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = {}
    k = 0
    while k < len(lines):
        parts = lines[k].split()
        if len(parts) == 2 and parts[0][0].isalpha():
            header[parts[0].lower()] = parts[1]
            k += 1
        else:
            break
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    cell = float(header["cellsize"])
    if "xllcenter" in header:
        x0 = float(header["xllcenter"]) - cell / 2
        y0 = float(header["yllcenter"]) - cell / 2
    else:
        x0 = float(header["xllcorner"])
        y0 = float(header["yllcorner"])
    values = np.array(" ".join(lines[k:]).split(), dtype=np.float64).astype(np.int64)
    return RasterGrid(ncols, nrows, x0, y0 + nrows * cell, cell, values, int(float(header.get("nodata_value", -9999))))
