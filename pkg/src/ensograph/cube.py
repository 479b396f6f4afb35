"""Monthly gridded SST cubes: in-memory types, on-disk format, climatology.

A cube on disk is a pair of files sharing one stem: ``<name>.json`` holds
the metadata (grid axes, start month, length, missing sentinel) and
``<name>.f32`` holds the payload as raw little-endian 32-bit floats,
time-major, then latitude, then longitude. Cells whose bits equal the
sentinel value are missing. The format is byte-deterministic: saving the
same cube twice produces identical files.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import GridSpec
from .months import Month, add_months, check_ym, format_ym, month_index

FORMAT_VERSION = 1
DEFAULT_MISSING = -999.0
SST_MIN = -5.0
SST_MAX = 45.0


def _month_axis(start: Month, n_time: int):
    """Vectors of years and calendar months (1..12) along the time axis."""
    y0, m0 = start
    absolute = y0 * 12 + (m0 - 1) + np.arange(n_time)
    return absolute // 12, absolute % 12 + 1


@dataclass
class _BaseCube:
    grid: GridSpec
    start: Month
    values: np.ndarray  # float32 [time, lat, lon]
    missing: np.ndarray  # bool    [time, lat, lon]

    def __post_init__(self):
        self.start = check_ym(self.start)
        self.values = np.asarray(self.values, dtype=np.float32)
        self.missing = np.asarray(self.missing, dtype=bool)
        self._check()

    def _check(self):
        expect = (self.n_time, self.grid.n_lat, self.grid.n_lon)
        if self.values.ndim != 3 or self.values.shape[1:] != expect[1:]:
            raise ValidationError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.n_lat} lats x {self.grid.n_lon} lons)"
            )
        if self.values.shape[0] < 1:
            raise ValidationError("cube must cover at least one month")
        if self.missing.shape != self.values.shape:
            raise ValidationError("missing mask shape does not match values")
        live = self.values[~self.missing]
        if not np.all(np.isfinite(live)):
            raise ValidationError("non-finite value without missing flag")

    @property
    def n_time(self) -> int:
        return self.values.shape[0]

    def month_of(self, t: int) -> Month:
        return add_months(self.start, t)

    @property
    def end(self) -> Month:
        return self.month_of(self.n_time - 1)

    def period_label(self) -> str:
        return f"{format_ym(self.start)}..{format_ym(self.end)}"


@dataclass
class SstCube(_BaseCube):
    """Absolute sea-surface temperatures in degC.

    Non-missing values must fall in the physical plausibility range
    [-5, 45] degC; construction rejects anything outside it.
    """

    def _check(self):
        super()._check()
        live = self.values[~self.missing]
        if live.size and (live.min() < SST_MIN or live.max() > SST_MAX):
            bad = live[(live < SST_MIN) | (live > SST_MAX)][0]
            raise ValidationError(
                f"temperature {bad:.3f} degC outside plausible range [{SST_MIN}, {SST_MAX}]"
            )


@dataclass
class AnomalyCube(_BaseCube):
    """Departures from a monthly climatology, degC, same layout as SstCube."""


@dataclass
class Climatology:
    """Per-calendar-month mean state on a grid.

    values[m-1] is the mean field for calendar month m. A cell is missing
    for month m when the base period contained no non-missing sample there.
    """

    grid: GridSpec
    base_period: tuple[int, int]  # inclusive (start_year, end_year)
    values: np.ndarray  # float64 [12, lat, lon]
    missing: np.ndarray  # bool    [12, lat, lon]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.missing = np.asarray(self.missing, dtype=bool)
        y0, y1 = self.base_period
        if y0 > y1:
            raise ValueError(f"empty base period {y0}:{y1}")
        expect = (12, self.grid.n_lat, self.grid.n_lon)
        if self.values.shape != expect or self.missing.shape != expect:
            raise ValidationError(f"climatology shape {self.values.shape}, expected {expect}")


def _payload_path(meta_path: Path) -> Path:
    return meta_path.with_suffix(".f32")


def save_cube(cube: _BaseCube, meta_path, missing_value: float = DEFAULT_MISSING):
    """Write the cube as ``<name>.json`` plus ``<name>.f32``.

    The cube is re-validated first, and the write refuses to proceed when
    any live value would collide bitwise with the missing sentinel.
    """
    cube._check()
    meta_path = Path(meta_path)
    if meta_path.suffix != ".json":
        meta_path = meta_path.with_suffix(meta_path.suffix + ".json")
    sentinel = np.float32(missing_value)
    payload = cube.values.astype("<f4", copy=True)
    collide = (payload.view("<u4") == sentinel.view("<u4")) & ~cube.missing
    if collide.any():
        raise ValidationError(
            f"live cell equals missing sentinel {missing_value}; choose another sentinel"
        )
    payload[cube.missing] = sentinel
    header = {
        "format_version": FORMAT_VERSION,
        "start_year": cube.start[0],
        "start_month": cube.start[1],
        "n_time": cube.n_time,
        "lats": list(cube.grid.lats),
        "lons": list(cube.grid.lons),
        "missing_value": float(sentinel),
        "units": "degC",
    }
    meta_path.write_text(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
    _payload_path(meta_path).write_bytes(payload.tobytes())
    return meta_path


def load_cube(meta_path) -> SstCube:
    """Read a cube pair from disk and return a validated SstCube."""
    meta_path = Path(meta_path)
    try:
        header = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed cube header {meta_path}: {exc}") from exc
    for key in ("format_version", "start_year", "start_month", "n_time",
                "lats", "lons", "missing_value", "units"):
        if key not in header:
            raise ValidationError(f"cube header missing field {key!r}")
    if header["format_version"] != FORMAT_VERSION:
        raise ValidationError(f"unsupported format_version {header['format_version']}")
    if header["units"] != "degC":
        raise ValidationError(f"unsupported units {header['units']!r}")
    try:
        grid = GridSpec(tuple(header["lats"]), tuple(header["lons"]))
        start = check_ym((int(header["start_year"]), int(header["start_month"])))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    n_time = int(header["n_time"])
    if n_time < 1:
        raise ValidationError(f"n_time must be >= 1, got {n_time}")

    raw = _payload_path(meta_path).read_bytes()
    expected = n_time * grid.n_cells * 4
    if len(raw) != expected:
        raise ValidationError(
            f"payload size mismatch: expected {expected} bytes "
            f"({n_time} x {grid.n_lat} x {grid.n_lon} float32), found {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f4")
    sentinel = np.float32(header["missing_value"])
    missing = flat.view("<u4") == sentinel.view("<u4")
    values = flat.copy().reshape(n_time, grid.n_lat, grid.n_lon)
    missing = missing.reshape(values.shape)
    values[missing] = 0.0
    return SstCube(grid, start, values, missing)


def climatology(cube: _BaseCube, base_years: tuple[int, int]) -> Climatology:
    """Per-calendar-month mean over the base years, skipping missing cells.

    Every calendar month must be represented at least once inside the base
    period; a month with no time slices at all is an error, while a cell
    that is missing in every base sample becomes missing in the result.
    """
    y0, y1 = int(base_years[0]), int(base_years[1])
    if y0 > y1:
        raise ValueError(f"empty base period {y0}:{y1}")
    years, mons = _month_axis(cube.start, cube.n_time)
    in_base = (years >= y0) & (years <= y1)
    vals = np.zeros((12, cube.grid.n_lat, cube.grid.n_lon), dtype=np.float64)
    miss = np.zeros_like(vals, dtype=bool)
    data = cube.values.astype(np.float64)
    data[cube.missing] = 0.0
    for m in range(1, 13):
        sel = in_base & (mons == m)
        if not sel.any():
            raise ValidationError(
                f"base period {y0}:{y1} contains no data for calendar month {m}"
            )
        counts = (~cube.missing[sel]).sum(axis=0)
        sums = data[sel].sum(axis=0)
        empty = counts == 0
        counts_safe = np.where(empty, 1, counts)
        vals[m - 1] = sums / counts_safe
        miss[m - 1] = empty
    return Climatology(cube.grid, (y0, y1), vals, miss)


def anomalies(cube: _BaseCube, clim: Climatology) -> AnomalyCube:
    """Subtract the climatology month-by-month from the cube."""
    if cube.grid != clim.grid:
        raise ValidationError("cube and climatology are on different grids")
    _, mons = _month_axis(cube.start, cube.n_time)
    idx = mons - 1
    out = cube.values.astype(np.float64) - clim.values[idx]
    miss = cube.missing | clim.missing[idx]
    out[miss] = 0.0
    return AnomalyCube(cube.grid, cube.start, out.astype(np.float32), miss)


def split_by_years(cube, period: tuple[int, int]):
    """Contiguous sub-cube of the months with year in [y0, y1].

    The cube must cover the whole period; refusing a partial overlap keeps
    sample counts from silently changing when a shorter file is supplied.
    """
    y0, y1 = int(period[0]), int(period[1])
    if y0 > y1:
        raise ValueError(f"empty period {y0}:{y1}")
    n_want = 12 * (y1 - y0 + 1)
    years, _ = _month_axis(cube.start, cube.n_time)
    sel = np.nonzero((years >= y0) & (years <= y1))[0]
    if sel.size != n_want:
        raise ValidationError(
            f"cube {cube.period_label()} covers {sel.size} of the "
            f"{n_want} months in {y0}:{y1}"
        )
    first, last = int(sel[0]), int(sel[-1])
    return dataclasses.replace(
        cube,
        start=cube.month_of(first),
        values=cube.values[first:last + 1].copy(),
        missing=cube.missing[first:last + 1].copy(),
    )
