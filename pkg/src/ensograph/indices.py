"""Area-mean SST anomaly indices (ONI and relatives).

The index pipeline is: select the nodes of a region box, take the
area-weighted mean anomaly per month, then apply a centered k-month
running mean. Each smoothed value is labeled by the center month of its
window, so the series start advances by floor(k/2) months.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import AnomalyCube
from .errors import ValidationError
from .grid import ONI_BOX, NodeId, RegionBox, node_weights, region_nodes
from .months import Month, add_months, check_ym, format_ym, month_range


@dataclass
class IndexSeries:
    """Monthly scalar index in degC, labeled from a start month."""

    start: Month
    values: np.ndarray
    k: int = 1  # smoothing window that produced the series

    def __post_init__(self):
        self.start = check_ym(self.start)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("index series must be a non-empty 1-d array")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"k must be odd and >= 1, got {self.k}")

    def __len__(self) -> int:
        return int(self.values.size)

    def months(self) -> list[Month]:
        return month_range(self.start, len(self))

    def month_of(self, i: int) -> Month:
        return add_months(self.start, i)


def area_mean(anoms: AnomalyCube, nodes: list[NodeId], weighting: str = "coslat") -> np.ndarray:
    """Weighted mean anomaly over the nodes, one value per month.

    Missing cells are excluded month by month; a month where every node is
    missing has no defined mean and raises ValidationError.
    """
    if not nodes:
        raise ValueError("empty node list")
    ii = np.array([i for i, _ in nodes])
    jj = np.array([j for _, j in nodes])
    vals = anoms.values[:, ii, jj].astype(np.float64)  # [T, n]
    miss = anoms.missing[:, ii, jj]
    w = node_weights(anoms.grid, nodes, weighting)
    weights = np.where(miss, 0.0, w[None, :])
    denom = weights.sum(axis=1)
    dead = denom <= 0.0
    if dead.any():
        t = int(np.nonzero(dead)[0][0])
        raise ValidationError(
            f"all nodes missing in month {format_ym(anoms.month_of(t))}"
        )
    return (weights * np.where(miss, 0.0, vals)).sum(axis=1) / denom


def running_mean(values, k: int, start: Month) -> IndexSeries:
    """Centered k-month running mean labeled by the window's center month.

    k must be odd so the label sits exactly on the center: an even window
    has no center month.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("running_mean expects a 1-d series")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd and >= 1, got {k}")
    if k > values.size:
        raise ValueError(f"window k={k} longer than series ({values.size})")
    if k == 1:
        out = values.copy()
    else:
        csum = np.concatenate([[0.0], np.cumsum(values)])
        out = (csum[k:] - csum[:-k]) / k
    return IndexSeries(add_months(start, k // 2), out, k=k)


def oni(
    anoms: AnomalyCube,
    box: RegionBox = ONI_BOX,
    k: int = 3,
    weighting: str = "coslat",
) -> IndexSeries:
    """Smoothed area-mean anomaly index over a region box.

    With the defaults this is the ONI: cos-lat weighted mean over the
    5S-5N, 170W-120W box, smoothed by a centered 3-month running mean.
    """
    nodes = region_nodes(anoms.grid, box)
    series = area_mean(anoms, nodes, weighting)
    return running_mean(series, k, anoms.start)
