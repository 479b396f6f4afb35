"""Sliding-window training samples over node anomaly series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import AnomalyCube
from .errors import ValidationError
from .grid import NodeId
from .months import Month, month_range


@dataclass
class SampleSet:
    """Model-ready windows: w input months and H target months per sample.

    inputs[s, :, n] holds months s..s+w-1 of node n and node_targets[s, :, n]
    months s+w..s+w+H-1. start_months labels each sample by the calendar
    month of its first input. Samples whose span touched a missing value
    were dropped; n_dropped counts them.
    """

    node_ids: list[NodeId]
    window: int
    horizon: int
    inputs: np.ndarray        # float32 [S, w, N]
    node_targets: np.ndarray  # float32 [S, H, N]
    start_months: list[Month]
    n_dropped: int = 0

    def __len__(self) -> int:
        return int(self.inputs.shape[0])


def make_samples(anoms: AnomalyCube, nodes: list[NodeId], window: int, horizon: int) -> SampleSet:
    """Cut every possible (input window, target block) pair from the cube.

    With no missing data the sample count is T - window - horizon + 1.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    if not nodes:
        raise ValueError("empty node list")
    T = anoms.n_time
    span = window + horizon
    if T < span:
        raise ValidationError(
            f"cube has {T} months but window+horizon={span}; nothing to sample"
        )
    ii = np.array([i for i, _ in nodes])
    jj = np.array([j for _, j in nodes])
    series = np.ascontiguousarray(anoms.values[:, ii, jj])  # [T, N] float32
    miss = anoms.missing[:, ii, jj]

    blocks = np.lib.stride_tricks.sliding_window_view(series, span, axis=0)  # [S, N, span]
    blocks = blocks.transpose(0, 2, 1)  # [S, span, N]
    bad = np.lib.stride_tricks.sliding_window_view(miss, span, axis=0).any(axis=(1, 2))
    keep = ~bad

    kept = np.ascontiguousarray(blocks[keep])
    months = month_range(anoms.start, blocks.shape[0])
    start_months = [m for m, ok in zip(months, keep) if ok]
    return SampleSet(
        node_ids=list(nodes),
        window=window,
        horizon=horizon,
        inputs=kept[:, :window, :].copy(),
        node_targets=kept[:, window:, :].copy(),
        start_months=start_months,
        n_dropped=int(bad.sum()),
    )
