"""Shared builders for the test suite."""

import numpy as np

from ensograph.cube import AnomalyCube, SstCube
from ensograph.graph import GraphLearnConfig
from ensograph.grid import GridSpec
from ensograph.stgnn import ModelConfig


def small_grid(n_lat=3, n_lon=4, lat0=-2.0, lon0=190.0, step=2.0):
    lats = tuple(lat0 + step * i for i in range(n_lat))
    lons = tuple(lon0 + step * j for j in range(n_lon))
    return GridSpec(lats, lons)


def oni_grid():
    """The 130-cell 2-degree grid covering the index box exactly."""
    return GridSpec(
        tuple(float(v) for v in range(-4, 5, 2)),
        tuple(float(v) for v in range(190, 241, 2)),
    )


def random_sst(rng, grid=None, n_time=48, start=(1950, 1), missing_frac=0.0):
    grid = grid or small_grid()
    values = 20.0 + 2.0 * rng.standard_normal((n_time, grid.n_lat, grid.n_lon))
    missing = rng.random(values.shape) < missing_frac
    values = np.where(missing, 0.0, values)
    return SstCube(grid, start, values.astype(np.float32), missing)


def random_anoms(rng, grid=None, n_time=48, start=(1950, 1), scale=1.0):
    grid = grid or small_grid()
    values = scale * rng.standard_normal((n_time, grid.n_lat, grid.n_lon))
    return AnomalyCube(grid, start, values.astype(np.float32),
                       np.zeros(values.shape, dtype=bool))


def tiny_config(n_nodes=6, horizon=2, **kw):
    base = dict(
        window=3,
        layers=2,
        residual_channels=4,
        conv_channels=4,
        skip_channels=4,
        end_channels=8,
        kernel_size=2,
        dilations=(1, 1),
        mixhop_depth=2,
        beta=0.05,
        graph=GraphLearnConfig(embed_dim=3, alpha=3.0, topk=min(3, n_nodes)),
        seed=0,
    )
    base.update(kw)
    return ModelConfig(n_nodes=n_nodes, horizon=horizon, **base)
