"""Shared fixtures for the solver tests."""

import os
import sys
from typing import List

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.models.grid_models import Grid, Viewpoint
from src.models.obstacle_models import BallSpec, BoxSpec, ConeSpec, MaxSpec, MinSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid2d():
    return Grid.square(41, dim=2)


@pytest.fixture
def grid3d():
    return Grid.square(13, dim=3)


def random_primitive(rng: np.random.Generator, dim: int):
    """A random cone, ball or box centred inside [-1, 1]^dim."""
    center = rng.uniform(-0.8, 0.8, size=dim).tolist()
    kind = rng.integers(0, 3)
    if kind == 0:
        return ConeSpec(center=center, slope=float(rng.uniform(0.5, 2.0)), apex=float(rng.uniform(-0.2, 0.4)))
    if kind == 1:
        return BallSpec(center=center, radius=float(rng.uniform(0.05, 0.4)))
    return BoxSpec(center=center, radius=float(rng.uniform(0.05, 0.3)),
                   weights=rng.uniform(0.5, 2.0, size=dim).tolist())


def random_obstacle(rng: np.random.Generator, dim: int, count: int = 3):
    """max or min over a few random primitives."""
    children = [random_primitive(rng, dim) for _ in range(count)]
    if rng.random() < 0.7:
        return MaxSpec(children=children)
    return MinSpec(children=children)


def random_viewpoint(rng: np.random.Generator, dim: int, on_grid: bool = False, grid: Grid = None) -> Viewpoint:
    """A random viewpoint in [-1, 1]^dim, optionally snapped to a node of grid."""
    if on_grid:
        idx = [int(rng.integers(0, n)) for n in grid.n]
        return Viewpoint(x_star=(grid.lo_array + np.asarray(idx) * grid.spacing).tolist())
    return Viewpoint(x_star=rng.uniform(-1.0, 1.0, size=dim).tolist())


def scene_cases(seed: int, count: int) -> List[tuple]:
    """(dim, seed) pairs alternating between 2D and 3D."""
    return [(2 if k % 2 == 0 else 3, seed + k) for k in range(count)]
