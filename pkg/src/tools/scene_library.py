"""
Scene Library Module

This module reads and writes scene files and provides the built-in example
scenes: the cone convergence problem, the four-obstacle plane, two buildings
in 3D, the 1D closed-form case, the two-point distance obstacle and a wall
between two viewpoints.
"""

import logging
import os
from typing import Callable, Dict, List

import yaml
from pydantic import ValidationError

from src.models.grid_models import Grid, Viewpoint
from src.models.obstacle_models import (
    AnalyticSpec,
    BallSpec,
    BoxSpec,
    ConeSpec,
    MaxSpec,
    MinSpec,
)
from src.models.scene_models import SceneConfig
from src.utils.validation_utils import ConfigError, FieldIOError, config_error_from_validation, parse_yaml_text

# Set up logging
logger = logging.getLogger(__name__)


def parse_scene(text: str, source: str = "<string>") -> SceneConfig:
    """
    Build a SceneConfig from YAML text.

    Raises:
        SceneParseError: If the text is not valid YAML.
        ConfigError: If the document does not describe a valid scene.
    """
    data = parse_yaml_text(text, source)
    try:
        return SceneConfig.model_validate(data)
    except ValidationError as e:
        raise config_error_from_validation(e) from e


def load_scene(path: str) -> SceneConfig:
    """
    Read a scene file.

    Relative point-cloud paths are resolved against the scene file's directory.

    Raises:
        FieldIOError: If the file cannot be read.
        SceneParseError: On a YAML syntax error.
        ConfigError: On an invalid scene.
    """
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise FieldIOError(f"cannot read scene {path}: {e}") from e

    scene = parse_scene(text, source=path)
    _resolve_cloud_paths(scene.obstacle, os.path.dirname(os.path.abspath(path)))
    logger.info(f"Loaded scene '{scene.name}' from {path}: grid {scene.grid.shape}, "
                f"{len(scene.viewpoints)} viewpoint(s)")
    return scene


def _resolve_cloud_paths(spec, base_dir: str) -> None:
    if spec.kind == "point-cloud" and spec.path is not None and not os.path.isabs(spec.path):
        candidate = os.path.join(base_dir, spec.path)
        if os.path.exists(candidate):
            spec.path = candidate
    for child in spec.children_specs():
        _resolve_cloud_paths(child, base_dir)


def _has_analytic(spec) -> bool:
    return isinstance(spec, AnalyticSpec) or any(_has_analytic(c) for c in spec.children_specs())


def dump_scene(scene: SceneConfig) -> str:
    """
    Canonical YAML text of a scene: every field spelled out, keys sorted.

    parse_scene(dump_scene(s)) == s, and dumping that again gives the same text.

    Raises:
        ConfigError: If the obstacle holds an analytic callback, which has no
            text form.
    """
    if _has_analytic(scene.obstacle):
        raise ConfigError("analytic obstacles cannot be written to a scene file", field="obstacle")
    data = scene.model_dump(mode="json", exclude_none=True)
    return yaml.safe_dump(data, sort_keys=True, default_flow_style=None)


def save_scene(scene: SceneConfig, path: str) -> str:
    """Write dump_scene(scene) to path."""
    try:
        out_dir = os.path.dirname(path)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        with open(path, "w") as f:
            f.write(dump_scene(scene))
    except OSError as e:
        raise FieldIOError(f"cannot write scene {path}: {e}") from e
    logger.info(f"Wrote scene '{scene.name}' to {path}")
    return path


def cone_scene(N: int = 128) -> SceneConfig:
    """Cone g = -|x| on [-2, 2]^2 seen from (-1, -1), halfway along the diagonal to the corner."""
    return SceneConfig(
        name="cone",
        description="Cone obstacle g(x) = -|x| on [-2, 2]^2 seen from (-1, -1); the convergence benchmark.",
        grid=Grid.square(N, dim=2, lo=-2.0, hi=2.0),
        obstacle=ConeSpec(center=[0.0, 0.0], slope=1.0, apex=0.0),
        viewpoints=[Viewpoint(x_star=[-1.0, -1.0])],
        alpha=0.0,
    )


def four_obstacles_scene(N: int = 201) -> SceneConfig:
    """
    Two squares and two discs, g = max of the negated primitives.

    At the -0.5 level the obstacles are squares of side 0.5 and 1 centred at
    (-1.5, -0.2) and (0, 0.3) and discs of radius 0.5 centred at
    (-0.3, 1.5) and (-0.3, -1.4).
    """
    obstacle = MaxSpec(children=[
        BoxSpec(center=[-1.5, -0.2], radius=0.0, weights=[2.0, 2.0]),
        BoxSpec(center=[0.0, 0.3], radius=0.0),
        BallSpec(center=[-0.3, 1.5], radius=0.0),
        BallSpec(center=[-0.3, -1.4], radius=0.0),
    ])
    return SceneConfig(
        name="four_obstacles",
        description="Two squares and two discs seen from two viewpoints, visibility at the -0.5 level.",
        grid=Grid.square(N, dim=2, lo=-2.0, hi=2.0),
        obstacle=obstacle,
        viewpoints=[Viewpoint(x_star=[-1.5, -1.4]), Viewpoint(x_star=[1.5, -0.3])],
        semantics="any",
        alpha=-0.5,
    )


def two_buildings_scene(N: int = 64) -> SceneConfig:
    """Two boxes standing on the ground (open toward -z) with a camera between them."""
    obstacle = MaxSpec(children=[
        BoxSpec(center=[-2.0, 0.0, 0.0], radius=1.0, signed_axes=[2]),
        BoxSpec(center=[3.0, 4.0, 0.0], radius=2.0, signed_axes=[2]),
    ])
    return SceneConfig(
        name="two_buildings",
        description="360 degree camera between two buildings.",
        grid=Grid(lo=[-4.0, -3.0, 0.0], hi=[6.0, 7.0, 4.0], n=[N, N, N]),
        obstacle=obstacle,
        viewpoints=[Viewpoint(x_star=[0.5, 2.0, 0.5])],
        alpha=0.0,
    )


def regularity_1d_scene(N: int = 401) -> SceneConfig:
    """g(x) = |x + 1| on [-3, 1] seen from 0."""
    return SceneConfig(
        name="regularity_1d",
        description="Closed-form 1D case: u = 1 on [-2, 0], w = 0 on [-1, 0].",
        grid=Grid(lo=[-3.0], hi=[1.0], n=[N]),
        obstacle=ConeSpec(center=[-1.0], slope=-1.0, apex=0.0),
        viewpoints=[Viewpoint(x_star=[0.0])],
        alpha=1.0,
    )


def two_points_scene(N: int = 101, clamp: bool = False) -> SceneConfig:
    """Distance to two points, seen from a point on its 0.3 level set."""
    obstacle = MinSpec(children=[
        ConeSpec(center=[-0.5, 0.0], slope=-1.0),
        ConeSpec(center=[0.5, 0.0], slope=-1.0),
    ])
    return SceneConfig(
        name="two_points_clamped" if clamp else "two_points",
        description="Distance to two points; the lower envelope jumps at the viewpoint unless clamped.",
        grid=Grid.square(N, dim=2),
        obstacle=obstacle,
        viewpoints=[Viewpoint(x_star=[-0.5, 0.3])],
        alpha=0.3,
        clamp_at_viewpoint=clamp,
    )


def wall_scene(N: int = 101) -> SceneConfig:
    """Thin wall between two viewpoints; the seen-by-both set splits in two."""
    return SceneConfig(
        name="wall",
        description="Wall |x1| <= 0.05, |x2| <= 0.5 flanked by viewpoints (-0.5, 0) and (0.5, 0).",
        grid=Grid.square(N, dim=2),
        obstacle=BoxSpec(center=[0.0, 0.0], radius=0.05, weights=[1.0, 0.1]),
        viewpoints=[Viewpoint(x_star=[-0.5, 0.0]), Viewpoint(x_star=[0.5, 0.0])],
        semantics="all",
        alpha=0.0,
    )


EXAMPLE_SCENES: Dict[str, Callable[..., SceneConfig]] = {
    "cone": cone_scene,
    "four_obstacles": four_obstacles_scene,
    "two_buildings": two_buildings_scene,
    "regularity_1d": regularity_1d_scene,
    "two_points": two_points_scene,
    "two_points_clamped": lambda N=101: two_points_scene(N, clamp=True),
    "wall": wall_scene,
}


def example_names() -> List[str]:
    return sorted(EXAMPLE_SCENES)


def example_scene(name: str, **kwargs) -> SceneConfig:
    """
    Built-in scene by name.

    Raises:
        ConfigError: For an unknown name.
    """
    try:
        factory = EXAMPLE_SCENES[name]
    except KeyError:
        raise ConfigError(f"unknown example '{name}' (known: {', '.join(example_names())})", field="name")
    return factory(**kwargs)
