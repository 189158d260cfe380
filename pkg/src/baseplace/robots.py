"""Robot description files and the bundled demo arms.

A robot file is YAML (JSON is valid YAML too)::

    name: desk-arm-4dof
    tool_axis: x                # flange axis used as the approach vector
    dh:                         # standard DH, one row per revolute joint
      - {a: 0.0, alpha: 1.5708, d: 0.30, theta_offset: 0.0}
      - {a: 0.35}
    joint_limits: [[-1.047, 1.047], [-0.3, 1.7]]   # radians, inclusive
    link_radii: [0.04, 0.03]                        # capsule radius per link
    base_footprint: [[-0.2, -0.2], [0.2, -0.2], [0.2, 0.2], [-0.2, 0.2]]
    mount_pose: {xyz: [0.2, 0.0, 0.575], rpy: [0, 0, 0]}   # or a 4x4 list

Omitted DH fields default to zero.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from baseplace.errors import ConfigError
from baseplace.kinematics import RobotModel, pose_matrix


def load_robot(path) -> RobotModel:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"robot file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
        return RobotModel.from_dict(data)
    except (KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"invalid robot file {path}: {exc}") from exc


def save_robot(model: RobotModel, path) -> None:
    Path(path).write_text(yaml.safe_dump(model.to_dict(), sort_keys=False))


def square_footprint(half: float = 0.2) -> np.ndarray:
    return np.array([[-half, -half], [half, -half], [half, half], [-half, half]])


def planar_arm(lengths, radius: float = 0.01, limits=(-np.pi, np.pi)) -> RobotModel:
    """Revolute chain in the xy-plane, all joint axes along z."""
    n = len(lengths)
    return RobotModel(
        dh=[[length, 0.0, 0.0, 0.0] for length in lengths],
        joint_limits=[limits] * n,
        link_radii=[radius] * n,
        base_footprint=square_footprint(),
        name=f"planar-{n}r",
    )


def snake_arm_6dof(link: float = 0.2, radius: float = 0.01) -> RobotModel:
    """Six equal links with alternating twist; straight along x at q = 0."""
    alphas = [np.pi / 2, -np.pi / 2] * 3
    return RobotModel(
        dh=[[link, alpha, 0.0, 0.0] for alpha in alphas],
        joint_limits=[(-np.pi, np.pi)] * 6,
        link_radii=[radius] * 6,
        base_footprint=square_footprint(),
        name="snake-6dof",
    )


def ur_like_6dof() -> RobotModel:
    """Six-axis arm with UR5-style DH offsets and a spherical-ish wrist."""
    rows = [
        [0.0, np.pi / 2, 0.089, 0.0],
        [-0.425, 0.0, 0.0, 0.0],
        [-0.392, 0.0, 0.0, 0.0],
        [0.0, np.pi / 2, 0.109, 0.0],
        [0.0, -np.pi / 2, 0.095, 0.0],
        [0.0, 0.0, 0.082, 0.0],
    ]
    return RobotModel(
        dh=rows,
        joint_limits=[(-2 * np.pi, 2 * np.pi)] * 6,
        link_radii=[0.06, 0.05, 0.04, 0.035, 0.035, 0.03],
        base_footprint=square_footprint(0.3),
        mount_pose=pose_matrix((0.2, 0.0, 0.4)),
        name="ur-like-6dof",
    )


def desk_arm_4dof() -> RobotModel:
    """Yaw column plus three pitch joints, tool along the last link.

    Sized for the synthetic washbasin scene: the tool tip reaches a
    0.8 m high counter from a base parked in front of it.
    """
    return RobotModel(
        dh=[
            [0.0, np.pi / 2, 0.30, 0.0],
            [0.35, 0.0, 0.0, 0.0],
            [0.30, 0.0, 0.0, 0.0],
            [0.12, 0.0, 0.0, 0.0],
        ],
        joint_limits=[(-np.pi / 3, np.pi / 3), (-0.3, 1.7), (-2.7, 0.0), (-2.7, 0.3)],
        link_radii=[0.03, 0.02, 0.015, 0.01],
        base_footprint=square_footprint(0.2),
        mount_pose=pose_matrix((0.2, 0.0, 0.575)),
        tool_axis="x",
        name="desk-arm-4dof",
    )
