"""Serial-chain kinematics for standard (distal) Denavit-Hartenberg arms.

Each DH row is ``(a, alpha, d, theta_offset)`` and contributes the transform
``Rz(q + theta_offset) @ Tz(d) @ Tx(a) @ Rx(alpha)``. Link ``i`` is modelled
as a capsule along the segment from frame ``i-1`` to frame ``i`` with radius
``link_radii[i]``.

The arm-root frame is the frame the first DH row is applied in. The mobile
base frame sits below it, related by ``mount_pose``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from baseplace.errors import InputError
from baseplace.voxels import _OFFSET as _PACK_OFFSET
from baseplace.voxels import SENTINEL, to_tuples

_TOOL_AXES = {"x": 0, "y": 1, "z": 2}
_LIMIT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic chain, capsule link geometry and base footprint.

    Attributes:
        dh: ``(n, 4)`` rows of ``a, alpha, d, theta_offset`` (metres, radians).
        joint_limits: ``(n, 2)`` closed intervals ``[lo, hi]`` in radians.
        link_radii: ``(n,)`` capsule radius per link, metres.
        base_footprint: ``(k, 2)`` convex polygon in the base frame,
            stored counterclockwise.
        mount_pose: ``4x4`` transform from the base frame to the arm root.
        tool_axis: column of the flange rotation used as approach vector.
    """

    dh: np.ndarray
    joint_limits: np.ndarray
    link_radii: np.ndarray
    base_footprint: np.ndarray
    mount_pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    tool_axis: str = "z"
    name: str = "robot"

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=float).reshape(-1, 4)
        limits = np.asarray(self.joint_limits, dtype=float).reshape(-1, 2)
        radii = np.asarray(self.link_radii, dtype=float).reshape(-1)
        footprint = np.asarray(self.base_footprint, dtype=float).reshape(-1, 2)
        mount = np.asarray(self.mount_pose, dtype=float)
        n = len(dh)
        if n == 0:
            raise InputError("robot needs at least one joint")
        if len(limits) != n or len(radii) != n:
            raise InputError(
                f"joint count mismatch: {n} DH rows, {len(limits)} limits, {len(radii)} radii"
            )
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise InputError("every joint limit must satisfy lo < hi")
        if np.any(radii <= 0):
            raise InputError("link radii must be positive")
        if mount.shape != (4, 4):
            raise InputError("mount_pose must be a 4x4 transform")
        if self.tool_axis not in _TOOL_AXES:
            raise InputError(f"tool_axis must be one of x, y, z; got {self.tool_axis!r}")
        footprint = _ccw_convex(footprint)
        for name, value in (
            ("dh", dh),
            ("joint_limits", limits),
            ("link_radii", radii),
            ("base_footprint", footprint),
            ("mount_pose", mount),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_joints(self) -> int:
        return len(self.dh)

    @property
    def link_lengths(self) -> np.ndarray:
        return np.hypot(self.dh[:, 0], self.dh[:, 2])

    @property
    def max_stretch(self) -> float:
        """Length of the fully extended chain (upper bound on reach)."""
        return float(self.link_lengths.sum())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dh": [dict(zip(("a", "alpha", "d", "theta_offset"), map(float, row))) for row in self.dh],
            "joint_limits": self.joint_limits.tolist(),
            "link_radii": self.link_radii.tolist(),
            "base_footprint": self.base_footprint.tolist(),
            "mount_pose": self.mount_pose.tolist(),
            "tool_axis": self.tool_axis,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RobotModel":
        rows = []
        for row in data["dh"]:
            if isinstance(row, dict):
                rows.append([row.get("a", 0.0), row.get("alpha", 0.0), row.get("d", 0.0), row.get("theta_offset", 0.0)])
            else:
                rows.append(list(row))
        mount = data.get("mount_pose")
        if mount is None:
            mount = np.eye(4)
        elif isinstance(mount, dict):
            mount = pose_matrix(mount.get("xyz", (0, 0, 0)), mount.get("rpy", (0, 0, 0)))
        return cls(
            dh=rows,
            joint_limits=data["joint_limits"],
            link_radii=data["link_radii"],
            base_footprint=data["base_footprint"],
            mount_pose=mount,
            tool_axis=data.get("tool_axis", "z"),
            name=data.get("name", "robot"),
        )

    def fingerprint(self) -> str:
        """SHA-256 over the numeric description; names do not count."""
        payload = self.to_dict()
        payload.pop("name")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class EndEffectorPose:
    position: np.ndarray
    rotation: np.ndarray
    approach: np.ndarray


def _ccw_convex(poly: np.ndarray) -> np.ndarray:
    if len(poly) < 3:
        raise InputError("polygon needs at least 3 vertices")
    edges = np.roll(poly, -1, axis=0) - poly
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    if np.all(cross <= 1e-12):
        poly = poly[::-1].copy()
        cross = -cross[::-1]
    if np.any(cross < -1e-12):
        raise InputError("polygon must be convex")
    return poly


def pose_matrix(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous transform from a translation and roll-pitch-yaw angles."""
    r, p, y = rpy
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    T = np.eye(4)
    T[:3, :3] = [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
    T[:3, 3] = xyz
    return T


def dh_transform(a: float, alpha: float, d: float, theta) -> np.ndarray:
    """Standard DH transform; ``theta`` may be an array, giving ``(..., 4, 4)``."""
    theta = np.asarray(theta, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    T = np.zeros(theta.shape + (4, 4))
    T[..., 0, 0] = ct
    T[..., 0, 1] = -st * ca
    T[..., 0, 2] = st * sa
    T[..., 0, 3] = a * ct
    T[..., 1, 0] = st
    T[..., 1, 1] = ct * ca
    T[..., 1, 2] = -ct * sa
    T[..., 1, 3] = a * st
    T[..., 2, 1] = sa
    T[..., 2, 2] = ca
    T[..., 2, 3] = d
    T[..., 3, 3] = 1.0
    return T


def check_config(model: RobotModel, q, check_limits: bool = True) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (model.n_joints,):
        raise InputError(f"expected {model.n_joints} joint values, got shape {q.shape}")
    if check_limits:
        lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
        if np.any(q < lo - _LIMIT_TOL) or np.any(q > hi + _LIMIT_TOL):
            raise InputError("joint configuration outside joint limits")
    return q


def chain_frames(model: RobotModel, Q: np.ndarray, frame: str = "base") -> np.ndarray:
    """All joint frames for a batch of configurations.

    Returns ``(B, n + 1, 4, 4)``; index 0 is the arm root (identity when
    ``frame="root"``, ``mount_pose`` when ``frame="base"``).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    B, n = Q.shape
    frames = np.empty((B, n + 1, 4, 4))
    frames[:, 0] = model.mount_pose if frame == "base" else np.eye(4)
    for i, (a, alpha, d, offset) in enumerate(model.dh):
        frames[:, i + 1] = frames[:, i] @ dh_transform(a, alpha, d, Q[:, i] + offset)
    return frames


def forward_kinematics(model: RobotModel, q, frame: str = "base") -> EndEffectorPose:
    """Flange pose for one configuration.

    ``frame="base"`` includes the mount transform; ``frame="root"`` reports
    the pose in the arm-root frame that reachability maps are stored in.
    """
    q = check_config(model, q)
    T = chain_frames(model, q[None], frame)[0, -1]
    R = T[:3, :3].copy()
    return EndEffectorPose(position=T[:3, 3].copy(), rotation=R, approach=R[:, _TOOL_AXES[model.tool_axis]].copy())


def jacobian_from_frames(frames: np.ndarray) -> np.ndarray:
    """Geometric Jacobian ``(B, 6, n)`` from stacked chain frames."""
    z = frames[:, :-1, :3, 2]
    o = frames[:, :-1, :3, 3]
    p_end = frames[:, -1, :3, 3][:, None, :]
    lin = np.cross(z, p_end - o)
    return np.concatenate([lin, z], axis=2).transpose(0, 2, 1)


def jacobian(model: RobotModel, q, frame: str = "base") -> np.ndarray:
    """6 x n geometric Jacobian: linear rows first, then angular rows."""
    q = check_config(model, q)
    return jacobian_from_frames(chain_frames(model, q[None], frame))[0]


def manipulability_from_jacobian(J: np.ndarray) -> np.ndarray:
    """Yoshikawa measure on the task-relevant row block of ``(..., 6, n)``.

    Arms with six or more joints use all rows. Shorter arms use the linear
    rows only, since the full ``J @ J.T`` is singular for them. A square
    block uses ``|det J|`` directly. When the block has more rows than
    columns the Gram matrix ``J.T @ J`` is used, so the measure stays the
    product of the block's singular values.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[-1]
    block = J if n >= 6 else J[..., :3, :]
    if block.shape[-2] == n:
        # |det J| avoids squaring the condition number through the Gram matrix
        return np.abs(np.linalg.det(block))
    if block.shape[-2] < n:
        gram = block @ np.swapaxes(block, -1, -2)
    else:
        gram = np.swapaxes(block, -1, -2) @ block
    det = np.linalg.det(gram)
    return np.sqrt(np.clip(det, 0.0, None))


def manipulability(model: RobotModel, q) -> float:
    return float(manipulability_from_jacobian(jacobian(model, q)))


# -- occupancy -------------------------------------------------------------


def _link_keys(model: RobotModel, frames: np.ndarray, delta: float) -> list[np.ndarray]:
    """Per-link voxel keys, deduplicated per row and padded with SENTINEL."""
    origins = frames[:, :, :3, 3]
    out = []
    for i, (length, radius) in enumerate(zip(model.link_lengths, model.link_radii)):
        m = max(1, int(np.ceil(length / (delta / 2)))) if length > 0 else 1
        spacing = length / m
        t = np.linspace(0.0, 1.0, m + 1)[None, :, None]
        start, end = origins[:, i][:, None, :], origins[:, i + 1][:, None, :]
        pts = start + t * (end - start)
        # Any point on the axis lies within spacing/2 of a sample.
        pad = radius + spacing / 2 + 1e-12
        lo = np.floor((pts - pad) / delta).astype(np.int64)
        hi = np.floor((pts + pad) / delta).astype(np.int64)
        span = int((hi - lo).max())
        # Per-axis candidate cells: packed component bits and squared gap
        # from the sample to the cell slab (inf when past ``hi``).
        bits, gaps = [], []
        for axis, shift in zip(range(3), (42, 21, 0)):
            b_axis, g_axis = [], []
            for off in range(span + 1):
                idx = lo[..., axis] + off
                g = np.maximum(np.maximum(idx * delta - pts[..., axis], pts[..., axis] - (idx + 1) * delta), 0.0)
                g = np.where(idx > hi[..., axis], np.inf, g * g)
                b_axis.append((idx + _PACK_OFFSET) << shift)
                g_axis.append(g)
            bits.append(b_axis)
            gaps.append(g_axis)
        pad2 = pad * pad
        keys = []
        for ox, oy, oz in product(range(span + 1), repeat=3):
            k = bits[0][ox] | bits[1][oy] | bits[2][oz]
            # Keep the voxel only if the inflation ball reaches its box.
            k[gaps[0][ox] + gaps[1][oy] + gaps[2][oz] > pad2] = SENTINEL
            keys.append(k)
        keys = np.sort(np.concatenate(keys, axis=1), axis=1)
        dup = np.zeros_like(keys, dtype=bool)
        dup[:, 1:] = keys[:, 1:] == keys[:, :-1]
        keys[dup] = SENTINEL
        out.append(np.sort(keys, axis=1))
    return out


def _non_adjacent_pairs(model: RobotModel) -> list[tuple[int, int]]:
    # Zero-length links are skipped when deciding adjacency: the links on
    # either side of a coincident joint pair still touch.
    solid = [i for i, length in enumerate(model.link_lengths) if length > 1e-12]
    return [(solid[u], solid[v]) for u in range(len(solid)) for v in range(u + 2, len(solid))]


def _rows_intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    merged = np.sort(np.concatenate([a, b], axis=1), axis=1)
    same = (merged[:, 1:] == merged[:, :-1]) & (merged[:, 1:] != SENTINEL)
    return same.any(axis=1)


def occupancy_batch(model: RobotModel, frames: np.ndarray, delta: float, want_collision: bool = True):
    """Union occupancy and self-collision flags for a batch of chain frames.

    Returns ``(counts, keys, colliding)``: ``counts[b]`` keys of row ``b``
    are stored consecutively (sorted) in ``keys``.
    """
    per_link = _link_keys(model, frames, delta)
    B = frames.shape[0]
    colliding = np.zeros(B, dtype=bool)
    if want_collision:
        for i, j in _non_adjacent_pairs(model):
            colliding |= _rows_intersect(per_link[i], per_link[j])
    allk = np.sort(np.concatenate(per_link, axis=1), axis=1)
    keep = allk != SENTINEL
    keep[:, 1:] &= allk[:, 1:] != allk[:, :-1]
    return keep.sum(axis=1), allk[keep], colliding


def link_occupancy(model: RobotModel, q, delta: float, frame: str = "root") -> set[tuple[int, int, int]]:
    """Voxels touched by the arm's link capsules in configuration ``q``.

    Each link axis is sampled at spacing at most ``delta / 2`` and every
    sample is inflated by the link radius plus half the spacing, so the
    result is conservative for the whole capsule axis.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    q = check_config(model, q)
    frames = chain_frames(model, q[None], frame)
    _, keys, _ = occupancy_batch(model, frames, delta, want_collision=False)
    return to_tuples(keys)


def self_collision(model: RobotModel, q, delta: float) -> bool:
    if delta <= 0:
        raise InputError("delta must be positive")
    q = check_config(model, q)
    frames = chain_frames(model, q[None], "root")
    _, _, colliding = occupancy_batch(model, frames, delta)
    return bool(colliding[0])
