"""Toy articulated body: a 24-joint kinematic tree with box-shaped bones.

The tree mirrors the usual SMPL joint layout (pelvis root plus 23 joints),
so a local pose is 23 quaternions (92 numbers). Each bone carries 8 box
corners rigidly attached to its joint frame; there are no blend weights.

Axes: x forward, y left, z up. Lengths in meters.

Skeleton JSON schema::

    {
      "names": [str, ...],                 # J+1 joint names
      "parents": [int, ...],               # J+1 parent indices, root = -1
      "offsets": [[x, y, z], ...],         # J+1 rest offsets from the parent joint
      "vertex_template": [[[x, y, z], ...], ...],   # per-bone vertex lists, bone frame
      "shape_basis": [[...10 floats...], ...]       # J+1 rows: bone length = 1 + row . beta
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rot3
from .rigid import GlobalMotion, GlobalPose

N_BETAS = 10
SHAPE_STEP = 0.05

JOINT_NAMES = (
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2", "l_ankle",
    "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar", "r_collar", "head",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hand", "r_hand",
)
JOINT = {name: i for i, name in enumerate(JOINT_NAMES)}

_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

_OFFSETS = (
    (0.0, 0.0, 0.0),
    (0.0, 0.09, -0.06), (0.0, -0.09, -0.06), (0.0, 0.0, 0.11),
    (0.0, 0.0, -0.40), (0.0, 0.0, -0.40), (0.0, 0.0, 0.13),
    (0.0, 0.0, -0.40), (0.0, 0.0, -0.40), (0.0, 0.0, 0.05),
    (0.12, 0.0, -0.05), (0.12, 0.0, -0.05), (0.0, 0.0, 0.21),
    (0.0, 0.08, 0.13), (0.0, -0.08, 0.13), (0.02, 0.0, 0.09),
    (0.0, 0.10, 0.03), (0.0, -0.10, 0.03), (0.0, 0.26, 0.0),
    (0.0, -0.26, 0.0), (0.0, 0.25, 0.0), (0.0, -0.25, 0.0),
    (0.0, 0.08, 0.0), (0.0, -0.08, 0.0),
)

# Shape coefficient k scales the rest offsets of these joints by (1 + 0.05 * beta_k).
SHAPE_GROUPS = (
    tuple(range(1, 24)),                   # overall size
    (1, 2, 4, 5, 7, 8, 10, 11),            # legs
    (3, 6, 9, 12),                         # spine
    (16, 17, 18, 19, 20, 21, 22, 23),      # arms
    (1, 4, 7, 10),                         # left leg
    (2, 5, 8, 11),                         # right leg
    (13, 16, 18, 20, 22),                  # left arm
    (14, 17, 19, 21, 23),                  # right arm
    (12, 15),                              # neck and head
    (1, 2, 13, 14),                        # hip and shoulder width
)

# Leaf bones get a box along this direction instead of toward a child.
_LEAF_EXTENT = {
    "l_foot": (0.06, 0.0, 0.0), "r_foot": (0.06, 0.0, 0.0), "head": (0.0, 0.0, 0.20),
    "l_hand": (0.0, 0.08, 0.0), "r_hand": (0.0, -0.08, 0.0),
}
_HALF_WIDTH = {"pelvis": 0.10, "spine1": 0.10, "spine2": 0.10, "spine3": 0.10, "head": 0.08}


class ShapeMismatch(ValueError):
    pass


def _box(segment: np.ndarray, half_width: float) -> np.ndarray:
    """8 corners of a box from the origin along ``segment``."""
    d = segment / np.linalg.norm(segment)
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    corners = []
    for end in (0.0, 1.0):
        for s1 in (-1.0, 1.0):
            for s2 in (-1.0, 1.0):
                corners.append(end * segment + half_width * (s1 * e1 + s2 * e2))
    return np.array(corners)


@dataclass(frozen=True, eq=False)
class BodySkeleton:
    parents: np.ndarray          # (J+1,)
    offsets: np.ndarray          # (J+1, 3)
    vertex_bone: np.ndarray      # (N,) bone index of each vertex
    vertex_local: np.ndarray     # (N, 3) vertex position in its bone frame
    shape_basis: np.ndarray      # (J+1, 10)
    names: tuple[str, ...] = JOINT_NAMES

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int)
        n = parents.shape[0]
        if parents[0] != -1 or np.any(parents[1:] < 0) or np.any(parents[1:] >= np.arange(1, n)):
            raise ShapeMismatch("parents must form a tree rooted at 0 with parent < child")
        if self.offsets.shape != (n, 3) or self.shape_basis.shape != (n, N_BETAS):
            raise ShapeMismatch("offsets / shape_basis do not match the joint count")
        if self.vertex_local.shape != (self.vertex_bone.shape[0], 3):
            raise ShapeMismatch("vertex arrays disagree")
        if self.vertex_bone.shape[0] < 4 * n:
            raise ShapeMismatch(f"need at least {4 * n} vertices")
        for a in (self.offsets, self.vertex_local, self.shape_basis):
            a.setflags(write=False)
        object.__setattr__(self, "parents", parents)

    @property
    def n_joints(self) -> int:
        """Articulated joints (excluding the root)."""
        return self.parents.shape[0] - 1

    @property
    def n_vertices(self) -> int:
        return self.vertex_bone.shape[0]

    @classmethod
    def default(cls) -> "BodySkeleton":
        offsets = np.array(_OFFSETS)
        first_child = {}
        for k, p in enumerate(_PARENTS):
            if p >= 0:
                first_child.setdefault(p, k)
        bones, local = [], []
        for k, name in enumerate(JOINT_NAMES):
            seg = offsets[first_child[k]] if k in first_child else np.array(_LEAF_EXTENT[name])
            if k == 0:
                seg = np.array([0.0, 0.0, 0.11])
            local.append(_box(seg, _HALF_WIDTH.get(name, 0.04)))
            bones.append(np.full(8, k))
        basis = np.zeros((len(JOINT_NAMES), N_BETAS))
        for k, group in enumerate(SHAPE_GROUPS):
            basis[list(group), k] = SHAPE_STEP
        return cls(
            np.array(_PARENTS), offsets, np.concatenate(bones), np.concatenate(local), basis
        )

    def to_json(self) -> dict:
        template = [
            self.vertex_local[self.vertex_bone == k].tolist() for k in range(len(self.parents))
        ]
        return {
            "names": list(self.names),
            "parents": self.parents.tolist(),
            "offsets": self.offsets.tolist(),
            "vertex_template": template,
            "shape_basis": self.shape_basis.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict | str | Path) -> "BodySkeleton":
        if not isinstance(obj, dict):
            obj = json.loads(Path(obj).read_text())
        template = obj["vertex_template"]
        if len(template) != len(obj["parents"]):
            raise ShapeMismatch("vertex_template needs one list per bone")
        bones = np.concatenate([np.full(len(v), k) for k, v in enumerate(template)])
        local = np.concatenate([np.asarray(v, dtype=float).reshape(-1, 3) for v in template])
        names = tuple(obj.get("names", [f"j{i}" for i in range(len(obj["parents"]))]))
        return cls(
            np.asarray(obj["parents"], dtype=int),
            np.asarray(obj["offsets"], dtype=float),
            bones.astype(int),
            local,
            np.asarray(obj["shape_basis"], dtype=float),
            names,
        )

    def shaped_offsets(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (N_BETAS,):
            raise ShapeMismatch(f"beta must have {N_BETAS} entries, got {beta.shape}")
        return self.offsets * (1.0 + self.shape_basis @ beta)[:, None]


@dataclass(frozen=True, eq=False)
class PosedBody:
    joint_pos: np.ndarray   # (J+1, 3)
    vertices: np.ndarray    # (N, 3)


def pose_frames(
    skel: BodySkeleton,
    quats: np.ndarray,
    beta: np.ndarray,
    R: np.ndarray | None = None,
    T: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward kinematics over frames.

    ``quats`` is ``(F, J, 4)``; ``R``/``T`` are the per-frame global pose
    (identity when omitted). Returns joints ``(F, J+1, 3)`` and vertices
    ``(F, N, 3)``.
    """
    quats = np.asarray(quats, dtype=float)
    if quats.ndim != 3 or quats.shape[1:] != (skel.n_joints, 4):
        raise ShapeMismatch(f"local pose must be (F, {skel.n_joints}, 4), got {quats.shape}")
    n_frames = quats.shape[0]
    local = rot3.quat_to_mat(quats)
    offsets = skel.shaped_offsets(beta)
    n = skel.n_joints + 1
    world = np.empty((n_frames, n, 3, 3))
    pos = np.empty((n_frames, n, 3))
    world[:, 0] = np.eye(3) if R is None else np.broadcast_to(R, (n_frames, 3, 3))
    pos[:, 0] = 0.0
    for k in range(1, n):
        p = skel.parents[k]
        world[:, k] = world[:, p] @ local[:, k - 1]
        pos[:, k] = pos[:, p] + world[:, p] @ offsets[k]
    verts = (
        np.einsum("fnij,nj->fni", world[:, skel.vertex_bone], skel.vertex_local)
        + pos[:, skel.vertex_bone]
    )
    if T is not None:
        T = np.broadcast_to(np.asarray(T, dtype=float), (n_frames, 3))
        pos = pos + T[:, None]
        verts = verts + T[:, None]
    return pos, verts


def forward_kinematics(
    skel: BodySkeleton, pose: np.ndarray, beta: np.ndarray, g: GlobalPose | None = None
) -> PosedBody:
    g = GlobalPose.identity() if g is None else g
    pose = np.asarray(pose, dtype=float)
    joints, verts = pose_frames(skel, pose[None], beta, g.R[None], g.T[None])
    return PosedBody(joints[0], verts[0])


def mesh_offset(
    skel: BodySkeleton, pose: np.ndarray, beta: np.ndarray, dg: GlobalMotion
) -> PosedBody:
    """Body posed with the motion itself as its global pose."""
    return forward_kinematics(skel, pose, beta, GlobalPose(dg.dR, dg.dT))


def rest_vertices(skel: BodySkeleton, quats: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Vertices at identity global pose, ``(F, N, 3)``.

    Every posed body is ``R @ v + T`` of these, which is what the vertex
    loss and the vertex metrics use.
    """
    return pose_frames(skel, quats, beta)[1]
