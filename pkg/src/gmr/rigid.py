"""Global poses, global motions and trajectory accumulation.

A global pose ``G = (R, T)`` places the body in the world; a global motion
``dG = (dA, dT)`` is the displacement from one frame to the next expressed in
the body frame of the earlier pose::

    G[i+1] = G[i] @ dG[i]     i.e.   R' = R dR,   T' = R dT + T

Motions are kept as (axis-angle, translation) pairs; 4x4 matrices are built
only on request. Everything is in meters and radians.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rot3


def _as3(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise rot3.InvalidInput(f"expected a 3-vector, got shape {x.shape}")
    rot3._check_finite(x, "vector")
    return x


@dataclass(frozen=True, eq=False)
class GlobalPose:
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        rot3.check_rotation(R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", _as3(self.T))

    @classmethod
    def identity(cls) -> "GlobalPose":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.R
        out[:3, 3] = self.T
        return out

    def inverse(self) -> "GlobalPose":
        return GlobalPose(self.R.T, -self.R.T @ self.T)

    def __matmul__(self, other: "GlobalPose") -> "GlobalPose":
        return GlobalPose(self.R @ other.R, self.R @ other.T + self.T)


@dataclass(frozen=True, eq=False)
class GlobalMotion:
    dA: np.ndarray
    dT: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dA", rot3.wrap_aa(_as3(self.dA)))
        object.__setattr__(self, "dT", _as3(self.dT))

    @classmethod
    def identity(cls) -> "GlobalMotion":
        return cls(np.zeros(3), np.zeros(3))

    @property
    def dR(self) -> np.ndarray:
        return rot3.aa_to_mat(self.dA)

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.dR
        out[:3, 3] = self.dT
        return out


@dataclass(frozen=True, eq=False)
class PoseTrajectory:
    """Stacked world poses: ``R`` is ``(F, 3, 3)``, ``T`` is ``(F, 3)``."""

    R: np.ndarray
    T: np.ndarray
    fps: float = 10.0

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        T = np.asarray(self.T, dtype=float)
        if R.ndim != 3 or R.shape[1:] != (3, 3) or T.shape != (R.shape[0], 3):
            raise rot3.InvalidInput(f"bad trajectory shapes {R.shape}, {T.shape}")
        if R.shape[0] < 1:
            raise rot3.InvalidInput("trajectory needs at least one pose")
        if not self.fps > 0:
            raise rot3.InvalidInput("fps must be positive")
        rot3.check_rotation(R)
        rot3._check_finite(T, "translation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @classmethod
    def from_poses(cls, poses: Sequence[GlobalPose], fps: float = 10.0) -> "PoseTrajectory":
        return cls(np.stack([p.R for p in poses]), np.stack([p.T for p in poses]), fps)

    def __len__(self) -> int:
        return self.R.shape[0]

    def __getitem__(self, i: int) -> GlobalPose:
        return GlobalPose(self.R[i], self.T[i])

    @property
    def poses(self) -> list[GlobalPose]:
        return [self[i] for i in range(len(self))]


def compose(g: GlobalPose, dg: GlobalMotion) -> GlobalPose:
    return GlobalPose(g.R @ dg.dR, g.R @ dg.dT + g.T)


def extract_motion(g1: GlobalPose, g2: GlobalPose) -> GlobalMotion:
    return GlobalMotion(rot3.mat_to_aa(g1.R.T @ g2.R), g1.R.T @ (g2.T - g1.T))


def motions_between(R: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`extract_motion` over consecutive poses -> ``(dA, dT)`` of length F-1."""
    Rt = np.swapaxes(R[:-1], -1, -2)
    dR = Rt @ R[1:]
    dT = (Rt @ (T[1:] - T[:-1])[..., None])[..., 0]
    return rot3.mat_to_aa(dR), dT


def trajectory_motions(traj: PoseTrajectory) -> tuple[np.ndarray, np.ndarray]:
    return motions_between(traj.R, traj.T)


def accumulate_arrays(
    dA: np.ndarray, dT: np.ndarray, R0: np.ndarray | None = None, T0: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Chain motions from ``(R0, T0)`` (identity by default); returns F = M + 1 poses."""
    dA = np.asarray(dA, dtype=float).reshape(-1, 3)
    dT = np.asarray(dT, dtype=float).reshape(-1, 3)
    dR = rot3.aa_to_mat(dA)
    n = dA.shape[0]
    R = np.empty((n + 1, 3, 3))
    T = np.empty((n + 1, 3))
    R[0] = np.eye(3) if R0 is None else R0
    T[0] = np.zeros(3) if T0 is None else T0
    for i in range(n):
        R[i + 1] = R[i] @ dR[i]
        T[i + 1] = R[i] @ dT[i] + T[i]
    return R, T


def accumulate(
    g1: GlobalPose, motions: Sequence[GlobalMotion], fps: float = 10.0
) -> PoseTrajectory:
    if len(motions) == 0:
        return PoseTrajectory(g1.R[None], g1.T[None], fps)
    dA = np.stack([m.dA for m in motions])
    dT = np.stack([m.dT for m in motions])
    R, T = accumulate_arrays(dA, dT, g1.R, g1.T)
    return PoseTrajectory(R, T, fps)


def reframe(traj: PoseTrajectory, w: GlobalPose) -> PoseTrajectory:
    """Left-multiply every pose by the fixed world change ``w``."""
    R = w.R @ traj.R
    T = (w.R @ traj.T[..., None])[..., 0] + w.T
    return PoseTrajectory(R, T, traj.fps)


def rebase(traj: PoseTrajectory) -> PoseTrajectory:
    """Reframe so the first pose is exactly the identity."""
    out = reframe(traj, traj[0].inverse())
    R, T = out.R.copy(), out.T.copy()
    R[0], T[0] = np.eye(3), 0.0
    return PoseTrajectory(R, T, traj.fps)


def world_from_camera(cam: GlobalPose, subj_cam: GlobalPose) -> GlobalPose:
    """Subject pose in the world given the camera-to-world pose and the camera-frame subject pose."""
    return GlobalPose(cam.R @ subj_cam.R, cam.R @ subj_cam.T + cam.T)


def camera_from_world(cam: GlobalPose, subj_world: GlobalPose) -> GlobalPose:
    return GlobalPose(cam.R.T @ subj_world.R, cam.R.T @ (subj_world.T - cam.T))
