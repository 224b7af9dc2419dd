"""Procedural locomotion sequences with exactly known global poses.

Each frame interval has a constant forward speed ``v``, yaw rate ``w`` and
vertical step, so the body-frame motion over ``dt`` is an exact arc::

    dA = (0, 0, w dt)
    dT = (v dt sin(w dt)/(w dt), v dt (1 - cos(w dt))/(w dt), dz)

and the world trajectory is the accumulation of those motions from the
identity. The local pose is a phase-driven gait whose amplitude, cadence and
leans are tied to the same ``v`` and ``w``, which is the signal a regressor
can learn global motion from.

Gait model (angles in radians, ``phi = 2 pi gait_freq t + phase0``):

- hip swing ``A = atan(stride / 4 / 0.8)`` with ``stride = v / gait_freq``;
  left/right hips in antiphase, knees flex by ``1.3 A (1 + cos phi) / 2``;
- arms hang down and swing opposite to the legs with ``0.6 A``;
- spine leans forward by ``0.08 v`` and sideways into turns by ``0.15 v w``,
  the neck yaws into the turn by ``0.3 w``;
- turn-in-place steps with a fixed ``A = 0.15``; hop bends the knees on
  landing; idle holds a constant pose.

Dataset file: one JSON object per line with keys ``version, kind,
source_id, window_offset, fps, beta[10], frames[{quat[J][4], R[9], T[3]}]``;
``R`` is row-major and floats are written as shortest round-trip decimals.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import rot3
from .body import JOINT, N_BETAS, BodySkeleton
from .rigid import accumulate_arrays, motions_between

KINDS = ("straight-walk", "circle-walk", "figure-8", "turn-in-place", "hop", "idle")
DATASET_VERSION = 1
LEG_LENGTH = 0.8
HOP_HEIGHT = 0.12


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    duration: float = 6.4
    speed: float = 1.0
    turn_rate: float = 0.0
    gait_freq: float = 1.0
    seed: int = 0
    fps: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        vals = (self.duration, self.speed, self.turn_rate, self.gait_freq, self.fps)
        if not all(np.isfinite(vals)):
            raise InvalidSpec("spec parameters must be finite")
        if self.duration <= 0 or self.fps <= 0:
            raise InvalidSpec("duration and fps must be positive")
        if self.gait_freq <= 0:
            raise InvalidSpec("gait_freq must be positive")
        if self.speed < 0:
            raise InvalidSpec("speed must be nonnegative")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps)) + 1


@dataclass
class MotionSequence:
    """A full generated sequence: local quats ``(F, J, 4)``, world poses ``(F, 3, 3)``/``(F, 3)``."""

    local: np.ndarray
    R: np.ndarray
    T: np.ndarray
    beta: np.ndarray
    fps: float
    source_id: int = 0
    kind: str = ""

    def __len__(self) -> int:
        return self.local.shape[0]


@dataclass
class MotionSample:
    """One training window of ``T + 1`` frames with its ``T`` derived motions."""

    local: np.ndarray
    R: np.ndarray
    T: np.ndarray
    beta: np.ndarray
    fps: float = 10.0
    source_id: int = 0
    window_offset: int = 0
    kind: str = ""
    dA: np.ndarray = field(init=False, repr=False)
    dT: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.local.shape[0]
        if n < 2 or self.R.shape != (n, 3, 3) or self.T.shape != (n, 3):
            raise ValueError("sample needs >= 2 frames with matching local/global arrays")
        if self.beta.shape != (N_BETAS,):
            raise ValueError("beta must have 10 entries")
        self.dA, self.dT = motions_between(self.R, self.T)

    @property
    def n_motions(self) -> int:
        return self.local.shape[0] - 1


# -- generation -----------------------------------------------------------------


def _frame_kinematics(spec: GeneratorSpec, t_mid: np.ndarray, t: np.ndarray):
    """Per-interval speed, yaw rate and vertical step."""
    n = t_mid.shape[0]
    v = np.full(n, spec.speed)
    w = np.zeros(n)
    dz = np.zeros(n)
    if spec.kind == "circle-walk":
        w[:] = spec.turn_rate
    elif spec.kind == "figure-8":
        if spec.turn_rate != 0:
            # one full left loop then one full right loop
            period = 2.0 * (2.0 * np.pi / abs(spec.turn_rate))
            w = spec.turn_rate * np.sin(2.0 * np.pi * t_mid / period) * (np.pi / 2.0)
    elif spec.kind == "turn-in-place":
        v[:] = 0.0
        w[:] = spec.turn_rate
    elif spec.kind == "hop":
        z = HOP_HEIGHT * np.abs(np.sin(np.pi * spec.gait_freq * t))
        dz = np.diff(z)
    elif spec.kind == "idle":
        v[:] = 0.0
    return v, w, dz


def _euler_quat(axis: int, angle: np.ndarray) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    q = np.zeros(angle.shape + (4,))
    q[..., 0] = np.cos(0.5 * angle)
    q[..., 1 + axis] = np.sin(0.5 * angle)
    return q


def _rx(a):
    return _euler_quat(0, a)


def _ry(a):
    return _euler_quat(1, a)


def _rz(a):
    return _euler_quat(2, a)


def _gait(spec: GeneratorSpec, t: np.ndarray, v: np.ndarray, w: np.ndarray, rng) -> np.ndarray:
    """Local joint quaternions ``(F, 23, 4)``."""
    F = t.shape[0]
    quats = np.zeros((F, 23, 4))
    quats[..., 0] = 1.0
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    style = rng.normal(0.0, 0.04, size=(23, 3))
    phi = 2.0 * np.pi * spec.gait_freq * t + phase0

    # per-frame speed / yaw rate, sampled at frames (repeat the last interval)
    vf = np.append(v, v[-1])[:F]
    wf = np.append(w, w[-1])[:F]

    def put(joint: str, q: np.ndarray):
        quats[:, JOINT[joint] - 1] = rot3.quat_mul(quats[:, JOINT[joint] - 1], q)

    kind = spec.kind
    if kind in ("straight-walk", "circle-walk", "figure-8"):
        stride = vf / spec.gait_freq
        amp = np.arctan(stride / 4.0 / LEG_LENGTH)
    elif kind == "turn-in-place":
        amp = np.full(F, 0.15)
    else:
        amp = np.zeros(F)

    swing = amp * np.sin(phi)
    put("l_hip", _ry(-swing))
    put("r_hip", _ry(swing))
    put("l_knee", _ry(1.3 * amp * 0.5 * (1.0 + np.cos(phi))))
    put("r_knee", _ry(1.3 * amp * 0.5 * (1.0 - np.cos(phi))))
    put("l_ankle", _ry(0.3 * amp * np.cos(phi)))
    put("r_ankle", _ry(-0.3 * amp * np.cos(phi)))

    # arms hang down, then swing against the legs
    put("l_shoulder", rot3.quat_mul(_rx(np.full(F, -1.3)), _rz(-0.6 * swing)))
    put("r_shoulder", rot3.quat_mul(_rx(np.full(F, 1.3)), _rz(-0.6 * swing)))
    put("l_elbow", _rz(np.full(F, 0.25) + 0.2 * amp))
    put("r_elbow", _rz(np.full(F, -0.25) - 0.2 * amp))

    put("spine1", rot3.quat_mul(_ry(0.08 * vf), _rx(-0.15 * vf * wf)))
    put("spine2", _rz(0.3 * swing))
    put("neck", _rz(0.3 * wf))

    if kind == "hop":
        crouch = 0.5 * (1.0 - np.abs(np.sin(np.pi * spec.gait_freq * t)))
        put("l_hip", _ry(-crouch))
        put("r_hip", _ry(-crouch))
        put("l_knee", _ry(2.0 * crouch))
        put("r_knee", _ry(2.0 * crouch))
        put("l_ankle", _ry(-crouch))
        put("r_ankle", _ry(-crouch))
        put("spine1", _ry(0.5 * crouch))

    # constant per-sequence style offsets
    quats = rot3.quat_mul(quats, rot3.aa_to_quat(style)[None])
    return rot3.canonical_quat(quats)


def body_frame_motions(v: np.ndarray, w: np.ndarray, dz: np.ndarray, dt: float):
    """Exact arc displacement for constant ``v, w`` over ``dt``."""
    ang = w * dt
    a, b = rot3.rodrigues_coeffs(np.abs(ang))
    dA = np.zeros((v.shape[0], 3))
    dA[:, 2] = ang
    dT = np.stack([v * dt * a, v * dt * ang * b, dz], axis=-1)
    return dA, dT


def generate(spec: GeneratorSpec, skel: BodySkeleton | None = None, source_id: int = 0) -> MotionSequence:
    """Generate one full-length sequence from ``spec`` (deterministic per spec)."""
    if skel is not None and skel.n_joints != 23:
        raise InvalidSpec("the gait model drives the 23-joint default topology")
    rng = np.random.default_rng(spec.seed)
    beta = np.clip(rng.normal(0.0, 1.0, N_BETAS), -2.0, 2.0)
    F = spec.n_frames
    dt = 1.0 / spec.fps
    t = np.arange(F) * dt
    t_mid = t[:-1] + 0.5 * dt
    v, w, dz = _frame_kinematics(spec, t_mid, t)
    dA, dT = body_frame_motions(v, w, dz, dt)
    R, T = accumulate_arrays(dA, dT)
    if spec.kind == "idle":
        local = np.broadcast_to(_gait(spec, t[:1], v[:1], w[:1], rng), (F, 23, 4)).copy()
    else:
        local = _gait(spec, t, v, w, rng)
    return MotionSequence(local, R, T, beta, spec.fps, source_id, spec.kind)


def sample_specs(
    count: int,
    seed: int,
    kinds: Iterable[str] = ("straight-walk", "circle-walk", "figure-8", "turn-in-place"),
    duration: float = 6.4,
    fps: float = 10.0,
    speed_range: tuple[float, float] = (0.6, 1.6),
    turn_range: tuple[float, float] = (0.2, 0.8),
    spin_range: tuple[float, float] = (0.4, 1.2),
    gait_range: tuple[float, float] = (0.8, 1.2),
) -> list[GeneratorSpec]:
    """Deterministic random specs; kinds are assigned round-robin."""
    kinds = tuple(kinds)
    if count < 0 or not kinds:
        raise InvalidSpec("count must be >= 0 and kinds nonempty")
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        speed = rng.uniform(*speed_range)
        sign = rng.choice([-1.0, 1.0])
        turn = sign * (rng.uniform(*spin_range) if kind == "turn-in-place" else rng.uniform(*turn_range))
        gait = rng.uniform(*gait_range)
        sub_seed = int(rng.integers(0, 2**31 - 1))
        specs.append(
            GeneratorSpec(kind, duration, speed, turn if kind != "straight-walk" else 0.0, gait, sub_seed, fps)
        )
    return specs


# -- windows and augmentation -----------------------------------------------------


def n_windows(n_frames: int, length: int, stride: int) -> int:
    return 0 if n_frames < length else (n_frames - length) // stride + 1


def window(seq: MotionSequence, length: int = 65, stride: int = 1) -> list[MotionSample]:
    """Cut ``length``-frame windows (``T + 1`` frames), each rebased to start at identity."""
    if length < 2 or stride < 1:
        raise ValueError("length must be >= 2 and stride >= 1")
    count = n_windows(len(seq), length, stride)
    if count == 0:
        warnings.warn(f"sequence of {len(seq)} frames is shorter than window {length}", stacklevel=2)
        return []
    out = []
    for k in range(count):
        s = k * stride
        R, T = seq.R[s : s + length], seq.T[s : s + length]
        R0t = R[0].T
        Rb = R0t @ R
        Tb = (R0t @ (T - T[0])[..., None])[..., 0]
        Rb[0], Tb[0] = np.eye(3), 0.0
        out.append(
            MotionSample(seq.local[s : s + length].copy(), Rb, Tb, seq.beta.copy(), seq.fps,
                         seq.source_id, s, seq.kind)
        )
    return out


def flip(sample: MotionSample) -> MotionSample:
    """Temporal reversal: ``dR'_i = dR_{T-1-i}^T`` and ``dT'_i = -dR_{T-1-i}^T dT_{T-1-i}``."""
    dA = sample.dA[::-1]
    dRt = np.swapaxes(rot3.aa_to_mat(dA), -1, -2)
    new_dA = -dA
    new_dT = -(dRt @ sample.dT[::-1][..., None])[..., 0]
    R, T = accumulate_arrays(new_dA, new_dT)
    return MotionSample(sample.local[::-1].copy(), R, T, sample.beta.copy(), sample.fps,
                        sample.source_id, sample.window_offset, sample.kind)


def perturb_local(sample: MotionSample, noise_std: float, seed: int) -> MotionSample:
    """Right-multiply every joint rotation by ``exp(e)``, ``e ~ N(0, noise_std^2 I)``."""
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    if noise_std == 0:
        return replace(sample)
    rng = np.random.default_rng(seed)
    e = rng.normal(0.0, noise_std, size=sample.local.shape[:-1] + (3,))
    local = rot3.canonical_quat(rot3.quat_mul(sample.local, rot3.aa_to_quat(e)))
    return MotionSample(local, sample.R, sample.T, sample.beta, sample.fps,
                        sample.source_id, sample.window_offset, sample.kind)


# -- dataset files ----------------------------------------------------------------


def sample_to_json(sample: MotionSample) -> str:
    frames = [
        {"quat": sample.local[i].tolist(), "R": sample.R[i].reshape(9).tolist(), "T": sample.T[i].tolist()}
        for i in range(sample.local.shape[0])
    ]
    obj = {
        "version": DATASET_VERSION,
        "kind": sample.kind,
        "source_id": int(sample.source_id),
        "window_offset": int(sample.window_offset),
        "fps": float(sample.fps),
        "beta": sample.beta.tolist(),
        "frames": frames,
    }
    return json.dumps(obj, separators=(",", ":"))


def sample_from_json(line: str | dict) -> MotionSample:
    obj = json.loads(line) if isinstance(line, str) else line
    if obj.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {obj.get('version')!r}")
    frames = obj["frames"]
    local = np.array([f["quat"] for f in frames], dtype=float)
    R = np.array([f["R"] for f in frames], dtype=float).reshape(-1, 3, 3)
    T = np.array([f["T"] for f in frames], dtype=float)
    return MotionSample(local, R, T, np.array(obj["beta"], dtype=float), float(obj["fps"]),
                        int(obj["source_id"]), int(obj["window_offset"]), obj.get("kind", ""))


def write_dataset(path: str | Path, samples: Iterable[MotionSample]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(sample_to_json(s))
            fh.write("\n")
            n += 1
    return n


def read_dataset(path: str | Path) -> list[MotionSample]:
    with open(path, encoding="utf-8") as fh:
        return [sample_from_json(line) for line in fh if line.strip()]
