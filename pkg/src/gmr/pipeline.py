"""Inference, camera-motion simulation and report aggregation.

The camera simulation compares two predictors of a subject's global motion:

- GMR: the network applied to the subject's local poses, which never see
  the camera;
- the camera-frame baseline: the subject's pose expressed in camera
  coordinates taken as if it were the world pose. This stands in for
  pipelines that estimate pose relative to a (possibly moving) camera.

Camera poses are camera-to-world transforms with the OpenCV axis convention
(x right, y down, z forward); the world is z-up.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import rot3
from .body import BodySkeleton
from .datagen import MotionSample, perturb_local
from .net import GmrParams, gmr_forward, pose_features
from .objective import MetricReport, Motions, mean_report, CSV_COLUMNS
from .rigid import accumulate_arrays, motions_between
from .trainer import evaluate_predictions

CAMERA_KINDS = ("static", "linear", "panning", "circular")
LOOK_TARGET = np.array([0.0, 0.0, 1.0])


# -- inference ----------------------------------------------------------------------


def infer_motions(params: GmrParams, local: np.ndarray) -> Motions:
    """Motions for an ``F``-frame local pose sequence.

    The network emits one motion per input frame; the last one would lead
    past the final frame and is dropped, leaving ``F - 1``.
    """
    local = np.asarray(local, dtype=float)
    if local.ndim != 3 or local.shape[1] * 4 != params.config.input_dim:
        raise ValueError(
            f"local poses must be (F, {params.config.input_dim // 4}, 4), got {local.shape}"
        )
    if local.shape[0] < 1:
        raise ValueError("empty sequence")
    y = gmr_forward(params, pose_features(rot3.canonical_quat(local)))
    return Motions(rot3.wrap_aa(y[:-1, :3]), y[:-1, 3:].copy())


def infer_trajectory(params: GmrParams, local: np.ndarray) -> tuple[Motions, np.ndarray, np.ndarray]:
    """Motions plus the trajectory accumulated from the identity (``F`` poses)."""
    m = infer_motions(params, local)
    R, T = accumulate_arrays(m.dA, m.dT)
    return m, R, T


def trajectory_to_json(R: np.ndarray, T: np.ndarray, motions: Motions, fps: float,
                       source_id: int = 0, window_offset: int = 0) -> str:
    obj = {
        "version": 1,
        "source_id": int(source_id),
        "window_offset": int(window_offset),
        "fps": float(fps),
        "frames": [{"R": R[i].reshape(9).tolist(), "T": T[i].tolist()} for i in range(R.shape[0])],
        "motions": [{"dA": motions.dA[i].tolist(), "dT": motions.dT[i].tolist()}
                    for i in range(motions.dA.shape[0])],
    }
    return json.dumps(obj, separators=(",", ":"))


# -- camera paths ---------------------------------------------------------------------


def look_at(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation with columns (right, down, forward)."""
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, [0.0, 0.0, 1.0])
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("camera looks straight up or down")
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=-1)


@dataclass(frozen=True)
class CameraPath:
    """Camera motion pattern.

    static: fixed at ``(0, -distance, height)`` looking at the subject's start.
    linear: translates with ``velocity`` (m/s), orientation fixed.
    panning: fixed position, yaws at ``angular_rate`` (rad/s).
    circular: orbits the start point at ``radius`` and ``angular_rate``;
      orientation stays fixed unless ``look_at`` is set, then it keeps facing
      the start point.
    """

    kind: str = "static"
    distance: float = 4.0
    height: float = 1.5
    velocity: tuple[float, float, float] = (0.5, 0.0, 0.0)
    angular_rate: float = 0.5
    radius: float = 4.0
    look_at: bool = False
    fps: float = 10.0

    def __post_init__(self):
        if self.kind not in CAMERA_KINDS:
            raise ValueError(f"unknown camera kind {self.kind!r}; expected one of {CAMERA_KINDS}")
        vals = (self.distance, self.height, *self.velocity, self.angular_rate, self.radius, self.fps)
        if not all(np.isfinite(vals)):
            raise ValueError("camera parameters must be finite")
        if len(self.velocity) != 3:
            raise ValueError("velocity must be a 3-vector")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.kind == "circular" and self.radius <= 0:
            raise ValueError("circular path needs a positive radius")
        if self.kind in ("static", "linear", "panning") and self.distance <= 0:
            raise ValueError("camera distance must be positive")

    def static_twin(self) -> "CameraPath":
        """The camera-off counterpart: same starting placement, no motion."""
        if self.kind == "circular":
            return replace(self, kind="static", distance=self.radius)
        return replace(self, kind="static")

    def poses(self, n_frames: int) -> tuple[np.ndarray, np.ndarray]:
        """Camera-to-world rotations ``(F, 3, 3)`` and positions ``(F, 3)``."""
        t = np.arange(n_frames) / self.fps
        if self.kind == "circular":
            phi = -np.pi / 2.0 + self.angular_rate * t
            pos = np.stack(
                [self.radius * np.cos(phi), self.radius * np.sin(phi), np.full_like(t, self.height)],
                axis=-1,
            )
            if self.look_at:
                R = np.stack([look_at(p, LOOK_TARGET) for p in pos])
            else:
                R = np.broadcast_to(look_at(pos[0], LOOK_TARGET), (n_frames, 3, 3)).copy()
            return R, pos
        p0 = np.array([0.0, -self.distance, self.height])
        R0 = look_at(p0, LOOK_TARGET)
        if self.kind == "static":
            return np.broadcast_to(R0, (n_frames, 3, 3)).copy(), np.broadcast_to(p0, (n_frames, 3)).copy()
        if self.kind == "linear":
            pos = p0 + t[:, None] * np.asarray(self.velocity)
            return np.broadcast_to(R0, (n_frames, 3, 3)).copy(), pos
        # panning
        R = rot3.rz(self.angular_rate * t) @ R0
        return R, np.broadcast_to(p0, (n_frames, 3)).copy()


def camera_frame_poses(cam_R: np.ndarray, cam_T: np.ndarray, R: np.ndarray, T: np.ndarray):
    """Subject poses in camera coordinates (inverse of the camera-to-world map)."""
    cRt = np.swapaxes(cam_R, -1, -2)
    return cRt @ R, (cRt @ (T - cam_T)[..., None])[..., 0]


def baseline_motions(sample: MotionSample, path: CameraPath, noise: float = 0.0,
                     rng: np.random.Generator | None = None) -> Motions:
    """Motions of the camera-frame poses, optionally with pose noise added."""
    cR, cT = path.poses(sample.local.shape[0])
    R, T = camera_frame_poses(cR, cT, sample.R, sample.T)
    if noise > 0:
        rng = rng or np.random.default_rng(0)
        R = R @ rot3.aa_to_mat(rng.normal(0.0, noise, size=T.shape))
        T = T + rng.normal(0.0, noise, size=T.shape)
    return Motions(*motions_between(R, T))


@dataclass
class CameraSimResult:
    path: CameraPath
    reports: dict[str, MetricReport]

    def to_json(self) -> str:
        obj = {
            "camera_path": asdict(self.path),
            "reports": [asdict(r) for r in self.reports.values()],
        }
        return json.dumps(obj, separators=(",", ":"))


def camera_sim(
    samples: list[MotionSample],
    path: CameraPath,
    params: GmrParams,
    skel: BodySkeleton,
    noise_std: float = 0.0,
    baseline_noise: float = 0.0,
    seed: int = 0,
) -> CameraSimResult:
    """OME/TME/VME of GMR and of the camera-frame baseline, camera on and off.

    ``noise_std`` perturbs the local poses fed to GMR (radians);
    ``baseline_noise`` perturbs the camera-frame poses of the baseline. Both
    draw from streams keyed by ``seed`` and sample index only, so camera-on
    and camera-off runs see identical noise.
    """
    if not samples:
        raise ValueError("empty dataset")
    gmr_preds = []
    for i, s in enumerate(samples):
        local = perturb_local(s, noise_std, seed=seed * 1_000_003 + i).local if noise_std else s.local
        gmr_preds.append(infer_motions(params, local))
    reports: dict[str, MetricReport] = {}
    for mode, p in (("camera-off", path.static_twin()), ("camera-on", path)):
        rep = evaluate_predictions(gmr_preds, samples, skel, label=f"gmr/{mode}")
        reports[rep.label] = rep
        base = [
            baseline_motions(s, p, baseline_noise, np.random.default_rng([seed, i]))
            for i, s in enumerate(samples)
        ]
        rep = evaluate_predictions(base, samples, skel, label=f"baseline/{mode}")
        reports[rep.label] = rep
    return CameraSimResult(path, reports)


# -- reports ---------------------------------------------------------------------------


def load_reports(text: str) -> list[MetricReport]:
    """Parse a metric file: one report object or ``{"reports": [...]}``."""
    obj = json.loads(text)
    if isinstance(obj, dict) and "reports" in obj:
        return [MetricReport.from_json(r) for r in obj["reports"]]
    return [MetricReport.from_json(obj)]


def report_tables(reports: list[MetricReport]) -> tuple[str, str, str]:
    """CSV table, JSON table and per-frame curve CSV for a list of reports.

    The CSV has columns ``label, ome_deg, tme_mm, vme_mm, n_sequences`` and a
    final ``mean`` row (unweighted mean over the listed reports). The curve
    CSV has a ``frame`` column then one column per report label.
    """
    if not reports:
        raise ValueError("no reports")
    mean = mean_report(reports, "mean")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in [*reports, mean]:
        w.writerow([r.label, repr(r.ome), repr(r.tme), repr(r.vme), r.n_sequences])
    table_csv = buf.getvalue()

    rows = [{"label": r.label, "ome_deg": r.ome, "tme_mm": r.tme, "vme_mm": r.vme,
             "n_sequences": r.n_sequences} for r in reports]
    table_json = json.dumps({"columns": list(CSV_COLUMNS), "rows": rows,
                             "mean": {"ome_deg": mean.ome, "tme_mm": mean.tme, "vme_mm": mean.vme}},
                            separators=(",", ":"))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", *[r.label for r in reports]])
    n = max((len(r.curve) for r in reports), default=0)
    for i in range(n):
        w.writerow([i, *[repr(r.curve[i]) if i < len(r.curve) else "" for r in reports]])
    return table_csv, table_json, buf.getvalue()
