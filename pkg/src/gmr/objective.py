"""Training losses and evaluation metrics for global motions.

Losses are sums over frames of squared (or L1) distances and stay in SI
units; metrics are means of unsquared distances reported in degrees and
millimeters. Predicted axis-angles may be raw network outputs of any norm.

Two routes are provided for every loss: plain numpy functions (used for
reporting and as references) and ``*_node`` builders recording the same
quantity on a :class:`~gmr.tape.Tape` for training.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import rot3
from .body import BodySkeleton, rest_vertices
from .tape import Tape, Var

ORI_KINDS = ("chordal", "angular", "axis-angle")


class Motions(NamedTuple):
    """A sequence of global motions: ``dA`` and ``dT`` are ``(T, 3)``."""

    dA: np.ndarray
    dT: np.ndarray


@dataclass(frozen=True)
class LossWeights:
    w_ori: float = 1.0
    w_trans: float = 1.0
    w_vertex: float = 1.0
    w_smooth: float = 1e-2

    def __post_init__(self):
        if min(self.w_ori, self.w_trans, self.w_vertex, self.w_smooth) < 0:
            raise ValueError("loss weights must be nonnegative")


# Sequences are (T, 3) axis-angles or (T, 3, 3) matrices; rank decides, since a
# 3-frame axis-angle array is also 3x3.


def _as_mats(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x if x.ndim == 3 else rot3.aa_to_mat(x)


def _as_logs(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return rot3.mat_to_aa(x) if x.ndim == 3 else rot3.wrap_aa(x)


def _check_lengths(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"sequence length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 1:
        raise ValueError("empty sequence")


# -- numpy losses --------------------------------------------------------------


def loss_orientation(pred: np.ndarray, gt: np.ndarray, kind: str = "chordal") -> float:
    """Orientation loss between motion rotations (axis-angles or matrices)."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    _check_lengths(pred, gt)
    if kind == "chordal":
        return float(np.sum((_as_mats(pred) - _as_mats(gt)) ** 2))
    if kind == "angular":
        Rp, Rg = _as_mats(pred), _as_mats(gt)
        return float(np.sum(rot3.rotation_angle(Rp @ np.swapaxes(Rg, -1, -2)) ** 2))
    if kind == "axis-angle":
        return float(np.sum((_as_logs(pred) - _as_logs(gt)) ** 2))
    raise ValueError(f"unknown orientation loss {kind!r}; expected one of {ORI_KINDS}")


def loss_translation(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    _check_lengths(pred, gt)
    return float(np.sum((pred - gt) ** 2))


def offset_vertices(rest: np.ndarray, dA: np.ndarray, dT: np.ndarray) -> np.ndarray:
    """Mesh offset ``dR @ v + dT`` for rest vertices ``(T, N, 3)``."""
    dR = _as_mats(dA)
    return np.einsum("tij,tnj->tni", dR, rest) + np.asarray(dT)[:, None, :]


def loss_vertex(
    skel: BodySkeleton, poses: np.ndarray, beta: np.ndarray, pred: Motions, gt: Motions
) -> float:
    """Summed L1 distance between predicted and true mesh offsets."""
    _check_lengths(pred.dA, gt.dA)
    if np.asarray(poses).shape[0] != pred.dA.shape[0]:
        raise ValueError("poses and motions must have the same length")
    rest = rest_vertices(skel, poses, beta)
    diff = offset_vertices(rest, pred.dA, pred.dT) - offset_vertices(rest, gt.dA, gt.dT)
    return float(np.sum(np.abs(diff)))


def loss_smooth(pred: np.ndarray) -> float:
    R = _as_mats(pred)
    if R.shape[0] < 2:
        return 0.0
    return float(np.sum((R[:-1] - R[1:]) ** 2))


def loss_total(components: dict[str, float], weights: LossWeights = LossWeights()) -> float:
    return (
        weights.w_ori * components["ori"]
        + weights.w_trans * components["trans"]
        + weights.w_vertex * components["vertex"]
        + weights.w_smooth * components["smooth"]
    )


# -- tape losses ---------------------------------------------------------------
#
# Inputs carry leading dims (T, B): dA/dT nodes are (T, B, 3), targets are
# plain arrays of matching shape. Every loss sums over frames and batch.


def orientation_node(tape: Tape, dA: Var, gt_R: np.ndarray, kind: str, dR: Var | None = None) -> Var:
    if kind == "chordal":
        dR = tape.rodrigues(dA) if dR is None else dR
        return tape.sum(tape.square(tape.sub(dR, tape.const(gt_R))))
    if kind == "angular":
        dR = tape.rodrigues(dA) if dR is None else dR
        rel = tape.matmul(dR, tape.const(np.swapaxes(gt_R, -1, -2)))
        return tape.sum(tape.angle_sq(rel))
    if kind == "axis-angle":
        gt_log = rot3.mat_to_aa(gt_R)
        return tape.sum(tape.square(tape.sub(tape.wrap_aa(dA), tape.const(gt_log))))
    raise ValueError(f"unknown orientation loss {kind!r}; expected one of {ORI_KINDS}")


def translation_node(tape: Tape, dT: Var, gt_dT: np.ndarray) -> Var:
    return tape.sum(tape.square(tape.sub(dT, tape.const(gt_dT))))


def vertex_node(tape: Tape, dR: Var, dT: Var, rest_T: np.ndarray, gt_offsets_T: np.ndarray) -> Var:
    """L1 mesh-offset loss.

    ``rest_T`` holds rest vertices transposed to ``(T, B, 3, N)`` and
    ``gt_offsets_T`` the true offsets in the same layout.
    """
    shape = dT.value.shape[:-1] + (3, 1)
    pred = tape.add(tape.matmul(dR, tape.const(rest_T)), tape.reshape(dT, shape))
    return tape.sum(tape.abs(tape.sub(pred, tape.const(gt_offsets_T))))


def smooth_node(tape: Tape, dR: Var) -> Var:
    T = dR.value.shape[0]
    if T < 2:
        return tape.const(0.0)
    a = tape.getitem(dR, slice(0, T - 1))
    b = tape.getitem(dR, slice(1, T))
    return tape.sum(tape.square(tape.sub(a, b)))


# -- metrics -------------------------------------------------------------------


def metric_ome(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean geodesic angle between motion rotations, degrees."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    _check_lengths(pred, gt)
    ang = rot3.rotation_angle(_as_mats(gt) @ np.swapaxes(_as_mats(pred), -1, -2))
    return float(np.degrees(np.mean(ang)))


def metric_tme(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean translation-motion error, millimeters."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    _check_lengths(pred, gt)
    return float(1000.0 * np.mean(np.linalg.norm(pred - gt, axis=-1)))


def metric_vme(rest: np.ndarray, pred: Motions, gt: Motions) -> float:
    """Mean vertex-wise Euclidean mesh-offset error, millimeters.

    ``rest`` are the rest vertices ``(T, N, 3)`` of the local poses.
    """
    _check_lengths(pred.dA, gt.dA)
    diff = offset_vertices(rest, pred.dA, pred.dT) - offset_vertices(rest, gt.dA, gt.dT)
    return float(1000.0 * np.mean(np.linalg.norm(diff, axis=-1)))


def accumulated_vertex_error(
    pred_R: np.ndarray, pred_T: np.ndarray, gt_R: np.ndarray, gt_T: np.ndarray, rest: np.ndarray
) -> np.ndarray:
    """Per-frame mean vertex distance (mm) between bodies posed on two trajectories.

    ``rest`` is ``(F, N, 3)``; the trajectories are ``(F, 3, 3)`` / ``(F, 3)``
    in a shared reference frame.
    """
    if not (pred_R.shape[0] == gt_R.shape[0] == rest.shape[0]):
        raise ValueError("trajectory and pose lengths disagree")
    pv = np.einsum("fij,fnj->fni", pred_R, rest) + pred_T[:, None]
    gv = np.einsum("fij,fnj->fni", gt_R, rest) + gt_T[:, None]
    return 1000.0 * np.linalg.norm(pv - gv, axis=-1).mean(axis=-1)


def accumulated_vertex_error_traj(pred_traj, gt_traj, skel: BodySkeleton, poses, beta) -> np.ndarray:
    """Same as :func:`accumulated_vertex_error` taking :class:`~gmr.rigid.PoseTrajectory` inputs."""
    if len(pred_traj) != len(gt_traj):
        raise ValueError("trajectory lengths disagree")
    rest = rest_vertices(skel, poses, beta)
    return accumulated_vertex_error(pred_traj.R, pred_traj.T, gt_traj.R, gt_traj.T, rest)


# -- reports -------------------------------------------------------------------

CSV_COLUMNS = ("label", "ome_deg", "tme_mm", "vme_mm", "n_sequences")


@dataclass
class MetricReport:
    ome: float
    tme: float
    vme: float
    curve: list[float] = field(default_factory=list)
    label: str = ""
    n_sequences: int = 1

    def __post_init__(self):
        if min(self.ome, self.tme, self.vme) < 0 or any(c < 0 for c in self.curve):
            raise ValueError("metrics must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str | dict) -> "MetricReport":
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(
            float(obj["ome"]), float(obj["tme"]), float(obj["vme"]),
            [float(c) for c in obj.get("curve", [])], obj.get("label", ""),
            int(obj.get("n_sequences", 1)),
        )

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [self.label, repr(self.ome), repr(self.tme), repr(self.vme), self.n_sequences]
        )
        return buf.getvalue()


def mean_report(reports: list[MetricReport], label: str = "mean") -> MetricReport:
    """Unweighted mean over per-sequence reports; curves averaged frame by frame."""
    if not reports:
        raise ValueError("no reports to aggregate")
    n = len(reports)
    curves = [r.curve for r in reports if r.curve]
    curve: list[float] = []
    if curves:
        width = min(len(c) for c in curves)
        curve = np.mean([c[:width] for c in curves], axis=0).tolist()
    return MetricReport(
        sum(r.ome for r in reports) / n,
        sum(r.tme for r in reports) / n,
        sum(r.vme for r in reports) / n,
        curve,
        label,
        sum(r.n_sequences for r in reports),
    )
