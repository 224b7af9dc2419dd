"""Deterministic mini-batch training and evaluation of the motion regressor.

The network sees the first ``T`` local poses of each ``T + 1``-frame window
and every one of its ``T`` outputs is supervised by the window's ``T``
ground-truth motions. Batches are drawn by a sampler seeded with
``(seed, step)``, so any step can be replayed without the steps before it.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import rot3
from .body import BodySkeleton, rest_vertices
from .datagen import MotionSample, flip
from .net import (
    Checkpoint, GmrConfig, GmrParams, forward_graph, gmr_backward, init_params, param_vars,
    pose_features,
)
from .objective import (
    ORI_KINDS, LossWeights, MetricReport, Motions, accumulated_vertex_error, mean_report,
    metric_ome, metric_tme, metric_vme, orientation_node, smooth_node, translation_node,
    vertex_node,
)
from .rigid import accumulate_arrays
from .tape import Tape

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOG_COLUMNS = ("step", "L_total", "L_ori", "L_trans", "L_vertex", "L_smooth", "OME", "TME", "VME")


class NumericFailure(RuntimeError):
    pass


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    batch: int = 8
    steps: int = 1000
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    ori_loss: str = "chordal"
    flip_aug: bool = True
    flip_prob: float = 0.5
    eval_every: int = 0
    model: GmrConfig = field(default_factory=GmrConfig)

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be nonnegative")
        if self.batch < 1 or self.steps < 0:
            raise ValueError("batch must be >= 1 and steps >= 0")
        if self.ori_loss not in ORI_KINDS:
            raise ValueError(f"ori_loss must be one of {ORI_KINDS}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")

    def to_flat(self) -> dict[str, object]:
        """Flat ``key -> value`` view; the keys accepted by :meth:`from_flat`."""
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("weights", "model")}
        out.update(asdict(self.weights))
        out.update({k: v for k, v in asdict(self.model).items() if k != "output_dim"})
        return out

    @classmethod
    def from_flat(cls, kv: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        base = base or cls()
        top, w, m = {}, {}, {}
        casts = {"lr": float, "batch": int, "steps": int, "seed": int, "ori_loss": str,
                 "flip_aug": _parse_bool, "flip_prob": float, "eval_every": int}
        for key, raw in kv.items():
            raw = str(raw)
            if key in casts:
                top[key] = casts[key](raw)
            elif key in ("w_ori", "w_trans", "w_vertex", "w_smooth"):
                w[key] = float(raw)
            elif key in ("input_dim", "layers", "hidden", "proj_dim"):
                m[key] = int(raw)
            else:
                raise KeyError(f"unknown training config key {key!r}")
        return replace(
            base,
            weights=replace(base.weights, **w),
            model=replace(base.model, **m),
            **top,
        )


# -- data preparation ---------------------------------------------------------------


@dataclass
class Prepared:
    """Arrays for one window, laid out for batching along axis 1."""

    x: np.ndarray          # (T, 4J)
    rest_T: np.ndarray     # (T, 3, N) rest vertices of the input poses
    gt_R: np.ndarray       # (T, 3, 3)
    gt_dA: np.ndarray      # (T, 3)
    gt_dT: np.ndarray      # (T, 3)
    gt_off_T: np.ndarray   # (T, 3, N) true mesh offsets


def prepare(sample: MotionSample, skel: BodySkeleton) -> Prepared:
    T = sample.n_motions
    local = sample.local[:T]
    rest = rest_vertices(skel, local, sample.beta)
    rest_T = np.swapaxes(rest, -1, -2)
    gt_R = rot3.aa_to_mat(sample.dA)
    off_T = gt_R @ rest_T + sample.dT[..., None]
    return Prepared(pose_features(rot3.canonical_quat(local)), rest_T, gt_R, sample.dA, sample.dT, off_T)


def stack_batch(items: list[Prepared]) -> Prepared:
    lengths = {p.x.shape[0] for p in items}
    if len(lengths) != 1:
        raise ValueError(f"window lengths differ within a batch: {sorted(lengths)}")
    return Prepared(*(np.stack([getattr(p, f.name) for p in items], axis=1) for f in fields(Prepared)))


class PreparedSet:
    """Lazily prepared windows plus their temporally flipped twins."""

    def __init__(self, samples: list[MotionSample], skel: BodySkeleton):
        if not samples:
            raise ValueError("empty dataset")
        self.samples = samples
        self.skel = skel
        self._plain: dict[int, Prepared] = {}
        self._flipped: dict[int, Prepared] = {}

    def __len__(self) -> int:
        return len(self.samples)

    def get(self, i: int, flipped: bool = False) -> Prepared:
        cache = self._flipped if flipped else self._plain
        if i not in cache:
            s = flip(self.samples[i]) if flipped else self.samples[i]
            cache[i] = prepare(s, self.skel)
        return cache[i]


def draw_batch(seed: int, step: int, n: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sample indices and flip flags for ``step`` (depends only on seed and step)."""
    rng = np.random.default_rng([seed, step])
    idx = rng.choice(n, size=config.batch, replace=n < config.batch)
    flips = rng.random(config.batch) < config.flip_prob
    if not config.flip_aug:
        flips[:] = False
    return idx, flips


# -- losses and optimization --------------------------------------------------------------


def loss_graph(tape: Tape, pv, model: GmrConfig, batch: Prepared, ori_loss: str,
               weights: LossWeights) -> dict:
    """Record all loss terms for a stacked batch; returns the component nodes and total."""
    y = forward_graph(tape, pv, model, batch.x)
    dA = tape.getitem(y, (..., slice(0, 3)))
    dT = tape.getitem(y, (..., slice(3, 6)))
    dR = tape.rodrigues(dA)
    parts = {
        "ori": orientation_node(tape, dA, batch.gt_R, ori_loss, dR),
        "trans": translation_node(tape, dT, batch.gt_dT),
        "vertex": vertex_node(tape, dR, dT, batch.rest_T, batch.gt_off_T),
        "smooth": smooth_node(tape, dR),
    }
    total = tape.add(
        tape.add(tape.scale(parts["ori"], weights.w_ori), tape.scale(parts["trans"], weights.w_trans)),
        tape.add(tape.scale(parts["vertex"], weights.w_vertex), tape.scale(parts["smooth"], weights.w_smooth)),
    )
    parts["total"] = total
    return parts


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: GmrParams) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
                lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    t = state.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * g * g
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def train_step(params: GmrParams, adam: AdamState, batch: list[Prepared] | Prepared,
               config: TrainConfig) -> tuple[GmrParams, AdamState, dict[str, float]]:
    if isinstance(batch, list):
        if not batch:
            raise ValueError("empty batch")
        batch = stack_batch(batch)
    tape = Tape()
    pv = param_vars(tape, params)
    parts = loss_graph(tape, pv, params.config, batch, config.ori_loss, config.weights)
    losses = {k: float(v.value) for k, v in parts.items()}
    if not np.isfinite(losses["total"]):
        raise NumericFailure(f"non-finite loss at step {adam.step + 1}: {losses}")
    grads = gmr_backward(tape, parts["total"], pv)
    new, adam = adam_update(params, grads, adam, config.lr)
    return GmrParams(params.config, new), adam, losses


# -- evaluation ------------------------------------------------------------------------


def predict(params: GmrParams, xs: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Raw outputs for stacked inputs ``(T, B, 4J)`` -> ``(T, B, 6)``."""
    outs = []
    for s in range(0, xs.shape[1], chunk):
        tape = Tape()
        pv = {k: tape.const(v) for k, v in params.items()}
        outs.append(forward_graph(tape, pv, params.config, xs[:, s : s + chunk]).value)
    return np.concatenate(outs, axis=1)


def sequence_report(pred: Motions, sample: MotionSample, rest: np.ndarray, label: str = "") -> MetricReport:
    """Metrics of one window; ``rest`` holds the rest vertices of all ``T + 1`` frames.

    The accumulated-error curve compares the trajectory chained from the
    predicted motions with the one chained from the true motions, so both go
    through identical arithmetic and a perfect prediction scores exactly 0.
    """
    T = sample.n_motions
    gt = Motions(sample.dA, sample.dT)
    dA = rot3.wrap_aa(pred.dA)
    R, Tr = accumulate_arrays(dA, pred.dT)
    gR, gT = accumulate_arrays(gt.dA, gt.dT)
    curve = accumulated_vertex_error(R, Tr, gR, gT, rest)
    return MetricReport(
        metric_ome(dA, gt.dA),
        metric_tme(pred.dT, gt.dT),
        metric_vme(rest[:T], Motions(dA, pred.dT), gt),
        curve.tolist(),
        label,
    )


def evaluate_predictions(preds: list[Motions], samples: list[MotionSample], skel: BodySkeleton,
                         label: str = "") -> MetricReport:
    if not samples:
        raise ValueError("empty dataset")
    if len(preds) != len(samples):
        raise ValueError("one prediction per sample required")
    reports = [
        sequence_report(p, s, rest_vertices(skel, s.local, s.beta)) for p, s in zip(preds, samples)
    ]
    return mean_report(reports, label)


def evaluate(params: GmrParams, samples: list[MotionSample], skel: BodySkeleton,
             label: str = "") -> MetricReport:
    """OME/TME/VME of the network on ``samples`` (per-window means, then mean over windows)."""
    if not samples:
        raise ValueError("empty dataset")
    preds: list[Motions | None] = [None] * len(samples)
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_len.setdefault(s.n_motions, []).append(i)
    for T, idx in by_len.items():
        xs = np.stack([pose_features(samples[i].local[:T]) for i in idx], axis=1)
        y = predict(params, xs)
        for j, i in enumerate(idx):
            preds[i] = Motions(y[:, j, :3], y[:, j, 3:])
    return evaluate_predictions(preds, samples, skel, label)


def zero_predictions(samples: list[MotionSample]) -> list[Motions]:
    return [Motions(np.zeros_like(s.dA), np.zeros_like(s.dT)) for s in samples]


def gt_predictions(samples: list[MotionSample]) -> list[Motions]:
    return [Motions(s.dA.copy(), s.dT.copy()) for s in samples]


# -- training loop -----------------------------------------------------------------------


def pack_checkpoint(params: GmrParams, adam: AdamState, config: TrainConfig) -> Checkpoint:
    tensors = dict(params)
    tensors.update({f"adam.m.{k}": v for k, v in adam.m.items()})
    tensors.update({f"adam.v.{k}": v for k, v in adam.v.items()})
    return Checkpoint(params.config, tensors, config.seed, adam.step,
                      {"train_config": {k: v for k, v in config.to_flat().items()}})


def unpack_checkpoint(ckpt: Checkpoint) -> tuple[GmrParams, AdamState]:
    params = ckpt.params()
    if any(f"adam.m.{k}" not in ckpt.tensors for k in params):
        adam = AdamState.zeros(params)
        adam.step = ckpt.step
        return params, adam
    return params, AdamState(
        {k: ckpt.tensors[f"adam.m.{k}"].copy() for k in params},
        {k: ckpt.tensors[f"adam.v.{k}"].copy() for k in params},
        ckpt.step,
    )


@dataclass
class TrainResult:
    params: GmrParams
    adam: AdamState
    rows: list[dict]

    def log_csv(self) -> str:
        return format_log(self.rows)


def format_log(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (r[c] if c == "step" else repr(r[c])) for c in LOG_COLUMNS])
    return buf.getvalue()


def train(
    samples: list[MotionSample],
    config: TrainConfig,
    skel: BodySkeleton,
    eval_samples: list[MotionSample] | None = None,
    start: tuple[GmrParams, AdamState] | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Run ``config.steps`` optimizer steps (resuming after ``start``'s step if given)."""
    data = PreparedSet(samples, skel)
    dims = {s.local.shape[1] * 4 for s in samples}
    if dims != {config.model.input_dim}:
        raise ValueError(f"pose dimension {sorted(dims)} does not match model input_dim {config.model.input_dim}")
    if start is None:
        params = init_params(config.model, config.seed)
        adam = AdamState.zeros(params)
    else:
        params, adam = start
        if params.config != config.model:
            raise ValueError("checkpoint model config differs from the training config")
    rows = []
    for step in range(adam.step + 1, config.steps + 1):
        idx, flips = draw_batch(config.seed, step, len(data), config)
        batch = [data.get(int(i), bool(f)) for i, f in zip(idx, flips)]
        params, adam, losses = train_step(params, adam, batch, config)
        row = {"step": step, "L_total": losses["total"], "L_ori": losses["ori"],
               "L_trans": losses["trans"], "L_vertex": losses["vertex"], "L_smooth": losses["smooth"]}
        if config.eval_every and step % config.eval_every == 0:
            rep = evaluate(params, eval_samples or samples, skel)
            row.update(OME=rep.ome, TME=rep.tme, VME=rep.vme)
        rows.append(row)
        if log_every and step % log_every == 0:
            log.info("step %d  loss %.5g", step, losses["total"])
    return TrainResult(params, adam, rows)
