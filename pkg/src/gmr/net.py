"""Bidirectional-GRU global motion regressor.

Per frame ``i`` the network maps the local pose sequence to a raw 6-vector
``(dA, dT)``::

    H_i = concat(forward GRU state, backward GRU state)    (stacked `layers` deep)
    F_i = H_i @ W_proj + b_proj                           (affine, no activation)
    y_i = F_i @ W_head + b_head

GRU gates are packed column-wise as ``[z | r | h~]``; inputs are row vectors
(``x @ W``). Parameter names::

    gru.{layer}.{fwd|bwd}.W   (in, 3H)
    gru.{layer}.{fwd|bwd}.U   (H, 3H)
    gru.{layer}.{fwd|bwd}.b   (3H,)
    proj.W (2H, P), proj.b (P,), head.W (P, 6), head.b (6,)
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .tape import Tape, Var

DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class GmrConfig:
    input_dim: int = 92
    layers: int = 2
    hidden: int = 64
    proj_dim: int = 64
    output_dim: int = 6

    def __post_init__(self):
        for name in ("input_dim", "layers", "hidden", "proj_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.input_dim % 4:
            raise ValueError("input_dim must be 4 * n_joints")
        if self.output_dim != 6:
            raise ValueError("output_dim is fixed at 6 (dA ++ dT)")

    @classmethod
    def full_size(cls) -> "GmrConfig":
        """Full-size network: 4 layers x 2048 units, 2048-wide projection."""
        return cls(layers=4, hidden=2048, proj_dim=2048)

    @property
    def n_joints(self) -> int:
        return self.input_dim // 4

    def shapes(self) -> dict[str, tuple[int, ...]]:
        H = self.hidden
        out = {}
        for layer in range(self.layers):
            fan_in = self.input_dim if layer == 0 else 2 * H
            for d in DIRECTIONS:
                out[f"gru.{layer}.{d}.W"] = (fan_in, 3 * H)
                out[f"gru.{layer}.{d}.U"] = (H, 3 * H)
                out[f"gru.{layer}.{d}.b"] = (3 * H,)
        out["proj.W"] = (2 * H, self.proj_dim)
        out["proj.b"] = (self.proj_dim,)
        out["head.W"] = (self.proj_dim, self.output_dim)
        out["head.b"] = (self.output_dim,)
        return out


class GmrParams(dict):
    """Ordered ``name -> float64 array`` mapping tied to a :class:`GmrConfig`."""

    def __init__(self, config: GmrConfig, tensors: dict[str, np.ndarray]):
        shapes = config.shapes()
        if list(tensors) != list(shapes):
            missing = set(shapes) ^ set(tensors)
            raise ValueError(f"parameter names do not match config: {sorted(missing)}")
        for name, shape in shapes.items():
            t = tensors[name]
            if t.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"{name} has non-finite entries")
        super().__init__((k, np.asarray(v, dtype=np.float64)) for k, v in tensors.items())
        self.config = config

    def copy(self) -> "GmrParams":
        return GmrParams(self.config, {k: v.copy() for k, v in self.items()})

    def n_values(self) -> int:
        return sum(v.size for v in self.values())


def init_params(config: GmrConfig, seed: int) -> GmrParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrices, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in config.shapes().items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return GmrParams(config, tensors)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_cell(x: np.ndarray, h: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One GRU update on plain arrays.

    z = s(x Wz + h Uz + bz); r = s(x Wr + h Ur + br)
    h~ = tanh(x Wh + (r * h) Uh + bh); h' = (1 - z) * h~ + z * h
    """
    H = h.shape[-1]
    if W.shape != (x.shape[-1], 3 * H) or U.shape != (H, 3 * H) or b.shape != (3 * H,):
        raise ValueError(
            f"GRU shapes disagree: x {x.shape}, h {h.shape}, W {W.shape}, U {U.shape}, b {b.shape}"
        )
    xp = x @ W + b
    zr = _sigmoid(xp[..., : 2 * H] + h @ U[:, : 2 * H])
    z, r = zr[..., :H], zr[..., H:]
    cand = np.tanh(xp[..., 2 * H :] + (r * h) @ U[:, 2 * H :])
    return (1.0 - z) * cand + z * h


def forward_graph(tape: Tape, pv: dict[str, Var], config: GmrConfig, xs: np.ndarray | Var) -> Var:
    """Record the forward pass; ``xs`` is ``(T, B, input_dim)``, result ``(T, B, 6)``."""
    x = xs if isinstance(xs, Var) else tape.const(xs)
    if x.value.ndim != 3 or x.value.shape[-1] != config.input_dim:
        raise ValueError(f"input must be (T, B, {config.input_dim}), got {x.value.shape}")
    if x.value.shape[0] < 1:
        raise ValueError("empty sequence")
    for layer in range(config.layers):
        per_dir = []
        for d in DIRECTIONS:
            per_dir.append(tape.gru(
                x,
                pv[f"gru.{layer}.{d}.W"],
                pv[f"gru.{layer}.{d}.U"],
                pv[f"gru.{layer}.{d}.b"],
                reverse=(d == "bwd"),
            ))
        x = tape.concat(per_dir, axis=-1)
    feat = tape.add(tape.matmul(x, pv["proj.W"]), pv["proj.b"])
    return tape.add(tape.matmul(feat, pv["head.W"]), pv["head.b"])


def pose_features(quats: np.ndarray) -> np.ndarray:
    """Flatten ``(..., J, 4)`` canonical quaternions to ``(..., 4J)`` network inputs."""
    quats = np.asarray(quats, dtype=float)
    return quats.reshape(*quats.shape[:-2], quats.shape[-2] * 4)


def gmr_forward(params: GmrParams, seq: np.ndarray) -> np.ndarray:
    """Raw network outputs for one sequence.

    ``seq`` is either ``(T, 4J)`` features or ``(T, J, 4)`` quaternions;
    batched ``(T, B, 4J)`` input is passed through. Returns ``(T, 6)``
    (or ``(T, B, 6)``).
    """
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 3 and seq.shape[-1] == 4 and seq.shape[-2] * 4 == params.config.input_dim:
        seq = pose_features(seq)
    if seq.shape[0] == 0:
        raise ValueError("empty sequence")
    single = seq.ndim == 2
    xs = seq[:, None, :] if single else seq
    tape = Tape()
    pv = {k: tape.const(v) for k, v in params.items()}
    out = forward_graph(tape, pv, params.config, xs).value
    return out[:, 0, :] if single else out


def param_vars(tape: Tape, params: GmrParams) -> dict[str, Var]:
    return {k: tape.param(v) for k, v in params.items()}


def gmr_backward(tape: Tape, loss: Var, pv: dict[str, Var]) -> dict[str, np.ndarray]:
    """Gradients of the scalar ``loss`` for every parameter variable (zeros if unused)."""
    tape.backward(loss)
    return {k: (np.zeros_like(v.value) if v.grad is None else np.asarray(v.grad, dtype=float))
            for k, v in pv.items()}


# -- checkpoints --------------------------------------------------------------
#
# Layout: one line of JSON header (UTF-8, no embedded newlines) + "\n", then the
# tensors listed in header["tensors"] as contiguous little-endian float64 in that
# order. Header keys: format, version, config, seed, step, tensors[{name, shape}],
# plus an optional free-form "extra" object.

CHECKPOINT_FORMAT = "gmr-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: GmrConfig
    tensors: dict[str, np.ndarray]
    seed: int = 0
    step: int = 0
    extra: dict | None = None

    def params(self) -> GmrParams:
        names = list(self.config.shapes())
        return GmrParams(self.config, {k: self.tensors[k] for k in names})


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(ckpt.config),
        "seed": int(ckpt.seed),
        "step": int(ckpt.step),
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in ckpt.tensors.items()],
    }
    if ckpt.extra is not None:
        header["extra"] = ckpt.extra
    head = json.dumps(header, separators=(",", ":"), sort_keys=False).encode()
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in ckpt.tensors.values())
    return head + b"\n" + blob


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def parse_checkpoint(data: bytes) -> Checkpoint:
    head, sep, blob = data.partition(b"\n")
    if not sep:
        raise ValueError("checkpoint header not terminated")
    header = json.loads(head)
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a gmr checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    tensors = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=int))
        chunk = blob[offset : offset + 8 * n]
        if len(chunk) != 8 * n:
            raise ValueError("checkpoint blob truncated")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * n
    if offset != len(blob):
        raise ValueError("trailing bytes after checkpoint blob")
    return Checkpoint(
        GmrConfig(**header["config"]), tensors, header["seed"], header["step"], header.get("extra")
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes())

