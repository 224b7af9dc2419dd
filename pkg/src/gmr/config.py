"""Flat ``key = value`` config files and run manifests.

Config files hold one ``key = value`` pair per line; ``#`` and ``;`` start
comments. Each command documents its own keys (see :data:`GENERATE_KEYS`,
:data:`CAMERA_KEYS` and :meth:`gmr.trainer.TrainConfig.from_flat`). Unknown
keys are errors.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import KINDS, GeneratorSpec, InvalidSpec, sample_specs
from .pipeline import CameraPath

TOOLKIT_VERSION = "0.1.0"


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    return dict(parser["config"])


def read_kv(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return {}
    return parse_kv(Path(path).read_text())


def config_hash(kv: dict) -> str:
    blob = json.dumps({k: str(v) for k, v in kv.items()}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _floats(raw: str, n: int | None = None) -> tuple[float, ...]:
    vals = tuple(float(x) for x in raw.split(",") if x.strip())
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {raw!r}")
    return vals


def _bool(raw: str) -> bool:
    s = raw.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


# -- dataset generation ---------------------------------------------------------------

GENERATE_KEYS = {
    "count": "number of source sequences",
    "seed": "generator seed",
    "kinds": "comma-separated motion kinds, assigned round-robin",
    "duration": "sequence length in seconds",
    "fps": "frame rate",
    "window": "frames per training window (T + 1)",
    "stride": "frames between window starts",
    "speed": "min,max walking speed (m/s)",
    "turn": "min,max turn rate for walks (rad/s)",
    "spin": "min,max turn rate for turn-in-place (rad/s)",
    "gait": "min,max step frequency (Hz)",
}


@dataclass(frozen=True)
class GenerateConfig:
    count: int = 200
    seed: int = 0
    kinds: tuple[str, ...] = ("straight-walk", "circle-walk", "figure-8", "turn-in-place")
    duration: float = 6.4
    fps: float = 10.0
    window: int = 17
    stride: int = 8
    speed: tuple[float, float] = (0.6, 1.6)
    turn: tuple[float, float] = (0.2, 0.8)
    spin: tuple[float, float] = (0.4, 1.2)
    gait: tuple[float, float] = (0.8, 1.2)

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("count must be nonnegative")
        if self.window < 2 or self.stride < 1:
            raise ConfigError("window must be >= 2 and stride >= 1")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad or not self.kinds:
            raise ConfigError(f"unknown kinds {bad}; expected a subset of {KINDS}")
        for name in ("speed", "turn", "spin", "gait"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name}: min exceeds max")

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "GenerateConfig":
        out: dict[str, object] = {}
        try:
            for key, raw in kv.items():
                if key in ("count", "seed", "window", "stride"):
                    out[key] = int(raw)
                elif key in ("duration", "fps"):
                    out[key] = float(raw)
                elif key == "kinds":
                    out[key] = tuple(k.strip() for k in raw.split(",") if k.strip())
                elif key in ("speed", "turn", "spin", "gait"):
                    out[key] = _floats(raw, 2)
                else:
                    raise ConfigError(f"unknown generate key {key!r}; known keys: {sorted(GENERATE_KEYS)}")
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return cls(**out)

    def specs(self) -> list[GeneratorSpec]:
        try:
            return sample_specs(self.count, self.seed, self.kinds, self.duration, self.fps,
                                self.speed, self.turn, self.spin, self.gait)
        except InvalidSpec as e:
            raise ConfigError(str(e)) from None


# -- camera simulation ----------------------------------------------------------------

CAMERA_KEYS = {
    "kind": "static | linear | panning | circular",
    "distance": "initial distance to the subject's start (m)",
    "height": "camera height (m)",
    "velocity": "vx,vy,vz for linear paths (m/s)",
    "angular_rate": "yaw or orbit rate (rad/s)",
    "radius": "orbit radius (m)",
    "look_at": "circular only: keep facing the start point",
    "noise_std": "local-pose noise fed to the regressor (rad)",
    "baseline_noise": "camera-frame pose noise for the baseline (rad and m)",
}


@dataclass(frozen=True)
class CameraConfig:
    path: CameraPath = field(default_factory=CameraPath)
    noise_std: float = 0.0
    baseline_noise: float = 0.0

    @classmethod
    def from_kv(cls, kv: dict[str, str], fps: float = 10.0) -> "CameraConfig":
        p: dict[str, object] = {"fps": fps}
        extra: dict[str, float] = {}
        try:
            for key, raw in kv.items():
                if key == "kind":
                    p[key] = raw.strip()
                elif key in ("distance", "height", "angular_rate", "radius"):
                    p[key] = float(raw)
                elif key == "velocity":
                    p[key] = _floats(raw, 3)
                elif key == "look_at":
                    p[key] = _bool(raw)
                elif key in ("noise_std", "baseline_noise"):
                    extra[key] = float(raw)
                else:
                    raise ConfigError(f"unknown camera key {key!r}; known keys: {sorted(CAMERA_KEYS)}")
            return cls(CameraPath(**p), **extra)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e)) from None


# -- manifests --------------------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seeds: dict[str, int]
    inputs: list[str]
    outputs: list[str]
    version: str = TOOLKIT_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {"command": self.command, "config_hash": self.config_hash, "seeds": self.seeds,
             "inputs": self.inputs, "outputs": self.outputs, "version": self.version},
            sort_keys=True, indent=1,
        ) + "\n"

    def write(self, out: str | Path) -> Path:
        """Write next to ``out`` as ``<out>.manifest.json``."""
        path = Path(str(out) + ".manifest.json")
        path.write_text(self.to_json())
        return path
