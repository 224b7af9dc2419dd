"""``gmr`` command line: generate, train, infer, camera-sim, report.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure during
training. Every command writes ``<out>.manifest.json`` next to its output.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .body import BodySkeleton, rest_vertices
from .config import (
    CameraConfig, ConfigError, GenerateConfig, RunManifest, config_hash, read_kv,
)
from .datagen import generate, read_dataset, window, write_dataset
from .net import load_checkpoint, save_checkpoint
from .objective import mean_report
from .pipeline import camera_sim, infer_trajectory, load_reports, report_tables, trajectory_to_json
from .trainer import (
    NumericFailure, TrainConfig, pack_checkpoint, sequence_report, train, unpack_checkpoint,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("gmr")


class UsageError(Exception):
    pass


def _config(args) -> dict[str, str]:
    return read_kv(args.config) if args.config else {}


def _with_seed(kv: dict[str, str], seed: int | None) -> dict[str, str]:
    if seed is not None:
        kv = {**kv, "seed": str(seed)}
    return kv


def _load_samples(path: str):
    samples = read_dataset(path)
    if not samples:
        raise UsageError(f"{path}: dataset is empty")
    return samples


# -- commands ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    kv = _with_seed(_config(args), args.seed)
    cfg = GenerateConfig.from_kv(kv)
    skel = BodySkeleton.default()
    samples = []
    for i, spec in enumerate(cfg.specs()):
        samples += window(generate(spec, skel, source_id=i), cfg.window, cfg.stride)
    n = write_dataset(args.out, samples)
    RunManifest("generate", config_hash(kv), {"seed": cfg.seed}, [args.config or ""], [args.out]).write(args.out)
    print(f"wrote {n} windows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    kv = _with_seed(_config(args), args.seed)
    if args.steps is not None:
        kv["steps"] = str(args.steps)
    config = TrainConfig.from_flat(kv)
    skel = BodySkeleton.default()
    samples = _load_samples(args.dataset)
    eval_samples = _load_samples(args.eval) if args.eval else None
    start = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if ckpt.seed != config.seed:
            raise UsageError(f"checkpoint seed {ckpt.seed} differs from run seed {config.seed}")
        start = unpack_checkpoint(ckpt)
    res = train(samples, config, skel, eval_samples=eval_samples, start=start)
    save_checkpoint(args.out, pack_checkpoint(res.params, res.adam, config))
    log_path = args.log or args.out + ".log.csv"
    Path(log_path).write_text(res.log_csv())
    inputs = [args.dataset] + ([args.eval] if args.eval else []) + ([args.resume] if args.resume else [])
    RunManifest("train", config_hash(kv), {"seed": config.seed}, inputs, [args.out, log_path]).write(args.out)
    last = res.rows[-1]["L_total"] if res.rows else float("nan")
    print(f"trained to step {res.adam.step}; last loss {last:.6g}; checkpoint {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    kv = _config(args)
    unknown = set(kv) - {"label"}
    if unknown:
        raise ConfigError(f"unknown infer keys {sorted(unknown)}; known keys: ['label']")
    params = load_checkpoint(args.checkpoint).params()
    samples = _load_samples(args.input)
    skel = BodySkeleton.default()
    lines, reports = [], []
    for s in samples:
        motions, R, T = infer_trajectory(params, s.local)
        lines.append(trajectory_to_json(R, T, motions, s.fps, s.source_id, s.window_offset))
        reports.append(sequence_report(motions, s, rest_vertices(skel, s.local, s.beta)))
    Path(args.out).write_text("\n".join(lines) + "\n")
    outputs = [args.out]
    if args.metrics:
        rep = mean_report(reports, kv.get("label", Path(args.input).stem))
        Path(args.metrics).write_text(rep.to_json() + "\n")
        outputs.append(args.metrics)
    RunManifest("infer", config_hash(kv), {}, [args.checkpoint, args.input], outputs).write(args.out)
    print(f"wrote {len(lines)} trajectories to {args.out}")
    return EXIT_OK


def cmd_camera_sim(args) -> int:
    kv = _config(args)
    if args.kind:
        kv["kind"] = args.kind
    samples = _load_samples(args.dataset)
    cam = CameraConfig.from_kv(kv, fps=samples[0].fps)
    if any(s.fps != cam.path.fps for s in samples):
        raise UsageError("all windows must share one frame rate")
    params = load_checkpoint(args.checkpoint).params()
    seed = args.seed if args.seed is not None else 0
    res = camera_sim(samples, cam.path, params, BodySkeleton.default(),
                     noise_std=cam.noise_std, baseline_noise=cam.baseline_noise, seed=seed)
    Path(args.out).write_text(res.to_json() + "\n")
    RunManifest("camera-sim", config_hash(kv), {"seed": seed}, [args.dataset, args.checkpoint],
                [args.out]).write(args.out)
    for label, r in res.reports.items():
        print(f"{label:20s} OME {r.ome:8.3f} deg  TME {r.tme:9.2f} mm  VME {r.vme:9.2f} mm")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.config:
        _config(args)
    if not args.inputs:
        raise UsageError("report needs at least one metric file")
    reports = []
    for path in args.inputs:
        reports += load_reports(Path(path).read_text())
    table_csv, table_json, curves = report_tables(reports)
    prefix = args.out
    outs = [prefix + ".csv", prefix + ".json", prefix + "_curves.csv"]
    for path, text in zip(outs, (table_csv, table_json + "\n", curves)):
        Path(path).write_text(text)
    RunManifest("report", config_hash({}), {}, list(args.inputs), outs).write(prefix)
    sys.stdout.write(table_csv)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmr", description="Global motion regression toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")

    sp = sub.add_parser("generate", help="write a synthetic windowed dataset (JSON lines)")
    common(sp, "dataset path")
    sp.set_defaults(fn=cmd_generate)

    sp = sub.add_parser("train", help="train the regressor")
    sp.add_argument("dataset")
    common(sp, "checkpoint path")
    sp.add_argument("--steps", type=int, help="total optimizer steps (overrides config)")
    sp.add_argument("--eval", help="held-out dataset for periodic metrics (eval_every)")
    sp.add_argument("--log", help="loss log CSV (default <out>.log.csv)")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("infer", help="predict motions and accumulate trajectories")
    sp.add_argument("checkpoint")
    sp.add_argument("input", help="dataset of local-pose windows")
    common(sp, "trajectory path (JSON lines)")
    sp.add_argument("--metrics", help="also write a metric report against the input's ground truth")
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("camera-sim", help="compare with the camera-frame baseline under camera motion")
    sp.add_argument("dataset")
    sp.add_argument("checkpoint")
    common(sp, "report path (JSON)")
    sp.add_argument("--kind", choices=("static", "linear", "panning", "circular"))
    sp.set_defaults(fn=cmd_camera_sim)

    sp = sub.add_parser("report", help="aggregate metric files into tables and curves")
    sp.add_argument("inputs", nargs="*")
    common(sp, "output prefix")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except NumericFailure as e:
        print(f"gmr: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, KeyError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"gmr: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
