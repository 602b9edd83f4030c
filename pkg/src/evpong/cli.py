"""Command-line entry point: the full pipeline as subcommands.

Exit codes: 0 success, 2 configuration/usage error, 3 data error.
Every subcommand that takes --seed is bit-reproducible in its data outputs
(bench timing reports excluded).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import synth
from .config import load_run_config, RunConfig
from .detect import (
    BallDetector,
    cluster,
    denoise,
    geometric_verify,
    localize,
    polarity_filter,
)
from .env import EnvConfig
from .errors import ConfigError, DataError, EvpongError
from .events import (
    EventArray,
    Roi,
    clip_to_roi,
    read_events_binary,
    read_event_stream,
    window_event_array,
    write_events_binary,
    write_events_csv,
)
from .geometry import (
    BallObservation3D,
    StereoRig,
    pixel_to_ray,
    standard_rig,
    triangulate,
    two_stage_hit_state,
)
from .learner import (
    evaluate_policy,
    load_checkpoint,
    save_checkpoint,
    train_curriculum,
)
from .metrics import score_training


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ConfigError(f"--dims expects WIDTHxHEIGHT, got {text!r}") from exc


def _load_events(path, dims: tuple[int, int]) -> tuple[EventArray, tuple[int, int]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"EVT1":
        return read_events_binary(path)
    arr = EventArray.from_events(read_event_stream(path, dims))
    return arr, dims


def _scene_from_args(args) -> synth.SceneSpec:
    if args.scene:
        scene = synth.scene_by_name(args.scene)
    else:
        raw = json.loads(Path(args.spec).read_text())
        distractors = []
        for d in raw.pop("distractors", []):
            kind = d.pop("type", None)
            if kind == "rect":
                distractors.append(synth.RectDistractor(**d))
            elif kind == "capsule":
                distractors.append(synth.CapsuleDistractor(**d))
            else:
                raise ConfigError(f"distractor type must be rect|capsule, got {kind!r}")
        for key in ("ball_p0", "ball_v0"):
            if key in raw:
                raw[key] = tuple(raw[key])
        scene = synth.SceneSpec(distractors=distractors, **raw)
    if args.seed is not None:
        scene.seed = args.seed
    return scene


def cmd_gen(args) -> int:
    scene = _scene_from_args(args)
    rig = standard_rig()
    out = Path(args.out) / synth.scene_slug(scene.name)
    out.mkdir(parents=True, exist_ok=True)
    render = synth.simulate_scene(scene, rig, dt_sim=args.dt_sim)
    for side, events in (("left", render.events_left), ("right", render.events_right)):
        if args.format in ("csv", "both"):
            write_events_csv(out / f"events_{side}.csv", events)
        if args.format in ("binary", "both"):
            write_events_binary(out / f"events_{side}.evt", events, render.sensor_dims)
    synth.write_labels_csv(out / "labels.csv", render.labels)
    (out / "rig.json").write_text(json.dumps(rig.to_dict(), sort_keys=True, indent=2))
    print(f"{scene.name}: {len(render.events_left)} left / "
          f"{len(render.events_right)} right events, {len(render.labels)} labels -> {out}")
    return 0


def _detector_from_config(cfg: RunConfig) -> tuple[BallDetector, int]:
    return BallDetector(**{f: getattr(cfg.detect, f) for f in (
        "kernel_radius", "eps", "min_samples", "cluster_card_min", "cluster_card_max",
        "centroid_dist_max", "circ_min", "solidity_min", "radius_min", "radius_max",
        "roi_expand",
    )}), cfg.window_us


def cmd_detect(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    window_us = args.window_us or cfg.window_us
    detector, _ = _detector_from_config(cfg)
    events, dims = _load_events(args.events, _parse_dims(args.dims))
    batches = window_event_array(events, window_us, dims)
    detections = detector.transform(batches)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for batch, det in zip(batches, detections):
            if det is None:
                rec = {"t": batch.t_end, "cam": args.cam, "miss": True}
            else:
                rec = {
                    "t": det.t, "cam": args.cam, "u": round(det.u, 4),
                    "v": round(det.v, 4), "r": round(det.r, 4),
                    "gamma": round(det.features.circularity, 6),
                    "eta": round(det.features.solidity, 6),
                }
            sink.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if args.out:
            sink.close()
    return 0


def _read_detections_jsonl(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: bad JSON: {exc}") from exc
    return rows


def cmd_triangulate(args) -> int:
    rig = StereoRig.from_dict(json.loads(Path(args.rig).read_text()))
    left = [r for r in _read_detections_jsonl(args.left) if not r.get("miss")]
    right = [r for r in _read_detections_jsonl(args.right) if not r.get("miss")]
    right_t = np.array([r["t"] for r in right], dtype=np.int64)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        sink.write("t,x,y,z,residual\n")
        for det_l in left:
            if len(right_t) == 0:
                break
            i = int(np.clip(np.searchsorted(right_t, det_l["t"]), 0, len(right_t) - 1))
            if i > 0 and abs(right_t[i - 1] - det_l["t"]) <= abs(right_t[i] - det_l["t"]):
                i -= 1
            if abs(int(right_t[i]) - det_l["t"]) > args.tolerance_us:
                continue
            det_r = right[i]
            obs = triangulate(
                pixel_to_ray(rig.left, det_l["u"], det_l["v"]),
                pixel_to_ray(rig.right, det_r["u"], det_r["v"]),
                t=det_l["t"],
            )
            sink.write(
                f"{obs.t},{obs.position[0]:.9f},{obs.position[1]:.9f},"
                f"{obs.position[2]:.9f},{obs.residual:.9f}\n"
            )
    finally:
        if args.out:
            sink.close()
    return 0


def cmd_predict(args) -> int:
    obs = []
    with open(args.obs) as fh:
        header = fh.readline().strip()
        if header != "t,x,y,z,residual":
            raise DataError(f"unexpected observations header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 5:
                raise DataError(f"bad observations row {line!r}")
            obs.append(BallObservation3D(
                t=int(parts[0]),
                position=np.array([float(parts[1]), float(parts[2]), float(parts[3])]),
                residual=float(parts[4]),
            ))
    hit = two_stage_hit_state(obs, args.plane_x)
    payload = {
        "t_c": hit.t_c,
        "p_c": [round(float(v), 9) for v in hit.p_c],
        "v_c": [round(float(v), 9) for v in hit.v_c],
        "stage": hit.stage,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agent = cfg.make_agent()
    result = train_curriculum(
        stages=cfg.train.stages,
        env_cfg=cfg.env,
        agent=agent,
        reward_cfg=cfg.reward,
        sched=cfg.exploration,
        seed=cfg.seed,
        reward_mode=cfg.train.reward_mode,
        buffer_strategy=cfg.train.buffer_strategy,
        delta=cfg.train.delta,
        target_x_range=cfg.train.target_x_range,
        target_y_range=cfg.train.target_y_range,
        keep_detail=True,
    )
    save_checkpoint(agent, out / "checkpoint.agp")
    with open(out / "metrics.csv", "w") as fh:
        fh.write("n,stage,case,reward,d,eta\n")
        for rec in result.log:
            fh.write(f"{rec.n},{rec.stage_speed:g},{rec.case},{rec.reward:.9f},"
                     f"{rec.d:.9f},{rec.eta:.9f}\n")
    with open(out / "episodes.jsonl", "w") as fh:
        fh.write(json.dumps({"seed": cfg.seed}, sort_keys=True) + "\n")
        for row in result.episodes_detail:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    bad = [pair for pair in result.migration_checks if pair[0] < pair[1]]
    if bad:
        raise DataError(f"buffer migration leaked {len(bad)} sub-threshold transitions")
    print(f"trained {len(result.log)} episodes -> {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    agent = load_checkpoint(args.checkpoint)
    records = evaluate_policy(
        agent, cfg.env, args.episodes, seed=args.seed if args.seed is not None else cfg.seed,
        target_x_range=cfg.train.target_x_range, target_y_range=cfg.train.target_y_range,
    )
    score = score_training(records, window=50)
    payload = {
        "episodes": args.episodes,
        "return_rate": score.return_rate,
        "mean_target_distance_mm": score.mean_target_distance_mm,
        "window_return_rates": score.window_return_rates,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    window_us = args.window_us or cfg.window_us
    events, dims = _load_events(args.events, _parse_dims(args.dims))
    batches = window_event_array(events, window_us, dims)
    dcfg = cfg.detect
    stage_ns = {k: 0 for k in ("denoise", "cluster", "polarity_filter",
                               "geometric_verify", "localize")}
    w, h = dims
    roi = Roi.full_sensor(dims)
    t_wall0 = time.perf_counter()
    for batch in batches:
        clipped = clip_to_roi(batch, roi)
        t0 = time.perf_counter_ns()
        cleaned = denoise(clipped, dcfg.kernel_radius)
        t1 = time.perf_counter_ns()
        clusters = cluster(cleaned, dcfg)
        t2 = time.perf_counter_ns()
        stage_ns["denoise"] += t1 - t0
        stage_ns["cluster"] += t2 - t1
        best = None
        for cl in clusters:
            t3 = time.perf_counter_ns()
            refined = polarity_filter(cl, dcfg.centroid_dist_max)
            t4 = time.perf_counter_ns()
            stage_ns["polarity_filter"] += t4 - t3
            if len(refined) == 0:
                continue
            t5 = time.perf_counter_ns()
            feats, _ = geometric_verify(refined, dcfg)
            t6 = time.perf_counter_ns()
            stage_ns["geometric_verify"] += t6 - t5
            if feats is None:
                continue
            t7 = time.perf_counter_ns()
            det = localize(refined, dcfg, batch.t_end, feats)
            t8 = time.perf_counter_ns()
            stage_ns["localize"] += t8 - t7
            if det and (best is None or det.features.circularity > best.features.circularity):
                best = det
        if best is not None:
            roi = Roi(
                max(0, int(np.floor(best.u)) - dcfg.roi_expand),
                min(w - 1, int(np.ceil(best.u)) + dcfg.roi_expand),
                max(0, int(np.floor(best.v)) - dcfg.roi_expand),
                min(h - 1, int(np.ceil(best.v)) + dcfg.roi_expand),
                miss_count=0,
            )
        elif roi.miss_count + 1 >= 3:
            roi = Roi.full_sensor(dims)
        else:
            roi = Roi(roi.x_min, roi.x_max, roi.y_min, roi.y_max, roi.miss_count + 1)
    wall_s = time.perf_counter() - t_wall0
    n_windows = max(len(batches), 1)
    report = {
        "windows": len(batches),
        "events": len(events),
        "events_per_s": len(events) / wall_s if wall_s > 0 else float("inf"),
        "wall_s": wall_s,
        "stages_us_per_window": {
            k: v / 1000.0 / n_windows for k, v in stage_ns.items()
        },
    }
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evpong",
        description="Event-camera table-tennis perception and one-step return learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render a synthetic stereo event scene")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="catalog scene name (see README)")
    src.add_argument("--spec", help="scene spec JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dt-sim", type=float, default=synth.DT_SIM_DEFAULT)
    p.add_argument("--format", choices=("csv", "binary", "both"), default="both")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("detect", help="run ball detection over an event file")
    p.add_argument("--events", required=True)
    p.add_argument("--cam", choices=("L", "R"), required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--window-us", type=int, default=None)
    p.add_argument("--dims", default="1280x720", help="sensor dims for CSV input")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("triangulate", help="fuse stereo detections into 3D points")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--rig", required=True, help="rig JSON (written by gen)")
    p.add_argument("--out", default=None)
    p.add_argument("--tolerance-us", type=int, default=1000)
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("predict", help="predict the hitting-plane state")
    p.add_argument("--obs", required=True, help="t,x,y,z,residual CSV")
    p.add_argument("--plane-x", type=float, default=1.6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("train", help="train the return policy curriculum")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage detection latency report")
    p.add_argument("--events", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--window-us", type=int, default=None)
    p.add_argument("--dims", default="1280x720")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except EvpongError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
