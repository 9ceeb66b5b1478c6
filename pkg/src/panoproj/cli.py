"""Command line entry point: project, video, evaluate, synth, compare."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from panoproj.config import ProjectionConfig, format_config, load_config
from panoproj.content import FrameContent, LineSegment, SalientPoint, annotations_to_dict
from panoproj.errors import NumericError, ValidationError
from panoproj.imageio import read_image, write_image
from panoproj.metrics import reports_to_csv, reports_to_json
from panoproj.pipeline import (
    BASELINE_MODELS,
    Pipeline,
    StageError,
    frame_warp,
    load_sequence_content,
    load_trajectory,
    run_evaluate,
    save_trajectory,
    viewpoint_at,
)
from panoproj.render import check_equirect, render
from panoproj.sphere import Viewpoint, rotate_into_view
from panoproj.synth import SceneSpec, generate

log = logging.getLogger("panoproj")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4
FRAME_RE = re.compile(r"frame_(\d{6})\.(png|ppm)$")
MONTAGE_GAP = 8


class UsageError(Exception):
    pass


def _size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)[xX](\d+)", text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--fov", type=float, help="horizontal field of view in degrees")
    common.add_argument("--size", type=_size, help="output size WxH in pixels")
    common.add_argument("--annotations", type=Path, help="per-frame lines and salient points (JSON)")
    common.add_argument("--trajectory", type=Path, help="CSV with frame,yaw,pitch,roll in radians")
    common.add_argument("--literal-eq4", action="store_true", help="use the uncorrected conformality energy")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="panoproj", description="Content-aware projection of 360-degree imagery.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", parents=[common], help="render one equirectangular image")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output image (.png or .ppm)")
    p.add_argument("--model", default="proposed")
    p.add_argument("--frame", type=int, default=0, help="annotation frame and trajectory index to use")
    p.add_argument("--dump-warp", action="store_true", help="also write the warp map next to the output")

    p = sub.add_parser("video", parents=[common], help="render a numbered frame sequence")
    p.add_argument("input", type=Path, help="directory of frame_NNNNNN.png/ppm files")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=("png", "ppm"), default="png")
    p.add_argument("--strict", action="store_true", help="abort the run at the first failing frame")
    p.add_argument("--dump-warp", action="store_true", help="write each frame's warp map")

    p = sub.add_parser("evaluate", parents=[common], help="straightness and conformality per model")
    p.add_argument("--model", action="append", help="model name (repeatable); default: the five baselines")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", type=Path, help="directory for metrics.json and metrics.csv")

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic room scene")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--pan", type=float, default=0.005, help="yaw change per frame in radians")
    p.add_argument("--equirect-size", type=_size, default=(2048, 1024))

    p = sub.add_parser("compare", parents=[common], help="side-by-side montage of named models")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--model", action="append", help="model name (repeatable); default: the five baselines")
    p.add_argument("--frame", type=int, default=0)
    return parser


def make_config(args) -> ProjectionConfig:
    cfg = load_config(args.config) if args.config else ProjectionConfig()
    over = {}
    if args.fov is not None:
        over["h_fov"] = args.fov
    if args.size is not None:
        over["width"], over["height"] = args.size
    if args.literal_eq4:
        over["literal_eq4"] = True
    return cfg.with_overrides(**over) if over else cfg


def _frame_content(args, cfg: ProjectionConfig, trajectory) -> FrameContent:
    if args.annotations is None:
        return FrameContent(args.frame, [], [])
    frames = load_sequence_content(args.annotations, cfg, trajectory)
    return frames.get(args.frame, FrameContent(args.frame, [], []))


def _check_model(name: str) -> None:
    known = {"rectilinear", "stereographic", "pannini-d1", "pannini-d0.5", "optimized", "proposed"}
    if name not in known and not name.startswith("pannini:"):
        raise UsageError(f"unknown model {name!r}; choose from {', '.join(sorted(known))} or pannini:D,W")


def cmd_project(args, cfg: ProjectionConfig) -> int:
    _check_model(args.model)
    trajectory = load_trajectory(args.trajectory) if args.trajectory else {}
    src = check_equirect(read_image(args.input))
    content = _frame_content(args, cfg, trajectory)
    warp = frame_warp(args.model, content, cfg)
    write_image(args.out, render(src, warp, viewpoint_at(trajectory, args.frame)))
    if args.dump_warp:
        warp.save(args.out.with_suffix(".pwrp"))
    return EXIT_OK


def list_frames(folder: Path) -> list[tuple[int, Path]]:
    if not folder.is_dir():
        raise ValidationError(f"{folder} is not a directory")
    found = {}
    for path in folder.iterdir():
        m = FRAME_RE.fullmatch(path.name)
        if m:
            index = int(m.group(1))
            if index in found:
                raise ValidationError(f"frame {index} present as both {found[index].name} and {path.name}")
            found[index] = path
    if not found:
        raise ValidationError(f"no frame_NNNNNN.png/ppm files in {folder}")
    return sorted(found.items())


def cmd_video(args, cfg: ProjectionConfig) -> int:
    frames = list_frames(args.input)
    trajectory = load_trajectory(args.trajectory) if args.trajectory else {}
    contents = load_sequence_content(args.annotations, cfg, trajectory) if args.annotations else {}
    args.out.mkdir(parents=True, exist_ok=True)
    pipeline = Pipeline(cfg)
    reports, failures = [], []
    status = EXIT_OK
    for index, path in frames:
        content = contents.get(index, FrameContent(index, [], []))
        viewpoint = viewpoint_at(trajectory, index)
        try:
            src = check_equirect(read_image(path))
            result = pipeline.process(src, content, viewpoint)
        except (StageError, ValidationError, NumericError) as exc:
            cause = exc.cause if isinstance(exc, StageError) else exc
            code = EXIT_NUMERIC if isinstance(cause, NumericError) else EXIT_INPUT
            msg = str(exc) if isinstance(exc, StageError) else f"frame {index}, stage load: {exc}"
            if args.strict:
                raise
            log.error("%s (frame skipped)", msg)
            failures.append({"frame": index, "error": msg})
            status = status or code
            continue
        write_image(args.out / f"frame_{index:06d}.{args.format}", result.image)
        if args.dump_warp:
            result.warp.save(args.out / f"warp_{index:06d}.pwrp")
        rep = result.report()
        reports.append(rep)
        g = rep["global"]
        print(f"frame {index:06d}: d={g[0]:.4f} w={g[1]:.4f} anchors={len(rep['anchors'])}")
    report = {"config": format_config(cfg).splitlines(), "frames": reports, "failures": failures}
    (args.out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    return status


def _scene_content() -> FrameContent:
    return generate(SceneSpec(width=256, height=128))[1]


def cmd_evaluate(args, cfg: ProjectionConfig) -> int:
    models = args.model or list(BASELINE_MODELS)
    for name in models:
        _check_model(name)
    if args.annotations:
        trajectory = load_trajectory(args.trajectory) if args.trajectory else {}
        content = _frame_content(args, cfg, trajectory)
    else:
        content = _scene_content()
    reports = run_evaluate(content, models, cfg)
    print(f"{'model':<16} {'straightness':>12} {'conformality':>12}")
    for r in reports:
        print(f"{r.model:<16} {r.mean_straightness:>12.4f} {r.mean_conformality:>12.4f}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "metrics.json").write_text(reports_to_json(reports) + "\n")
        (args.out / "metrics.csv").write_text(reports_to_csv(reports))
    return EXIT_OK


def cmd_synth(args, cfg: ProjectionConfig) -> int:
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    w, h = args.equirect_size
    img, content = generate(SceneSpec(width=w, height=h))
    args.out.mkdir(parents=True, exist_ok=True)
    trajectory, frames = {}, []
    for t in range(args.frames):
        view = Viewpoint(args.pan * t, 0.0, 0.0)
        trajectory[t] = view
        # annotations are relative to each frame's viewpoint
        lines = [LineSegment(*(rotate_into_view(p, view) for p in (l.start, l.mid, l.end))) for l in content.lines]
        points = [SalientPoint(rotate_into_view(p.dir, view), p.score) for p in content.points]
        frames.append(FrameContent(t, lines, points))
        write_image(args.out / f"frame_{t:06d}.png", img)
    (args.out / "annotations.json").write_text(json.dumps(annotations_to_dict(frames), indent=1) + "\n")
    save_trajectory(args.out / "trajectory.csv", trajectory)
    print(f"wrote {args.frames} frame(s), {len(content.lines)} lines, {len(content.points)} points to {args.out}")
    return EXIT_OK


def cmd_compare(args, cfg: ProjectionConfig) -> int:
    models = args.model or list(BASELINE_MODELS)
    for name in models:
        _check_model(name)
    trajectory = load_trajectory(args.trajectory) if args.trajectory else {}
    src = check_equirect(read_image(args.input))
    content = _frame_content(args, cfg, trajectory)
    view = viewpoint_at(trajectory, args.frame)
    panels = [render(src, frame_warp(name, content, cfg), view) for name in models]
    gap = np.zeros((cfg.height, MONTAGE_GAP, 3), dtype=np.uint8)
    parts = [panels[0]]
    for panel in panels[1:]:
        parts += [gap, panel]
    write_image(args.out, np.concatenate(parts, axis=1))
    return EXIT_OK


COMMANDS = {"project": cmd_project, "video": cmd_video, "evaluate": cmd_evaluate, "synth": cmd_synth, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, NumericError) else EXIT_INPUT
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
