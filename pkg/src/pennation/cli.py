"""Command-line front end.

Commands::

    pennation synth OUT_DIR            write a synthetic video with truth and annotations
    pennation roi IN_DIR -o OUT        per-frame region of interest records
    pennation estimate IN_DIR -o OUT   raw estimates and per-frame pennation angles
    pennation evaluate CSV... --annotations A.json -o OUT
    pennation matrix IN_DIR -o OUT [--annotations A.json]

Exit status is 0 on success, 1 on a fatal run error (all frames failed,
frame mismatch) and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import report
from .errors import FrameMismatchError, ParameterError, PennationError
from .estimators import COMBINATIONS, METHODS, PREPROCS, check_combination, combination_table
from .evaluation import AnnotationSet, evaluate_run
from .imaging import list_frames, read_image, write_pgm
from .pipeline import REGION_MODES, FrameJob, FrameResult, frame_angles, process_frames
from .roi import CRITERION_ALIASES
from .smoothing import LoessConfig
from .synth import ApoBand, SynthSpec, generate_video, ramp_trajectory, sinusoid_trajectory

log = logging.getLogger("pennation")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
CRITERION_CHOICES = ("variance", "mean-gradient", "hist-max")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input_dir: Optional[str] = None
    output_dir: Optional[str] = None
    method: str = "projection"
    preproc: str = "frangi"
    region_mode: str = "subregions"
    criterion: str = "mean-gradient"
    loess_k: int = 27
    loess: bool = True
    n_best: int = 3
    jobs: int = 1

    def validate(self) -> None:
        try:
            check_combination(self.method, self.preproc)
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc
        if self.region_mode not in REGION_MODES:
            raise UsageError(f"region mode must be one of {REGION_MODES}")
        if self.criterion not in CRITERION_ALIASES:
            raise UsageError(f"criterion must be one of {CRITERION_CHOICES}")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")

    def loess_config(self) -> Optional[LoessConfig]:
        if not self.loess or self.region_mode != "subregions":
            return None
        try:
            return LoessConfig(k=self.loess_k)
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc

    def job(self, combos=None) -> FrameJob:
        return FrameJob(
            combos=tuple(combos or [(self.method, self.preproc)]),
            region_modes=(self.region_mode,) if combos is None else REGION_MODES,
            criterion=CRITERION_ALIASES[self.criterion],
            n_best=self.n_best,
        )


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by the JSON ``--config`` file, overridden by flags."""
    cfg = RunConfig()
    known = set(asdict(cfg))
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in doc.items():
            setattr(cfg, k, v)
    for k in known:
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


# ----------------------------------------------------------------- helpers


def _frames(input_dir) -> list[Path]:
    if input_dir is None:
        raise UsageError("an input directory is required")
    d = Path(input_dir)
    if not d.is_dir():
        raise UsageError(f"{d} is not a directory")
    files = list_frames(d)
    if not files:
        raise UsageError(f"no .png or .pgm frames in {d}")
    return files


def _output_dir(path) -> Path:
    if path is None:
        raise UsageError("an output directory is required (-o)")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_failures(results: list[FrameResult]) -> int:
    failed = [r for r in results if not r.ok]
    for r in failed:
        log.warning("frame %d: %s", r.index, r.error)
    if failed and len(failed) == len(results):
        log.error("all %d frames failed", len(results))
        return EXIT_FAILED
    return EXIT_OK


def _estimate_rows(results: list[FrameResult], combo) -> list[dict]:
    rows = []
    for r in results:
        if not r.ok:
            continue
        for e in r.estimates.get(combo, []):
            rows.append({
                "frame": r.index, "subregion": e.subregion, "method": e.method, "preproc": e.preproc,
                "angle_deg": e.angle_deg, "deep_apo_angle_deg": r.roi.deep_apo_angle,
                "score": e.score, "degenerate": e.degenerate,
            })
    return rows


def _angle_rows(angles) -> list[dict]:
    return [{"frame": a.frame, "fitted_angle_deg": a.fitted_angle_deg, "n_points": a.n_points,
             "quality_warning": a.quality_warning} for a in angles]


def _debug_overlay(frame: np.ndarray, r: FrameResult) -> np.ndarray:
    img = frame.copy()
    h, w = img.shape
    c = r.roi.crop
    img[c.y0, c.x0:c.x1] = img[c.y1 - 1, c.x0:c.x1] = 255
    img[c.y0:c.y1, c.x0] = img[c.y0:c.y1, c.x1 - 1] = 255
    xs = np.arange(w)
    for line in (r.roi.upper_apo, r.roi.lower_apo):
        ys = np.floor(line.y_at(xs) + 0.5).astype(int)
        ok = (ys >= 0) & (ys < h)
        img[ys[ok], xs[ok]] = 0
    return img


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    out = _output_dir(args.output_dir)
    if args.frames < 1:
        raise UsageError("--frames must be positive")
    h = args.height
    base = SynthSpec(width=args.width, height=h, apo_rows=(ApoBand(15, 8), ApoBand(h - 25, 8)),
                     speckle_sigma=args.speckle, seed=args.seed)
    if args.trajectory == "ramp":
        angles = ramp_trajectory(args.frames, args.start, args.stop)
    else:
        angles = sinusoid_trajectory(args.frames, args.center, args.amplitude)
    try:
        generate_video(base, angles, out, jitter_deg=args.jitter)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    log.info("wrote %d frames to %s", args.frames, out)
    return EXIT_OK


def cmd_roi(args) -> int:
    files = _frames(args.input_dir)
    out = _output_dir(args.output_dir)
    results = process_frames(files, FrameJob(combos=(), region_modes=()), args.jobs or 1)
    records = []
    for path, r in zip(files, results):
        rec = {"frame": r.index, "file": path.name, "ok": r.ok, "error": r.error}
        if r.ok:
            rec["roi"] = r.roi.to_dict()
            if args.debug:
                write_pgm(out / f"{path.stem}_roi.pgm", _debug_overlay(read_image(path), r))
        records.append(rec)
    report.write_json(out / "roi.json", {"frames": records})
    return _check_failures(results)


def cmd_estimate(args) -> int:
    cfg = resolve_config(args)
    files = _frames(cfg.input_dir)
    out = _output_dir(cfg.output_dir)
    loess = cfg.loess_config()
    combo = (cfg.method, cfg.preproc)
    results = process_frames(files, cfg.job(), cfg.jobs)
    status = _check_failures(results)
    report.write_csv(out / "estimates.csv", report.ESTIMATE_COLUMNS, _estimate_rows(results, combo))
    angles = frame_angles(results, combo, cfg.region_mode, loess)
    report.write_csv(out / "pennation.csv", report.PENNATION_COLUMNS, _angle_rows(angles))
    run = asdict(cfg)
    run["label"] = f"{cfg.method}+{cfg.preproc} ({cfg.region_mode})"
    run["input_dir"] = str(Path(cfg.input_dir).name)
    run["output_dir"] = None
    report.write_json(out / "run.json", run)
    return status


def _run_info(csv_path: Path) -> dict:
    """Labels of the estimate run that wrote ``csv_path`` (from its run.json)."""
    info = {"label": csv_path.stem, "method": csv_path.stem, "preproc": None, "region_mode": None}
    run = csv_path.parent / "run.json"
    if run.is_file():
        try:
            doc = json.loads(run.read_text())
            info.update({k: doc[k] for k in info if k in doc})
        except ValueError:
            pass
    return info


def cmd_evaluate(args) -> int:
    out = _output_dir(args.output_dir)
    try:
        annotations = AnnotationSet.load(args.annotations)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read annotations {args.annotations}: {exc}") from exc
    status = EXIT_OK
    summaries, series = [], {}
    for i, path in enumerate(args.estimates):
        path = Path(path)
        info = _run_info(path)
        label = info["label"]
        est = {f: v for f, v in report.read_pennation_csv(path).items() if v is not None}
        try:
            rep = evaluate_run(est, annotations, strict=not args.lenient)
        except FrameMismatchError as exc:
            log.error("%s: frames differ from the annotations", path)
            if exc.missing_in_estimates:
                log.error("  annotated but not estimated: %s", _ranges(exc.missing_in_estimates))
            if exc.missing_in_annotations:
                log.error("  estimated but not annotated: %s", _ranges(exc.missing_in_annotations))
            status = EXIT_FAILED
            continue
        except PennationError as exc:
            log.error("%s: %s", path, exc)
            status = EXIT_FAILED
            continue
        stem = "eval" if len(args.estimates) == 1 else f"eval_{i}"
        report.write_json(out / f"{stem}.json", {"label": label, **rep.to_dict()})
        summaries.append({**info, "icc3": rep.icc3, "mae_deg": rep.mae_deg, "hit_pct": rep.hit_pct,
                          "n_frames": len(rep.per_frame)})
        series[label] = est
    report.write_csv(out / "summary.csv", report.SUMMARY_COLUMNS, summaries)
    if args.plot and series:
        band = {f: (a.inter_min, a.inter_mean, a.inter_max) for f, a in annotations.items()}
        report.write_svg(out / "trajectory.svg", report.trajectory_svg(series, band))
    return status


def _ranges(frames) -> str:
    frames = sorted(frames)
    parts, start = [], None
    for i, f in enumerate(frames):
        if start is None:
            start = f
        if i + 1 == len(frames) or frames[i + 1] != f + 1:
            parts.append(str(start) if start == f else f"{start}-{f}")
            start = None
    return ", ".join(parts)


def cmd_matrix(args) -> int:
    cfg = resolve_config(args)
    files = _frames(cfg.input_dir)
    out = _output_dir(cfg.output_dir)
    annotations = None
    if args.annotations:
        try:
            annotations = AnnotationSet.load(args.annotations)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read annotations {args.annotations}: {exc}") from exc
    results = process_frames(files, cfg.job(COMBINATIONS), cfg.jobs)
    status = _check_failures(results)
    try:
        loess = LoessConfig(k=cfg.loess_k)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    rows, series = [], {}
    for combo in COMBINATIONS:
        for mode in REGION_MODES:
            row = {"method": combo[0], "preproc": combo[1], "region_mode": mode}
            try:
                angles = frame_angles(results, combo, mode, loess if mode == "subregions" else None)
            except PennationError as exc:
                log.error("%s+%s %s failed: %s", *combo, mode, exc)
                rows.append(row)
                continue
            est = {a.frame: a.fitted_angle_deg for a in angles if a.fitted_angle_deg is not None}
            series[f"{combo[0]}+{combo[1]} ({mode})"] = est
            row["n_frames"] = len(est)
            if annotations is None:
                vals = np.array(list(est.values()))
                row.update(n_frames=len(angles), n_valid=len(est),
                           mean_angle_deg=float(vals.mean()) if vals.size else None,
                           sd_angle_deg=float(vals.std(ddof=1)) if vals.size > 1 else None)
            else:
                try:
                    rep = evaluate_run(est, annotations, strict=False)
                    row.update(icc3=rep.icc3, mae_deg=rep.mae_deg, hit_pct=rep.hit_pct,
                               n_frames=len(rep.per_frame))
                except PennationError as exc:
                    log.error("%s+%s %s: evaluation failed: %s", *combo, mode, exc)
            rows.append(row)
    columns = report.SUMMARY_COLUMNS if annotations is not None else report.ESTIMATES_ONLY_COLUMNS
    report.write_csv(out / "matrix.csv", columns, rows)
    if args.plot and series:
        band = None
        if annotations is not None:
            band = {f: (a.inter_min, a.inter_mean, a.inter_max) for f, a in annotations.items()}
        report.write_svg(out / "trajectory.svg", report.trajectory_svg(series, band))
    return status


# ------------------------------------------------------------------ parser


def _add_run_flags(p: argparse.ArgumentParser, single: bool) -> None:
    # defaults stay None so the config file can fill them in
    p.add_argument("input_dir", nargs="?", help="directory of .png/.pgm frames")
    p.add_argument("-o", "--output-dir", dest="output_dir")
    p.add_argument("--config", help="JSON file with run settings; flags take precedence")
    p.add_argument("--criterion", choices=CRITERION_CHOICES, help="subregion quality criterion")
    p.add_argument("--loess-k", dest="loess_k", type=int, help="LOESS neighborhood size (default 27)")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    if single:
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--preproc", choices=PREPROCS)
        p.add_argument("--region-mode", dest="region_mode", choices=REGION_MODES)
        p.add_argument("--no-loess", dest="loess", action="store_const", const=False,
                       help="average subregion estimates per frame instead of LOESS")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pennation", description="Pennation angle estimation from ultrasound frames.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic video")
    p.add_argument("output_dir")
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=200)
    p.add_argument("--trajectory", choices=("ramp", "sinusoid"), default="ramp")
    p.add_argument("--start", type=float, default=20.0)
    p.add_argument("--stop", type=float, default=35.0)
    p.add_argument("--center", type=float, default=27.0)
    p.add_argument("--amplitude", type=float, default=8.0)
    p.add_argument("--speckle", type=float, default=0.0, help="Gaussian noise sigma in gray levels")
    p.add_argument("--jitter", type=float, default=1.0, help="annotation jitter in degrees")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("roi", help="locate the region of interest in every frame")
    p.add_argument("input_dir")
    p.add_argument("-o", "--output-dir", dest="output_dir", required=True)
    p.add_argument("--debug", action="store_true", help="write PGM overlays")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_roi)

    p = sub.add_parser("estimate", help="estimate pennation angles for one combination",
                       epilog=f"combinations: {combination_table()}")
    _add_run_flags(p, single=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="score pennation CSVs against annotations")
    p.add_argument("estimates", nargs="+", help="pennation.csv files")
    p.add_argument("--annotations", required=True)
    p.add_argument("-o", "--output-dir", dest="output_dir", required=True)
    p.add_argument("--plot", action="store_true", help="write trajectory.svg")
    p.add_argument("--lenient", action="store_true", help="score the common frames only")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", help="run every combination in both region modes")
    _add_run_flags(p, single=False)
    p.add_argument("--annotations")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_matrix)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pennation {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
