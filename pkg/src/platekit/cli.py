"""Single ``platekit`` executable exposing the toolkit as subcommands.

Exit codes are a stable scripting contract: 0 success, 1 usage error,
2 data error.  Every randomized subcommand is bit-reproducible for a fixed
--seed on the same platform.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import shlex
import subprocess
import sys
import warnings
from pathlib import Path

from platekit import annot, augment, detmetrics, scheduler, seqdecode, simharness, textmetrics
from platekit.errors import DataError, PlatekitError, ProtocolError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(prog="platekit", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized subcommands")
    parser.add_argument("--output-dir", default=os.environ.get("PLATEKIT_OUTPUT_DIR", "."),
                        help="where generated files go (env: PLATEKIT_OUTPUT_DIR)")
    parser.add_argument("--format", choices=("text", "csv"), default="text",
                        help="report rendering")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert annotation formats")
    p.add_argument("--from", dest="in_format", choices=("voc", "yolo"), required=True)
    p.add_argument("--to", dest="out_format", choices=("voc", "yolo", "mask"), required=True)
    p.add_argument("--image-size", nargs=2, type=int, metavar=("W", "H"),
                   help="image dimensions for yolo input without sidecar images")
    p.add_argument("paths", nargs="+", help="annotation files or directories")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", help="write augmented (image, yolo) pairs")
    p.add_argument("dataset", help="directory of images with sibling .txt yolo labels")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--count", type=int, default=None, help="outputs to generate")
    p.add_argument("--preset-overrides", help="flat key-value preset override file")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval-det", help="detection metrics report")
    p.add_argument("preds", help="predictions file: image_id class conf x0 y0 x1 y1")
    p.add_argument("gts", help="ground-truth directory (.xml voc or .txt yolo)")
    p.add_argument("--image-size", nargs=2, type=int, metavar=("W", "H"))
    p.add_argument("--cutoff", type=float, default=0.0, help="confidence cutoff")
    p.add_argument("--iou-threshold", type=float, default=detmetrics.HIT_IOU_THRESHOLD)
    p.add_argument("--timing", help="optional per-sample inference times (ms, one per line)")
    p.add_argument("--label", default="dataset", help="model/run label in the table")
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("eval-ocr", help="OCR metrics report from a TSV corpus")
    p.add_argument("corpus", help="TSV: image_id<TAB>prediction<TAB>ground_truth")
    p.add_argument("--mode", choices=("micro", "macro"), default="micro")
    p.add_argument("--unit", choices=("scalar", "grapheme"), default="scalar")
    p.set_defaults(func=cmd_eval_ocr)

    p = sub.add_parser("decode", help="beam-decode a logit fixture")
    p.add_argument("fixture", help="logit fixture file")
    p.add_argument("vocab", help="vocabulary file (id<TAB>token)")
    p.add_argument("--num-beams", type=int, default=None)
    p.add_argument("--max-length", type=int, default=None)
    p.add_argument("--length-penalty", type=float, default=None)
    p.add_argument("--no-repeat-ngram", type=int, default=None)
    p.add_argument("--early-stopping", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("-o", "--output", help="write transcripts here instead of stdout")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("schedule", help="run the two-stage training scheduler")
    p.add_argument("scenario", nargs="?", help="scenario file of mock trajectories")
    p.add_argument("--live", metavar="CMD",
                   help="drive an external trainer bridge over stdin/stdout")
    p.add_argument("--trace", help="write the session trace (ndjson) here")
    p.add_argument("--resume", help="resume from an interrupted trace file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="SchedulerConfig field override (repeatable)")
    p.set_defaults(func=cmd_schedule)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        result = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (PlatekitError, OSError, ValueError) as exc:
        print(f"platekit: error: {exc}", file=sys.stderr)
        return 2
    return int(result or 0)


# --- convert ----------------------------------------------------------------

def _iter_annotation_files(paths, suffix):
    for path in paths:
        p = Path(path)
        if p.is_dir():
            yield from ((f, f.relative_to(p)) for f in sorted(p.rglob(f"*{suffix}")))
        elif p.exists():
            yield p, Path(p.name)
        else:
            raise DataError(f"no such input: {p}")


def _image_dims_for(label_path: Path, image_size):
    if image_size:
        return int(image_size[0]), int(image_size[1])
    for suffix in IMAGE_SUFFIXES:
        sidecar = label_path.with_suffix(suffix)
        if sidecar.exists():
            from PIL import Image

            with Image.open(sidecar) as img:
                return img.width, img.height
    raise DataError(
        f"{label_path}: yolo input needs --image-size or a sidecar image"
    )


def cmd_convert(args) -> int:
    out_dir = Path(args.output_dir)
    suffix = ".xml" if args.in_format == "voc" else ".txt"
    converted = 0
    warning_count = 0
    for src, rel in _iter_annotation_files(args.paths, suffix):
        text = src.read_text(encoding="utf-8")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", annot.AnnotationWarning)
            if args.in_format == "voc":
                image = annot.parse_voc(text)
            else:
                w, h = _image_dims_for(src, args.image_size)
                image = annot.parse_yolo(text, w, h, source_id=src.stem)
            warning_count += len(caught)
            if args.verbose:
                for item in caught:
                    print(f"warning: {src}: {item.message}", file=sys.stderr)

        if args.out_format == "yolo":
            out = out_dir / rel.with_suffix(".txt")
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(annot.emit_yolo(image), encoding="utf-8")
        elif args.out_format == "voc":
            out = out_dir / rel.with_suffix(".xml")
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(annot.emit_voc(image), encoding="utf-8")
        else:  # mask
            out = out_dir / rel.with_suffix(".pgm")
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_bytes(annot.rasterize_mask(image).to_pgm())
        converted += 1
    print(f"converted {converted} file(s), {warning_count} warning(s)")
    return 0


# --- augment ----------------------------------------------------------------

def _load_dataset(root: Path):
    samples = []
    skipped = 0
    for img_path in sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES):
        label_path = img_path.with_suffix(".txt")
        try:
            pixels = augment.load_image(img_path)
        except Exception as exc:
            print(f"warning: skipping {img_path}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        boxes = ()
        names = ("plate",)
        if label_path.exists():
            parsed = annot.parse_yolo(label_path.read_text(encoding="utf-8"),
                                      pixels.shape[1], pixels.shape[0],
                                      source_id=img_path.stem)
            boxes, names = parsed.boxes, parsed.class_names
        # source_id keeps the tree-relative stem so outputs mirror the input tree
        rel_stem = img_path.relative_to(root).with_suffix("").as_posix()
        samples.append(augment.LabeledImage(pixels, boxes, rel_stem, names))
    return samples, skipped


def cmd_augment(args) -> int:
    root = Path(args.dataset)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    samples, skipped = _load_dataset(root)
    if not samples:
        raise DataError(f"no decodable images under {root}")
    preset = augment.stage1_preset() if args.stage == 1 else augment.stage2_preset()
    if args.preset_overrides:
        overrides = augment.parse_preset_overrides(
            Path(args.preset_overrides).read_text(encoding="utf-8"))
        preset = augment.apply_preset_overrides(preset, overrides)
    count = args.count if args.count is not None else len(samples)
    batch = [samples[i % len(samples)] for i in range(count)]
    outputs = augment.sample_pipeline(batch, preset, args.seed)
    out_dir = Path(args.output_dir)
    for i, sample in enumerate(outputs):
        target = out_dir / f"{sample.source_id or 'item'}_aug{i:04d}"
        target.parent.mkdir(parents=True, exist_ok=True)
        augment.save_png(sample.pixels, target.with_suffix(".png"))
        target.with_suffix(".txt").write_text(
            annot.emit_yolo(sample.annotations()), encoding="utf-8")
    print(f"wrote {len(outputs)} augmented pair(s) to {out_dir}"
          + (f", skipped {skipped} unreadable image(s)" if skipped else ""))
    return 0


# --- eval-det ----------------------------------------------------------------

def _load_ground_truths(root: Path, image_size):
    gts = {}
    if not root.is_dir():
        raise DataError(f"ground-truth directory not found: {root}")
    for path in sorted(root.rglob("*.xml")):
        image = annot.parse_voc(path.read_text(encoding="utf-8"))
        gts[path.stem] = [box for box, _ in image.boxes]
    for path in sorted(root.rglob("*.txt")):
        w, h = _image_dims_for(path, image_size)
        image = annot.parse_yolo(path.read_text(encoding="utf-8"), w, h)
        gts[path.stem] = [box for box, _ in image.boxes]
    if not gts:
        raise DataError(f"no .xml or .txt ground truths under {root}")
    return gts


def cmd_eval_det(args) -> int:
    preds = detmetrics.parse_predictions(Path(args.preds).read_text(encoding="utf-8"))
    gts = _load_ground_truths(Path(args.gts), args.image_size)
    unknown = sorted(set(preds) - set(gts))
    if unknown:
        raise DataError(f"predictions reference unknown image id(s): {', '.join(unknown)}")
    per_image = []
    for image_id in sorted(gts):
        dets = [d for d in preds.get(image_id, []) if d.confidence >= args.cutoff]
        per_image.append((dets, gts[image_id]))
    outcome = detmetrics.evaluate_dataset(per_image, args.iou_threshold)
    rows = [detmetrics.outcome_row(args.label, outcome)]
    render = simharness.render_csv if args.format == "csv" else simharness.render_table
    sys.stdout.write(render(rows, "detection"))
    if args.timing:
        samples = [float(line) for line in Path(args.timing).read_text().split()]
        summary = detmetrics.timing_summary(samples)
        print(f"mean inference time: {summary.mean_ms:.2f} ms over {summary.n_samples} sample(s)")
    return 0


# --- eval-ocr ----------------------------------------------------------------

def cmd_eval_ocr(args) -> int:
    text = Path(args.corpus).read_text(encoding="utf-8")
    rows = textmetrics.parse_tsv(text)
    if not rows:
        raise DataError(f"empty corpus: {args.corpus}")
    score = textmetrics.score_corpus(
        [(pred, gt) for _, pred, gt in rows], mode=args.mode, unit=args.unit)
    table_rows = simharness.ocr_metric_rows(cer=score.cer, wer=score.wer,
                                            levenshtein=score.levenshtein)
    render = simharness.render_csv if args.format == "csv" else simharness.render_table
    sys.stdout.write(render(table_rows, "ocr"))
    return 0


# --- decode ----------------------------------------------------------------

def cmd_decode(args) -> int:
    config = seqdecode.GenerationConfig()
    updates = {}
    if args.num_beams is not None:
        updates["num_beams"] = args.num_beams
    if args.max_length is not None:
        updates["max_length"] = args.max_length
    if args.length_penalty is not None:
        updates["length_penalty"] = args.length_penalty
    if args.no_repeat_ngram is not None:
        updates["no_repeat_ngram_size"] = args.no_repeat_ngram
    if args.early_stopping is not None:
        updates["early_stopping"] = args.early_stopping
    try:
        config = dataclasses.replace(config, **updates)
    except ValueError as exc:
        raise UsageError(f"platekit decode: {exc}") from None
    results = seqdecode.decode_fixture(args.fixture, args.vocab, config)
    lines = "".join(f"{sample_id}\t{t.text}\n" for sample_id, t in results)
    if args.output:
        Path(args.output).write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
    return 0


# --- schedule ----------------------------------------------------------------

def _scheduler_config(overrides) -> scheduler.SchedulerConfig:
    config = scheduler.SchedulerConfig()
    updates = {}
    valid = {f.name: f for f in dataclasses.fields(scheduler.SchedulerConfig)}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or key not in valid:
            raise UsageError(f"platekit schedule: unknown override {item!r}")
        current = getattr(config, key)
        if isinstance(current, tuple):
            updates[key] = tuple(type(current[0])(v) for v in value.split(","))
        else:
            updates[key] = type(current)(float(value)) if isinstance(current, int) \
                else type(current)(value)
    return dataclasses.replace(config, **updates)


class _BridgeTrainer:
    """Maps plans to reports by round-tripping them through a child process."""

    def __init__(self, command):
        self.proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )

    def __call__(self, plan):
        self.proc.stdin.write(scheduler.plan_to_json(plan) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise ProtocolError("bridge closed its report stream")
        report = scheduler.report_from_json(line)
        if report.global_epoch != plan.global_epoch:
            raise ProtocolError(
                f"bridge answered epoch {report.global_epoch} to plan {plan.global_epoch}"
            )
        return report

    def close(self):
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=10)


def cmd_schedule(args) -> int:
    if bool(args.scenario) == bool(args.live):
        raise UsageError("platekit schedule: pass exactly one of <scenario> or --live")
    config = _scheduler_config(args.override)
    resume_pairs = None
    if args.resume:
        resume_pairs = scheduler.read_trace(Path(args.resume).read_text(encoding="utf-8"))

    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None

    def on_pair(plan, report):
        if trace_fh:
            trace_fh.write(scheduler.trace_line(plan, report) + "\n")
            trace_fh.flush()

    try:
        if args.live:
            bridge = _BridgeTrainer(args.live)
            try:
                pairs, state = scheduler.run_session(
                    bridge, config, on_pair=on_pair, resume_pairs=resume_pairs)
            finally:
                bridge.close()
            traces = [simharness.SessionTrace(
                simharness.TrajectorySpec("live", "scripted", values=(0.0,)),
                pairs, state)]
            rows = simharness.summary_rows(traces)
        else:
            specs = simharness.parse_scenarios(
                Path(args.scenario).read_text(encoding="utf-8"))
            if (resume_pairs is not None or trace_fh is not None) and len(specs) != 1:
                raise UsageError(
                    "platekit schedule: --trace/--resume need a single-scenario file")
            if resume_pairs is not None:
                pairs, state = scheduler.run_session(
                    simharness.mock_trainer(specs[0], config), config,
                    on_pair=on_pair, resume_pairs=resume_pairs)
                traces = [simharness.SessionTrace(specs[0], pairs, state)]
            else:
                traces = []
                for spec in specs:
                    pairs, state = scheduler.run_session(
                        simharness.mock_trainer(spec, config), config, on_pair=on_pair)
                    traces.append(simharness.SessionTrace(spec, pairs, state))
            rows = simharness.summary_rows(traces)
    finally:
        if trace_fh:
            trace_fh.close()

    widths = [max(len(str(r[i])) for r in rows + [("scenario", "branch", "epochs", "best mAP")])
              for i in range(4)]
    header = ("scenario", "branch", "epochs", "best mAP")
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    for row in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
