"""Command-line interface.

Subcommands: train, detect, wrinkle, synth, eval. All numeric output uses
fixed 6-decimal formatting so runs diff cleanly. Exit codes: 0 success,
1 usage error, 2 data/parse error, 3 no detection.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .annotations import AnnotationError, AnnotationRecord, load_annotations, \
    save_annotations
from .descriptors import GarmentLabel, load_model, save_model, train_model, \
    ModelFormatError
from .evaluation import DetectionRecord, evaluate, render_report
from .geometry import DepthImage, cloud_to_depth
from .contours import Mask
from .pcd import PcdParseError, parse_pcd
from .pgm import PgmFormatError, load_depth_pgm, load_mask_pgm, save_depth_pgm, \
    save_map_pgm, save_mask_pgm
from .pipeline import NoCandidatesError, NoKeyPartError, PipelineConfig, \
    PipelineError, detect_grasp_points, recognize_garment_part, _threshold
from .synthetic import GARMENT_CLASSES, SyntheticSceneSpec, generate_scene
from .wrinkles import entropy_filter, find_local_maxima, multiscale_vesselness, \
    roughness_index
from .geometry import depth_to_cloud, estimate_normals

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NO_DETECTION = 3

ENTROPY_MAP_SCALE = 12.0  # bits; full range of a 64x64-bin histogram


class DataError(click.ClickException):
    exit_code = EXIT_DATA


def _load_depth(path: Path) -> DepthImage:
    try:
        if path.suffix.lower() == ".pcd":
            cloud = parse_pcd(path.read_bytes())
            return cloud_to_depth(cloud)
        if path.suffix.lower() == ".pgm":
            return load_depth_pgm(path)
    except (PcdParseError, PgmFormatError, ValueError, OSError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    raise DataError(f"{path}: unsupported input type (expected .pcd or .pgm)")


def _load_training_data(annotations_path, data_dir):
    try:
        records = load_annotations(annotations_path)
    except (AnnotationError, OSError) as exc:
        raise DataError(str(exc)) from exc
    samples = []
    for rec in records:
        img = _load_depth(Path(data_dir) / f"{rec.image_id}.pgm")
        samples.append((img, rec.key_part_polygon, rec.key_part_label))
    return records, samples


@click.group()
def cli():
    """Grasp-point detection for garments in depth images."""


@cli.command()
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def train(annotations_path, data_dir, out_path):
    """Build the k-NN key-part model from annotated depth images."""
    _, samples = _load_training_data(annotations_path, data_dir)
    try:
        model = train_model(samples)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_model(model, out_path)
    click.echo(f"entries {len(model)}")
    click.echo(f"skipped {model.metadata.get('skipped', 0)}")


@cli.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dump-maps", "dump_dir", default=None,
              type=click.Path(file_okay=False))
def detect(model_path, input_path, dump_dir):
    """Detect the key part and grasp points in one depth image."""
    try:
        model = load_model(model_path)
    except (ModelFormatError, OSError) as exc:
        raise DataError(str(exc)) from exc
    img = _load_depth(Path(input_path))
    cfg = PipelineConfig()
    try:
        result = detect_grasp_points(img, model, cfg)
    except (NoKeyPartError, NoCandidatesError) as exc:
        click.echo(f"label {GarmentLabel.NO_DETECTION.value}")
        click.echo(f"error {exc}")
        sys.exit(EXIT_NO_DETECTION)

    click.echo(f"label {result.detection.label.value}")
    click.echo(f"point_a {result.point_a[0]} {result.point_a[1]}")
    click.echo(f"point_b {result.point_b[0]} {result.point_b[1]}")
    click.echo(f"score {result.selection_score:.6f}")
    click.echo(f"degraded {int(result.degraded)}")
    click.echo(f"seed_peak {result.detection.seed_peak[0]} {result.detection.seed_peak[1]}")
    cls = result.detection.classification
    votes = " ".join(f"{lab.value}={cls.votes[lab]}"
                     for lab in sorted(cls.votes, key=lambda l: l.value))
    click.echo(f"votes {votes}")
    click.echo(f"candidates {len(result.candidates)}")

    if dump_dir:
        out = Path(dump_dir)
        out.mkdir(parents=True, exist_ok=True)
        cloud = depth_to_cloud(img, cfg.intrinsics)
        nmap = estimate_normals(cloud, cfg.normal_radius)
        emap = entropy_filter(nmap, cfg.entropy_window)
        save_map_pgm(emap.values, out / "entropy.pgm", ENTROPY_MAP_SCALE)
        vmap = multiscale_vesselness(img, cfg.vessel_params)
        save_map_pgm(vmap.values, out / "vesselness.pgm", 1.0)
        _save_overlay(img, result, out / "overlay.png")
        click.echo(f"maps {out}")


def _save_overlay(img: DepthImage, result, path):
    from PIL import Image, ImageDraw

    d = img.data
    lo, hi = d.min(), d.max()
    gray = np.zeros_like(d) if hi <= lo else (d - lo) / (hi - lo)
    base = Image.fromarray((255 * (1 - gray)).astype("uint8")).convert("RGB")
    draw = ImageDraw.Draw(base)
    contour = result.detection.contour
    if contour is not None:
        pts = [tuple(v) for v in contour.vertices] + [tuple(contour.vertices[0])]
        draw.line(pts, fill=(40, 90, 255), width=1)
    for p in (result.point_a, result.point_b):
        x, y = p
        draw.ellipse([x - 3, y - 3, x + 3, y + 3], outline=(255, 40, 40), width=2)
    base.save(path)


@cli.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mask", "mask_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def wrinkle(input_path, mask_path):
    """Print the two garment roughness indices (mean, histogram entropy)."""
    img = _load_depth(Path(input_path))
    try:
        mask = load_mask_pgm(mask_path)
    except (PgmFormatError, OSError) as exc:
        raise DataError(f"{mask_path}: {exc}") from exc
    if (mask.height, mask.width) != (img.height, img.width):
        raise DataError("mask and image dimensions differ")
    vmap = multiscale_vesselness(img)
    try:
        mean, entropy = roughness_index(vmap, mask)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    click.echo(f"roughness_mean {mean:.6f}")
    click.echo(f"roughness_entropy {entropy:.6f}")


@cli.command()
@click.option("--class", "garment_class", required=True,
              type=click.Choice(sorted(GARMENT_CLASSES)))
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", default=1, show_default=True, type=int)
def synth(garment_class, seed, out_dir, count):
    """Generate synthetic scenes with annotations and masks."""
    if count < 1:
        raise click.UsageError("--count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for k in range(count):
        spec = SyntheticSceneSpec(garment_class=garment_class, seed=seed + k)
        depth, record, mask = generate_scene(spec)
        save_depth_pgm(depth, out / f"{record.image_id}.pgm")
        save_mask_pgm(mask, out / record.garment_mask_path)
        records.append(record)
        click.echo(f"scene {record.image_id}")
    ann_path = out / "annotations.txt"
    existing = load_annotations(ann_path) if ann_path.exists() else []
    save_annotations(existing + records, ann_path)
    click.echo(f"annotations {ann_path}")


@cli.command("eval")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--report", "report_path", required=True,
              type=click.Path(dir_okay=False))
def eval_cmd(model_path, annotations_path, data_dir, report_path):
    """Run detection over an annotated set and write the metric report."""
    try:
        model = load_model(model_path)
    except (ModelFormatError, OSError) as exc:
        raise DataError(str(exc)) from exc
    try:
        annotations = load_annotations(annotations_path)
    except (AnnotationError, OSError) as exc:
        raise DataError(str(exc)) from exc
    cfg = PipelineConfig()
    detections = []
    for rec in annotations:
        img = _load_depth(Path(data_dir) / f"{rec.image_id}.pgm")
        try:
            result = detect_grasp_points(img, model, cfg)
            points = [result.point_a]
            if result.point_b != result.point_a:
                points.append(result.point_b)
            detections.append(DetectionRecord(image_id=rec.image_id,
                                              label=result.detection.label,
                                              points=points,
                                              degraded=result.degraded))
        except PipelineError:
            detections.append(DetectionRecord(image_id=rec.image_id,
                                              label=GarmentLabel.NO_DETECTION))
    report = evaluate(detections, annotations)
    text = render_report(report)
    Path(report_path).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except DataError as exc:
        click.echo(f"data error: {exc.format_message()}", err=True)
        return EXIT_DATA
    except click.ClickException as exc:
        exc.show()
        return EXIT_DATA
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
