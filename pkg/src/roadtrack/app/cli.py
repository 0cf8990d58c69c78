"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import logging
import math
import sys
from pathlib import Path

import click
import yaml

from roadtrack.app import io as rio
from roadtrack.app.bench import BenchError, bench_results
from roadtrack.app.config import ConfigError, config_to_dict, load_config, scene_config
from roadtrack.app.evaluate import EvaluationError, evaluate
from roadtrack.app.pipeline import run_pipeline
from roadtrack.classify import ClassModelError, fit_class_model, format_class_model, read_labeled_csv
from roadtrack.model import ModelError
from roadtrack.sim import apply_shake, load_scene, noise_free, render_scene, save_scene, scenario_by_name, scripted_scenarios

EXIT_USAGE = 1
EXIT_DATA = 2


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    raise SystemExit(EXIT_DATA)


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
def cli(verbose: int) -> None:
    """Roadside lidar object tracking."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument("scenario", required=False)
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path), required=False)
@click.option("--list", "list_only", is_flag=True, help="List the scripted scenarios and exit.")
@click.option("--scene-file", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Scenario YAML instead of a catalog name.")
@click.option("--shake", type=float, default=None, help="Override the shake amplitude, m/s^2.")
@click.option("--noise-free", "clean", is_flag=True, help="Disable range noise and shake.")
@click.option("--ascii", is_flag=True, help="Write ASCII frames instead of binary.")
def simulate(scenario, out_dir, list_only, scene_file, shake, clean, ascii):
    """Render SCENARIO into OUT_DIR: frames/, truth.jsonl, scene.yaml, config.yaml."""
    if list_only:
        for sc in scripted_scenarios():
            click.echo(f"{sc.name:24s} {sc.duration:6.1f} s  {len(sc.actors)} actor(s)")
        return
    if scene_file is not None and out_dir is None and scenario is not None:
        scenario, out_dir = None, Path(scenario)
    if out_dir is None or (scenario is None) == (scene_file is None):
        raise click.UsageError("give OUT_DIR and exactly one of SCENARIO or --scene-file")
    if scene_file is not None:
        scene = load_scene(scene_file)
    else:
        try:
            scene = scenario_by_name(scenario)
        except KeyError:
            raise click.UsageError(f"unknown scenario {scenario!r}; see --list") from None
    if shake is not None:
        scene = apply_shake(scene, shake)
    if clean:
        scene = noise_free(scene)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    truth = []
    for f in render_scene(scene):
        rio.write_frame(frames_dir, f.index, f.cloud, ascii)
        truth.append((f.cloud.stamp, f.truth))
    rio.write_truth(out_dir / "truth.jsonl", truth)
    save_scene(scene, out_dir / "scene.yaml")
    cfg = scene_config(load_config(), scene)
    (out_dir / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False), "utf-8")
    click.echo(f"{len(truth)} frames written to {frames_dir}")


@cli.command()
@click.argument("frames_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Object-list JSONL.")
@click.option("-c", "--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Tracker configuration YAML.")
@click.option("--no-timing", is_flag=True, help="Omit timing fields (for diffable output).")
def track(frames_dir, output, config_path, no_timing):
    """Track FRAMES_DIR and write one object list per frame."""
    cfg = load_config(config_path)
    n = rio.write_results(output, run_pipeline(rio.read_frames(frames_dir), cfg), timing=not no_timing)
    click.echo(f"{n} frames tracked -> {output}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


@cli.command(name="eval")
@click.argument("objects", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("truth", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), help="Also write metrics as CSV.")
@click.option("--json", "as_json", is_flag=True, help="Print the full report as JSON.")
@click.option("--c-max", type=float, default=2.5, show_default=True, help="Match gate, meters.")
@click.option("--warmup", type=int, default=5, show_default=True, help="Frames per actor excluded from class accuracy.")
def eval_cmd(objects, truth, csv_path, as_json, c_max, warmup):
    """Compare an object list with ground truth."""
    report = evaluate(rio.read_results(objects), rio.read_truth(truth), c_max=c_max, warmup=warmup)
    metrics = report.metrics()
    if csv_path is not None:
        csv_path.write_text(rio.metrics_csv(metrics), "utf-8")
    if as_json:
        d = {k: v for k, v in vars(report).items()}
        d["mean_existence"] = {str(k): v for k, v in report.mean_existence.items()}
        click.echo(json.dumps(d, default=list, indent=2))
        return
    for k, v in metrics.items():
        click.echo(f"{k:24s} {_fmt(v)}")
    click.echo(f"{'existence_gap':24s} {_fmt(report.existence_gap())}")


@cli.command(name="bench")
@click.argument("frames_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("-c", "--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Tracker configuration YAML.")
@click.option("--deadline-ms", type=float, default=100.0, show_default=True)
@click.option("--repeat", type=int, default=1, show_default=True, help="Run the sequence this many times.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), help="Also write metrics as CSV.")
def bench_cmd(frames_dir, config_path, deadline_ms, repeat, csv_path):
    """Latency report for tracking FRAMES_DIR (in-process timing only)."""
    if repeat < 1:
        raise click.UsageError("--repeat must be >= 1")
    cfg = load_config(config_path)
    clouds = list(rio.read_frames(frames_dir))
    results = []
    for _ in range(repeat):
        results.extend(run_pipeline(clouds, cfg))
    report = bench_results(results, deadline_ms)
    for k, v in report.metrics().items():
        click.echo(f"{k:24s} {_fmt(v)}")
    click.echo("histogram:")
    for line in report.histogram_lines():
        click.echo("  " + line)
    if csv_path is not None:
        csv_path.write_text(rio.metrics_csv(report.metrics()), "utf-8")


@cli.command(name="fit-classes")
@click.argument("labeled_csv", type=click.Path(dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Model file (default: stdout).")
@click.option("--min-samples", type=int, default=2, show_default=True)
def fit_classes(labeled_csv, output, min_samples):
    """Fit a class model from a CSV with columns class,length,width,height."""
    try:
        text = labeled_csv.read_text("utf-8")
    except OSError as exc:
        _fail(str(exc))
    model = fit_class_model(read_labeled_csv(text), min_samples=min_samples)
    out = format_class_model(model)
    if output is None:
        click.echo(out, nl=False)
    else:
        output.write_text(out, "utf-8")


@cli.command()
@click.argument("inputs", nargs=-1, type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("-o", "--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--rate", type=float, default=10.0, show_default=True, help="Frame rate used for stamps, Hz.")
def convert(inputs, out_dir, rate):
    """Convert .bin (KITTI), .pcd or .csv clouds into a frame directory."""
    if not rate > 0:
        raise click.UsageError("--rate must be > 0")
    n = rio.convert_files(inputs, out_dir, rate)
    click.echo(f"{n} frames written to {out_dir}")


DATA_ERRORS = (rio.DataError, ConfigError, EvaluationError, BenchError, ClassModelError, ModelError, OSError, yaml.YAMLError)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="roadtrack", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_DATA
    except DATA_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
