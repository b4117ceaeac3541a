"""Operator entry points.

    refinery world gen --config C --out DIR
    refinery run supervised --data GROUP_DIR --out RUN_DIR
    refinery run refine --data GROUP_DIR --models RUN_DIR --out RUN_DIR2
    refinery eval --models RUN_DIR --sequence FILE
    refinery report --stats FILE | --log FILE --out DIR
    refinery serve [--bind HOST:PORT]
    refinery benchmark --out DIR

Every command is deterministic given the config file and seeds (human
annotation mode excepted). Failures exit nonzero with a JSON error object
on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
import threading
from pathlib import Path

import click

from .annotate import OracleAnnotator, PendingSlot, SlotAnnotator
from .benchmark import run_benchmark
from .config import ConfigError, load_config
from .engine import Engine, EventLog, stats_from_log
from .evaluate import GroupReportRow
from .inference import detect_frames
from .reporting import rows_from_stats_document, write_report_files
from .service import create_app, resolve_bind
from .training import DatasetStore, ModelBundle
from .world import load_sequence, save_sequence
from . import benchmark as benchmark_mod
from .evaluate import evaluate


def _fail(err: Exception, code: int = 2):
    payload = {"error": type(err).__name__, "detail": str(err)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort):
            raise
        except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as err:
            _fail(err)
    return wrapper


@click.group()
def main():
    """On-line detector training with human-in-the-loop refinement."""


@main.group()
def world():
    """Synthetic world generation."""


@world.command("gen")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="override the config seed")
@cli_errors
def world_gen(config_path, out_dir, seed):
    """Write supervised, refinement and held-out sequences per scene group."""
    cfg = load_config(config_path, overrides={"seed": seed})
    bench = cfg.benchmark_config()
    out = Path(out_dir)
    for group in range(len(bench.group_sizes)):
        world_cfg, supervised, refinement, heldout = benchmark_mod.build_group_world(bench, group)
        group_dir = out / f"group_{group}"
        group_dir.mkdir(parents=True, exist_ok=True)
        for class_id, seq in supervised.items():
            save_sequence(seq, group_dir / f"supervised_{class_id:03d}.json.gz")
        save_sequence(refinement, group_dir / "refine.json.gz")
        save_sequence(heldout, group_dir / "heldout.json.gz")
        meta = {
            "group": group,
            "num_classes": world_cfg.num_classes,
            "class_names": [f"object_{group}_{c}" for c in range(world_cfg.num_classes)],
            "frame_w": world_cfg.frame_w,
            "frame_h": world_cfg.frame_h,
        }
        (group_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        click.echo(f"wrote {group_dir}")


def _load_group_meta(data_dir: Path) -> dict:
    meta_path = data_dir / "meta.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"{meta_path} not found; run `refinery world gen` first")
    return json.loads(meta_path.read_text())


@main.group()
def run():
    """Training phases."""


@run.command("supervised")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@cli_errors
def run_supervised(config_path, data_dir, out_dir, seed):
    """Depth-supervised initial training over every class in a group."""
    cfg = load_config(config_path, overrides={"seed": seed})
    data = Path(data_dir)
    meta = _load_group_meta(data)
    engine_cfg = cfg.engine_config(class_names=tuple(meta["class_names"]))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = EventLog(out / "events.jsonl")
    engine = Engine(engine_cfg, event_log=log)
    seq_paths = sorted(data.glob("supervised_*.json.gz"))
    if not seq_paths:
        raise FileNotFoundError(f"no supervised_*.json.gz under {data}")
    for i, seq_path in enumerate(seq_paths):
        class_id = int(seq_path.stem.split("_")[1].split(".")[0])
        engine.run_supervised_phase(
            load_sequence(seq_path),
            class_id,
            seq_tag=f"supervised_{class_id:03d}",
            retrain=(i == len(seq_paths) - 1),
        )
    engine.models.save(out / "models")
    engine.store.save(out / "store")
    click.echo(f"trained {len(seq_paths)} classes -> {out / 'models'}")


@run.command("refine")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--models", "models_dir", type=click.Path(exists=True), required=True,
              help="run directory produced by `run supervised`")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--annotator", "annotator_mode", type=click.Choice(["oracle", "human"]), default=None)
@click.option("--bind", default=None, help="host:port of the annotation service (human mode)")
@click.option("--seed", type=int, default=None)
@cli_errors
def run_refine(config_path, data_dir, models_dir, out_dir, annotator_mode, bind, seed):
    """Weakly-supervised refinement over a group's exploration sequence."""
    cfg = load_config(config_path, overrides={"seed": seed})
    mode = annotator_mode or cfg.annotator.mode
    data = Path(data_dir)
    meta = _load_group_meta(data)
    engine_cfg = cfg.engine_config(class_names=tuple(meta["class_names"]))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = EventLog(out / "events.jsonl")
    store = DatasetStore.load(Path(models_dir) / "store")
    models = ModelBundle.load(Path(models_dir) / "models")
    seq = load_sequence(data / "refine.json.gz")

    if mode == "oracle":
        annotator = OracleAnnotator(noise_sigma=cfg.annotator.oracle_noise, seed=cfg.seed,
                                    timeout=cfg.annotator.timeout_oracle)
        engine = Engine(engine_cfg, annotator=annotator, event_log=log, store=store, models=models)
    else:
        slot = PendingSlot()
        annotator = SlotAnnotator(slot, timeout=cfg.annotator.timeout_human)
        engine = Engine(engine_cfg, annotator=annotator, event_log=log, store=store, models=models)
        host, port = resolve_bind(bind, cfg.service.bind)
        app = create_app(engine, slot)
        import uvicorn

        server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))
        threading.Thread(target=server.run, daemon=True).start()
        click.echo(f"annotation service listening on http://{host}:{port}/ui/")

    _models, stats = engine.run_refinement_phase(seq, seq_tag="refinement")
    engine.models.save(out / "models")
    engine.store.save(out / "store")
    stats_path = out / "stats.json"
    stats_path.write_text(json.dumps(stats.as_dict(), indent=2, sort_keys=True) + "\n")
    click.echo(f"refined -> {out / 'models'}; stats in {stats_path}")


@main.command("eval")
@click.option("--models", "models_dir", type=click.Path(exists=True), required=True)
@click.option("--sequence", "sequence_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--detections", "detections_path", type=click.Path(), default=None,
              help="also export per-frame detections as JSON lines")
@cli_errors
def eval_cmd(models_dir, sequence_path, config_path, out_path, detections_path):
    """VOC mAP@0.5 of saved models against a sequence with ground truth."""
    from .inference import write_detections_jsonl

    cfg = load_config(config_path)
    models_root = Path(models_dir)
    models = ModelBundle.load(models_root / "models" if (models_root / "models").is_dir() else models_root)
    seq = load_sequence(sequence_path)
    dets = detect_frames(seq.frames, models, cfg=cfg.inference)
    if detections_path:
        write_detections_jsonl(dets, detections_path)
    gts = {fr.frame_id: fr.ground_truth for fr in seq.frames}
    report = evaluate(dets, gts, cfg.eval)
    doc = report.as_dict()
    click.echo(json.dumps(doc, indent=2, sort_keys=True))
    if out_path:
        Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


@main.command("report")
@click.option("--stats", "stats_path", type=click.Path(exists=True), default=None,
              help="benchmark stats JSON (full tables and figures)")
@click.option("--log", "log_path", type=click.Path(exists=True), default=None,
              help="event log (annotation-effort table only)")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@cli_errors
def report_cmd(stats_path, log_path, out_dir, ):
    """Render tables, CSV and figures from a benchmark run or an event log."""
    if (stats_path is None) == (log_path is None):
        raise ConfigError("pass exactly one of --stats or --log")
    if stats_path is not None:
        doc = json.loads(Path(stats_path).read_text())
        rows = rows_from_stats_document(doc)
    else:
        stats = stats_from_log(log_path)
        rows = [
            GroupReportRow(
                group="#0",
                before_map=float("nan"),
                after_map=float("nan"),
                human_images=stats.human_images,
                human_boxes=stats.human_boxes,
                al_queries=stats.total_al_queries_images,
                ssl_images=stats.ssl_images,
                pseudo_label_map=stats.pseudo_label_map or 0.0,
                heldout_before=float("nan"),
                heldout_after=float("nan"),
            )
        ]
    paths = write_report_files(rows, out_dir)
    for name, p in sorted(paths.items()):
        click.echo(f"{name}: {p}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--bind", default=None)
@cli_errors
def serve_cmd(config_path, bind):
    """Run the annotation service standalone (idle engine, UI for preview)."""
    cfg = load_config(config_path)
    host, port = resolve_bind(bind, cfg.service.bind)
    slot = PendingSlot()
    engine = Engine(cfg.engine_config())
    app = create_app(engine, slot)
    import uvicorn

    click.echo(f"listening on http://{host}:{port}/ui/")
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("benchmark")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@cli_errors
def benchmark_cmd(config_path, out_dir, seed):
    """Full default benchmark: five groups, report files and figures."""
    cfg = load_config(config_path, overrides={"seed": seed})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_benchmark(cfg.benchmark_config(), log_dir=out / "logs")
    (out / "stats.json").write_text(result.stats_json() + "\n")
    paths = write_report_files(result.rows(), out)
    click.echo(f"benchmark finished in {result.elapsed_seconds:.0f}s")
    for name, p in sorted(paths.items()):
        click.echo(f"{name}: {p}")
    click.echo(f"stats: {out / 'stats.json'}")


if __name__ == "__main__":
    main()
