"""Command-line entry points for the full pipeline.

Verbs: ingest, split, train, train-pool, train-meta, evaluate, report, serve.
Every verb takes explicit flags plus an optional --config YAML/JSON file whose
keys supply defaults for the same options; flags always win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import yaml

from .adapters import canonical_dataset_id, load_dataset
from .backbones import build_model, default_spec, load_model
from .errors import DataError, ParkwatchError, RuntimeFailure
from .evaluation import (
    DynamicSelectionPredictor,
    EvalCell,
    EvalReport,
    MajorityVotePredictor,
    SingleModelPredictor,
    StackingPredictor,
    class_ratios,
    evaluate_framework,
    write_report,
)
from .fusion import (
    load_meta,
    load_pool,
    save_meta,
    save_pool,
    train_dynse_selector,
    train_pool,
    train_stacking_meta,
)
from .records import DatasetIndex, read_manifest, write_manifest
from .splits import temporal_split
from .training import TrainConfig, persist_run, train

log = logging.getLogger(__name__)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise DataError(f"config file {path} must hold a mapping")
    return data


def _resolve(cfg: dict, key: str, flag_value, default=None):
    """Flag wins; config file second; declared default last."""
    if flag_value is not None:
        return flag_value
    return cfg.get(key, default)


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    body = dict(cfg.get("train", {}))
    body.setdefault("seed", seed)
    config = TrainConfig.from_dict(body)
    if config.seed != seed and seed is not None:
        config = replace(config, seed=seed, augment=replace(config.augment, seed=seed))
    return config


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool):
    """Parking-space occupancy pipeline and monitoring service."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%Y-%m-%dT%H:%M:%S",
    )


@cli.command()
@click.option("--dataset", required=True, help="pklot | cnrext | ndispark | barrystreet")
@click.option("--root", required=True, type=click.Path(), help="Upstream dataset root.")
@click.option("--patch-dir", type=click.Path(), default=None,
              help="Where to write crops for frame-based layouts.")
@click.option("--out", required=True, type=click.Path(), help="Manifest path to write.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def ingest(dataset: str, root: str, patch_dir: str | None, out: str, config_path):
    """Ingest an upstream dataset into a JSON-lines manifest."""
    cfg = _load_config_file(config_path)
    patch_dir = _resolve(cfg, "patch_dir", patch_dir)
    index = load_dataset(root, dataset, patch_dir)
    write_manifest(index, out)
    click.echo(f"{canonical_dataset_id(dataset)}: wrote {len(index)} records to {out}")
    click.echo(index.summary())


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--scenario", required=True)
@click.option("--train-ratio", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def split(manifest: str, scenario: str, train_ratio, seed, out_dir: str, config_path):
    """Produce temporally disjoint, balanced train/val/test manifests."""
    cfg = _load_config_file(config_path)
    train_ratio = float(_resolve(cfg, "train_ratio", train_ratio, 0.5))
    seed = int(_resolve(cfg, "seed", seed, 0))
    index = read_manifest(manifest)
    result = temporal_split(index, scenario, train_ratio=train_ratio, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, records in (("train", result.train), ("val", result.val), ("test", result.test)):
        write_manifest(DatasetIndex(records), out / f"{name}.jsonl")
    (out / "split.json").write_text(
        json.dumps(
            {
                "scenario_key": result.scenario_key,
                "split_seed": result.split_seed,
                "val_carved_from_train": result.val_carved_from_train,
                "sizes": {
                    "train": len(result.train),
                    "val": len(result.val),
                    "test": len(result.test),
                },
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    click.echo(
        f"{scenario}: train {len(result.train)} / val {len(result.val)} / "
        f"test {len(result.test)} -> {out}"
    )


def _splits_for(index: DatasetIndex, scenarios: str, seed: int):
    keys = [k.strip() for k in scenarios.split(",") if k.strip()]
    if not keys:
        raise DataError("no scenario keys given")
    return [temporal_split(index, k, seed=seed) for k in keys]


@cli.command(name="train")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--scenarios", required=True, help="Comma-separated scenario keys.")
@click.option("--family", default=None, help="conv3 | mobilenetv3_large | resnet50")
@click.option("--seed", type=int, default=None)
@click.option("--no-pretrained", is_flag=True,
              help="Random-init the feature extractor (offline environments).")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def train_cmd(manifest, scenarios, family, seed, no_pretrained, out, config_path):
    """Train the single model over the union of the given scenarios."""
    cfg = _load_config_file(config_path)
    family = _resolve(cfg, "family", family, "conv3")
    seed = int(_resolve(cfg, "seed", seed, 0))
    index = read_manifest(manifest)
    splits = _splits_for(index, scenarios, seed)
    config = _train_config(cfg, seed)
    model = build_model(
        default_spec(family),
        init_seed=seed,
        load_pretrained=False if no_pretrained else None,
    )
    run = train(model, splits, config)
    model.metadata["source_datasets"] = sorted(index.dataset_ids())
    persist_run(run, out, config)
    click.echo(
        f"trained {family} on {scenarios}: best val acc "
        f"{run.model.metadata['val_accuracy']:.4f} at epoch {run.chosen_epoch}; "
        f"artifacts under {out}"
    )


@cli.command(name="train-pool")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--scenarios", required=True, help="Comma-separated scenario keys.")
@click.option("--family", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-pretrained", is_flag=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def train_pool_cmd(manifest, scenarios, family, seed, no_pretrained, out, config_path):
    """Train one pool member per scenario and persist the pool directory."""
    cfg = _load_config_file(config_path)
    family = _resolve(cfg, "family", family, "conv3")
    seed = int(_resolve(cfg, "seed", seed, 0))
    index = read_manifest(manifest)
    splits = _splits_for(index, scenarios, seed)
    config = _train_config(cfg, seed)
    pool = train_pool(
        splits,
        default_spec(family),
        config,
        load_pretrained=False if no_pretrained else None,
    )
    save_pool(pool, out)
    click.echo(f"pool of {len(pool)} members ({family}) saved under {out}")


@cli.command(name="train-meta")
@click.option("--pool", "pool_dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--kind", required=True, type=click.Choice(["svm", "mlp", "dynse"]))
@click.option("--seed", type=int, default=None)
@click.option("--no-pretrained", is_flag=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def train_meta_cmd(pool_dir, manifest, kind, seed, no_pretrained, out, config_path):
    """Train a stacking meta-model (svm/mlp) or the dynse selector."""
    cfg = _load_config_file(config_path)
    seed = int(_resolve(cfg, "seed", seed, 0))
    pool = load_pool(pool_dir)
    index = read_manifest(manifest)
    splits = [temporal_split(index, k, seed=seed) for k in pool.scenario_keys]
    if kind == "dynse":
        config = _train_config(cfg, seed)
        spec = pool.members[0][1].spec
        meta = train_dynse_selector(
            splits, spec, config, load_pretrained=False if no_pretrained else None
        )
    else:
        train_records = [r for s in splits for r in s.train]
        meta = train_stacking_meta(pool, train_records, kind=kind, seed=seed)
    save_meta(meta, out)
    click.echo(f"meta-model {meta.kind} saved under {out}")


@cli.command()
@click.option("--target-manifest", required=True, type=click.Path(exists=True))
@click.option("--framework", required=True,
              type=click.Choice(["single_model", "majority_vote", "stacking",
                                 "dynamic_selection"]))
@click.option("--backbone", default=None, help="Reported backbone family label.")
@click.option("--source", required=True,
              help="Comma-separated dataset ids the framework was trained on.")
@click.option("--model-dir", type=click.Path(), default=None)
@click.option("--pool-dir", type=click.Path(), default=None)
@click.option("--meta-dir", type=click.Path(), default=None)
@click.option("--targets", default=None,
              help="Comma-separated target scenario keys (default: all).")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def evaluate(target_manifest, framework, backbone, source, model_dir, pool_dir,
             meta_dir, targets, out, config_path):
    """Score a trained framework on target scenarios and write report files."""
    cfg = _load_config_file(config_path)
    model_dir = _resolve(cfg, "model_dir", model_dir)
    pool_dir = _resolve(cfg, "pool_dir", pool_dir)
    meta_dir = _resolve(cfg, "meta_dir", meta_dir)
    sources = [s.strip() for s in source.split(",") if s.strip()]

    if framework == "single_model":
        if not model_dir:
            raise DataError("single_model evaluation needs --model-dir")
        predictor = SingleModelPredictor(load_model(model_dir), sources)
    elif framework == "majority_vote":
        if not pool_dir:
            raise DataError("majority_vote evaluation needs --pool-dir")
        predictor = MajorityVotePredictor(load_pool(pool_dir), sources)
    elif framework == "stacking":
        if not (pool_dir and meta_dir):
            raise DataError("stacking evaluation needs --pool-dir and --meta-dir")
        predictor = StackingPredictor(load_pool(pool_dir), load_meta(meta_dir), sources)
    else:
        if not (pool_dir and meta_dir):
            raise DataError("dynamic_selection evaluation needs --pool-dir and --meta-dir")
        predictor = DynamicSelectionPredictor(
            load_pool(pool_dir), load_meta(meta_dir), sources
        )

    index = read_manifest(target_manifest)
    keys = (
        [k.strip() for k in targets.split(",") if k.strip()]
        if targets
        else index.scenarios()
    )
    cells = []
    ratios = {}
    for key in keys:
        records = index.for_scenario(key)
        acc = evaluate_framework(predictor, records)
        cells.append(
            EvalCell(
                framework=predictor.kind,
                backbone=backbone or predictor.backbone_family,
                target=key,
                accuracies=(acc,),
            )
        )
        ratios[key] = class_ratios(records)
        click.echo(f"{key}: accuracy {acc:.4f} over {len(records)} records")
    report = EvalReport(
        source_dataset=",".join(sources),
        targets=tuple(keys),
        cells=tuple(cells),
        target_class_ratios=ratios,
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    write_report(report, out_dir)
    click.echo(f"report files written under {out_dir}")


@cli.command()
@click.option("--eval-json", required=True, type=click.Path(exists=True),
              help="report.json produced by the evaluate verb.")
@click.option("--out", required=True, type=click.Path())
def report(eval_json: str, out: str):
    """Re-render report.csv / report.md from a saved evaluation."""
    data = json.loads(Path(eval_json).read_text(encoding="utf-8"))
    rep = EvalReport.from_dict(data)
    write_report(rep, out)
    click.echo(f"report files written under {out}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path: str, host: str | None, port: int | None):
    """Run the monitoring service (loads all artifacts at startup)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.from_file(config_path)
    app = create_app(config)  # artifact loading failures abort startup
    cfg_host, _, cfg_port = config.listen.partition(":")
    uvicorn.run(
        app,
        host=host or cfg_host or "127.0.0.1",
        port=port or int(cfg_port or 8000),
        log_level="info",
    )


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except RuntimeFailure as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        return 3
    except ParkwatchError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
