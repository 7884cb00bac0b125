# app/services/run_loader.py

from dataclasses import dataclass

from app.protocol.config_models import RunConfig
from metalogic.meta_learner import MetaConfig
from metalogic.models import ModelSpec
from metalogic.tasks import TaskSource, load_image_source, split_classes, synth_blob_source


@dataclass
class RunData:
    source: TaskSource
    train: TaskSource
    val: TaskSource
    test: TaskSource
    spec: ModelSpec
    meta: MetaConfig


def load_source(cfg: RunConfig) -> TaskSource:
    if cfg.is_synth:
        return synth_blob_source(
            dim=cfg.synth_dim,
            classes=cfg.synth_classes,
            samples_per_class=cfg.synth_samples,
            spread=cfg.synth_spread,
            seed=cfg.synth_seed,
            separation=cfg.synth_separation,
        )
    return load_image_source(cfg.source, cfg.manifest, value_range=cfg.value_range)


def prepare_run(cfg: RunConfig, source: TaskSource | None = None) -> RunData:
    """데이터 로드 → class split → ModelSpec / MetaConfig. 공격 범위는 실제 데이터 범위를 따른다."""
    source = source or load_source(cfg)
    train, val, test = split_classes(source, cfg.split_spec())
    return RunData(
        source=source,
        train=train,
        val=val,
        test=test,
        spec=cfg.model_spec(source.geometry),
        meta=cfg.meta_config(source.value_range),
    )
