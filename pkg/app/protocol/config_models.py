# app/protocol/config_models.py

from pathlib import Path
from typing import Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from metalogic.adversarial import AttackConfig
from metalogic.meta_learner import MetaConfig, TrainerKind
from metalogic.models import ModelSpec
from metalogic.tasks import SplitSpec

LIST_FIELDS = ("hidden", "eps_test", "value_range")


class ConfigError(ValueError):
    """설정 파일 / 플래그 값 오류 (exit code 2)"""


class RunConfig(BaseModel):
    """
    한 번의 실행을 완전히 결정하는 평면 설정.
    파일은 `key = value` 줄, 목록은 쉼표로 구분한다.
    """
    model_config = ConfigDict(extra="forbid")

    kind: TrainerKind = TrainerKind.ADML

    # 데이터셋: "synth" 또는 raw-tensor 디렉터리 경로
    source: str
    manifest: str = "manifest.tsv"
    value_range: tuple[float, float] = (0.0, 255.0)
    normalized: bool = False
    synth_dim: int = Field(16, ge=2)
    synth_classes: int = Field(25, ge=5)
    synth_samples: int = Field(40, ge=1)
    synth_spread: float = Field(0.1, gt=0.0)
    synth_separation: float = Field(1.0, gt=0.0)
    synth_seed: int = 0
    split_train: int = Field(64, ge=0)
    split_val: int = Field(16, ge=0)
    split_test: int = Field(20, ge=0)
    # class 분할 전용 seed. 실행 seed 와 분리되어 있어서 --seed 로 held-out class 가 바뀌지 않는다
    split_seed: int = 0

    # 모델
    model: Literal["conv4", "mlp"] = "conv4"
    ways: int = Field(5, ge=2)
    shots: int = Field(1, ge=1)
    query_per_class: int = Field(15, ge=1)
    filters: int = Field(32, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [40, 40])
    precision: Literal["single", "double"] = "double"

    # meta-learning
    alpha1: float = Field(0.01, gt=0.0)
    alpha2: float = Field(0.01, gt=0.0)
    beta1: float = Field(0.001, gt=0.0)
    beta2: float = Field(0.001, gt=0.0)
    inner_steps_train: int = Field(5, ge=1)
    inner_steps_test: int = Field(10, ge=1)
    meta_batch: int = Field(4, ge=1)
    order: Literal["full", "first"] = "full"
    second_grad_at: Literal["start", "updated"] = "start"
    episodes: int = Field(1000, ge=0)
    checkpoint_every: int = Field(100, ge=0)
    val_every: int = Field(0, ge=0)
    val_tasks: int = Field(50, ge=1)

    # 공격 / 평가
    eps_train: float = Field(2.0, ge=0.0)
    eps_test: list[float] = Field(default_factory=lambda: [2.0, 0.2])
    # 비워 두면 이미지 데이터는 clip, 합성 데이터는 clip 하지 않음
    clip: bool | None = None
    test_tasks: int = Field(600, ge=1)

    seed: int = 0
    out: str = "runs/default"

    @field_validator(*LIST_FIELDS, mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @field_validator("eps_test")
    @classmethod
    def _check_eps(cls, value):
        if not value or any(eps < 0 for eps in value):
            raise ValueError("eps_test 는 0 이상 값 1개 이상")
        return value

    @model_validator(mode="after")
    def _check_ranges(self):
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError(f"value_range 는 lo < hi 여야 함: {self.value_range}")
        split = self.split_train + self.split_val + self.split_test
        if self.is_synth and split != self.synth_classes:
            raise ValueError(f"split 합계 {split} ≠ synth_classes {self.synth_classes}")
        return self

    @property
    def is_synth(self) -> bool:
        return self.source == "synth"

    # ================================================================
    # ✅ 하위 설정으로 분해
    # ================================================================

    def attack_config(self, value_range: tuple[float, float] | None = None) -> AttackConfig:
        return AttackConfig(
            epsilon=self.eps_train,
            value_range=value_range or self.value_range,
            clip=(not self.is_synth) if self.clip is None else self.clip,
            normalized=self.normalized,
        )

    def meta_config(self, value_range: tuple[float, float] | None = None) -> MetaConfig:
        return MetaConfig(
            alpha1=self.alpha1, alpha2=self.alpha2, beta1=self.beta1, beta2=self.beta2,
            inner_steps_train=self.inner_steps_train, inner_steps_test=self.inner_steps_test,
            meta_batch=self.meta_batch, order=self.order, second_grad_at=self.second_grad_at,
            attack=self.attack_config(value_range), episodes=self.episodes,
            shots=self.shots, query_per_class=self.query_per_class,
            checkpoint_every=self.checkpoint_every, val_every=self.val_every,
            val_tasks=self.val_tasks, val_seed=self.seed,
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(train=self.split_train, val=self.split_val, test=self.split_test, seed=self.split_seed)

    def model_spec(self, geometry: tuple[int, ...]) -> ModelSpec:
        """geometry 는 실제 데이터에서 읽은 샘플 shape."""
        if self.model == "conv4":
            if len(geometry) != 3:
                raise ConfigError(f"conv4 는 [C, H, W] 샘플이 필요함: {geometry}")
            channels, height, width = geometry
            return ModelSpec(kind="conv4", ways=self.ways, channels=channels, height=height, width=width,
                             filters=self.filters, precision=self.precision)
        if len(geometry) != 1:
            raise ConfigError(f"mlp 는 1차원 샘플이 필요함: {geometry}")
        return ModelSpec(kind="mlp", ways=self.ways, dim=geometry[0], hidden=self.hidden,
                         precision=self.precision)


def _format_validation(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())


def parse_config(values: dict, overrides: dict | None = None) -> RunConfig:
    merged = dict(values)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"설정 오류: {_format_validation(e)}") from None
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"설정 오류: {e}") from None


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"설정 파일이 없음: {path}")
    values = dotenv_values(path, encoding="utf-8")
    empty = [key for key, value in values.items() if value is None]
    if empty:
        raise ConfigError(f"값이 없는 키: {', '.join(empty)}")
    return parse_config(values, overrides)
