# metalogic/models.py

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from gradlogic import (
    Tensor, batch_norm, conv2d, cross_entropy, flatten, linear, max_pool2x2, relu, resolve_dtype,
)

from .errors import GeometryError, ParameterError
from .param_set import ParamSet

CONV_BLOCKS = 4
INIT_STD = 0.02


class ModelSpec(BaseModel):
    kind: Literal["conv4", "mlp"] = "mlp"
    ways: int = Field(5, ge=2)
    # conv4 입력 geometry
    channels: int = Field(3, ge=1)
    height: int = Field(84, ge=1)
    width: int = Field(84, ge=1)
    filters: int = Field(32, ge=1)
    # mlp 입력 차원 / hidden 폭
    dim: int = Field(16, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [40, 40])
    precision: Literal["single", "double"] = "double"

    @model_validator(mode="after")
    def _check_hidden(self):
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden 폭은 1 이상이어야 함")
        return self

    @property
    def input_shape(self) -> tuple[int, ...]:
        if self.kind == "conv4":
            return (self.channels, self.height, self.width)
        return (self.dim,)

    @property
    def dtype(self) -> np.dtype:
        return resolve_dtype(self.precision)


def pooled_extent(extent: int, blocks: int = CONV_BLOCKS) -> int:
    """max_pool2x2 를 blocks 번 거친 뒤의 크기 (84 → 42 → 21 → 10 → 5)."""
    for _ in range(blocks):
        extent = extent // 2 if extent >= 2 else extent
    return extent


def feature_dim(spec: ModelSpec) -> int:
    if spec.kind == "conv4":
        return spec.filters * pooled_extent(spec.height) * pooled_extent(spec.width)
    return spec.hidden[-1] if spec.hidden else spec.dim


def param_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...]]]:
    """spec 이 요구하는 (이름, shape) 목록. 순서가 곧 ParamSet 의 순서."""
    shapes = []
    if spec.kind == "conv4":
        in_ch = spec.channels
        for i in range(1, CONV_BLOCKS + 1):
            shapes += [
                (f"conv{i}.w", (spec.filters, in_ch, 3, 3)),
                (f"conv{i}.b", (spec.filters,)),
                (f"bn{i}.gamma", (spec.filters,)),
                (f"bn{i}.beta", (spec.filters,)),
            ]
            in_ch = spec.filters
    else:
        fan_in = spec.dim
        for i, width in enumerate(spec.hidden, start=1):
            shapes += [(f"fc{i}.w", (fan_in, width)), (f"fc{i}.b", (width,))]
            fan_in = width
    shapes += [("head.w", (feature_dim(spec), spec.ways)), ("head.b", (spec.ways,))]
    return shapes


def _truncated_normal(rng: np.random.Generator, shape: tuple, std: float) -> np.ndarray:
    # 2σ 밖의 값은 다시 뽑는다
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2 * std
    while outside.any():
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2 * std
    return values


def init_params(spec: ModelSpec, seed: int) -> ParamSet:
    rng = np.random.default_rng(seed)
    dtype = spec.dtype
    items = []
    for name, shape in param_shapes(spec):
        if name.endswith(".w"):
            value = _truncated_normal(rng, shape, INIT_STD)
        elif name.endswith(".gamma"):
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        items.append((name, Tensor(value, dtype=dtype)))
    return ParamSet(items)


def check_params(spec: ModelSpec, params: ParamSet):
    expected = dict(param_shapes(spec))
    if set(params.names()) != set(expected):
        missing = sorted(set(expected) - set(params.names()))
        extra = sorted(set(params.names()) - set(expected))
        raise ParameterError(f"ParamSet schema 불일치: missing={missing}, extra={extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ParameterError(f"{name} shape 불일치: {params[name].shape} (기대값 {shape})")


def forward(spec: ModelSpec, params: ParamSet, x) -> Tensor:
    """
    params 를 명시적으로 받아 logits [B, ways] 를 계산한다.
    params, x 양쪽에 대해 미분 가능 (FGSM 은 x 쪽 gradient 를 쓴다).
    파라미터는 이름으로 찾으므로 ParamSet 의 순서와 무관하다.
    """
    check_params(spec, params)
    if not isinstance(x, Tensor):
        x = Tensor(x, dtype=spec.dtype)
    if x.ndim < 2 or x.shape[0] < 1 or tuple(x.shape[1:]) != spec.input_shape:
        raise GeometryError(f"입력 shape {x.shape} 이 모델 입력 {spec.input_shape} 과 맞지 않음")

    h = x
    if spec.kind == "conv4":
        for i in range(1, CONV_BLOCKS + 1):
            h = conv2d(h, params[f"conv{i}.w"], params[f"conv{i}.b"])
            h = batch_norm(h, params[f"bn{i}.gamma"], params[f"bn{i}.beta"])
            h = relu(h)
            h = max_pool2x2(h)
        h = flatten(h)
    else:
        for i in range(1, len(spec.hidden) + 1):
            h = relu(linear(h, params[f"fc{i}.w"], params[f"fc{i}.b"]))
    return linear(h, params["head.w"], params["head.b"])


def loss(spec: ModelSpec, params: ParamSet, x, y) -> Tensor:
    return cross_entropy(forward(spec, params, x), y)
