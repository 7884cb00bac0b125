# metalogic/adversarial.py

from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, Field, model_validator

from gradlogic import Tensor, grad

from .models import ModelSpec, loss as model_loss
from .param_set import ParamSet

LossFn = Callable[[ParamSet, Tensor, np.ndarray], Tensor]


class AttackConfig(BaseModel):
    # ε 는 value_range 의 원래 단위 (이미지면 0~255 픽셀 단위)
    epsilon: float = Field(2.0, ge=0.0)
    value_range: tuple[float, float] = (0.0, 255.0)
    clip: bool = True
    # True 이면 데이터가 [0, 1] 로 정규화되어 저장된 것으로 보고 ε 을 (hi − lo) 로 나눈다
    normalized: bool = False

    @model_validator(mode="after")
    def _check_range(self):
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError(f"value_range 는 lo < hi 여야 함: {self.value_range}")
        return self

    @property
    def step(self) -> float:
        lo, hi = self.value_range
        return self.epsilon / (hi - lo) if self.normalized else self.epsilon

    @property
    def bounds(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.normalized else self.value_range

    def with_epsilon(self, epsilon: float) -> "AttackConfig":
        return self.model_copy(update={"epsilon": float(epsilon)})


def input_gradient(spec: ModelSpec, params: ParamSet, x, y, loss_fn: LossFn | None = None) -> np.ndarray:
    """∇_x L(f_params(x), y). params 쪽 그래프는 만들지 않는다."""
    loss_fn = loss_fn or (lambda p, xs, ys: model_loss(spec, p, xs, ys))
    xt = Tensor(x, requires_grad=True, dtype=spec.dtype)
    value = loss_fn(params.detach(), xt, y)
    (gx,) = grad(value, [xt])
    return gx.numpy()


def fgsm_perturbation(spec: ModelSpec, params: ParamSet, x, y, cfg: AttackConfig,
                      loss_fn: LossFn | None = None) -> np.ndarray:
    """clip 전의 섭동 ε·sign(∇_x L). sign(0) = 0."""
    if cfg.epsilon == 0:
        return np.zeros_like(np.asarray(x))
    gx = input_gradient(spec, params, x, y, loss_fn)
    return cfg.step * np.sign(gx)


def fgsm(spec: ModelSpec, params: ParamSet, x, y, cfg: AttackConfig,
         loss_fn: LossFn | None = None) -> np.ndarray:
    """
    Fast Gradient Sign Method (참 라벨 기준 공격).
    x_adv = x + ε·sign(∇_x L), clip 이면 유효 범위로 자른다. y 는 건드리지 않는다.
    """
    x = np.asarray(x)
    if cfg.epsilon == 0:
        return x.copy()
    x_adv = x + fgsm_perturbation(spec, params, x, y, cfg, loss_fn).astype(x.dtype)
    if cfg.clip:
        lo, hi = cfg.bounds
        x_adv = np.clip(x_adv, lo, hi)
    return x_adv
