# metalogic/meta_learner.py
#
# MAML / MAML-AD / ADML 세 가지 meta-trainer.
# 모든 trainer 는 같은 inner_adapt 와 같은 meta-gradient 계산을 공유한다.

from collections.abc import Callable
from enum import Enum
from functools import partial
from time import time
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from gradlogic import Tensor, backward, constant
from servers.logger_utils import make_logger

from .adversarial import AttackConfig, LossFn, fgsm
from .errors import ContractError
from .models import ModelSpec, init_params, loss as model_loss
from .param_set import ParamSet
from .tasks import Episode, TaskSource, sample_batch

CheckpointSink = Callable[[int, ParamSet], None]


class TrainerKind(str, Enum):
    MAML = "maml"
    MAML_AD = "maml_ad"
    ADML = "adml"


class MetaConfig(BaseModel):
    # 0 은 oracle 검증용으로만 허용 (RunConfig 는 > 0 을 강제한다)
    alpha1: float = Field(0.01, ge=0.0)
    alpha2: float = Field(0.01, ge=0.0)
    beta1: float = Field(0.001, ge=0.0)
    beta2: float = Field(0.001, ge=0.0)
    inner_steps_train: int = Field(5, ge=1)
    inner_steps_test: int = Field(10, ge=1)
    meta_batch: int = Field(4, ge=1)
    order: Literal["full", "first"] = "full"
    # ADML 두 번째 meta-gradient 를 episode 시작 θ 에서 구할지, 첫 update 후 θ 에서 구할지
    second_grad_at: Literal["start", "updated"] = "start"
    attack: AttackConfig = Field(default_factory=AttackConfig)
    episodes: int = Field(1000, ge=0)
    shots: int = Field(1, ge=1)
    query_per_class: int = Field(15, ge=1)
    checkpoint_every: int = Field(0, ge=0)
    val_every: int = Field(0, ge=0)
    val_tasks: int = Field(50, ge=1)
    val_seed: int = 0


def _resolve_loss(spec: ModelSpec, loss_fn: LossFn | None) -> LossFn:
    return loss_fn or partial(model_loss, spec)


# ================================================================
# ✅ inner gradient update
# ================================================================

def _adapt(spec: ModelSpec, params: ParamSet, data: tuple, alpha: float, steps: int,
           create_graph: bool, loss_fn: LossFn | None = None) -> tuple[ParamSet, float]:
    x, y = data
    if len(y) == 0:
        raise ContractError("inner_adapt 데이터가 비어 있음")
    loss_fn = _resolve_loss(spec, loss_fn)
    theta = params
    if create_graph:
        theta = ParamSet(
            (name, value if value.requires_grad else Tensor(value.data, requires_grad=True))
            for name, value in params.items()
        )
    first_loss = None
    for _ in range(steps):
        current = theta if create_graph else theta.leaves()
        value = loss_fn(current, x, y)
        if first_loss is None:
            first_loss = value.item()
        grads = backward(value, current.as_dict(), create_graph=create_graph)
        theta = current.update(grads, alpha)
        if not create_graph:
            theta = theta.detach()
    return theta, first_loss


def inner_adapt(spec: ModelSpec, params: ParamSet, data: tuple, alpha: float, steps: int,
                create_graph: bool = False, loss_fn: LossFn | None = None) -> ParamSet:
    """
    support 전체 batch 로 steps 번 gradient descent: θ ← θ − α∇_θ L.
    create_graph 이면 결과가 입력 params 에 대해 계속 미분 가능하다.
    """
    adapted, _ = _adapt(spec, params, data, alpha, steps, create_graph, loss_fn)
    return adapted


def _task_meta_gradient(spec: ModelSpec, theta: ParamSet, support: tuple, query: tuple,
                        alpha: float, steps: int, order: str,
                        loss_fn: LossFn | None) -> tuple[dict[str, np.ndarray], float]:
    """
    한 task 에 대한 ∇_θ L(f_θ', query), θ' = inner_adapt(θ, support).
    first-order 이면 θ' 를 θ 와 무관한 상수로 보고 θ' 지점의 gradient 를 쓴다.
    """
    loss_fn = _resolve_loss(spec, loss_fn)
    if order == "full":
        leaves = theta.leaves()
        adapted, inner_loss = _adapt(spec, leaves, support, alpha, steps, True, loss_fn)
        value = loss_fn(adapted, *query)
        grads = backward(value, leaves.as_dict())
    else:
        adapted, inner_loss = _adapt(spec, theta, support, alpha, steps, False, loss_fn)
        adapted = adapted.leaves()
        value = loss_fn(adapted, *query)
        grads = backward(value, adapted.as_dict())
    return {name: g.data for name, g in grads.items()}, inner_loss


def _summed_meta_gradient(spec, theta, pairs, alpha, steps, order, loss_fn):
    """task 순서대로 더한다 (고정 순서 → 결정적)."""
    total, losses = None, []
    for support, query in pairs:
        grads, inner_loss = _task_meta_gradient(spec, theta, support, query, alpha, steps, order, loss_fn)
        losses.append(inner_loss)
        total = grads if total is None else {name: total[name] + grads[name] for name in total}
    return total, losses


def _apply(theta: ParamSet, grads: dict[str, np.ndarray], beta: float) -> ParamSet:
    return theta.detach().update({name: constant(g) for name, g in grads.items()}, beta)


# ================================================================
# ✅ episode update (MAML / MAML-AD / ADML)
# ================================================================

def _check_tasks(tasks: list[Episode]):
    if not tasks:
        raise ContractError("task 목록이 비어 있음")


def _maml_update(spec, theta, tasks, cfg, loss_fn):
    pairs = [((ep.support_x, ep.support_y), (ep.query_x, ep.query_y)) for ep in tasks]
    grads, losses = _summed_meta_gradient(
        spec, theta, pairs, cfg.alpha1, cfg.inner_steps_train, cfg.order, loss_fn
    )
    return _apply(theta, grads, cfg.beta1), losses


def _mix(clean_x, adv_x, y):
    """K 개 clean + K 개 adversarial (라벨은 그대로 두 번)."""
    return np.concatenate([clean_x, adv_x]), np.concatenate([y, y])


def _mamlad_update(spec, theta, tasks, cfg, loss_fn):
    mixed = []
    for ep in tasks:
        sx_adv = fgsm(spec, theta, ep.support_x, ep.support_y, cfg.attack, loss_fn)
        qx_adv = fgsm(spec, theta, ep.query_x, ep.query_y, cfg.attack, loss_fn)
        support_x, support_y = _mix(ep.support_x, sx_adv, ep.support_y)
        query_x, query_y = _mix(ep.query_x, qx_adv, ep.query_y)
        mixed.append(ep.replace(support_x=support_x, support_y=support_y, query_x=query_x, query_y=query_y))
    return _maml_update(spec, theta, mixed, cfg, loss_fn)


def _adml_update(spec, theta, tasks, cfg, loss_fn):
    adv_pairs, clean_pairs = [], []
    for ep in tasks:
        # 공격은 episode 시작 시점의 θ 로 만든다 (adaptation 보다 먼저)
        sx_adv = fgsm(spec, theta, ep.support_x, ep.support_y, cfg.attack, loss_fn)
        qx_adv = fgsm(spec, theta, ep.query_x, ep.query_y, cfg.attack, loss_fn)
        # adversarial support 로 적응한 쪽은 clean query 로, clean support 로 적응한 쪽은 adversarial query 로 평가 (교차)
        adv_pairs.append(((sx_adv, ep.support_y), (ep.query_x, ep.query_y)))
        clean_pairs.append(((ep.support_x, ep.support_y), (qx_adv, ep.query_y)))

    steps, order = cfg.inner_steps_train, cfg.order
    g1, losses_adv = _summed_meta_gradient(spec, theta, adv_pairs, cfg.alpha1, steps, order, loss_fn)
    if cfg.second_grad_at == "start":
        g2, losses_clean = _summed_meta_gradient(spec, theta, clean_pairs, cfg.alpha2, steps, order, loss_fn)
        updated = _apply(theta, g1, cfg.beta1)
    else:
        updated = _apply(theta, g1, cfg.beta1)
        g2, losses_clean = _summed_meta_gradient(spec, updated, clean_pairs, cfg.alpha2, steps, order, loss_fn)
    return _apply(updated, g2, cfg.beta2), losses_adv + losses_clean


_UPDATES = {
    TrainerKind.MAML: _maml_update,
    TrainerKind.MAML_AD: _mamlad_update,
    TrainerKind.ADML: _adml_update,
}


def episode_update(kind: TrainerKind, spec: ModelSpec, theta: ParamSet, tasks: list[Episode],
                   cfg: MetaConfig, loss_fn: LossFn | None = None) -> tuple[ParamSet, float]:
    """(새 θ, inner loss 평균). 입력 θ 는 바꾸지 않는다."""
    _check_tasks(tasks)
    updated, losses = _UPDATES[TrainerKind(kind)](spec, theta, tasks, cfg, loss_fn)
    return updated, float(np.mean(losses))


def maml_episode_update(spec: ModelSpec, theta: ParamSet, tasks: list[Episode], cfg: MetaConfig,
                        loss_fn: LossFn | None = None) -> ParamSet:
    return episode_update(TrainerKind.MAML, spec, theta, tasks, cfg, loss_fn)[0]


def mamlad_episode_update(spec: ModelSpec, theta: ParamSet, tasks: list[Episode], cfg: MetaConfig,
                          loss_fn: LossFn | None = None) -> ParamSet:
    return episode_update(TrainerKind.MAML_AD, spec, theta, tasks, cfg, loss_fn)[0]


def adml_episode_update(spec: ModelSpec, theta: ParamSet, tasks: list[Episode], cfg: MetaConfig,
                        loss_fn: LossFn | None = None) -> ParamSet:
    return episode_update(TrainerKind.ADML, spec, theta, tasks, cfg, loss_fn)[0]


def adml_meta_gradients(spec: ModelSpec, theta: ParamSet, tasks: list[Episode], cfg: MetaConfig,
                        loss_fn: LossFn | None = None) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """ADML 의 (g1, g2) 를 둘 다 episode 시작 θ 에서 구해 돌려준다 (검증용)."""
    _check_tasks(tasks)
    adv_pairs, clean_pairs = [], []
    for ep in tasks:
        sx_adv = fgsm(spec, theta, ep.support_x, ep.support_y, cfg.attack, loss_fn)
        qx_adv = fgsm(spec, theta, ep.query_x, ep.query_y, cfg.attack, loss_fn)
        adv_pairs.append(((sx_adv, ep.support_y), (ep.query_x, ep.query_y)))
        clean_pairs.append(((ep.support_x, ep.support_y), (qx_adv, ep.query_y)))
    steps, order = cfg.inner_steps_train, cfg.order
    g1, _ = _summed_meta_gradient(spec, theta, adv_pairs, cfg.alpha1, steps, order, loss_fn)
    g2, _ = _summed_meta_gradient(spec, theta, clean_pairs, cfg.alpha2, steps, order, loss_fn)
    return g1, g2


# ================================================================
# ✅ meta-training outer loop
# ================================================================

def meta_train(kind: TrainerKind, spec: ModelSpec, source: TaskSource, cfg: MetaConfig,
               sink: CheckpointSink | None = None, rng: np.random.Generator | None = None,
               theta: ParamSet | None = None, val_source: TaskSource | None = None,
               loss_fn: LossFn | None = None, logger=None) -> ParamSet:
    """
    cfg.episodes 번 {meta_batch 개 task 샘플 → episode update}.
    checkpoint_every 마다 sink(episode, θ) 를 부르고 마지막 θ 를 돌려준다.
    """
    kind = TrainerKind(kind)
    rng = rng if rng is not None else np.random.default_rng(0)
    log = logger or make_logger("meta_train", 0)
    if theta is None:
        theta = init_params(spec, seed=int(rng.integers(2**31)))

    log(f"start kind={kind.value} episodes={cfg.episodes} meta_batch={cfg.meta_batch} "
        f"shots={cfg.shots} order={cfg.order} eps={cfg.attack.epsilon:g}")
    for episode in range(1, cfg.episodes + 1):
        started = time()
        tasks = sample_batch(source, cfg.meta_batch, spec.ways, cfg.shots, cfg.query_per_class, rng)
        theta, inner_loss = episode_update(kind, spec, theta, tasks, cfg, loss_fn)
        log(f"episode={episode} kind={kind.value} inner_loss={inner_loss:.4f} wall={time() - started:.3f}s")

        if sink is not None and cfg.checkpoint_every and episode % cfg.checkpoint_every == 0:
            sink(episode, theta)
        if val_source is not None and cfg.val_every and episode % cfg.val_every == 0:
            accuracy = validate(spec, theta, val_source, cfg)
            log(f"episode={episode} val_acc={accuracy:.4f}")
    return theta


def validate(spec: ModelSpec, theta: ParamSet, source: TaskSource, cfg: MetaConfig) -> float:
    """validation class 로 Clean-Clean 정확도. 학습 rng 와 분리된 고정 seed 를 쓴다."""
    from .evaluator import Scenario, meta_test

    report = meta_test(
        spec, theta, source, Scenario(), cfg.shots, cfg, cfg.val_tasks,
        np.random.default_rng(cfg.val_seed), num_workers=1,
    )
    return report.mean_accuracy
