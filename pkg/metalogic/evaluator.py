# metalogic/evaluator.py
#
# meta-test 평가: support/query 조합 6가지 시나리오, 95% 신뢰구간, gradient step 별 loss/top-1 곡선.

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from gradlogic import cross_entropy, top1_accuracy
from servers.logger_utils import make_logger
from servers.worker import run_ordered

from .adversarial import AttackConfig, fgsm
from .errors import ContractError
from .meta_learner import MetaConfig, inner_adapt
from .models import ModelSpec, forward, init_params
from .param_set import ParamSet
from .tasks import Episode, TaskSource, sample_batch

MIXED_FRACTION = 0.4
CI_Z = 1.96
DEFAULT_TEST_TASKS = 600

SUPPORT_MODES = ("clean", "mixed40", "adversarial")
QUERY_MODES = ("clean", "adversarial")


class Scenario(BaseModel):
    support_mode: Literal["clean", "adversarial", "mixed40"] = "clean"
    query_mode: Literal["clean", "adversarial"] = "clean"
    epsilon_test: float = Field(0.0, ge=0.0)

    @property
    def label(self) -> str:
        return f"{self.support_mode}-{self.query_mode}"

    @property
    def is_clean(self) -> bool:
        return self.support_mode == "clean" and self.query_mode == "clean"


class EvalReport(BaseModel):
    mean_accuracy: float = Field(ge=0.0, le=1.0)
    ci_halfwidth: float = Field(ge=0.0)
    loss_curve: list[float]
    top1_curve: list[float]
    num_tasks: int = Field(ge=1)


class GridCell(BaseModel):
    scenario: Scenario
    report: EvalReport


def scenarios_for(shots: int, epsilon: float) -> list[Scenario]:
    """1-shot 이면 mixed40 행은 빠진다."""
    supports = [mode for mode in SUPPORT_MODES if mode != "mixed40" or shots >= 2]
    return [
        Scenario(support_mode=support, query_mode=query, epsilon_test=epsilon)
        for support in supports
        for query in QUERY_MODES
    ]


def confidence_halfwidth(accuracies) -> float:
    values = np.asarray(accuracies, dtype=np.float64)
    if values.size <= 1:
        return 0.0
    return float(CI_Z * values.std(ddof=1) / math.sqrt(values.size))


# ================================================================
# ✅ 시나리오별 episode 구성
# ================================================================

def build_scenario_episode(episode: Episode, scenario: Scenario, spec: ModelSpec, params: ParamSet,
                           attack: AttackConfig) -> Episode:
    """
    support/query 를 시나리오대로 바꾼 episode. 라벨은 그대로.
    mixed40 은 클래스마다 floor(0.4·shots) 개를 episode seed 로 골라 adversarial 로 바꾼다.
    """
    if scenario.support_mode == "mixed40" and episode.shots < 2:
        raise ContractError(f"mixed40 은 shots ≥ 2 가 필요함 (shots={episode.shots})")
    if scenario.is_clean:
        return episode

    attack = attack.with_epsilon(scenario.epsilon_test)
    support_x, query_x = episode.support_x, episode.query_x

    if scenario.support_mode != "clean":
        adv = fgsm(spec, params, episode.support_x, episode.support_y, attack)
        if scenario.support_mode == "adversarial":
            support_x = adv
        else:
            mask = adversarial_mask(episode, scenario)
            support_x = episode.support_x.copy()
            support_x[mask] = adv[mask]

    if scenario.query_mode == "adversarial":
        query_x = fgsm(spec, params, episode.query_x, episode.query_y, attack)

    return episode.replace(support_x=support_x, query_x=query_x)


def adversarial_mask(episode: Episode, scenario: Scenario) -> np.ndarray:
    """support 중 adversarial 로 바뀌는 위치."""
    mask = np.zeros(len(episode.support_y), dtype=bool)
    if scenario.support_mode == "adversarial":
        mask[:] = True
    elif scenario.support_mode == "mixed40":
        rng = np.random.default_rng(episode.seed)
        per_class = int(math.floor(MIXED_FRACTION * episode.shots))
        for c in range(episode.ways):
            positions = np.flatnonzero(episode.support_y == c)
            mask[rng.choice(positions, size=per_class, replace=False)] = True
    return mask


# ================================================================
# ✅ meta-test
# ================================================================

def _query_metrics(spec: ModelSpec, params: ParamSet, episode: Episode) -> tuple[float, float]:
    logits = forward(spec, params, episode.query_x)
    return cross_entropy(logits, episode.query_y).item(), top1_accuracy(logits, episode.query_y)


def evaluate_episode(job) -> tuple[list[float], list[float]]:
    """
    워커에서 도는 단위 작업. θ 의 복사본을 support 로 한 step 씩 적응시키며
    step 0 (적응 전) 부터 step S 까지 query loss / top-1 을 기록한다.
    """
    spec, theta, episode, scenario, cfg = job
    episode = build_scenario_episode(episode, scenario, spec, theta, cfg.attack)
    params = theta.detach()
    losses, top1 = [], []
    for step in range(cfg.inner_steps_test + 1):
        if step:
            params = inner_adapt(spec, params, (episode.support_x, episode.support_y), cfg.alpha1, 1)
        loss_value, accuracy = _query_metrics(spec, params, episode)
        losses.append(loss_value)
        top1.append(accuracy)
    return losses, top1


def meta_test(spec: ModelSpec, theta: ParamSet, source: TaskSource, scenario: Scenario, shots: int,
              cfg: MetaConfig, num_tasks: int, rng: np.random.Generator,
              num_workers: int | None = None) -> EvalReport:
    if num_tasks < 1:
        raise ContractError(f"num_tasks 는 1 이상이어야 함: {num_tasks}")
    if scenario.support_mode == "mixed40" and shots < 2:
        raise ContractError(f"mixed40 은 shots ≥ 2 가 필요함 (shots={shots})")

    episodes = sample_batch(source, num_tasks, spec.ways, shots, cfg.query_per_class, rng)
    frozen = theta.detach()
    results = run_ordered(
        evaluate_episode,
        [(spec, frozen, episode, scenario, cfg) for episode in episodes],
        num_workers,
    )

    losses = np.array([r[0] for r in results])
    top1 = np.array([r[1] for r in results])
    final = top1[:, -1]
    return EvalReport(
        mean_accuracy=float(final.mean()),
        ci_halfwidth=confidence_halfwidth(final),
        loss_curve=losses.mean(axis=0).tolist(),
        top1_curve=top1.mean(axis=0).tolist(),
        num_tasks=num_tasks,
    )


def scenario_grid(spec: ModelSpec, theta: ParamSet, source: TaskSource, shots: int, eps_list,
                  cfg: MetaConfig, num_tasks: int, rng: np.random.Generator,
                  num_workers: int | None = None, logger=None) -> list[GridCell]:
    """
    ε 마다 적용 가능한 모든 시나리오를 평가한다.
    모든 cell 이 같은 seed 로 episode 를 뽑으므로 같은 task 들 위에서 비교된다.
    """
    log = logger or make_logger("meta_test", 0)
    base_seed = int(rng.integers(2**31))
    grid = []
    for epsilon in eps_list:
        for scenario in scenarios_for(shots, float(epsilon)):
            report = meta_test(
                spec, theta, source, scenario, shots, cfg, num_tasks,
                np.random.default_rng(base_seed), num_workers,
            )
            log(f"scenario={scenario.label} eps={epsilon:g} acc={report.mean_accuracy:.4f} "
                f"ci={report.ci_halfwidth:.4f} tasks={num_tasks}")
            grid.append(GridCell(scenario=scenario, report=report))
    return grid


def random_control(spec: ModelSpec, source: TaskSource, shots: int, eps_list, cfg: MetaConfig,
                   num_tasks: int, rng: np.random.Generator, seed: int = 0,
                   num_workers: int | None = None, logger=None) -> list[GridCell]:
    """학습하지 않은 초기 θ 로 같은 grid 를 돌린다 (chance 수준 대조군)."""
    return scenario_grid(
        spec, init_params(spec, seed), source, shots, eps_list, cfg, num_tasks, rng, num_workers, logger,
    )


# ================================================================
# ✅ 결과 요약
# ================================================================

def _clean_accuracy(grid: list[GridCell], epsilon: float) -> float | None:
    for cell in grid:
        if cell.scenario.is_clean and cell.scenario.epsilon_test == epsilon:
            return cell.report.mean_accuracy
    return None


def degradation_summary(grid: list[GridCell]) -> dict:
    """
    drop: ε 마다 Clean-Clean 대비 각 시나리오의 정확도 하락.
    sensitivity: 시나리오마다 가장 작은 ε 과 가장 큰 ε 사이의 정확도 차이.
    """
    drops = []
    for cell in grid:
        baseline = _clean_accuracy(grid, cell.scenario.epsilon_test)
        if baseline is None:
            continue
        drops.append({
            "support": cell.scenario.support_mode,
            "query": cell.scenario.query_mode,
            "epsilon": cell.scenario.epsilon_test,
            "drop": baseline - cell.report.mean_accuracy,
        })

    sensitivity = []
    by_label: dict[str, list[GridCell]] = {}
    for cell in grid:
        by_label.setdefault(cell.scenario.label, []).append(cell)
    for cells in by_label.values():
        epsilons = sorted({cell.scenario.epsilon_test for cell in cells})
        if len(epsilons) < 2:
            continue
        low = next(c for c in cells if c.scenario.epsilon_test == epsilons[0])
        high = next(c for c in cells if c.scenario.epsilon_test == epsilons[-1])
        sensitivity.append({
            "support": low.scenario.support_mode,
            "query": low.scenario.query_mode,
            "eps_low": epsilons[0],
            "eps_high": epsilons[-1],
            "change": low.report.mean_accuracy - high.report.mean_accuracy,
        })
    return {"drop": drops, "sensitivity": sensitivity}


def compare_reports(named: dict[str, list[GridCell]]) -> list[dict]:
    """method × scenario × ε 정확도 표. 행 순서는 첫 grid 의 cell 순서, 그 안에서 method 순서."""
    rows = []
    if not named:
        return rows
    keys = []
    for cells in named.values():
        for cell in cells:
            key = (cell.scenario.support_mode, cell.scenario.query_mode, cell.scenario.epsilon_test)
            if key not in keys:
                keys.append(key)
    for support, query, epsilon in keys:
        for method, cells in named.items():
            match = next(
                (c for c in cells
                 if (c.scenario.support_mode, c.scenario.query_mode, c.scenario.epsilon_test)
                 == (support, query, epsilon)),
                None,
            )
            if match is None:
                continue
            rows.append({
                "method": method,
                "support": support,
                "query": query,
                "epsilon": epsilon,
                "mean": match.report.mean_accuracy,
                "ci": match.report.ci_halfwidth,
            })
    return rows
