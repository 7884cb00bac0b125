import numpy as np
import pytest

from metalogic import ContractError, ParamSet
from metalogic.adversarial import AttackConfig
from metalogic.evaluator import (
    EvalReport, GridCell, Scenario, adversarial_mask, build_scenario_episode, compare_reports,
    confidence_halfwidth, degradation_summary, meta_test, random_control, scenario_grid, scenarios_for,
)
from metalogic.meta_learner import MetaConfig
from metalogic.models import ModelSpec
from metalogic.tasks import sample_episode


def _cfg(blobs, **changes):
    base = dict(alpha1=0.2, inner_steps_test=3, query_per_class=3,
                attack=AttackConfig(epsilon=0.1, value_range=blobs.value_range, clip=False))
    base.update(changes)
    return MetaConfig(**base)


def _quiet(*args):
    pass


def _cell(support, query, eps, acc, ci=0.0):
    return GridCell(
        scenario=Scenario(support_mode=support, query_mode=query, epsilon_test=eps),
        report=EvalReport(mean_accuracy=acc, ci_halfwidth=ci, loss_curve=[1.0], top1_curve=[acc], num_tasks=10),
    )


def test_scenarios_for_drops_mixed_rows_for_one_shot():
    assert [s.label for s in scenarios_for(1, 2.0)] == [
        "clean-clean", "clean-adversarial", "adversarial-clean", "adversarial-adversarial",
    ]
    five = scenarios_for(5, 2.0)
    assert len(five) == 6
    assert {s.label for s in five} >= {"mixed40-clean", "mixed40-adversarial"}


def test_confidence_halfwidth():
    assert confidence_halfwidth([0.4, 0.6]) == pytest.approx(0.196, abs=1e-12)
    assert confidence_halfwidth([0.7]) == 0.0
    assert confidence_halfwidth([0.5] * 10) == 0.0


def test_clean_scenario_returns_same_episode(tiny_mlp, blobs, rng):
    spec, params = tiny_mlp
    episode = sample_episode(blobs, 3, 2, 3, rng)
    same = build_scenario_episode(episode, Scenario(epsilon_test=0.5), spec, params, AttackConfig())
    assert same is episode


def test_mixed40_replaces_two_of_five_per_class(tiny_mlp, blobs, rng):
    spec, params = tiny_mlp
    episode = sample_episode(blobs, 3, 5, 2, rng)
    scenario = Scenario(support_mode="mixed40", query_mode="clean", epsilon_test=0.3)
    mask = adversarial_mask(episode, scenario)
    for c in range(3):
        assert int(mask[episode.support_y == c].sum()) == 2
    np.testing.assert_array_equal(mask, adversarial_mask(episode, scenario))

    attack = AttackConfig(value_range=blobs.value_range, clip=False)
    built = build_scenario_episode(episode, scenario, spec, params, attack)
    np.testing.assert_array_equal(built.support_x[~mask], episode.support_x[~mask])
    assert not np.array_equal(built.support_x[mask], episode.support_x[mask])
    np.testing.assert_array_equal(built.query_x, episode.query_x)
    np.testing.assert_array_equal(built.support_y, episode.support_y)


def test_mixed40_needs_two_shots(tiny_mlp, blobs, rng):
    spec, params = tiny_mlp
    episode = sample_episode(blobs, 3, 1, 3, rng)
    scenario = Scenario(support_mode="mixed40", query_mode="adversarial", epsilon_test=0.1)
    with pytest.raises(ContractError):
        build_scenario_episode(episode, scenario, spec, params, AttackConfig(value_range=blobs.value_range))
    with pytest.raises(ContractError):
        meta_test(spec, params, blobs, scenario, 1, _cfg(blobs), 2, rng, num_workers=1)


def test_zero_epsilon_adversarial_equals_clean(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = _cfg(blobs)
    clean = meta_test(spec, params, blobs, Scenario(), 1, cfg, 4, np.random.default_rng(3), num_workers=1)
    attacked = meta_test(
        spec, params, blobs, Scenario(support_mode="adversarial", query_mode="adversarial", epsilon_test=0.0),
        1, cfg, 4, np.random.default_rng(3), num_workers=1,
    )
    assert attacked.model_dump() == clean.model_dump()


def test_constant_predictor_scores_chance_with_zero_ci(blobs, rng):
    spec = ModelSpec(kind="mlp", ways=5, dim=6, hidden=[])
    params = ParamSet([("head.w", np.zeros((6, 5))), ("head.b", np.array([1.0, 0.0, 0.0, 0.0, 0.0]))])
    cfg = _cfg(blobs, alpha1=0.0, query_per_class=4)
    for scenario in scenarios_for(2, 0.5):
        report = meta_test(spec, params, blobs, scenario, 2, cfg, 6, rng, num_workers=1)
        assert report.mean_accuracy == pytest.approx(0.2)
        assert report.ci_halfwidth == pytest.approx(0.0, abs=1e-12)
        assert report.top1_curve == pytest.approx([0.2] * 4)


def test_curves_and_theta_untouched(tiny_mlp, blobs, rng):
    spec, params = tiny_mlp
    before = {n: v.copy() for n, v in params.arrays().items()}
    cfg = _cfg(blobs, inner_steps_test=4)
    scenario = Scenario(support_mode="adversarial", query_mode="clean", epsilon_test=0.1)
    report = meta_test(spec, params, blobs, scenario, 2, cfg, 3, rng, num_workers=1)
    assert len(report.loss_curve) == len(report.top1_curve) == 5
    assert report.num_tasks == 3
    assert 0.0 <= report.mean_accuracy <= 1.0
    assert report.mean_accuracy == pytest.approx(report.top1_curve[-1])
    for name in params.names():
        assert params[name].data.tobytes() == before[name].tobytes()


def test_grid_shape_and_shared_tasks(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = _cfg(blobs, inner_steps_test=1)
    one_shot = scenario_grid(spec, params, blobs, 1, [0.1, 0.2], cfg, 2, np.random.default_rng(0),
                             num_workers=1, logger=_quiet)
    assert len(one_shot) == 8
    two_shot = scenario_grid(spec, params, blobs, 2, [0.1, 0.2], cfg, 2, np.random.default_rng(0),
                             num_workers=1, logger=_quiet)
    assert len(two_shot) == 12

    clean = [cell.report for cell in two_shot if cell.scenario.is_clean]
    assert len(clean) == 2
    assert clean[0].model_dump() == clean[1].model_dump()


def test_grid_is_deterministic(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = _cfg(blobs, inner_steps_test=2)
    logged = []
    a = scenario_grid(spec, params, blobs, 2, [0.1], cfg, 3, np.random.default_rng(9),
                      num_workers=1, logger=logged.append)
    b = scenario_grid(spec, params, blobs, 2, [0.1], cfg, 3, np.random.default_rng(9),
                      num_workers=1, logger=_quiet)
    assert [c.model_dump() for c in a] == [c.model_dump() for c in b]
    assert len(logged) == 6
    assert logged[0].startswith("scenario=clean-clean eps=0.1 acc=")


def test_random_control_runs_full_grid(tiny_mlp, blobs):
    spec, _ = tiny_mlp
    grid = random_control(spec, blobs, 1, [0.1], _cfg(blobs, inner_steps_test=1), 2,
                          np.random.default_rng(1), seed=4, num_workers=1, logger=_quiet)
    assert len(grid) == 4


def test_degradation_summary():
    grid = [
        _cell("clean", "clean", 2.0, 0.5), _cell("clean", "adversarial", 2.0, 0.3),
        _cell("clean", "clean", 0.2, 0.5), _cell("clean", "adversarial", 0.2, 0.45),
    ]
    summary = degradation_summary(grid)
    drops = {(r["query"], r["epsilon"]): r["drop"] for r in summary["drop"]}
    assert drops[("clean", 2.0)] == 0.0
    assert drops[("adversarial", 2.0)] == pytest.approx(0.2)
    assert drops[("adversarial", 0.2)] == pytest.approx(0.05)

    sens = {r["query"]: r for r in summary["sensitivity"]}
    assert sens["adversarial"]["eps_low"] == 0.2 and sens["adversarial"]["eps_high"] == 2.0
    assert sens["adversarial"]["change"] == pytest.approx(0.15)
    assert sens["clean"]["change"] == 0.0


def test_compare_reports_interleaves_methods():
    adml = [_cell("clean", "clean", 2.0, 0.5, 0.01), _cell("clean", "adversarial", 2.0, 0.4, 0.02)]
    maml = [_cell("clean", "clean", 2.0, 0.48, 0.01)]
    rows = compare_reports({"adml": adml, "maml": maml})
    assert [(r["method"], r["query"]) for r in rows] == [
        ("adml", "clean"), ("maml", "clean"), ("adml", "adversarial"),
    ]
    assert rows[1]["mean"] == 0.48
    assert compare_reports({}) == []


def test_worker_pool_matches_inline(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = _cfg(blobs, inner_steps_test=2)
    scenario = Scenario(support_mode="adversarial", query_mode="adversarial", epsilon_test=0.1)
    inline = meta_test(spec, params, blobs, scenario, 2, cfg, 4, np.random.default_rng(2), num_workers=1)
    pooled = meta_test(spec, params, blobs, scenario, 2, cfg, 4, np.random.default_rng(2), num_workers=2)
    assert pooled.model_dump() == inline.model_dump()
