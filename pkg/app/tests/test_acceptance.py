from pathlib import Path

import numpy as np
import pytest

from app.protocol.config_models import load_config
from app.services.run_loader import prepare_run
from metalogic.evaluator import Scenario, meta_test, scenario_grid
from metalogic.meta_learner import meta_train
from metalogic.models import init_params

QUICKSTART = Path(__file__).resolve().parents[2] / "configs" / "synth_quickstart.conf"
EVAL_TASKS = 200
SEEDS = (0, 1, 2)


def _quiet(*args):
    pass


@pytest.fixture(scope="module")
def trained():
    """(kind, seed) → (cfg, data, θ). 같은 조합은 한 번만 학습한다."""
    runs = {}

    def get(kind, seed=0):
        if (kind, seed) not in runs:
            cfg = load_config(QUICKSTART, {"kind": kind, "seed": seed})
            data = prepare_run(cfg)
            theta = meta_train(
                cfg.kind, data.spec, data.train, data.meta, rng=np.random.default_rng(cfg.seed),
                theta=init_params(data.spec, cfg.seed), logger=_quiet,
            )
            runs[kind, seed] = (cfg, data, theta)
        return runs[kind, seed]

    return get


def _accuracy(cfg, data, theta, scenario):
    report = meta_test(data.spec, theta, data.test, scenario, cfg.shots, data.meta, EVAL_TASKS,
                       np.random.default_rng(100), num_workers=1)
    return report.mean_accuracy


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["maml", "adml"])
def test_desk_scale_learning_beats_random_control(trained, kind):
    cfg, data, theta = trained(kind)

    assert _accuracy(cfg, data, theta, Scenario()) >= 0.80
    control = init_params(data.spec, cfg.seed + 1)
    assert _accuracy(cfg, data, control, Scenario()) <= 0.35


@pytest.mark.slow
def test_adml_degrades_less_than_maml_under_query_attack(trained):
    drops = {}
    for kind in ("maml", "adml"):
        per_seed = []
        for seed in SEEDS:
            cfg, data, theta = trained(kind, seed)
            attacked = Scenario(support_mode="clean", query_mode="adversarial", epsilon_test=cfg.eps_train)
            per_seed.append(_accuracy(cfg, data, theta, Scenario()) - _accuracy(cfg, data, theta, attacked))
        drops[kind] = float(np.mean(per_seed))

    assert drops["adml"] <= 0.10
    assert drops["adml"] <= 0.5 * drops["maml"]


@pytest.mark.slow
def test_adml_loss_curves_fall_after_a_few_steps(trained):
    cfg, data, theta = trained("adml")
    grid = scenario_grid(data.spec, theta, data.test, cfg.shots, [cfg.eps_train], data.meta, EVAL_TASKS,
                         np.random.default_rng(100), num_workers=1, logger=_quiet)
    assert len(grid) == 4

    for cell in grid:
        curve = np.asarray(cell.report.loss_curve)
        assert len(curve) == cfg.inner_steps_test + 1
        assert curve[3] < curve[0], cell.scenario.label
        slope = np.polyfit(np.arange(len(curve)), curve, 1)[0]
        assert slope <= 0.0, cell.scenario.label
