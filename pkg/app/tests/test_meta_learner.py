import numpy as np
import pytest

from app.services.gradcheck import numeric_gradient, relative_error
from gradlogic import Tensor
from metalogic import ContractError, ParamSet
from metalogic.adversarial import AttackConfig
from metalogic.meta_learner import (
    MetaConfig, TrainerKind, _task_meta_gradient, adml_episode_update, adml_meta_gradients,
    episode_update, inner_adapt, maml_episode_update, mamlad_episode_update, meta_train,
)
from metalogic.models import ModelSpec, init_params, loss
from metalogic.tasks import Episode, sample_episode, synth_blob_source

SCALAR_SPEC = ModelSpec(kind="mlp", ways=2, dim=1, hidden=[])


def quadratic(params, x, y):
    """½·a·θ², a = 2."""
    return (params["theta"] * params["theta"]).sum()


def centered(params, x, y):
    """½·mean((θ − x)²). x 에 의존하므로 FGSM 이 실제로 샘플을 움직인다."""
    diff = params["theta"] - x
    return (diff * diff).mean() * 0.5


def scalar(value):
    return ParamSet([("theta", Tensor(value))])


def scalar_episode(support, query):
    support, query = np.asarray(support, dtype=float), np.asarray(query, dtype=float)
    return Episode(
        support_x=support.reshape(-1, 1), support_y=np.zeros(len(support), dtype=int),
        query_x=query.reshape(-1, 1), query_y=np.zeros(len(query), dtype=int),
        ways=1, shots=len(support),
    )


def oracle_cfg(**changes):
    base = dict(alpha1=0.1, alpha2=0.1, beta1=0.1, beta2=0.1, inner_steps_train=1,
                attack=AttackConfig(epsilon=0.0, value_range=(-100, 100), clip=False))
    base.update(changes)
    return MetaConfig(**base)


DUMMY = (np.zeros((1, 1)), np.zeros(1, dtype=int))


def test_inner_adapt_quadratic_closed_form():
    one = inner_adapt(SCALAR_SPEC, scalar(1.0), DUMMY, 0.1, 1, loss_fn=quadratic)
    two = inner_adapt(SCALAR_SPEC, scalar(1.0), DUMMY, 0.1, 2, loss_fn=quadratic)
    assert one["theta"].item() == pytest.approx(0.8, abs=1e-10)
    assert two["theta"].item() == pytest.approx(0.64, abs=1e-10)


def test_inner_adapt_zero_step_and_input_untouched(tiny_mlp, rng):
    spec, params = tiny_mlp
    data = (rng.normal(size=(6, 6)), np.array([0, 1, 2, 0, 1, 2]))
    same = inner_adapt(spec, params, data, 0.0, 3)
    assert same.equals(params)
    before = {n: v.copy() for n, v in params.arrays().items()}
    inner_adapt(spec, params, data, 0.5, 2, create_graph=True)
    assert all(params[n].data.tobytes() == before[n].tobytes() for n in before)


def test_inner_adapt_rejects_empty_data(tiny_mlp):
    spec, params = tiny_mlp
    with pytest.raises(ContractError):
        inner_adapt(spec, params, (np.zeros((0, 6)), np.zeros(0, dtype=int)), 0.1, 1)


def test_meta_gradient_closed_forms():
    full, _ = _task_meta_gradient(SCALAR_SPEC, scalar(1.0), DUMMY, DUMMY, 0.1, 1, "full", quadratic)
    first, _ = _task_meta_gradient(SCALAR_SPEC, scalar(1.0), DUMMY, DUMMY, 0.1, 1, "first", quadratic)
    assert float(full["theta"]) == pytest.approx(1.28, abs=1e-10)
    assert float(first["theta"]) == pytest.approx(1.6, abs=1e-10)


def test_maml_quadratic_update():
    tasks = [scalar_episode([0.0], [0.0])]
    updated = maml_episode_update(SCALAR_SPEC, scalar(1.0), tasks, oracle_cfg(), loss_fn=quadratic)
    assert updated["theta"].item() == pytest.approx(0.872, abs=1e-10)

    frozen = maml_episode_update(SCALAR_SPEC, scalar(1.0), tasks, oracle_cfg(beta1=0.0), loss_fn=quadratic)
    assert frozen["theta"].item() == 1.0


def test_adml_quadratic_update_uses_start_theta_for_both_gradients():
    tasks = [scalar_episode([0.0], [0.0])]
    updated = adml_episode_update(SCALAR_SPEC, scalar(1.0), tasks, oracle_cfg(), loss_fn=quadratic)
    assert updated["theta"].item() == pytest.approx(0.744, abs=1e-10)

    first_order = adml_episode_update(
        SCALAR_SPEC, scalar(1.0), tasks, oracle_cfg(order="first"), loss_fn=quadratic
    )
    assert first_order["theta"].item() == pytest.approx(1 - 0.16 - 0.16, abs=1e-10)


def test_adml_second_gradient_at_updated_theta():
    tasks = [scalar_episode([0.0], [0.0])]
    updated = adml_episode_update(
        SCALAR_SPEC, scalar(1.0), tasks, oracle_cfg(second_grad_at="updated"), loss_fn=quadratic
    )
    after_first = 1 - 0.1 * 1.28
    assert updated["theta"].item() == pytest.approx(after_first - 0.1 * 1.28 * after_first, abs=1e-10)


def test_mamlad_matches_two_population_oracle():
    theta0, alpha, beta, eps = 0.5, 0.1, 0.1, 0.25
    support, query = [1.0, 2.0], [0.0, 3.0]
    cfg = oracle_cfg(attack=AttackConfig(epsilon=eps, value_range=(-100, 100), clip=False))
    updated = mamlad_episode_update(
        SCALAR_SPEC, scalar(theta0), [scalar_episode(support, query)], cfg, loss_fn=centered
    )

    def attack(xs):
        xs = np.asarray(xs)
        return xs - eps * np.sign(theta0 - xs)

    mixed_support = np.concatenate([support, attack(support)])
    mixed_query = np.concatenate([query, attack(query)])
    adapted = theta0 - alpha * (theta0 - mixed_support.mean())
    meta_grad = (adapted - mixed_query.mean()) * (1 - alpha)
    assert updated["theta"].item() == pytest.approx(theta0 - beta * meta_grad, abs=1e-10)


def test_empty_task_list_is_rejected():
    for update in (maml_episode_update, mamlad_episode_update, adml_episode_update):
        with pytest.raises(ContractError):
            update(SCALAR_SPEC, scalar(1.0), [], oracle_cfg(), loss_fn=quadratic)


@pytest.fixture
def mlp_episode():
    source = synth_blob_source(dim=4, classes=5, samples_per_class=8, seed=1)
    spec = ModelSpec(kind="mlp", ways=3, dim=4, hidden=[5])
    episode = sample_episode(source, 3, 2, 3, np.random.default_rng(0))
    return spec, init_params(spec, 2), episode, source


def test_eps_zero_collapse(mlp_episode):
    spec, theta, episode, source = mlp_episode
    attack = AttackConfig(epsilon=0.0, value_range=source.value_range)
    cfg = MetaConfig(attack=attack, alpha1=0.3, alpha2=0.3, beta1=0.2, beta2=0.2, inner_steps_train=2)

    g1, g2 = adml_meta_gradients(spec, theta, [episode], cfg)
    for name in g1:
        np.testing.assert_allclose(g1[name], g2[name], atol=1e-12, rtol=0)

    maml = maml_episode_update(spec, theta, [episode], cfg)
    adml = adml_episode_update(spec, theta, [episode], cfg.model_copy(update={"beta2": 0.0}))
    mamlad = mamlad_episode_update(spec, theta, [episode], cfg)
    for name in maml.names():
        np.testing.assert_allclose(adml[name].data, maml[name].data, atol=1e-12, rtol=0)
        np.testing.assert_allclose(mamlad[name].data, maml[name].data, atol=1e-12, rtol=0)


def test_meta_gradient_matches_finite_differences(mlp_episode):
    spec, theta, episode, _ = mlp_episode
    support = (episode.support_x, episode.support_y)
    query = (episode.query_x, episode.query_y)
    alpha, steps = 0.4, 2

    def outer(*arrays):
        params = ParamSet(zip(theta.names(), arrays))
        adapted = inner_adapt(spec, params, support, alpha, steps, create_graph=True)
        return loss(spec, adapted, *query)

    analytic, _ = _task_meta_gradient(spec, theta, support, query, alpha, steps, "full", None)
    arrays = [v.data for v in theta.values()]
    for i, name in enumerate(theta.names()):
        assert relative_error(analytic[name], numeric_gradient(outer, arrays, i)) <= 1e-4


def test_first_order_differs_from_full(mlp_episode):
    spec, theta, episode, _ = mlp_episode
    support = (episode.support_x, episode.support_y)
    query = (episode.query_x, episode.query_y)
    full, _ = _task_meta_gradient(spec, theta, support, query, 0.5, 2, "full", None)
    first, _ = _task_meta_gradient(spec, theta, support, query, 0.5, 2, "first", None)
    assert any(not np.allclose(full[n], first[n]) for n in full)


def test_meta_train_zero_episodes_returns_init(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = MetaConfig(episodes=0, attack=AttackConfig(value_range=blobs.value_range))
    result = meta_train(TrainerKind.ADML, spec, blobs, cfg, rng=np.random.default_rng(0), theta=params)
    assert result.equals(params)


def test_meta_train_is_deterministic_and_checkpoints(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = MetaConfig(
        episodes=4, meta_batch=2, shots=1, query_per_class=3, inner_steps_train=1, checkpoint_every=2,
        alpha1=0.1, alpha2=0.1, beta1=0.1, beta2=0.1,
        attack=AttackConfig(epsilon=0.05, value_range=blobs.value_range, clip=False),
    )
    saved = []
    logged = []
    a = meta_train("adml", spec, blobs, cfg, sink=lambda i, p: saved.append((i, p)),
                   rng=np.random.default_rng(5), theta=params, logger=logged.append)
    b = meta_train(TrainerKind.ADML, spec, blobs, cfg, rng=np.random.default_rng(5), theta=params,
                   logger=lambda *args: None)
    assert a.equals(b)
    assert not a.equals(params)
    assert [i for i, _ in saved] == [2, 4]
    assert saved[-1][1].equals(a)
    assert sum(line.startswith("episode=") for line in logged) == 4
    assert "kind=adml" in logged[1]


def test_meta_train_logs_validation(tiny_mlp, blobs):
    spec, params = tiny_mlp
    cfg = MetaConfig(
        episodes=2, meta_batch=1, shots=1, query_per_class=2, inner_steps_train=1, inner_steps_test=1,
        val_every=1, val_tasks=2, attack=AttackConfig(epsilon=0.0, value_range=blobs.value_range),
    )
    logged = []
    meta_train(TrainerKind.MAML, spec, blobs, cfg, rng=np.random.default_rng(1), theta=params,
               val_source=blobs, logger=logged.append)
    assert sum("val_acc=" in line for line in logged) == 2


def test_episode_update_reports_inner_loss(mlp_episode):
    spec, theta, episode, source = mlp_episode
    cfg = MetaConfig(attack=AttackConfig(epsilon=0.0, value_range=source.value_range))
    _, inner_loss = episode_update(TrainerKind.MAML, spec, theta, [episode], cfg)
    assert inner_loss == pytest.approx(np.log(3), abs=0.05)
