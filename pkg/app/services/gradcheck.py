# app/services/gradcheck.py
#
# autodiff / meta-gradient oracle 모음. 각 check 는 최대 상대오차를 돌려준다.

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from gradlogic import Tensor, batch_norm, conv2d, cross_entropy, grad, linear, log_softmax, max_pool2x2
from gradlogic import ops
from metalogic.adversarial import AttackConfig
from metalogic.meta_learner import (
    MetaConfig, _task_meta_gradient, adml_meta_gradients, inner_adapt,
    maml_episode_update, mamlad_episode_update,
)
from metalogic.models import ModelSpec, init_params
from metalogic.param_set import ParamSet
from metalogic.tasks import sample_episode, synth_blob_source
from servers.logger_utils import make_logger

FD_STEP = 1e-5
FD_TOL = 1e-4
EXACT_TOL = 1e-10
COLLAPSE_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error <= self.tolerance


def relative_error(analytic, reference) -> float:
    analytic, reference = np.asarray(analytic, dtype=np.float64), np.asarray(reference, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(reference))) if reference.size else 1.0)
    return float(np.max(np.abs(analytic - reference))) / scale if reference.size else 0.0


def numeric_gradient(fn: Callable[..., Tensor], inputs: list[np.ndarray], index: int,
                     h: float = FD_STEP) -> np.ndarray:
    """inputs[index] 에 대한 중앙 차분."""
    base = [np.array(a, dtype=np.float64) for a in inputs]
    out = np.zeros_like(base[index])
    flat = base[index].reshape(-1)
    grad_flat = out.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        plus = fn(*[Tensor(a) for a in base]).item()
        flat[i] = saved - h
        minus = fn(*[Tensor(a) for a in base]).item()
        flat[i] = saved
        grad_flat[i] = (plus - minus) / (2 * h)
    return out


def finite_difference_check(name: str, fn: Callable[..., Tensor], inputs: list[np.ndarray]) -> CheckResult:
    leaves = [Tensor(a, requires_grad=True) for a in inputs]
    analytic = grad(fn(*leaves), leaves)
    worst = max(
        relative_error(analytic[i].data, numeric_gradient(fn, inputs, i)) for i in range(len(inputs))
    )
    return CheckResult(name, worst, FD_TOL)


def _weighted(op_fn: Callable[..., Tensor], weights: np.ndarray) -> Callable[..., Tensor]:
    """op 출력을 고정 가중치로 가중합해 스칼라로 만든다."""
    return lambda *args: ops.sum(ops.mul(op_fn(*args), Tensor(weights)))


# ================================================================
# ✅ op 별 finite-difference oracle
# ================================================================

def op_cases(rng: np.random.Generator) -> list[tuple[str, Callable, list[np.ndarray]]]:
    def r(*shape, lo=-1.0, hi=1.0):
        return rng.uniform(lo, hi, size=shape)

    def away_from_zero(*shape):
        # relu / max 의 꺾이는 지점에서 차분이 흔들리지 않게
        values = r(*shape)
        return np.where(np.abs(values) < 0.1, values + np.sign(values + 1e-12) * 0.2, values)

    cases = [
        ("add", lambda a, b: ops.add(a, b), [r(3, 4), r(4)]),
        ("sub", lambda a, b: ops.sub(a, b), [r(3, 4), r(3, 1)]),
        ("mul", lambda a, b: ops.mul(a, b), [r(3, 4), r(1, 4)]),
        ("div", lambda a, b: ops.div(a, b), [r(3, 4), r(3, 4, lo=0.5, hi=2.0)]),
        ("power", lambda a: ops.power(a, 3.0), [r(2, 5)]),
        ("exp", lambda a: ops.exp(a), [r(2, 5)]),
        ("log", lambda a: ops.log(a), [r(2, 5, lo=0.5, hi=2.0)]),
        ("relu", lambda a: ops.relu(a), [away_from_zero(3, 4)]),
        ("sum", lambda a: ops.sum(a, axis=1, keepdims=True), [r(3, 4)]),
        ("mean", lambda a: ops.mean(a, axis=0), [r(3, 4)]),
        ("reshape", lambda a: ops.reshape(a, (4, 3)), [r(3, 4)]),
        ("transpose", lambda a: ops.transpose(a, (2, 0, 1)), [r(2, 3, 4)]),
        ("matmul", lambda a, b: ops.matmul(a, b), [r(3, 4), r(4, 2)]),
        ("getitem", lambda a: a[1:, ::2], [r(3, 4)]),
        ("pad2d", lambda a: ops.pad2d(a, 1), [r(1, 2, 3, 3)]),
        ("concat", lambda a, b: ops.concat([a, b], axis=1), [r(2, 3), r(2, 2)]),
        ("max", lambda a: ops.max(a, axis=1), [np.arange(12.0).reshape(3, 4) * 0.1 + r(3, 4) * 0.01]),
        ("conv2d", lambda x, w, b: conv2d(x, w, b), [r(2, 2, 4, 4), r(3, 2, 3, 3), r(3)]),
        ("batch_norm", lambda x, g, b: batch_norm(x, g, b), [r(4, 2, 3, 3), r(2, lo=0.5, hi=1.5), r(2)]),
        ("batch_norm_2d", lambda x, g, b: batch_norm(x, g, b), [r(5, 3), r(3, lo=0.5, hi=1.5), r(3)]),
        ("max_pool2x2", lambda x: max_pool2x2(x), [rng.permutation(50).reshape(1, 2, 5, 5) * 0.1]),
        ("linear", lambda x, w, b: linear(x, w, b), [r(4, 3), r(3, 2), r(2)]),
        ("log_softmax", lambda x: log_softmax(x), [r(3, 5, lo=-3, hi=3)]),
    ]
    weighted = []
    for name, fn, inputs in cases:
        out_shape = fn(*[Tensor(a) for a in inputs]).shape
        weighted.append((name, _weighted(fn, rng.normal(size=out_shape)), inputs))

    labels = np.array([0, 2, 1, 4])
    weighted.append(("cross_entropy", lambda z: cross_entropy(z, labels), [r(4, 5, lo=-3, hi=3)]))
    return weighted


# ================================================================
# ✅ 2차 미분 / meta-gradient oracle
# ================================================================

def _quadratic_loss(a: float = 2.0):
    """L(θ) = ½·a·θ² (데이터 무관)."""
    return lambda params, x, y: ops.mul(ops.mul(params["theta"], params["theta"]), 0.5 * a).sum()


def _scalar_params(value: float) -> ParamSet:
    return ParamSet([("theta", Tensor(np.array(value)))])


def second_order_check() -> CheckResult:
    x = Tensor(np.array(1.7), requires_grad=True)
    (dx,) = grad(ops.power(x, 3.0), [x], create_graph=True)
    (ddx,) = grad(dx, [x])
    return CheckResult("second_order_x3", abs(ddx.item() - 6 * 1.7), EXACT_TOL)


def quadratic_checks() -> list[CheckResult]:
    spec = ModelSpec(kind="mlp", ways=2, dim=1, hidden=[])
    loss_fn = _quadratic_loss()
    dummy = (np.zeros((1, 1)), np.zeros(1, dtype=int))
    theta = _scalar_params(1.0)

    adapted = inner_adapt(spec, theta, dummy, alpha=0.1, steps=1, loss_fn=loss_fn)
    full, _ = _task_meta_gradient(spec, theta, dummy, dummy, 0.1, 1, "full", loss_fn)
    first, _ = _task_meta_gradient(spec, theta, dummy, dummy, 0.1, 1, "first", loss_fn)
    return [
        CheckResult("inner_adapt_quadratic", abs(adapted["theta"].item() - 0.8), EXACT_TOL),
        CheckResult("meta_gradient_full", abs(float(full["theta"]) - 1.28), EXACT_TOL),
        CheckResult("meta_gradient_first_order", abs(float(first["theta"]) - 1.6), EXACT_TOL),
    ]


def collapse_checks(seed: int = 0) -> list[CheckResult]:
    """ε = 0 이면 ADML 의 두 meta-gradient 가 같고 MAML-AD update 가 MAML 과 같다."""
    source = synth_blob_source(dim=4, classes=5, samples_per_class=6, seed=seed)
    spec = ModelSpec(kind="mlp", ways=3, dim=4, hidden=[5])
    theta = init_params(spec, seed)
    episode = sample_episode(source, 3, 2, 2, np.random.default_rng(seed))
    cfg = MetaConfig(attack=AttackConfig(epsilon=0.0, value_range=source.value_range), inner_steps_train=2)

    g1, g2 = adml_meta_gradients(spec, theta, [episode], cfg)
    adml_gap = max(relative_error(g1[name], g2[name]) for name in g1)
    maml = maml_episode_update(spec, theta, [episode], cfg)
    mamlad = mamlad_episode_update(spec, theta, [episode], cfg)
    mamlad_gap = max(relative_error(mamlad[name].data, maml[name].data) for name in maml.names())
    return [
        CheckResult("adml_eps0_gradients_agree", adml_gap, COLLAPSE_TOL),
        CheckResult("mamlad_eps0_equals_maml", mamlad_gap, COLLAPSE_TOL),
    ]


def run_gradcheck(seed: int = 0, logger=None) -> list[CheckResult]:
    log = logger or make_logger("gradcheck", 0)
    rng = np.random.default_rng(seed)
    results = [finite_difference_check(name, fn, inputs) for name, fn, inputs in op_cases(rng)]
    results.append(second_order_check())
    results += quadratic_checks()
    results += collapse_checks(seed)
    for result in results:
        status = "ok" if result.passed else "FAIL"
        log(f"check={result.name} max_rel_err={result.max_rel_error:.3e} tol={result.tolerance:.0e} {status}")
    return results


def first_failure(results: list[CheckResult]) -> CheckResult | None:
    return next((r for r in results if not r.passed), None)
