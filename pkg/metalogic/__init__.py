# metalogic/__init__.py

from .errors import ContractError, ParameterError, IngestionError, GeometryError
from .param_set import ParamSet
from .models import ModelSpec, init_params, forward, loss, param_shapes, check_params
from .adversarial import AttackConfig, fgsm, fgsm_perturbation, input_gradient
from .tasks import (
    TaskSource, Episode, SplitSpec,
    load_image_source, synth_blob_source, split_classes, sample_episode, sample_batch,
)
from .meta_learner import (
    TrainerKind, MetaConfig, inner_adapt, episode_update,
    maml_episode_update, mamlad_episode_update, adml_episode_update, adml_meta_gradients,
    meta_train, validate,
)
from .evaluator import (
    Scenario, EvalReport, GridCell, scenarios_for, confidence_halfwidth,
    build_scenario_episode, meta_test, scenario_grid, random_control,
    degradation_summary, compare_reports,
)

__all__ = [
    "ContractError", "ParameterError", "IngestionError", "GeometryError",
    "ParamSet",
    "ModelSpec", "init_params", "forward", "loss", "param_shapes", "check_params",
    "AttackConfig", "fgsm", "fgsm_perturbation", "input_gradient",
    "TaskSource", "Episode", "SplitSpec",
    "load_image_source", "synth_blob_source", "split_classes", "sample_episode", "sample_batch",
    "TrainerKind", "MetaConfig", "inner_adapt", "episode_update",
    "maml_episode_update", "mamlad_episode_update", "adml_episode_update", "adml_meta_gradients",
    "meta_train", "validate",
    "Scenario", "EvalReport", "GridCell", "scenarios_for", "confidence_halfwidth",
    "build_scenario_episode", "meta_test", "scenario_grid", "random_control",
    "degradation_summary", "compare_reports",
]
