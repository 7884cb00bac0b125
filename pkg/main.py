# main.py

import json
import sys
import traceback
from pathlib import Path

import click
import numpy as np
from dotenv import load_dotenv

from app.protocol.config_models import ConfigError, RunConfig, load_config, parse_config
from app.protocol.tensor_records import FormatError
from app.services.adv_export import export_adversarial
from app.services.checkpoint_store import CheckpointSink, load_checkpoint, save_checkpoint
from app.services.gradcheck import first_failure, run_gradcheck
from app.services.result_writer import (
    grid_from_payload, read_report, write_comparison, write_results, write_tables,
)
from app.services.run_loader import prepare_run
from metalogic.errors import GeometryError, IngestionError, ParameterError
from metalogic.evaluator import compare_reports, random_control, scenario_grid
from metalogic.meta_learner import meta_train
from metalogic.models import check_params, init_params
from servers.logger_utils import Tee, log_path, make_logger

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

DATA_ERRORS = (FormatError, IngestionError, GeometryError, ParameterError)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA
    return EXIT_RUNTIME


def run_command(command: str, out_dir, body):
    """stdout 을 `<out>/<command>_<timestamp>.log` 에도 남기고, 예외를 exit code 로 바꾼다."""
    log = make_logger("cli", 0)
    terminal = sys.stdout
    tee = None
    if out_dir is not None:
        tee = Tee(log_path(out_dir, command), terminal)
        sys.stdout = tee
    try:
        body(log)
        code = EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        log(f"❌ {command} 실패 (exit {code}): {type(e).__name__}: {e}")
        if code == EXIT_RUNTIME:
            log(traceback.format_exc())
    finally:
        if tee is not None:
            sys.stdout = terminal
            tee.close()
    if code:
        raise SystemExit(code)


def _config_echo(cfg: RunConfig) -> str:
    # 출력 경로는 결과에 영향이 없으므로 echo 에서 뺀다 (같은 설정 → 같은 bytes)
    return cfg.model_dump_json(exclude={"out"})


def _resolve_config(config_path, overrides: dict, checkpoint=None, checkpoint_path=None) -> RunConfig:
    if config_path:
        return load_config(config_path, overrides)
    if checkpoint is not None and checkpoint.config_echo:
        try:
            values = json.loads(checkpoint.config_echo)
        except json.JSONDecodeError as e:
            raise FormatError(f"checkpoint 의 config echo 가 JSON 이 아님: {e}") from None
        # echo 에는 out 이 없다 → checkpoint 옆에 쓴다
        if checkpoint_path is not None:
            values.setdefault("out", str(Path(checkpoint_path).parent))
        return parse_config(values, overrides)
    raise ConfigError("--config 가 필요함 (checkpoint 에 설정 echo 가 없음)")


def _peek_out(config_path, out, checkpoint_path=None):
    """로그 파일 위치. 설정을 읽기 전이라 실패해도 넘어간다."""
    if out:
        return out
    if config_path:
        try:
            return load_config(config_path).out
        except Exception:
            return None
    if checkpoint_path is not None:
        return str(Path(checkpoint_path).parent)
    return None


@click.group()
def cli():
    """AdvMetaArena: adversarial meta-learning (ADML / MAML / MAML-AD)."""
    load_dotenv()


config_option = click.option("--config", "config_path", type=click.Path(), default=None, help="key = value 설정 파일")
seed_option = click.option("--seed", type=int, default=None)
out_option = click.option("--out", type=click.Path(), default=None)
eps_option = click.option("--eps", default=None, help="ε (meta-test 는 쉼표 목록)")
shots_option = click.option("--shots", type=int, default=None)
ways_option = click.option("--ways", type=int, default=None)
tasks_option = click.option(
    "--tasks", type=int, default=None,
    help="meta-test task 수 (meta-train 에서는 checkpoint 설정 echo 에 기록만 된다)",
)
order_option = click.option("--order", type=click.Choice(["full", "first"]), default=None)


# ================================================================
# ✅ meta-train
# ================================================================

@cli.command("meta-train")
@config_option
@seed_option
@out_option
@eps_option
@shots_option
@ways_option
@tasks_option
@order_option
@click.option("--kind", type=click.Choice(["maml", "maml_ad", "adml"]), default=None)
@click.option("--episodes", type=int, default=None)
def meta_train_cmd(config_path, seed, out, eps, shots, ways, tasks, order, kind, episodes):
    """meta-training → <out>/checkpoints/*.ckpt, <out>/final.ckpt"""

    def body(log):
        if not config_path:
            raise ConfigError("meta-train 은 --config 가 필요함")
        cfg = load_config(config_path, dict(
            seed=seed, out=out, eps_train=eps, shots=shots, ways=ways, test_tasks=tasks,
            order=order, kind=kind, episodes=episodes,
        ))
        data = prepare_run(cfg)
        echo = _config_echo(cfg)
        log(f"meta-train kind={cfg.kind.value} source={cfg.source} model={data.spec.kind} "
            f"train={len(data.train)} val={len(data.val)} test={len(data.test)} out={cfg.out}")

        theta = init_params(data.spec, cfg.seed)
        sink = CheckpointSink(cfg.out, echo, logger=log)
        val_source = data.val if len(data.val) >= data.spec.ways and cfg.val_every else None
        theta = meta_train(
            cfg.kind, data.spec, data.train, data.meta, sink,
            np.random.default_rng(cfg.seed), theta=theta, val_source=val_source,
        )
        final = save_checkpoint(Path(cfg.out) / "final.ckpt", theta, cfg.episodes, echo)
        log(f"checkpoint episode={cfg.episodes} path={final}")

    run_command("meta_train", _peek_out(config_path, out), body)


# ================================================================
# ✅ meta-test
# ================================================================

@cli.command("meta-test")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@config_option
@seed_option
@out_option
@eps_option
@shots_option
@ways_option
@tasks_option
@click.option("--control", is_flag=True, help="초기화 θ 로 같은 grid 를 돌려 <out>/control 에 쓴다")
def meta_test_cmd(checkpoint_path, config_path, seed, out, eps, shots, ways, tasks, control):
    """held-out class 로 시나리오 grid 평가 → grid.csv, curves.csv, report.json"""

    def body(log):
        checkpoint = load_checkpoint(checkpoint_path)
        cfg = _resolve_config(config_path, dict(
            seed=seed, out=out, eps_test=eps, shots=shots, ways=ways, test_tasks=tasks,
        ), checkpoint, checkpoint_path)
        data = prepare_run(cfg)
        theta = checkpoint.params.astype(data.spec.dtype)
        check_params(data.spec, theta)
        log(f"meta-test checkpoint={checkpoint_path} episode={checkpoint.episode} "
            f"shots={cfg.shots} eps={','.join(f'{e:g}' for e in cfg.eps_test)} tasks={cfg.test_tasks}")

        meta = {
            "kind": cfg.kind.value, "episode": checkpoint.episode, "ways": data.spec.ways,
            "shots": cfg.shots, "tasks": cfg.test_tasks, "seed": cfg.seed,
        }
        grid = scenario_grid(
            data.spec, theta, data.test, cfg.shots, cfg.eps_test, data.meta, cfg.test_tasks,
            np.random.default_rng(cfg.seed), logger=make_logger("meta_test", 0),
        )
        for path in write_results(cfg.out, grid, meta):
            log(f"wrote {path}")

        if control:
            control_grid = random_control(
                data.spec, data.test, cfg.shots, cfg.eps_test, data.meta, cfg.test_tasks,
                np.random.default_rng(cfg.seed), seed=cfg.seed + 1, logger=make_logger("meta_test", 1),
            )
            for path in write_results(Path(cfg.out) / "control", control_grid, {**meta, "control": True}):
                log(f"wrote {path}")

    run_command("meta_test", _peek_out(config_path, out, checkpoint_path), body)


# ================================================================
# ✅ gen-adv
# ================================================================

@cli.command("gen-adv")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@config_option
@seed_option
@out_option
@eps_option
@shots_option
@ways_option
@tasks_option
def gen_adv_cmd(checkpoint_path, config_path, seed, out, eps, shots, ways, tasks):
    """FGSM 사본을 raw-tensor 파일 + manifest 로 내보낸다"""

    def body(log):
        checkpoint = load_checkpoint(checkpoint_path)
        cfg = _resolve_config(config_path, dict(
            seed=seed, out=out, eps_train=eps, shots=shots, ways=ways, test_tasks=tasks,
        ), checkpoint, checkpoint_path)
        data = prepare_run(cfg)
        theta = checkpoint.params.astype(data.spec.dtype)
        check_params(data.spec, theta)
        manifest = export_adversarial(
            Path(cfg.out) / "adversarial", data.spec, theta, data.test, cfg.shots, cfg.query_per_class,
            data.meta.attack, cfg.test_tasks, np.random.default_rng(cfg.seed), logger=log,
        )
        log(f"wrote {manifest}")

    run_command("gen_adv", _peek_out(config_path, out, checkpoint_path), body)


# ================================================================
# ✅ gradcheck / report
# ================================================================

@cli.command("gradcheck")
@seed_option
@out_option
def gradcheck_cmd(seed, out):
    """finite-difference / closed-form oracle 검사. 하나라도 틀리면 exit 1"""

    def body(log):
        results = run_gradcheck(seed or 0, logger=make_logger("gradcheck", 0))
        failed = first_failure(results)
        if failed is not None:
            raise RuntimeError(
                f"gradcheck 실패: {failed.name} (max_rel_err={failed.max_rel_error:.3e} > {failed.tolerance:.0e})"
            )
        log(f"gradcheck 통과 checks={len(results)}")

    run_command("gradcheck", out, body)


@cli.command("report")
@click.argument("report_path", required=False, type=click.Path())
@out_option
@click.option("--compare", multiple=True, help="method=path/to/report.json (여러 번)")
def report_cmd(report_path, out, compare):
    """report.json → csv 다시 쓰기, 또는 --compare 로 comparison.csv"""

    def body(log):
        if compare:
            named = {}
            for item in compare:
                method, sep, path = item.partition("=")
                if not sep or not method or not path:
                    raise ConfigError(f"--compare 는 method=path 형식: {item!r}")
                named[method] = grid_from_payload(read_report(path))
            target = Path(out or ".") / "comparison.csv"
            write_comparison(target, compare_reports(named))
            log(f"wrote {target}")
            return
        if not report_path:
            raise ConfigError("report.json 경로 또는 --compare 가 필요함")
        grid = grid_from_payload(read_report(report_path))
        for path in write_tables(Path(out) if out else Path(report_path).parent, grid):
            log(f"wrote {path}")

    run_command("report", out, body)


if __name__ == "__main__":
    cli()
