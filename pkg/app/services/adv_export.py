# app/services/adv_export.py

from pathlib import Path

import numpy as np

from app.protocol.tensor_records import atomic_write_bytes, encode_record
from metalogic.adversarial import AttackConfig, fgsm
from metalogic.models import ModelSpec
from metalogic.param_set import ParamSet
from metalogic.tasks import TaskSource, sample_batch

MANIFEST_NAME = "manifest.tsv"


def export_adversarial(out_dir: str | Path, spec: ModelSpec, params: ParamSet, source: TaskSource,
                       shots: int, query_per_class: int, attack: AttackConfig, num_tasks: int,
                       rng: np.random.Generator, logger=None) -> Path:
    """
    episode 를 뽑아 support/query 의 FGSM 사본을 샘플 파일 하나씩으로 쓴다.
    manifest 는 load_image_source 가 그대로 읽을 수 있는 `class<TAB>path` 형식.
    """
    out = Path(out_dir)
    lines = []
    episodes = sample_batch(source, num_tasks, spec.ways, shots, query_per_class, rng)
    for index, episode in enumerate(episodes):
        parts = {
            "support": (fgsm(spec, params, episode.support_x, episode.support_y, attack), episode.support_y),
            "query": (fgsm(spec, params, episode.query_x, episode.query_y, attack), episode.query_y),
        }
        for part, (xs, ys) in parts.items():
            for i, (x, y) in enumerate(zip(xs, ys)):
                class_id = episode.class_ids[int(y)]
                rel = Path("samples") / class_id / f"task{index:05d}_{part}_{i:03d}.bin"
                atomic_write_bytes(out / rel, encode_record(f"{class_id}/{rel.stem}", np.asarray(x)))
                lines.append(f"{class_id}\t{rel.as_posix()}")
        if logger:
            logger(f"task={index} support={len(episode.support_y)} query={len(episode.query_y)} "
                   f"eps={attack.epsilon:g}")

    manifest = out / MANIFEST_NAME
    atomic_write_bytes(manifest, ("\n".join(lines) + "\n").encode("utf-8"))
    return manifest
