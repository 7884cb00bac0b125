# metalogic/tasks.py

from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from app.protocol.tensor_records import FormatError, decode_record

from .errors import ContractError, GeometryError, IngestionError

SYNTH_SEPARATION = 1.0
SYNTH_SPREAD = 0.1
SYNTH_DIM = 16


class TaskSource:
    """
    클래스별 샘플 묶음. 로드 후에는 바꾸지 않는다.
    classes: [(class_id, samples[n, *geometry]), ...]
    """

    def __init__(self, classes: list[tuple[str, np.ndarray]], geometry: tuple[int, ...],
                 value_range: tuple[float, float]):
        geometry = tuple(int(n) for n in geometry)
        for class_id, samples in classes:
            if tuple(samples.shape[1:]) != geometry:
                raise GeometryError(f"클래스 {class_id} 의 샘플 shape {samples.shape[1:]} ≠ {geometry}")
            samples.flags.writeable = False
        self.classes = list(classes)
        self.geometry = geometry
        self.value_range = (float(value_range[0]), float(value_range[1]))

    def __len__(self):
        return len(self.classes)

    def class_ids(self) -> list[str]:
        return [class_id for class_id, _ in self.classes]

    def min_samples(self) -> int:
        return min((samples.shape[0] for _, samples in self.classes), default=0)

    def subset(self, indices) -> "TaskSource":
        return TaskSource([self.classes[i] for i in indices], self.geometry, self.value_range)

    def __repr__(self):
        return f"TaskSource(classes={len(self)}, geometry={self.geometry}, min_samples={self.min_samples()})"


class Episode:
    """
    few-shot task 하나. support 로 적응하고 query 로 평가한다.
    라벨은 0..ways−1 로 다시 매겨져 있고 support/query 에서 같은 의미를 가진다.
    """

    def __init__(self, support_x: np.ndarray, support_y: np.ndarray,
                 query_x: np.ndarray, query_y: np.ndarray,
                 ways: int, shots: int, class_ids: list[str] | None = None,
                 support_index: np.ndarray | None = None, query_index: np.ndarray | None = None,
                 seed: int = 0):
        self.support_x = support_x
        self.support_y = support_y
        self.query_x = query_x
        self.query_y = query_y
        self.ways = ways
        self.shots = shots
        self.class_ids = class_ids or []
        # 원본 클래스 안에서의 샘플 위치 [ways, shots] / [ways, query_per_class]
        self.support_index = support_index
        self.query_index = query_index
        # mixed40 같은 episode 단위 결정에 쓰는 seed
        self.seed = seed

    @property
    def query_per_class(self) -> int:
        return len(self.query_y) // self.ways

    def replace(self, **changes) -> "Episode":
        fields = dict(
            support_x=self.support_x, support_y=self.support_y,
            query_x=self.query_x, query_y=self.query_y,
            ways=self.ways, shots=self.shots, class_ids=self.class_ids,
            support_index=self.support_index, query_index=self.query_index, seed=self.seed,
        )
        fields.update(changes)
        return Episode(**fields)

    def __repr__(self):
        return f"Episode({self.ways}-way {self.shots}-shot, support={len(self.support_y)}, query={len(self.query_y)})"


class SplitSpec(BaseModel):
    train: int = Field(64, ge=0)
    val: int = Field(16, ge=0)
    test: int = Field(20, ge=0)
    seed: int = 0


# ================================================================
# ✅ 데이터셋 로드
# ================================================================

def _read_sample(path: Path) -> np.ndarray:
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise IngestionError(f"샘플 파일을 읽을 수 없음: {path} ({e})") from None
    try:
        _, array, end = decode_record(buf)
    except FormatError as e:
        raise IngestionError(f"샘플 파일 형식 오류: {path} ({e})") from None
    if end != len(buf):
        raise IngestionError(f"샘플 파일에 레코드가 두 개 이상 있음: {path}")
    return array


def load_image_source(root_path: str | Path, manifest: str | Path,
                      value_range: tuple[float, float] = (0.0, 255.0)) -> TaskSource:
    """
    manifest: UTF-8, 한 줄에 샘플 하나 `class_name<TAB>relative_path`.
    각 파일은 raw-tensor 레코드 하나.
    """
    root = Path(root_path)
    manifest = Path(manifest)
    # 상대 경로는 항상 데이터셋 root 기준
    if not manifest.is_absolute():
        manifest = root / manifest
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IngestionError(f"manifest 를 읽을 수 없음: {manifest} ({e})") from None

    by_class: dict[str, list[np.ndarray]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IngestionError(f"{manifest}:{lineno} 형식 오류 (class<TAB>path 기대): {line!r}")
        class_name, rel = parts[0], parts[1].strip()
        by_class.setdefault(class_name, []).append(_read_sample(root / rel))

    if not by_class:
        raise IngestionError(f"manifest 가 비어 있음: {manifest}")

    geometry = None
    classes = []
    for class_name, samples in by_class.items():
        for sample in samples:
            if geometry is None:
                geometry = sample.shape
            if sample.shape != geometry:
                raise GeometryError(f"클래스 {class_name} 에 shape {sample.shape} 샘플 (기대값 {geometry})")
        classes.append((class_name, np.stack(samples)))
    return TaskSource(classes, geometry, value_range)


def synth_blob_source(dim: int = SYNTH_DIM, classes: int = 25, samples_per_class: int = 40,
                      spread: float = SYNTH_SPREAD, seed: int = 0,
                      separation: float = SYNTH_SEPARATION) -> TaskSource:
    """클래스마다 임의 단위벡터 × separation 중심의 등방 가우시안 덩어리."""
    if dim < 2:
        raise ContractError(f"dim 은 2 이상이어야 함: {dim}")
    if classes < 5:
        raise ContractError(f"classes 는 5 이상이어야 함: {classes}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, dim))
    centers = centers / np.linalg.norm(centers, axis=1, keepdims=True) * separation
    noise = rng.normal(size=(classes, samples_per_class, dim))
    samples = centers[:, None, :] + spread * noise
    lo, hi = float(samples.min()), float(samples.max())
    if lo == hi:
        hi = lo + 1.0
    return TaskSource(
        [(f"blob{c:03d}", samples[c]) for c in range(classes)],
        (dim,),
        (lo, hi),
    )


# ================================================================
# ✅ class split / episode 샘플링
# ================================================================

def split_classes(source: TaskSource, spec: SplitSpec) -> tuple[TaskSource, TaskSource, TaskSource]:
    if spec.train + spec.val + spec.test != len(source):
        raise ContractError(
            f"split 합계 {spec.train}+{spec.val}+{spec.test} ≠ 클래스 수 {len(source)}"
        )
    order = np.random.default_rng(spec.seed).permutation(len(source))
    train = order[:spec.train]
    val = order[spec.train:spec.train + spec.val]
    test = order[spec.train + spec.val:]
    return source.subset(train), source.subset(val), source.subset(test)


def sample_episode(source: TaskSource, ways: int, shots: int, query_per_class: int,
                   rng: np.random.Generator) -> Episode:
    if ways < 1 or shots < 1 or query_per_class < 0:
        raise ContractError(f"ways/shots/query 값 오류: {ways}/{shots}/{query_per_class}")
    if len(source) < ways:
        raise ContractError(f"클래스 {len(source)}개로 {ways}-way episode 를 만들 수 없음")
    need = shots + query_per_class
    if source.min_samples() < need:
        raise ContractError(f"클래스당 샘플 {source.min_samples()}개 < 필요 {need}개")

    chosen = rng.choice(len(source), size=ways, replace=False)
    support_x, query_x, support_idx, query_idx, class_ids = [], [], [], [], []
    for c in chosen:
        class_id, samples = source.classes[int(c)]
        picked = rng.choice(samples.shape[0], size=need, replace=False)
        support_idx.append(picked[:shots])
        query_idx.append(picked[shots:])
        support_x.append(samples[picked[:shots]])
        query_x.append(samples[picked[shots:]])
        class_ids.append(class_id)

    return Episode(
        support_x=np.concatenate(support_x),
        support_y=np.repeat(np.arange(ways), shots),
        query_x=np.concatenate(query_x),
        query_y=np.repeat(np.arange(ways), query_per_class),
        ways=ways,
        shots=shots,
        class_ids=class_ids,
        support_index=np.stack(support_idx),
        query_index=np.stack(query_idx),
        seed=int(rng.integers(2**31)),
    )


def sample_batch(source: TaskSource, count: int, ways: int, shots: int, query_per_class: int,
                 rng: np.random.Generator) -> list[Episode]:
    return [sample_episode(source, ways, shots, query_per_class, rng) for _ in range(count)]
