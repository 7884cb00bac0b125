# app/services/checkpoint_store.py
#
# 체크포인트 파일:
#   16-byte header (magic "ADML" | u32 version | u32 episode index | u32 tensor count)
#   tensor record × count (app/protocol/tensor_records)
#   u32 길이 + UTF-8 RunConfig echo (JSON)

import struct
from pathlib import Path

from pydantic import BaseModel, ConfigDict

from app.protocol.tensor_records import FormatError, atomic_write_bytes, decode_record, encode_record
from metalogic.param_set import ParamSet

MAGIC = b"ADML"
VERSION = 1
HEADER = struct.Struct("<4sIII")
ECHO_LEN = struct.Struct("<I")


class Checkpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: int = VERSION
    episode: int = 0
    params: ParamSet
    config_echo: str = ""


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    params = checkpoint.params
    echo = checkpoint.config_echo.encode("utf-8")
    parts = [HEADER.pack(MAGIC, checkpoint.version, checkpoint.episode, len(params))]
    parts += [encode_record(name, value.data) for name, value in params.items()]
    parts += [ECHO_LEN.pack(len(echo)), echo]
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if len(buf) < HEADER.size:
        raise FormatError(f"header 가 잘림 ({len(buf)} bytes)")
    magic, version, episode, count = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"magic 불일치: {magic!r}")
    if version != VERSION:
        raise FormatError(f"지원하지 않는 checkpoint version: {version}")

    offset = HEADER.size
    items = []
    for _ in range(count):
        name, array, offset = decode_record(buf, offset)
        items.append((name, array))

    if offset + ECHO_LEN.size > len(buf):
        raise FormatError("config echo 길이가 잘림")
    (echo_len,) = ECHO_LEN.unpack_from(buf, offset)
    offset += ECHO_LEN.size
    if offset + echo_len > len(buf):
        raise FormatError("config echo 가 잘림")
    if offset + echo_len != len(buf):
        raise FormatError(f"checkpoint 끝에 남는 데이터 {len(buf) - offset - echo_len} bytes")
    try:
        echo = buf[offset:offset + echo_len].decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"config echo 가 UTF-8 이 아님: {e}") from None

    return Checkpoint(
        version=version,
        episode=episode,
        params=ParamSet.from_arrays(dict(items)),
        config_echo=echo,
    )


def save_checkpoint(path: str | Path, params: ParamSet, episode: int = 0, config_echo: str = "") -> Path:
    path = Path(path)
    checkpoint = Checkpoint(episode=episode, params=params.detach(), config_echo=config_echo)
    atomic_write_bytes(path, encode_checkpoint(checkpoint))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"checkpoint 를 읽을 수 없음: {path} ({e})") from None
    return decode_checkpoint(buf)


class CheckpointSink:
    """meta_train 의 sink. `<out>/checkpoints/episode_<i>.ckpt` 로 저장하고 로그를 남긴다."""

    def __init__(self, out_dir: str | Path, config_echo: str = "", logger=None):
        self.dir = Path(out_dir) / "checkpoints"
        self.config_echo = config_echo
        self.logger = logger
        self.saved: list[Path] = []

    def path_for(self, episode: int) -> Path:
        return self.dir / f"episode_{episode:06d}.ckpt"

    def __call__(self, episode: int, params: ParamSet):
        path = save_checkpoint(self.path_for(episode), params, episode, self.config_echo)
        self.saved.append(path)
        if self.logger:
            self.logger(f"checkpoint episode={episode} path={path}")
