# app/protocol/tensor_records.py
#
# 체크포인트와 데이터셋 raw-tensor 파일이 공유하는 텐서 레코드 codec.
#   u16 name length | UTF-8 name | u8 dtype (0=f32, 1=f64) | u8 rank | rank × u32 dims | little-endian payload

import os
import struct
from pathlib import Path

import numpy as np

NAME_LEN = struct.Struct("<H")
DTYPE_RANK = struct.Struct("<BB")
DIM = struct.Struct("<I")

DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class FormatError(ValueError):
    """바이너리 레코드 / 체크포인트 형식 오류 (magic, version, 잘림 등)"""


def record_size(name: str, array: np.ndarray) -> int:
    raw = name.encode("utf-8")
    return NAME_LEN.size + len(raw) + DTYPE_RANK.size + DIM.size * array.ndim + array.size * array.itemsize


def encode_record(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype not in DTYPE_CODES:
        raise FormatError(f"지원하지 않는 dtype: {array.dtype} ({name})")
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FormatError(f"이름이 너무 김: {name[:32]}...")
    if array.ndim > 0xFF:
        raise FormatError(f"rank 가 너무 큼: {array.ndim}")
    parts = [
        NAME_LEN.pack(len(raw)),
        raw,
        DTYPE_RANK.pack(DTYPE_CODES[array.dtype], array.ndim),
    ]
    parts += [DIM.pack(n) for n in array.shape]
    parts.append(np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    end = offset + size
    if end > len(buf):
        raise FormatError(f"{what} 읽는 중 데이터가 잘림 (offset={offset}, 필요={size}, 남음={len(buf) - offset})")
    return buf[offset:end], end


def decode_record(buf: bytes, offset: int = 0) -> tuple[str, np.ndarray, int]:
    chunk, offset = _take(buf, offset, NAME_LEN.size, "이름 길이")
    (name_len,) = NAME_LEN.unpack(chunk)
    chunk, offset = _take(buf, offset, name_len, "이름")
    try:
        name = chunk.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"레코드 이름이 UTF-8 이 아님: {e}") from None
    chunk, offset = _take(buf, offset, DTYPE_RANK.size, "dtype/rank")
    code, rank = DTYPE_RANK.unpack(chunk)
    if code not in CODE_DTYPES:
        raise FormatError(f"알 수 없는 dtype 코드: {code} ({name})")
    dims = []
    for _ in range(rank):
        chunk, offset = _take(buf, offset, DIM.size, "dims")
        dims.append(DIM.unpack(chunk)[0])
    dtype = CODE_DTYPES[code]
    count = int(np.prod(dims)) if dims else 1
    chunk, offset = _take(buf, offset, count * dtype.itemsize, f"payload ({name})")
    array = np.frombuffer(chunk, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
    return name, array, offset


def read_records(path: str | Path) -> list[tuple[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    records, offset = [], 0
    while offset < len(buf):
        name, array, offset = decode_record(buf, offset)
        records.append((name, array))
    return records


def atomic_write_bytes(path: str | Path, payload: bytes):
    """임시 파일에 쓴 뒤 rename (중간에 죽어도 반쯤 쓴 파일이 남지 않음)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def write_records(path: str | Path, records: list[tuple[str, np.ndarray]]):
    atomic_write_bytes(path, b"".join(encode_record(name, array) for name, array in records))
