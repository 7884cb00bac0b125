# gradlogic/tensor.py

import numpy as np

from .errors import NumericError

PRECISIONS = {
    "single": np.float32,
    "double": np.float64,
    "float32": np.float32,
    "float64": np.float64,
}


def resolve_dtype(precision) -> np.dtype:
    if isinstance(precision, str):
        if precision not in PRECISIONS:
            raise ValueError(f"지원하지 않는 precision: {precision}")
        return np.dtype(PRECISIONS[precision])
    return np.dtype(precision)


def _check_finite(data: np.ndarray, op: str):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op} 결과에 inf/nan 이 포함됨")


class Tensor:
    """
    numpy 배열 하나와 (필요하면) 그 값을 만든 연산 기록을 함께 들고 있는 값.
    그래프 노드 역할을 겸한다: parents 와 vjp 가 있으면 미분 가능한 중간값.
    """

    __slots__ = ("data", "requires_grad", "op", "parents", "vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.array(data, dtype=resolve_dtype(dtype))
        else:
            arr = np.array(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float64)
        _check_finite(arr, "leaf")
        self.data = arr
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.parents = ()
        self.vjp = None

    # ================================================================
    # ✅ 기본 속성
    # ================================================================

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return constant(self.data)

    def is_leaf(self) -> bool:
        return self.vjp is None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    def __len__(self):
        return self.shape[0]

    # ================================================================
    # ✅ 연산자 → ops 위임
    # ================================================================

    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, exponent):
        return ops.power(self, exponent)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, index):
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    @property
    def T(self):
        return ops.transpose(self, None)


def constant(data, dtype=None) -> Tensor:
    """그래프에 연결되지 않은 상수. data 를 복사하지 않는다 (읽기 전용으로 취급)."""
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    out.data = arr
    out.requires_grad = False
    out.op = "const"
    out.parents = ()
    out.vjp = None
    return out


def record(data: np.ndarray, parents: tuple, vjp, op: str) -> Tensor:
    """
    연산 결과를 Tensor 로 감싼다. 입력 중 하나라도 requires_grad 이면
    parents / vjp 를 기록해 backward 가 따라갈 수 있게 한다.

    vjp(g, out, *parents) -> parents 와 같은 길이의 gradient 튜플 (None 허용)
    """
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out.parents = tuple(parents)
        out.vjp = vjp
    else:
        out.parents = ()
        out.vjp = None
    return out


def lift(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return constant(np.asarray(value, dtype=dtype) if dtype is not None else value)


from . import ops  # noqa: E402  (ops 는 Tensor 정의 이후에 import)
