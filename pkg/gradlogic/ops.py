# gradlogic/ops.py
#
# 미분 가능한 기본 연산들. 모든 vjp 는 다시 이 파일의 연산으로만 작성되어 있으므로
# create_graph=True 로 backward 하면 gradient 자체가 또 미분 가능한 그래프가 된다.

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, constant, lift, record


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, lift(b, a)
    b = lift(b)
    return lift(a, b), b


def _keepdims_shape(shape: tuple, axis) -> tuple:
    if axis is None:
        return tuple(1 for _ in shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    return tuple(1 if i in axes else n for i, n in enumerate(shape))


# ================================================================
# ✅ broadcasting 보조 (sum_to ↔ broadcast_to 는 서로의 vjp)
# ================================================================

def sum_to(x: Tensor, shape: tuple) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True).reshape(shape)
    return record(data, (x,), _sum_to_vjp, "sum_to")


def _sum_to_vjp(g, out, x):
    return (broadcast_to(g, x.shape),)


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = np.array(np.broadcast_to(x.data, shape))
    return record(data, (x,), _broadcast_to_vjp, "broadcast_to")


def _broadcast_to_vjp(g, out, x):
    return (sum_to(g, x.shape),)


# ================================================================
# ✅ elementwise
# ================================================================

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return record(a.data + b.data, (a, b), _add_vjp, "add")


def _add_vjp(g, out, a, b):
    return sum_to(g, a.shape), sum_to(g, b.shape)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return record(a.data - b.data, (a, b), _sub_vjp, "sub")


def _sub_vjp(g, out, a, b):
    return sum_to(g, a.shape), sum_to(neg(g), b.shape)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return record(a.data * b.data, (a, b), _mul_vjp, "mul")


def _mul_vjp(g, out, a, b):
    return sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    return record(a.data / b.data, (a, b), _div_vjp, "div")


def _div_vjp(g, out, a, b):
    ga = div(g, b)
    gb = neg(mul(ga, div(a, b)))
    return sum_to(ga, a.shape), sum_to(gb, b.shape)


def neg(a: Tensor) -> Tensor:
    return record(-a.data, (a,), _neg_vjp, "neg")


def _neg_vjp(g, out, a):
    return (neg(g),)


def power(a: Tensor, exponent: float) -> Tensor:
    if isinstance(exponent, Tensor):
        raise DimensionError("power 의 지수는 python 스칼라만 허용")
    exponent = float(exponent)
    return record(a.data ** exponent, (a,), _make_power_vjp(exponent), f"pow{exponent:g}")


def _make_power_vjp(exponent: float):
    def _power_vjp(g, out, a):
        if exponent == 1.0:
            return (g,)
        return (mul(g, mul(power(a, exponent - 1.0), exponent)),)
    return _power_vjp


def exp(a: Tensor) -> Tensor:
    return record(np.exp(a.data), (a,), _exp_vjp, "exp")


def _exp_vjp(g, out, a):
    return (mul(g, out),)


def log(a: Tensor) -> Tensor:
    return record(np.log(a.data), (a,), _log_vjp, "log")


def _log_vjp(g, out, a):
    return (div(g, a),)


def relu(a: Tensor) -> Tensor:
    return record(np.maximum(a.data, 0), (a,), _relu_vjp, "relu")


def _relu_vjp(g, out, a):
    # x == 0 에서는 subgradient 0
    mask = (a.data > 0).astype(a.dtype)
    return (mul(g, constant(mask)),)


# ================================================================
# ✅ reduction / shape
# ================================================================

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.sum(a.data, axis=axis, keepdims=keepdims)
    kshape = _keepdims_shape(a.shape, axis)

    def _sum_vjp(g, out, a):
        return (broadcast_to(reshape(g, kshape), a.shape),)

    return record(np.asarray(data), (a,), _sum_vjp, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    kshape = _keepdims_shape(a.shape, axis)
    count = int(np.prod(a.shape)) // int(np.prod(kshape))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    data = a.data.reshape(shape)
    if data.shape == a.shape:
        return a
    return record(data, (a,), _reshape_vjp, "reshape")


def _reshape_vjp(g, out, a):
    return (reshape(g, a.shape),)


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))

    def _transpose_vjp(g, out, a):
        return (transpose(g, inverse),)

    return record(np.transpose(a.data, axes), (a,), _transpose_vjp, "transpose")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul 은 2차원만 지원: {a.shape} × {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extent 불일치: {a.shape} × {b.shape}")
    return record(a.data @ b.data, (a, b), _matmul_vjp, "matmul")


def _matmul_vjp(g, out, a, b):
    return matmul(g, transpose(b)), matmul(transpose(a), g)


def getitem(a: Tensor, index) -> Tensor:
    """basic indexing (int / slice) 만 허용한다."""
    if not isinstance(index, tuple):
        index = (index,)
    for item in index:
        if not isinstance(item, (int, slice, type(Ellipsis))):
            raise DimensionError(f"지원하지 않는 index: {item!r}")
    data = np.array(a.data[index])

    def _getitem_vjp(g, out, a):
        return (scatter(g, a.shape, index),)

    return record(data, (a,), _getitem_vjp, "getitem")


def scatter(g: Tensor, shape: tuple, index: tuple) -> Tensor:
    """shape 크기의 0 텐서 index 위치에 g 를 채운다 (getitem 의 vjp)."""
    data = np.zeros(shape, dtype=g.dtype)
    data[index] = g.data

    def _scatter_vjp(h, out, g):
        return (getitem(h, index),)

    return record(data, (g,), _scatter_vjp, "scatter")


def pad2d(x: Tensor, pad: int) -> Tensor:
    """마지막 두 축을 0 으로 pad 만큼 감싼다."""
    if pad == 0:
        return x
    width = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    index = (Ellipsis, slice(pad, x.shape[-2] + pad), slice(pad, x.shape[-1] + pad))

    def _pad_vjp(g, out, x):
        return (getitem(g, index),)

    return record(np.pad(x.data, width), (x,), _pad_vjp, "pad2d")


def concat(tensors: list, axis: int) -> Tensor:
    tensors = [lift(t) for t in tensors]
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def _concat_vjp(g, out, *parts):
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index = tuple(slice(None) for _ in range(axis)) + (slice(int(lo), int(hi)),)
            grads.append(getitem(g, index))
        return tuple(grads)

    return record(data, tuple(tensors), _concat_vjp, "concat")


def max(a: Tensor, axis: int) -> Tensor:
    """axis 방향 최댓값. 동률이면 앞쪽 원소가 gradient 를 받는다."""
    axis = axis % a.ndim
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    data = np.take_along_axis(a.data, idx, axis=axis).squeeze(axis)
    mask = np.zeros(a.shape, dtype=a.dtype)
    np.put_along_axis(mask, idx, 1, axis=axis)
    kshape = _keepdims_shape(a.shape, axis)

    def _max_vjp(g, out, a):
        return (mul(broadcast_to(reshape(g, kshape), a.shape), constant(mask)),)

    return record(data, (a,), _max_vjp, "max")
