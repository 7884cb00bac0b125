# gradlogic/layers.py
#
# 신경망용 합성 연산. 전부 ops 의 기본 연산 조합이라 별도 backward 규칙이 없다.

import numpy as np

from . import ops
from .errors import DimensionError, LabelError
from .tensor import Tensor, constant, lift

BN_EPS = 1e-5


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """
    3×3, stride 1, zero same-padding cross-correlation + bias.
    x: [B, C, H, W], w: [F, C, 3, 3], b: [F] → [B, F, H, W]
    """
    x, w, b = lift(x), lift(w), lift(b)
    if x.ndim != 4 or w.ndim != 4 or w.shape[2:] != (3, 3):
        raise DimensionError(f"conv2d shape 오류: x={x.shape}, w={w.shape}")
    B, C, H, W = x.shape
    F = w.shape[0]
    if w.shape[1] != C:
        raise DimensionError(f"conv2d 채널 불일치: 입력 {C}, kernel {w.shape[1]}")
    if b.shape != (F,):
        raise DimensionError(f"conv2d bias shape 오류: {b.shape} (기대값 {(F,)})")

    xp = ops.pad2d(x, 1)
    # im2col: 9개의 shift 된 창을 축 2 에 쌓는다 (di*3 + dj 순서 = kernel row-major)
    patches = [
        ops.reshape(xp[:, :, di:di + H, dj:dj + W], (B, C, 1, H, W))
        for di in range(3)
        for dj in range(3)
    ]
    cols = ops.concat(patches, axis=2)
    cols = ops.reshape(ops.transpose(cols, (0, 3, 4, 1, 2)), (B * H * W, C * 9))
    kernel = ops.transpose(ops.reshape(w, (F, C * 9)), (1, 0))
    out = ops.add(ops.matmul(cols, kernel), b)
    return ops.transpose(ops.reshape(out, (B, H, W, F)), (0, 3, 1, 2))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = BN_EPS) -> Tensor:
    """현재 batch 통계만 사용하는 batch normalization (running average 없음)."""
    x, gamma, beta = lift(x), lift(gamma), lift(beta)
    if x.ndim == 4:
        axes = (0, 2, 3)
        shape = (1, x.shape[1], 1, 1)
    elif x.ndim == 2:
        axes = (0,)
        shape = (1, x.shape[1])
    else:
        raise DimensionError(f"batch_norm 은 2D/4D 입력만 지원: {x.shape}")
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm 파라미터 shape 오류: {gamma.shape}, {beta.shape}")

    mu = ops.mean(x, axis=axes, keepdims=True)
    xc = ops.sub(x, mu)
    var = ops.mean(ops.mul(xc, xc), axis=axes, keepdims=True)
    xhat = ops.mul(xc, ops.power(ops.add(var, eps), -0.5))
    return ops.add(ops.mul(xhat, ops.reshape(gamma, shape)), ops.reshape(beta, shape))


def relu(x: Tensor) -> Tensor:
    return ops.relu(lift(x))


def max_pool2x2(x: Tensor) -> Tensor:
    """
    2×2 / stride 2 max pooling. 홀수 extent 는 내림 (21 → 10).
    extent 가 1 인 축은 창을 1 로 줄여 그대로 둔다 (8×8 입력의 마지막 블록).
    """
    x = lift(x)
    if x.ndim != 4:
        raise DimensionError(f"max_pool2x2 는 4D 입력만 지원: {x.shape}")
    B, C, H, W = x.shape
    kh = 2 if H >= 2 else 1
    kw = 2 if W >= 2 else 1
    Ho, Wo = H // kh, W // kw
    if (Ho * kh, Wo * kw) != (H, W):
        x = x[:, :, :Ho * kh, :Wo * kw]
    windows = ops.reshape(x, (B, C, Ho, kh, Wo, kw))
    windows = ops.transpose(windows, (0, 1, 2, 4, 3, 5))
    windows = ops.reshape(windows, (B, C, Ho, Wo, kh * kw))
    return ops.max(windows, axis=-1)


def flatten(x: Tensor) -> Tensor:
    x = lift(x)
    return ops.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x: [B, in], w: [in, out], b: [out]"""
    return ops.add(ops.matmul(lift(x), lift(w)), lift(b))


def _as_labels(labels, batch: int, ways: int) -> np.ndarray:
    if isinstance(labels, Tensor):
        labels = labels.data
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape 오류: {labels.shape} (기대값 {(batch,)})")
    if labels.size and (labels.min() < 0 or labels.max() >= ways):
        raise LabelError(f"라벨이 [0, {ways}) 범위를 벗어남: {labels.min()}..{labels.max()}")
    as_int = labels.astype(np.int64)
    if not np.array_equal(as_int, labels):
        raise LabelError("라벨은 정수여야 함")
    return as_int


def log_softmax(logits: Tensor) -> Tensor:
    logits = lift(logits)
    # 최댓값은 상수로 빼도 gradient 가 그대로다 (log-sum-exp 안정화)
    shift = constant(logits.data.max(axis=1, keepdims=True))
    shifted = ops.sub(logits, shift)
    lse = ops.log(ops.sum(ops.exp(shifted), axis=1, keepdims=True))
    return ops.sub(shifted, lse)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """batch 평균 −log softmax(logits)[label]. 결과는 스칼라 Tensor."""
    logits = lift(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy logits 는 [B, N] 이어야 함: {logits.shape}")
    B, N = logits.shape
    labels = _as_labels(labels, B, N)
    onehot = np.eye(N, dtype=logits.dtype)[labels]
    picked = ops.sum(ops.mul(log_softmax(logits), constant(onehot)), axis=1)
    return ops.neg(ops.mean(picked))


def top1_accuracy(logits: Tensor, labels) -> float:
    logits = lift(logits)
    labels = _as_labels(labels, logits.shape[0], logits.shape[1])
    return float(np.mean(np.argmax(logits.data, axis=1) == labels))
