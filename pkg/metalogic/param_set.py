# metalogic/param_set.py

from collections.abc import Iterable, Mapping

import numpy as np

from gradlogic import Tensor

from .errors import ParameterError


class ParamSet:
    """
    이름 → Tensor 의 순서 있는 묶음. 생성 후에는 바꾸지 않는다.
    update() 는 항상 새 ParamSet 을 돌려주므로 θ 와 적응된 사본 여러 개를 동시에 들고 있을 수 있다.
    """

    __slots__ = ("_names", "_values")

    def __init__(self, items: Iterable[tuple[str, Tensor]]):
        names, values = [], {}
        for name, value in items:
            if name in values:
                raise ParameterError(f"파라미터 이름 중복: {name}")
            if not isinstance(value, Tensor):
                value = Tensor(value)
            names.append(name)
            values[name] = value
        self._names = tuple(names)
        self._values = values

    # ================================================================
    # ✅ 조회
    # ================================================================

    def names(self) -> tuple[str, ...]:
        return self._names

    def items(self) -> list[tuple[str, Tensor]]:
        return [(name, self._values[name]) for name in self._names]

    def values(self) -> list[Tensor]:
        return [self._values[name] for name in self._names]

    def as_dict(self) -> dict[str, Tensor]:
        return dict(self.items())

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: self._values[name].numpy() for name in self._names}

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._values[name]
        except KeyError:
            raise ParameterError(f"존재하지 않는 파라미터: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self):
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    def __repr__(self):
        shapes = ", ".join(f"{name}{list(self._values[name].shape)}" for name in self._names)
        return f"ParamSet({shapes})"

    # ================================================================
    # ✅ 함수형 변환
    # ================================================================

    def update(self, grads: Mapping[str, Tensor], step: float) -> "ParamSet":
        """θ − step·g. 결과는 그래프로 기록되므로 θ 에 대해 미분 가능하다."""
        if set(grads.keys()) != set(self._names):
            raise ParameterError("GradMap key 가 파라미터 이름과 다름")
        return ParamSet(
            (name, self._values[name] - grads[name] * step) for name in self._names
        )

    def detach(self) -> "ParamSet":
        return ParamSet((name, value.detach()) for name, value in self.items())

    def leaves(self) -> "ParamSet":
        """값은 같고 그래프와 끊긴, requires_grad 인 새 leaf 들."""
        return ParamSet(
            (name, Tensor(value.data, requires_grad=True)) for name, value in self.items()
        )

    def astype(self, dtype) -> "ParamSet":
        return ParamSet((name, Tensor(value.data, dtype=dtype)) for name, value in self.items())

    def equals(self, other: "ParamSet") -> bool:
        """이름 순서, dtype, 값이 모두 bit 단위로 같은지."""
        if self._names != other.names():
            return False
        for name in self._names:
            a, b = self._values[name].data, other[name].data
            if a.dtype != b.dtype or a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "ParamSet":
        return cls((name, Tensor(value)) for name, value in arrays.items())

    # 워커 프로세스로 넘길 때 그래프 없이 값만 보낸다
    def __getstate__(self):
        return {"names": self._names, "arrays": {n: self._values[n].data for n in self._names}}

    def __setstate__(self, state):
        self._names = tuple(state["names"])
        self._values = {n: Tensor(state["arrays"][n]) for n in self._names}
