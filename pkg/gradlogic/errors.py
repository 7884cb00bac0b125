# gradlogic/errors.py


class AutodiffError(ValueError):
    pass


class DimensionError(AutodiffError):
    """연산 입력의 shape 이 맞지 않음"""


class LabelError(AutodiffError):
    """라벨이 [0, N) 범위를 벗어남"""


class ContractError(AutodiffError):
    """호출 규약 위반 (스칼라가 아닌 root 로 backward 등)"""


class NumericError(AutodiffError):
    """연산 결과에 inf/nan 이 섞임"""
