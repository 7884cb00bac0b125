# metalogic/errors.py

from gradlogic.errors import ContractError


class ParameterError(ValueError):
    """ParamSet 이 ModelSpec 의 schema 와 맞지 않음"""


class IngestionError(ValueError):
    """데이터셋 manifest / 파일을 읽을 수 없음"""


class GeometryError(ValueError):
    """샘플들의 shape 이 서로 다르거나 모델 입력과 맞지 않음"""


__all__ = ["ContractError", "ParameterError", "IngestionError", "GeometryError"]
