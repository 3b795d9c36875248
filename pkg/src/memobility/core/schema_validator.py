"""
スキーマ検証ユーティリティ

モデルファイル (JSON) の構造を読み込み前に検証する。
"""

from copy import deepcopy
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from jsonschema import Draft7Validator, exceptions as jsonschema_exceptions

from memobility.models import CopulaFamily

MODEL_SCHEMA_VERSION = 1


@dataclass
class ValidationResult:
    """スキーマ検証結果"""

    ok: bool
    errors: List[str]


_NUMBER_LIST: Dict[str, Any] = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_PROCESS_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["knots", "coefficients"],
    "properties": {
        "knots": {**_NUMBER_LIST, "minItems": 2},
        "coefficients": {"type": "array", "items": _NUMBER_LIST, "minItems": 2},
        "rearranged": {"type": "boolean"},
    },
}

_MIXTURE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["weights", "means", "sds"],
    "properties": {
        "weights": _NUMBER_LIST,
        "means": _NUMBER_LIST,
        "sds": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0.0}, "minItems": 1},
    },
}


class SchemaValidator:
    """JSON Schema (Draft 7) によるモデルファイル検証器

    jsonschema で必須項目・型・値域を検証し、係数行列の形状など
    スキーマで表しにくい整合性も追加で確認する。
    """

    _DEFAULT_MODEL_SCHEMA: Dict[str, Any] = {
        "type": "object",
        "required": [
            "schema_version",
            "tool_version",
            "config",
            "seed",
            "quantile_processes",
            "error_mixtures",
            "copula",
            "diagnostics",
        ],
        "properties": {
            "schema_version": {"type": "integer", "minimum": 1},
            "tool_version": {"type": "string", "minLength": 1},
            "config": {"type": "object"},
            "seed": {"type": ["integer", "null"], "minimum": 0},
            "quantile_processes": {
                "type": "object",
                "required": ["y", "t"],
                "properties": {"y": _PROCESS_SCHEMA, "t": _PROCESS_SCHEMA},
            },
            "error_mixtures": {
                "type": "object",
                "required": ["y", "t"],
                "properties": {"y": _MIXTURE_SCHEMA, "t": _MIXTURE_SCHEMA},
            },
            "copula": {
                "type": "object",
                "required": ["family", "parameter"],
                "properties": {
                    "family": {"enum": [f.value for f in CopulaFamily]},
                    "parameter": {"type": "number"},
                },
            },
            "diagnostics": {"type": "object"},
            "metadata": {"type": "object"},
        },
        "additionalProperties": False,
    }

    def __init__(self, model_schema: Optional[Dict[str, Any]] = None):
        self._model_schema = deepcopy(model_schema or self._DEFAULT_MODEL_SCHEMA)
        self._model_validator = Draft7Validator(self._model_schema)

    @staticmethod
    def _format_error(error: jsonschema_exceptions.ValidationError) -> str:
        """jsonschema のエラーをプレーン文字列に整形する"""
        path = "$"
        for elem in error.absolute_path:
            if isinstance(elem, int):
                path += f"[{elem}]"
            else:
                path += f".{elem}"
        return f"{path}: {error.message}"

    @staticmethod
    def _check_shapes(document: Dict[str, Any]) -> List[str]:
        """係数行列と混合分布パラメータの形状を確認する"""
        errors: List[str] = []
        for name in ("y", "t"):
            process = document["quantile_processes"][name]
            rows = process["coefficients"]
            if len(rows) != len(process["knots"]):
                errors.append(
                    f"$.quantile_processes.{name}: 係数行列の行数 {len(rows)} が格子サイズ {len(process['knots'])} と一致しません"
                )
            if len({len(row) for row in rows}) > 1:
                errors.append(f"$.quantile_processes.{name}.coefficients: 行の長さが揃っていません")
            mixture = document["error_mixtures"][name]
            if not len(mixture["weights"]) == len(mixture["means"]) == len(mixture["sds"]):
                errors.append(f"$.error_mixtures.{name}: weights / means / sds の長さが一致しません")
        widths = {
            len(document["quantile_processes"][name]["coefficients"][0]) for name in ("y", "t")
        }
        if len(widths) > 1:
            errors.append("$.quantile_processes: y と t の共変量数が一致しません")
        return errors

    def validate_model_document(self, document: Any) -> ValidationResult:
        """モデルファイルの内容を検証する"""
        if not isinstance(document, dict):
            return ValidationResult(False, ["モデルファイルのトップレベルはオブジェクトである必要があります"])

        schema_errors = sorted(
            self._model_validator.iter_errors(document),
            key=lambda err: list(map(str, err.absolute_path)),
        )
        errors = [self._format_error(error) for error in schema_errors]
        if not errors:
            errors.extend(self._check_shapes(document))
        return ValidationResult(ok=len(errors) == 0, errors=errors)
