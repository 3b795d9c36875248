"""
モデルファイル

推定済みモデルをスキーマバージョン付きの JSON 文書として保存・読み込みする。
係数行列は行優先 (l 行目が β(τ_l)) で、格子点ベクトルと並べて格納する。
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from memobility import __version__
from memobility.core.schema_validator import MODEL_SCHEMA_VERSION, SchemaValidator
from memobility.errors import DomainException, ErrorCode, ModelFileException, create_model_file_error
from memobility.models import (
    CopulaFamily,
    CopulaSpec,
    EmDiagnostics,
    FitDiagnostics,
    FittedModel,
    GaussianMixture,
    QuantileProcess,
    TauGrid,
)

logger = logging.getLogger(__name__)


@dataclass
class ModelMetadata:
    """モデルに添える実行情報

    Attributes:
        config: 解決済みの実行設定 (RunConfig のダンプ)
        seed: 推定に使ったシード
        tool_version: 書き出したツールのバージョン
        extra: 入力行数などの付帯情報
    """
    config: Dict[str, Any]
    seed: Optional[int]
    tool_version: str = __version__
    extra: Dict[str, Any] = field(default_factory=dict)


def _process_to_dict(qp: QuantileProcess) -> Dict[str, Any]:
    return {
        "knots": qp.grid.knots.tolist(),
        "coefficients": qp.coefficients.tolist(),
        "rearranged": qp.rearranged,
    }


def _process_from_dict(data: Dict[str, Any]) -> QuantileProcess:
    return QuantileProcess(
        grid=TauGrid(data["knots"]),
        coefficients=data["coefficients"],
        rearranged=bool(data.get("rearranged", False)),
    )


def _diagnostics_from_dict(data: Dict[str, Any]) -> FitDiagnostics:
    return FitDiagnostics(
        em_y=EmDiagnostics(**data.get("em_y", {})),
        em_t=EmDiagnostics(**data.get("em_t", {})),
        smle_loglik=float(data.get("smle_loglik", float("nan"))),
        flagged_observations=list(data.get("flagged_observations", [])),
        seed=data.get("seed"),
        dropped_rows=int(data.get("dropped_rows", 0)),
    )


def model_to_document(model: FittedModel, metadata: ModelMetadata) -> Dict[str, Any]:
    """モデルとメタデータを JSON 互換の辞書に変換"""
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "tool_version": metadata.tool_version,
        "config": metadata.config,
        "seed": metadata.seed,
        "quantile_processes": {"y": _process_to_dict(model.qp_y), "t": _process_to_dict(model.qp_t)},
        "error_mixtures": {"y": model.err_y.to_dict(), "t": model.err_t.to_dict()},
        "copula": model.copula.to_dict(),
        "diagnostics": model.diagnostics.to_dict(),
        "metadata": dict(metadata.extra),
    }


def save_model(path: Path, model: FittedModel, metadata: ModelMetadata) -> Path:
    """モデルファイルを書き出す

    Args:
        path: 出力先
        model: 推定済みモデル
        metadata: 設定・シード・バージョン

    Returns:
        Path: 書き出したパス
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = model_to_document(model, metadata)
    path.write_text(json.dumps(document, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    logger.info("model_file.saved path=%s family=%s", path, model.copula.family.value)
    return path


def _schema_error(message: str, details: Dict[str, Any]) -> ModelFileException:
    return ModelFileException(create_model_file_error(ErrorCode.MODEL_SCHEMA_INVALID, message, details=details))


def document_to_model(document: Any, validator: Optional[SchemaValidator] = None) -> Tuple[FittedModel, ModelMetadata]:
    """検証済みの辞書からモデルを復元

    Raises:
        ModelFileException: スキーマ違反 (MODEL_001) またはバージョン不一致 (MODEL_002)
    """
    if isinstance(document, dict):
        version = document.get("schema_version")
        if isinstance(version, int) and not isinstance(version, bool) and version != MODEL_SCHEMA_VERSION:
            raise ModelFileException(
                create_model_file_error(
                    ErrorCode.MODEL_VERSION_MISMATCH,
                    f"モデルファイルのスキーマバージョン {version} には対応していません (対応: {MODEL_SCHEMA_VERSION})",
                    details={"schema_version": version, "supported": MODEL_SCHEMA_VERSION},
                )
            )

    result = (validator or SchemaValidator()).validate_model_document(document)
    if not result.ok:
        raise _schema_error("モデルファイルがスキーマに適合しません: " + "; ".join(result.errors), {"errors": result.errors})

    try:
        model = FittedModel(
            qp_y=_process_from_dict(document["quantile_processes"]["y"]),
            qp_t=_process_from_dict(document["quantile_processes"]["t"]),
            err_y=GaussianMixture(**document["error_mixtures"]["y"]),
            err_t=GaussianMixture(**document["error_mixtures"]["t"]),
            copula=CopulaSpec(CopulaFamily(document["copula"]["family"]), document["copula"]["parameter"]),
            diagnostics=_diagnostics_from_dict(document["diagnostics"]),
        )
    except (ValueError, TypeError, DomainException) as exc:
        raise _schema_error(f"モデルファイルの値が不正です: {exc}", {"reason": str(exc)}) from exc

    metadata = ModelMetadata(
        config=document["config"],
        seed=document["seed"],
        tool_version=document["tool_version"],
        extra=dict(document.get("metadata", {})),
    )
    if metadata.tool_version != __version__:
        logger.warning("model_file.tool_version_differs file=%s current=%s", metadata.tool_version, __version__)
    return model, metadata


def load_model(path: Path) -> Tuple[FittedModel, ModelMetadata]:
    """モデルファイルを読み込む

    Args:
        path: モデルファイルのパス

    Returns:
        Tuple[FittedModel, ModelMetadata]: モデルと埋め込まれた実行情報

    Raises:
        ModelFileException: 読み込み・解析・検証に失敗した場合
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise _schema_error(f"モデルファイルを読み込めません: {path}", {"path": str(path)}) from exc
    except json.JSONDecodeError as exc:
        raise _schema_error(f"モデルファイルが JSON ではありません: {exc}", {"path": str(path)}) from exc
    model, metadata = document_to_model(document)
    logger.info("model_file.loaded path=%s family=%s", path, model.copula.family.value)
    return model, metadata
