"""
設定管理

YAML 設定ファイル・環境変数・.env を統合して MobilitySettings を構築する
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import ValidationError

from memobility.config.settings import MobilitySettings
from memobility.errors import (
    ErrorCode,
    ValidationException,
    create_config_error,
)

logger = logging.getLogger(__name__)


class ConfigManager:
    """設定の読み込みと管理

    設定ファイルの値は環境変数より優先し、CLI 引数による上書きは
    with_overrides() で最後に適用する。
    """

    def __init__(self) -> None:
        self._config: Optional[MobilitySettings] = None
        self._source: Optional[Path] = None

    @property
    def source(self) -> Optional[Path]:
        """読み込んだ設定ファイルのパス (無ければ None)"""
        return self._source

    def load(
        self, config_path: Optional[Path] = None, force_reload: bool = False
    ) -> MobilitySettings:
        """設定を読み込む

        Args:
            config_path: 設定ファイルのパス（省略時はデフォルトパスを検索）
            force_reload: キャッシュを無視して再読み込みするかどうか

        Returns:
            MobilitySettings: 読み込んだ設定

        Raises:
            ValidationException: ファイル破損・バリデーション失敗時
        """
        if self._config is not None and not force_reload:
            return self._config

        file_config = self._load_from_file(config_path)
        try:
            settings = MobilitySettings(**file_config)
        except ValidationError as exc:
            raise self._convert_validation_error(exc) from exc

        logger.info(
            "config.loaded source=%s family=%s workers=%d",
            self._source, settings.copula_family, settings.workers,
        )
        self._config = settings
        return settings

    def with_overrides(
        self, settings: MobilitySettings, overrides: Dict[str, Any]
    ) -> MobilitySettings:
        """CLI 引数などの上書きを適用した設定を返す"""
        if not overrides:
            return settings
        data = settings.model_dump()
        for key, value in overrides.items():
            target = data
            parts = key.split(".")
            for part in parts[:-1]:
                target = target.setdefault(part, {})
            target[parts[-1]] = value
        try:
            return MobilitySettings(**data)
        except ValidationError as exc:
            raise self._convert_validation_error(exc) from exc

    @staticmethod
    def resolved(settings: MobilitySettings) -> Dict[str, Any]:
        """出力ファイルに埋め込む JSON 互換の設定ダンプ"""
        return settings.model_dump(mode="json")

    def _load_from_file(self, config_path: Optional[Path] = None) -> Dict[str, Any]:
        """設定ファイルから読み込み"""
        if config_path is None:
            for path in self._get_default_config_paths():
                if path.exists():
                    config_path = path
                    break
        elif not config_path.exists():
            raise ValidationException(
                create_config_error(
                    f"設定ファイルが見つかりません: {config_path}",
                    details={"path": str(config_path)},
                    code=ErrorCode.CONFIG_FILE_ERROR,
                )
            )

        if config_path is None:
            return {}

        try:
            with open(config_path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ValidationException(
                create_config_error(
                    f"設定ファイルの読み込みに失敗しました: {exc}",
                    details={"path": str(config_path)},
                    code=ErrorCode.CONFIG_FILE_ERROR,
                )
            ) from exc

        self._source = config_path
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ValidationException(
                create_config_error(
                    "設定ファイルのトップレベルはマッピングである必要があります",
                    details={"path": str(config_path)},
                    code=ErrorCode.CONFIG_FILE_ERROR,
                )
            )
        return data

    def _get_default_config_paths(self) -> List[Path]:
        """デフォルトの設定ファイルパスを取得"""
        return [
            Path.cwd() / "memobility.yaml",
            Path.cwd() / "memobility.yml",
            Path.home() / ".config" / "memobility" / "config.yaml",
            Path.home() / ".config" / "memobility" / "config.yml",
        ]

    def _convert_validation_error(self, exc: ValidationError) -> ValidationException:
        """Pydantic の ValidationError を ValidationException に変換"""
        errors = exc.errors(include_url=False)
        message = "; ".join(
            f"{'.'.join(str(p) for p in err.get('loc', ()))}: {err.get('msg', 'validation error')}"
            for err in errors
        )
        return ValidationException(
            create_config_error(
                message,
                details={"errors": [{"loc": list(e.get("loc", ())), "msg": e.get("msg")} for e in errors]},
            )
        )
