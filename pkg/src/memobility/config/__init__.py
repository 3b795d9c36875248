"""設定管理 - 設定の読み込みと管理"""

from memobility.config.manager import ConfigManager
from memobility.config.settings import (
    BootstrapConfig,
    ColumnMapping,
    EmConfig,
    LifecycleConfig,
    MobilitySettings,
    PanelConfig,
    QrFitConfig,
    RunConfig,
    SmleConfig,
)

__all__ = [
    "ConfigManager",
    "BootstrapConfig",
    "ColumnMapping",
    "EmConfig",
    "LifecycleConfig",
    "MobilitySettings",
    "PanelConfig",
    "QrFitConfig",
    "RunConfig",
    "SmleConfig",
]
