"""
設定モデルと ConfigManager のユニットテスト
"""

import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import yaml
from pydantic import ValidationError

from memobility.config.manager import ConfigManager
from memobility.config.settings import (
    ColumnMapping,
    EmConfig,
    MobilitySettings,
    PanelConfig,
    QrFitConfig,
    RunConfig,
    SmleConfig,
)
from memobility.errors import ErrorCode, ValidationException
from memobility.models import CopulaFamily


class TestMobilitySettings(unittest.TestCase):
    """MobilitySettingsのテスト"""

    def test_defaults(self):
        """既定値"""
        settings = MobilitySettings()
        self.assertEqual(settings.copula_family, "clayton")
        self.assertIs(settings.family, CopulaFamily.CLAYTON)
        self.assertEqual(settings.qr.grid_size, 25)
        self.assertEqual(settings.em.draws, 100)
        self.assertEqual(settings.em.burn_in, 200)
        self.assertEqual(settings.em.components, 2)
        self.assertEqual(settings.panel.cutoffs, [0.25, 0.5, 0.75])
        self.assertEqual(settings.workers, 1)

    def test_env_override(self):
        """MEMOBILITY_ 接頭辞の環境変数で上書きできること"""
        with patch.dict(os.environ, {"MEMOBILITY_WORKERS": "4", "MEMOBILITY_EM__DRAWS": "7"}):
            settings = MobilitySettings()
        self.assertEqual(settings.workers, 4)
        self.assertEqual(settings.em.draws, 7)

    def test_rejects_unknown_family(self):
        with self.assertRaises(ValidationError):
            MobilitySettings(copula_family="gumbel")

    def test_rejects_extra_keys(self):
        with self.assertRaises(ValidationError):
            MobilitySettings(unknown_key=1)

    def test_workers_range(self):
        with self.assertRaises(ValidationError):
            MobilitySettings(workers=0)
        with self.assertRaises(ValidationError):
            MobilitySettings(workers=65)


class TestSubConfigs(unittest.TestCase):
    """個別設定のテスト"""

    def test_qr_grid(self):
        grid = QrFitConfig(grid_size=5, grid_low=0.1, grid_high=0.9).grid()
        self.assertEqual(grid.size, 5)
        self.assertAlmostEqual(grid.low, 0.1)

    def test_qr_grid_bounds_order(self):
        with self.assertRaises(ValidationError):
            QrFitConfig(grid_low=0.9, grid_high=0.1)

    def test_em_default_tolerance(self):
        """ε の既定値は (L(K-1)+3m)/40"""
        config = EmConfig(components=2)
        self.assertAlmostEqual(config.resolved_tolerance(25, 2), (25 + 6) / 40.0)
        self.assertAlmostEqual(EmConfig(tolerance=0.01).resolved_tolerance(25, 3), 0.01)

    def test_em_target_acceptance(self):
        with self.assertRaises(ValidationError):
            EmConfig(target_acceptance=(0.5, 0.4))

    def test_smle_bounds(self):
        config = SmleConfig()
        self.assertEqual(config.bounds_for(CopulaFamily.GAUSSIAN), (-0.995, 0.995))
        with self.assertRaises(ValidationError):
            SmleConfig(clayton_bounds=(0.0, 10.0))
        with self.assertRaises(ValidationError):
            SmleConfig(gaussian_bounds=(-1.0, 0.5))

    def test_panel_cutoffs_validation(self):
        """cutoffs は (0,1) 内の狭義単調増加列"""
        PanelConfig(cutoffs=[0.2, 0.4, 0.6, 0.8])
        for cutoffs in ([], [0.0, 0.5], [0.5, 0.5], [0.7, 0.3]):
            with self.assertRaises(ValidationError, msg=str(cutoffs)):
                PanelConfig(cutoffs=cutoffs)

    def test_column_mapping(self):
        mapping = ColumnMapping(outcome="y", treatment="t", covariates=["x"], age_outcome="age")
        self.assertEqual(mapping.required_columns(), ["y", "t", "x", "age"])
        with self.assertRaises(ValidationError):
            ColumnMapping(outcome="y", treatment="t", delimiter=";;")

    def test_run_config_round_trip(self):
        """JSON ダンプから RunConfig を復元できること"""
        config = RunConfig(
            input_path=Path("data.csv"),
            columns=ColumnMapping(outcome="y", treatment="t"),
            settings=MobilitySettings(copula_family="frank"),
            seed=11,
        )
        restored = RunConfig.model_validate(config.model_dump(mode="json"))
        self.assertEqual(restored.seed, 11)
        self.assertEqual(restored.settings.copula_family, "frank")
        self.assertEqual(restored.output_dir, Path("out"))


class TestConfigManager(unittest.TestCase):
    """ConfigManagerのテスト"""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.dir = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def _write(self, data, name="memobility.yaml"):
        path = self.dir / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path

    def test_load_from_file(self):
        """YAML の値が設定に反映されること"""
        path = self._write({"copula_family": "gaussian", "em": {"draws": 12}})
        manager = ConfigManager()
        settings = manager.load(path)
        self.assertEqual(settings.copula_family, "gaussian")
        self.assertEqual(settings.em.draws, 12)
        self.assertEqual(manager.source, path)

    def test_load_is_cached(self):
        path = self._write({"workers": 2})
        manager = ConfigManager()
        first = manager.load(path)
        self.assertIs(manager.load(), first)
        self._write({"workers": 3})
        self.assertEqual(manager.load(path, force_reload=True).workers, 3)

    def test_missing_explicit_file(self):
        """指定したファイルが無ければ CONFIG_FILE_ERROR"""
        with self.assertRaises(ValidationException) as ctx:
            ConfigManager().load(self.dir / "absent.yaml")
        self.assertEqual(ctx.exception.error.code, ErrorCode.CONFIG_FILE_ERROR.value)

    def test_broken_yaml(self):
        path = self.dir / "broken.yaml"
        path.write_text("em: [unclosed", encoding="utf-8")
        with self.assertRaises(ValidationException) as ctx:
            ConfigManager().load(path)
        self.assertEqual(ctx.exception.error.code, ErrorCode.CONFIG_FILE_ERROR.value)

    def test_invalid_value(self):
        """値の検証エラーは CONFIG_INVALID_VALUE"""
        path = self._write({"workers": 0})
        with self.assertRaises(ValidationException) as ctx:
            ConfigManager().load(path)
        self.assertEqual(ctx.exception.error.code, ErrorCode.CONFIG_INVALID_VALUE.value)
        self.assertIn("workers", str(ctx.exception))

    def test_with_overrides(self):
        """ドット区切りのキーで入れ子の値を上書きできること"""
        manager = ConfigManager()
        base = MobilitySettings()
        updated = manager.with_overrides(base, {"em.components": 3, "copula_family": "frank"})
        self.assertEqual(updated.em.components, 3)
        self.assertEqual(updated.copula_family, "frank")
        self.assertEqual(base.em.components, 2)

    def test_with_invalid_override(self):
        with self.assertRaises(ValidationException):
            ConfigManager().with_overrides(MobilitySettings(), {"qr.grid_size": 1})

    def test_resolved_is_json_compatible(self):
        resolved = ConfigManager.resolved(MobilitySettings())
        self.assertIsInstance(resolved["em"]["target_acceptance"], list)
        self.assertEqual(resolved["copula_family"], "clayton")


if __name__ == "__main__":
    unittest.main()
