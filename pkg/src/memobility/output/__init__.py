"""出力フォーマット - レポート・表・モデルファイルの書き出し"""

from memobility.output.formatter import OutputFormat, ReportFormatter, Table, write_csv
from memobility.output.model_file import ModelMetadata, load_model, save_model

__all__ = [
    "OutputFormat",
    "ReportFormatter",
    "Table",
    "write_csv",
    "ModelMetadata",
    "load_model",
    "save_model",
]
