"""
出力フォーマッタ

推定結果・移動指標・ブートストラップ・モンテカルロ表を
指定形式（JSON/Markdown/CSV）に変換するフォーマッタ
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from memobility.core.bootstrap import BootstrapResult
from memobility.core.copula import kendall_tau
from memobility.core.mobility import TransitionMatrix, UpwardMobility, spearman_rho
from memobility.core.montecarlo import StudyResult
from memobility.models import FittedModel, GaussianMixture, QuantileProcess


class OutputFormat(Enum):
    """出力形式"""
    JSON = "json"
    MARKDOWN = "markdown"
    CSV = "csv"


@dataclass
class Table:
    """出力用の表

    Attributes:
        name: ファイル名にも使う識別子
        title: 見出し
        headers: 列名
        rows: 行データ
        note: 表の下に添える注記
    """
    name: str
    title: str
    headers: List[str]
    rows: List[List[Any]] = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "title": self.title,
            "headers": list(self.headers),
            "rows": [[_json_value(v) for v in row] for row in self.rows],
            "note": self.note,
        }


def _json_value(value: Any) -> Any:
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _csv_value(value: Any) -> Any:
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    return value


def write_csv(
    path: Path,
    headers: Sequence[str],
    rows: Iterable[Sequence[Any]],
    preamble: Optional[Mapping[str, Any]] = None,
) -> Path:
    """CSV ファイルを書き出す (浮動小数点は repr で全桁を残す)

    preamble を渡すと先頭に "# {JSON}" のコメント行として埋め込む
    (pandas.read_csv(comment="#") で読み飛ばせる)。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if preamble is not None:
            handle.write("# " + json.dumps(preamble, ensure_ascii=False, sort_keys=True) + "\n")
        writer = csv.writer(handle)
        writer.writerow(list(headers))
        for row in rows:
            writer.writerow([_csv_value(v) for v in row])
    return path


class ReportFormatter:
    """結果の表を指定形式にフォーマットするクラス"""

    # Colors
    MAGENTA = '\033[95m'
    CYAN = '\033[96m'
    GREEN = '\033[92m'
    YELLOW = '\033[93m'
    RED = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'

    def __init__(self, plain: bool = False, digits: int = 4):
        self.plain = plain
        self.digits = digits

    def _colorize(self, text: str, color: str) -> str:
        """テキストに色を適用する"""
        if self.plain:
            return text
        return f"{color}{text}{self.ENDC}"

    def _cell(self, value: Any) -> str:
        if isinstance(value, (bool, np.bool_)):
            return "yes" if value else "no"
        if isinstance(value, (float, np.floating)):
            if not math.isfinite(float(value)):
                return "n/a"
            return f"{float(value):.{self.digits}f}"
        return str(value)

    def format(
        self,
        tables: Sequence[Table],
        format_type: OutputFormat,
        header: Optional[Mapping[str, Any]] = None,
    ) -> str:
        """表の列を指定形式にフォーマット

        Args:
            tables: 出力する表
            format_type: 出力形式
            header: JSON 出力の先頭に埋め込むメタデータ (バージョン・設定・シード)

        Returns:
            フォーマットされた文字列
        """
        if format_type == OutputFormat.JSON:
            return self._to_json(tables, header)
        elif format_type == OutputFormat.MARKDOWN:
            return self._to_markdown(tables, header)
        elif format_type == OutputFormat.CSV:
            return self._to_csv(tables)
        else:
            raise ValueError(f"Unsupported format type: {format_type}")

    def _to_json(self, tables: Sequence[Table], header: Optional[Mapping[str, Any]]) -> str:
        data: Dict[str, Any] = dict(header or {})
        data["tables"] = [table.to_dict() for table in tables]
        return json.dumps(data, ensure_ascii=False, indent=2)

    def _to_markdown(self, tables: Sequence[Table], header: Optional[Mapping[str, Any]]) -> str:
        lines: List[str] = []
        lines.append(self._colorize("# memobility report", self.MAGENTA + self.BOLD))
        lines.append("")
        if header:
            for key in ("tool_version", "seed"):
                if key in header:
                    lines.append(f"- **{key}:** {header[key]}")
            lines.append("")

        for table in tables:
            lines.append(self._colorize(f"## {table.title}", self.CYAN + self.BOLD))
            lines.append("")
            lines.append("| " + " | ".join(table.headers) + " |")
            lines.append("|" + "|".join(" --- " for _ in table.headers) + "|")
            for row in table.rows:
                lines.append("| " + " | ".join(self._cell(v) for v in row) + " |")
            if table.note:
                lines.append("")
                lines.append(self._colorize(f"*{table.note}*", self.YELLOW))
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"

    def _to_csv(self, tables: Sequence[Table]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        for index, table in enumerate(tables):
            if index:
                buffer.write("\n")
            buffer.write(f"# {table.title}\n")
            writer.writerow(table.headers)
            for row in table.rows:
                writer.writerow([_csv_value(v) for v in row])
        return buffer.getvalue()

    def format_study(self, study: StudyResult) -> str:
        """モンテカルロの RMSE 表を固定幅で整形する"""
        headers = study.headers()
        body = [[self._cell(v) for v in row] for row in study.table()]
        widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
        lines = [self._colorize("  ".join(h.rjust(w) for h, w in zip(headers, widths)), self.BOLD)]
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        return "\n".join(lines) + "\n"


def model_tables(model: FittedModel, taus: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9)) -> List[Table]:
    """推定済みモデルの要約表"""
    diagnostics = model.diagnostics
    summary = Table(
        name="model_summary",
        title="Fitted model",
        headers=["quantity", "value"],
        rows=[
            ["copula_family", model.copula.family.value],
            ["copula_parameter", model.copula.parameter],
            ["kendall_tau", kendall_tau(model.copula)],
            ["spearman_rho", spearman_rho(model.copula)],
            ["smle_loglik", diagnostics.smle_loglik],
            ["em_y_iterations", diagnostics.em_y.iterations],
            ["em_y_converged", diagnostics.em_y.converged],
            ["em_t_iterations", diagnostics.em_t.iterations],
            ["em_t_converged", diagnostics.em_t.converged],
            ["flagged_observations", len(diagnostics.flagged_observations)],
            ["dropped_rows", diagnostics.dropped_rows],
        ],
    )
    tables = [summary]
    for name, qp in (("y", model.qp_y), ("t", model.qp_t)):
        tables.append(_coefficient_table(name, qp, taus))
    for name, mixture in (("y", model.err_y), ("t", model.err_t)):
        tables.append(_mixture_table(name, mixture))
    return tables


def _coefficient_table(name: str, qp: QuantileProcess, taus: Sequence[float]) -> Table:
    headers = ["tau", *(f"beta_{j}" for j in range(qp.n_covariates))]
    rows = [[float(tau), *qp.beta(tau).tolist()] for tau in taus]
    note = "quantile crossing was rearranged on the estimation data" if qp.rearranged else ""
    return Table(name=f"coefficients_{name}", title=f"Quantile process coefficients ({name})", headers=headers, rows=rows, note=note)


def _mixture_table(name: str, mixture: GaussianMixture) -> Table:
    rows = [
        [k + 1, w, m, s]
        for k, (w, m, s) in enumerate(zip(mixture.weights, mixture.means, mixture.sds))
    ]
    return Table(
        name=f"error_mixture_{name}",
        title=f"Measurement error mixture ({name})",
        headers=["component", "weight", "mean", "sd"],
        rows=rows,
        note=f"error variance {mixture.variance:.6g}",
    )


def transition_table(matrix: TransitionMatrix, name: str, title: str) -> Table:
    """遷移行列の表 (行: 子の階級, 列: 親の階級)"""
    labels = matrix.labels()
    rows = [[f"child {labels[i]}", *matrix.cells[i].tolist()] for i in range(matrix.bins)]
    rows.append(["column sum", *matrix.column_sums().tolist()])
    return Table(name=name, title=title, headers=["", *(f"parent {lab}" for lab in labels)], rows=rows)


def upward_table(results: Sequence[UpwardMobility], name: str, title: str) -> Table:
    """上方移動確率の表"""
    rows = [[r.s1, r.s2, r.gap, r.estimator, r.conditional] for r in results]
    return Table(name=name, title=title, headers=["s1", "s2", "gap", "estimator", "conditional"], rows=rows)


def scalar_table(values: Mapping[str, float], name: str, title: str) -> Table:
    """名前と値の2列表"""
    return Table(name=name, title=title, headers=["statistic", "value"], rows=[[k, v] for k, v in values.items()])


def curve_table(
    x_name: str,
    x_values: Sequence[float],
    series: Mapping[str, Sequence[float]],
    name: str,
    title: str,
) -> Table:
    """格子上の曲線群を1列目を格子とする表にする"""
    columns = [np.asarray(v, dtype=float) for v in series.values()]
    rows = [[float(x), *(float(c[i]) for c in columns)] for i, x in enumerate(x_values)]
    return Table(name=name, title=title, headers=[x_name, *series.keys()], rows=rows)


def bootstrap_table(results: Mapping[str, BootstrapResult], name: str = "bootstrap") -> Table:
    """ブートストラップ標準誤差とパーセンタイル区間の表"""
    rows = [
        [r.name, r.estimate, r.standard_error, r.interval[0], r.interval[1], r.effective, r.dropped]
        for r in results.values()
    ]
    alpha = next(iter(results.values())).alpha if results else 0.05
    return Table(
        name=name,
        title="Bootstrap standard errors",
        headers=["statistic", "estimate", "se", "lower", "upper", "reps", "dropped"],
        rows=rows,
        note=f"percentile interval at level {1.0 - alpha:g}",
    )


def study_table(study: StudyResult) -> Table:
    """モンテカルロ RMSE 表"""
    return Table(name="mc_rmse", title="Monte Carlo RMSE", headers=study.headers(), rows=study.table())


def frame_table(frame: pd.DataFrame, name: str, title: str) -> Table:
    """DataFrame を表に変換 (インデックスは先頭列)"""
    reset = frame.reset_index()
    return Table(
        name=name,
        title=title,
        headers=[str(c) for c in reset.columns],
        rows=reset.astype(object).values.tolist(),
    )
