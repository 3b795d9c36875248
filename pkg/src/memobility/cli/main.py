"""
MobilityCLIメインモジュール

設定の解決・データ取り込み・推定パイプライン・出力の書き出しを
コマンドごとに束ねる
"""

from __future__ import annotations

import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from memobility import __version__
from memobility.cli.functionals import FunctionalRequest, copula_transition_table, default_t_grid, evaluate_functionals
from memobility.cli.ingest import IngestResult, ingest
from memobility.cli.parser import VALID_COMMANDS
from memobility.config.manager import ConfigManager
from memobility.config.settings import ColumnMapping, MobilitySettings, RunConfig
from memobility.core.bootstrap import bootstrap
from memobility.core.concurrency import BlockExecutor
from memobility.core.mobility import summary_by_parent_quartile
from memobility.core.montecarlo import McDesign, generate, run_study
from memobility.core.pipeline import EstimationPipeline
from memobility.core.random import RandomStreams
from memobility.errors import (
    ErrorCode,
    MobilityException,
    ValidationException,
    create_config_error,
    exit_code_for,
)
from memobility.models import CopulaFamily, CopulaSpec, Dataset, FittedModel
from memobility.output.formatter import (
    OutputFormat,
    ReportFormatter,
    Table,
    bootstrap_table,
    frame_table,
    model_tables,
    study_table,
    write_csv,
)
from memobility.output.model_file import ModelMetadata, load_model, save_model

logger = logging.getLogger(__name__)

MODEL_FILE_NAME = "model.json"
SIMULATED_FILE_NAME = "simulated.csv"
DEFAULT_SIGMAS = (1.0, 0.5, 0.1)
DEFAULT_MC_REPS = 20
DEFAULT_MC_N = 1000
DEFAULT_SIMULATION_FAMILY = "clayton"
DEFAULT_SIMULATION_PARAMETER = 1.5


@dataclass
class ModelContext:
    """保存済みモデルから復元した実行文脈

    Attributes:
        model: 推定済みモデル
        metadata: モデルファイルの実行情報
        run_config: 埋め込まれた実行設定 (CLI の上書き適用後)
        raw: 取り込んだままのデータ (データが無ければ None)
        prepared: ライフサイクル補正後のデータ (データが無ければ None)
    """
    model: FittedModel
    metadata: ModelMetadata
    run_config: RunConfig
    raw: Optional[Dataset] = None
    prepared: Optional[Dataset] = None

    @property
    def settings(self) -> MobilitySettings:
        return self.run_config.settings

    @property
    def seed(self) -> int:
        return self.run_config.seed


class MobilityCLI:
    """memobility のコマンド実行"""

    def __init__(
        self,
        output_format: Optional[OutputFormat] = None,
        plain: bool = False,
        config_manager: Optional[ConfigManager] = None,
    ):
        """初期化

        Args:
            output_format: 出力形式 (省略時は設定の output_format)
            plain: 色付けを行わない
            config_manager: 設定マネージャー
        """
        self.output_format = output_format
        self.formatter = ReportFormatter(plain=plain)
        self.config_manager = config_manager or ConfigManager()

    def run(self, command: str, args: List[str], options: Dict[str, Any] | None = None) -> int:
        """コマンドを実行し、終了コードを返す

        Args:
            command: コマンド名
            args: 位置引数
            options: 解析済みオプション辞書

        Returns:
            int: 0 成功, 1 使い方・設定, 2 データ, 3 非収束
        """
        if options is None:
            options = {}

        if command == "help":
            self.show_help()
            return 0

        if command == "version":
            self.show_version()
            return 0

        if command not in VALID_COMMANDS:
            print(
                f"Unknown command: '{command}'. "
                f"Available commands: {', '.join(sorted(VALID_COMMANDS))}",
                file=sys.stderr,
            )
            return 1

        handlers = {
            "fit": self._run_fit_command,
            "params": self._run_params_command,
            "bootstrap": self._run_bootstrap_command,
            "simulate": self._run_simulate_command,
            "mc-bench": self._run_mc_bench_command,
            "report": self._run_report_command,
        }
        try:
            return handlers[command](args, options)
        except MobilityException as exc:
            logger.log(exc.log_level, "cli.command_failed command=%s code=%s", command, exc.error.code)
            print(f"Error: {exc}", file=sys.stderr)
            return exit_code_for(exc)
        except ValueError as exc:
            print(f"Error: {exc}", file=sys.stderr)
            return 1

    # ------------------------------------------------------------------
    # 設定の解決

    @staticmethod
    def _setting_overrides(command: str, options: Dict[str, Any]) -> Dict[str, Any]:
        """CLI オプションを設定キーへの上書きに変換"""
        mapping = {
            "family": "copula_family",
            "workers": "workers",
            "components": "em.components",
            "grid_size": "qr.grid_size",
            "draws": "panel.draws",
            "reference_age_outcome": "lifecycle.reference_age_y",
            "reference_age_treatment": "lifecycle.reference_age_t",
        }
        if command == "bootstrap":
            mapping.update({"reps": "bootstrap.reps", "alpha": "bootstrap.alpha"})
        overrides = {target: options[key] for key, target in mapping.items() if key in options}
        if options.get("strict"):
            overrides["strict"] = True
        if options.get("verbose"):
            overrides["log_level"] = "INFO"
        return overrides

    def _load_settings(self, command: str, options: Dict[str, Any]) -> MobilitySettings:
        config_path = Path(options["config"]) if "config" in options else None
        settings = self.config_manager.load(config_path)
        settings = self.config_manager.with_overrides(settings, self._setting_overrides(command, options))
        self._apply_log_level(settings)
        return settings

    @staticmethod
    def _apply_log_level(settings: MobilitySettings) -> None:
        # ファイルでロギングを設定した場合はそちらのレベルを優先する
        if not os.environ.get("MEMOBILITY_LOGGING_CONFIG"):
            logging.getLogger("memobility").setLevel(settings.log_level)

    @staticmethod
    def _write(text: str) -> None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")

    def _format_for(self, settings: MobilitySettings) -> OutputFormat:
        return self.output_format or OutputFormat(settings.output_format)

    @staticmethod
    def _build_run_config(
        input_path: Path, columns: Dict[str, Any], settings: MobilitySettings, seed: int, output_dir: Path
    ) -> RunConfig:
        try:
            return RunConfig(
                input_path=input_path,
                columns=ColumnMapping(**columns),
                settings=settings,
                seed=seed,
                output_dir=output_dir,
            )
        except ValidationError as exc:
            raise ValidationException(
                create_config_error(f"実行設定が不正です: {exc.errors(include_url=False)[0].get('msg')}")
            ) from exc

    def _run_config_from_options(self, args: List[str], options: Dict[str, Any]) -> RunConfig:
        settings = self._load_settings("fit", options)
        columns: Dict[str, Any] = {
            "outcome": options["outcome"],
            "treatment": options["treatment"],
            "covariates": options.get("covariates", []),
            "age_outcome": options.get("age_outcome"),
            "age_treatment": options.get("age_treatment"),
            "delimiter": options.get("delimiter", ","),
            "log_outcome": not options.get("no_log", False),
            "log_treatment": not options.get("no_log", False),
        }
        input_path = Path(options.get("input") or args[0])
        return self._build_run_config(input_path, columns, settings, options["seed"], Path(options.get("out", "out")))

    def _run_config_from_model(
        self, metadata: ModelMetadata, command: str, options: Dict[str, Any]
    ) -> RunConfig:
        """モデルに埋め込まれた設定を復元し、CLI の上書きを適用"""
        try:
            embedded = RunConfig.model_validate(metadata.config)
        except ValidationError as exc:
            raise ValidationException(
                create_config_error(
                    "モデルファイルに埋め込まれた設定を復元できません",
                    details={"errors": [e.get("msg") for e in exc.errors(include_url=False)]},
                    code=ErrorCode.CONFIG_FILE_ERROR,
                )
            ) from exc
        settings = self.config_manager.with_overrides(embedded.settings, self._setting_overrides(command, options))
        self._apply_log_level(settings)
        update: Dict[str, Any] = {"settings": settings}
        if "input" in options:
            update["input_path"] = Path(options["input"])
        if "out" in options:
            update["output_dir"] = Path(options["out"])
        if "seed" in options:
            update["seed"] = options["seed"]
        return embedded.model_copy(update=update)

    def _load_context(self, command: str, options: Dict[str, Any], require_data: bool = True) -> ModelContext:
        model, metadata = load_model(Path(options["model"]))
        run_config = self._run_config_from_model(metadata, command, options)
        context = ModelContext(model=model, metadata=metadata, run_config=run_config)
        if not require_data and not run_config.input_path.exists():
            logger.warning("cli.data_unavailable path=%s", run_config.input_path)
            return context
        raw = ingest(run_config.input_path, run_config.columns).dataset
        context.raw = raw
        context.prepared, _ = EstimationPipeline(run_config.settings).prepare(raw)
        return context

    @staticmethod
    def _executor(settings: MobilitySettings, workers: Optional[int] = None) -> BlockExecutor:
        return BlockExecutor(workers or settings.workers, settings.block_size)

    @staticmethod
    def _header(run_config: RunConfig, seed: Optional[int] = None) -> Dict[str, Any]:
        """出力に埋め込むバージョン・設定・シード"""
        return {
            "tool_version": __version__,
            "seed": run_config.seed if seed is None else seed,
            "config": run_config.model_dump(mode="json"),
        }

    def _emit(
        self,
        tables: List[Table],
        fmt: OutputFormat,
        header: Dict[str, Any],
        out_dir: Optional[Path] = None,
    ) -> None:
        """表を標準出力に書き、出力先があれば各表を CSV として保存"""
        self._write(self.formatter.format(tables, fmt, header))
        if out_dir is None:
            return
        for table in tables:
            path = write_csv(out_dir / f"{table.name}.csv", table.headers, table.rows, preamble=header)
            logger.info("cli.table_written path=%s", path)

    @staticmethod
    def _request(options: Dict[str, Any], settings: MobilitySettings) -> FunctionalRequest:
        request = FunctionalRequest(
            transition=bool(options.get("transition_matrix")),
            cutoffs=options.get("cutoffs", settings.panel.cutoffs),
            spearman=bool(options.get("spearman")),
            upward=bool(options.get("upward")),
            gap=options.get("gap", settings.panel.upward_gap),
            band=(options["s1"], options["s2"]) if "s1" in options else None,
            quantile_curves=bool(options.get("quantile_curves")),
            t_grid=options.get("t_grid", []),
            poverty_line=options.get("poverty"),
            counterfactual=(options["counterfactual"], options["t"]) if "counterfactual" in options else None,
            dte=(options["dte"], options["t"], options["t2"]) if "dte" in options else None,
            observed=bool(options.get("observed")),
        )
        if "taus" in options:
            request.taus = options["taus"]
        if request.is_empty():
            request.transition = True
            request.spearman = True
        return request

    # ------------------------------------------------------------------
    # コマンド

    def _run_fit_command(self, args: List[str], options: Dict[str, Any]) -> int:
        """fitコマンドの実行: 推定してモデルファイルを書き出す"""
        if "from_model" in options:
            _, metadata = load_model(Path(options["from_model"]))
            run_config = self._run_config_from_model(metadata, "fit", options)
        else:
            run_config = self._run_config_from_options(args, options)
        settings = run_config.settings

        ingested: IngestResult = ingest(run_config.input_path, run_config.columns)
        pipeline = EstimationPipeline(settings, self._executor(settings))
        result = pipeline.run(ingested.dataset, run_config.seed)
        model = result.model
        model.diagnostics.dropped_rows = ingested.dropped_rows

        metadata = ModelMetadata(
            config=run_config.model_dump(mode="json"),
            seed=run_config.seed,
            extra={
                "rows": ingested.dataset.n,
                "dropped_rows": ingested.dropped_rows,
                "lifecycle": {name: p.to_dict() for name, p in result.profiles.items()},
            },
        )
        path = save_model(run_config.output_dir / MODEL_FILE_NAME, model, metadata)
        if not model.diagnostics.converged:
            print("Warning: stochastic EM did not reach the tolerance; see diagnostics.", file=sys.stderr)

        header = self._header(run_config)
        header["model_path"] = str(path)
        self._emit(model_tables(model), self._format_for(settings), header)
        return 0

    def _run_params_command(self, args: List[str], options: Dict[str, Any]) -> int:
        """paramsコマンドの実行: 保存済みモデルから移動指標を計算"""
        context = self._load_context("params", options)
        settings = context.settings
        request = self._request(options, settings)
        _, tables = evaluate_functionals(
            request,
            context.model,
            context.prepared,
            RandomStreams(context.seed).child("params"),
            settings.panel.draws,
            self._executor(settings),
        )
        out_dir = Path(options["out"]) if "out" in options else None
        self._emit(tables, self._format_for(settings), self._header(context.run_config), out_dir)
        return 0

    def _run_bootstrap_command(self, args: List[str], options: Dict[str, Any]) -> int:
        """bootstrapコマンドの実行: 再標本ごとに全推定をやり直す"""
        context = self._load_context("bootstrap", options)
        settings = context.settings
        request = self._request(options, settings)
        if not request.t_grid:
            request.t_grid = default_t_grid(context.prepared)
        draws = settings.panel.draws
        replicate_executor = BlockExecutor(1, settings.block_size)

        def functionals(model: FittedModel, dataset: Dataset, streams: RandomStreams) -> Dict[str, float]:
            return evaluate_functionals(request, model, dataset, streams, draws, replicate_executor)[0]

        point = functionals(context.model, context.prepared, RandomStreams(context.seed).child("functionals"))
        pipeline = EstimationPipeline(settings, replicate_executor)
        results = bootstrap(
            context.raw,
            pipeline.statistic(functionals),
            reps=settings.bootstrap.reps,
            seed=context.seed,
            alpha=settings.bootstrap.alpha,
            executor=self._executor(settings),
            max_drop_fraction=settings.bootstrap.max_drop_fraction,
            point_estimate=point,
        )
        out_dir = Path(options["out"]) if "out" in options else None
        self._emit([bootstrap_table(results)], self._format_for(settings), self._header(context.run_config), out_dir)
        return 0

    def _run_simulate_command(self, args: List[str], options: Dict[str, Any]) -> int:
        """simulateコマンドの実行: 既知の係数曲線からデータを生成"""
        settings = self._load_settings("simulate", options)
        family = CopulaFamily(options.get("family", DEFAULT_SIMULATION_FAMILY))
        parameter = options.get("param", DEFAULT_SIMULATION_PARAMETER)
        design = McDesign(n=options["n"], copula=CopulaSpec(family, parameter), sigma=options["sigma"], reps=1)
        seed = options["seed"]
        sample = generate(design, RandomStreams(seed).stream("simulate"))

        dataset, truth = sample.dataset, sample.truth
        rows = [
            [dataset.y[i], dataset.t[i], dataset.x[i, 1], truth.y_star[i], truth.t_star[i]]
            for i in range(dataset.n)
        ]
        preamble = {
            "tool_version": __version__,
            "seed": seed,
            "design": {"n": design.n, "sigma": design.sigma, "copula": design.copula.to_dict()},
        }
        out_dir = Path(options.get("out", "out"))
        path = write_csv(out_dir / SIMULATED_FILE_NAME, ["y", "t", "x", "y_star", "t_star"], rows, preamble=preamble)
        logger.info("cli.simulated path=%s n=%d", path, dataset.n)

        summary = Table(
            name="simulated",
            title="Simulated dataset",
            headers=["quantity", "value"],
            rows=[["path", str(path)], ["rows", dataset.n], ["family", family.value], ["parameter", parameter], ["sigma", design.sigma]],
        )
        self._write(self.formatter.format([summary], self._format_for(settings), preamble))
        return 0

    def _run_mc_bench_command(self, args: List[str], options: Dict[str, Any]) -> int:
        """mc-benchコマンドの実行: RMSE 表を作る"""
        settings = self._load_settings("mc-bench", options)
        family = CopulaFamily(options.get("family", DEFAULT_SIMULATION_FAMILY))
        spec = CopulaSpec(family, options.get("param", DEFAULT_SIMULATION_PARAMETER))
        designs = [
            McDesign(
                n=options.get("n", DEFAULT_MC_N),
                copula=spec,
                sigma=sigma,
                reps=options.get("reps", DEFAULT_MC_REPS),
            )
            for sigma in options.get("sigmas", DEFAULT_SIGMAS)
        ]
        seed = options["seed"]
        study = run_study(designs, seed, settings, self._executor(settings))

        header = {"tool_version": __version__, "seed": seed, "config": ConfigManager.resolved(settings)}
        fmt = self._format_for(settings)
        if fmt == OutputFormat.MARKDOWN:
            self._write(self.formatter.format_study(study))
        else:
            self._write(self.formatter.format([study_table(study)], fmt, header))
        if "out" in options:
            table = study_table(study)
            write_csv(Path(options["out"]) / f"{table.name}.csv", table.headers, table.rows, preamble=header)
        return 0

    def _run_report_command(self, args: List[str], options: Dict[str, Any]) -> int:
        """reportコマンドの実行: 推定結果と移動指標の要約"""
        context = self._load_context("report", options, require_data=False)
        settings = context.settings
        cutoffs = options.get("cutoffs", settings.panel.cutoffs)
        tables = model_tables(context.model)
        tables.append(copula_transition_table(context.model, cutoffs))
        if context.prepared is not None:
            request = FunctionalRequest(
                transition=True,
                cutoffs=cutoffs,
                spearman=True,
                upward=True,
                gap=options.get("gap", settings.panel.upward_gap),
                observed=True,
            )
            _, functional_tables = evaluate_functionals(
                request,
                context.model,
                context.prepared,
                RandomStreams(context.seed).child("report"),
                settings.panel.draws,
                self._executor(settings),
            )
            tables.extend(functional_tables)
            tables.append(
                frame_table(summary_by_parent_quartile(context.prepared), "summary", "Summary statistics by parent quartile")
            )
        else:
            print("Warning: input data not found; data-based sections are omitted.", file=sys.stderr)
        out_dir = Path(options["out"]) if "out" in options else None
        self._emit(tables, self._format_for(settings), self._header(context.run_config), out_dir)
        return 0

    # ------------------------------------------------------------------

    @staticmethod
    def help_text() -> str:
        return f"""memobility v{__version__} - 測定誤差を考慮した世代間移動指標の推定

Usage:
    memobility <command> [args] [options]

Commands:
    fit <data.csv>   分位点過程・誤差分布・コピュラを推定しモデルファイルを書き出す
    params           保存済みモデルから移動指標を計算する
    bootstrap        移動指標のブートストラップ標準誤差と区間
    simulate         既知の係数曲線からデータセットを生成する
    mc-bench         モンテカルロ実験の RMSE 表を作る
    report           推定結果の要約を表示する
    help             このヘルプメッセージを表示
    version          バージョン情報を表示

Options:
    -h, --help             ヘルプメッセージを表示
    -V, --version          バージョン情報を表示
    -v, --verbose          INFO レベルのログを出す
    --format <format>      出力形式 (json, markdown, csv)
    --config <file>        設定ファイル (YAML)
    --out <dir>            出力ディレクトリ
    --seed <n>             シード (fit / simulate / mc-bench では必須)
    --workers <n>          並列ワーカー数
    --strict               非収束をエラー (終了コード 3) とする
    --plain                色付けしない

fit:
    --outcome <col> --treatment <col> [--covariates a,b] [--age-outcome <col>]
    [--age-treatment <col>] [--reference-age-outcome <age>] [--reference-age-treatment <age>]
    [--family clayton|gaussian|frank] [--components m] [--grid-size L] [--no-log]
    [--delimiter <c>] [--from <model.json>]

params / bootstrap / report:
    --model <model.json> [--input <data.csv>] [--draws S]
    --transition-matrix [--cutoffs a,b,c]  --spearman  --upward [--gap d --s1 a --s2 b]
    --quantile-curves [--taus ...] [--t-grid ...]  --poverty <line> [--t-grid ...]
    --counterfactual <y> --t <t>  --dte <y> --t <t> --t2 <t2>  --observed
    bootstrap: --reps B --alpha A

simulate:
    --n <n> --sigma <s> --seed <n> [--family <f> --param <p>]

mc-bench:
    --seed <n> [--reps R] [--n <n>] [--sigmas 1,0.5,0.1] [--family <f> --param <p>]

Examples:
    memobility simulate --n 1000 --sigma 0.5 --seed 1 --out data
    memobility fit data/simulated.csv --outcome y --treatment t --covariates x --no-log --seed 7
    memobility params --model out/model.json --transition-matrix --spearman --format csv
"""

    def show_help(self) -> None:
        """ヘルプメッセージを表示"""
        print(self.help_text())

    def show_version(self) -> None:
        """バージョン情報を表示"""
        print(f"memobility {__version__}")
