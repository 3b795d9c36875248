"""
コマンドライン引数の解析

コマンド・値付きオプション・フラグを解析し、コマンドごとの必須項目を検証する
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from memobility.output.formatter import OutputFormat


# 有効なコマンド一覧
VALID_COMMANDS = {"fit", "params", "bootstrap", "simulate", "mc-bench", "report", "help", "version"}


def _float_list(value: str) -> List[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _str_list(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise ValueError("must be non-negative")
    return number


# 値を取るオプション: 引数名 → (オプション辞書のキー, 変換関数)
VALUE_OPTIONS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "--format": ("format", str),
    "--out": ("out", str),
    "--config": ("config", str),
    "--seed": ("seed", _non_negative_int),
    "--workers": ("workers", int),
    "--input": ("input", str),
    "--model": ("model", str),
    "--from": ("from_model", str),
    "--outcome": ("outcome", str),
    "--treatment": ("treatment", str),
    "--covariates": ("covariates", _str_list),
    "--age-outcome": ("age_outcome", str),
    "--age-treatment": ("age_treatment", str),
    "--reference-age-outcome": ("reference_age_outcome", int),
    "--reference-age-treatment": ("reference_age_treatment", int),
    "--delimiter": ("delimiter", str),
    "--family": ("family", str),
    "--components": ("components", int),
    "--grid-size": ("grid_size", int),
    "--draws": ("draws", int),
    "--cutoffs": ("cutoffs", _float_list),
    "--gap": ("gap", float),
    "--s1": ("s1", float),
    "--s2": ("s2", float),
    "--taus": ("taus", _float_list),
    "--t-grid": ("t_grid", _float_list),
    "--poverty": ("poverty", float),
    "--counterfactual": ("counterfactual", float),
    "--dte": ("dte", float),
    "--t": ("t", float),
    "--t2": ("t2", float),
    "--reps": ("reps", int),
    "--alpha": ("alpha", float),
    "--n": ("n", int),
    "--sigma": ("sigma", float),
    "--sigmas": ("sigmas", _float_list),
    "--param": ("param", float),
}

# フラグ: 引数名 → オプション辞書のキー
FLAG_OPTIONS: Dict[str, str] = {
    "-h": "help",
    "--help": "help",
    "-V": "version",
    "--version": "version",
    "-v": "verbose",
    "--verbose": "verbose",
    "--strict": "strict",
    "--plain": "plain",
    "--no-log": "no_log",
    "--observed": "observed",
    "--transition-matrix": "transition_matrix",
    "--spearman": "spearman",
    "--upward": "upward",
    "--quantile-curves": "quantile_curves",
}

# コマンドごとの必須オプション
REQUIRED_OPTIONS: Dict[str, List[str]] = {
    "params": ["model"],
    "bootstrap": ["model"],
    "report": ["model"],
    "simulate": ["n", "sigma", "seed"],
    "mc-bench": ["seed"],
}

FAMILIES = {"clayton", "gaussian", "frank"}


@dataclass
class ParsedCommand:
    """解析済みコマンド

    Attributes:
        command: コマンド名
        args: 位置引数
        options: オプション辞書 (変換済み)
        output_format: 出力形式
        errors: 解析中に見つかった誤り
    """

    command: str
    args: List[str]
    options: Dict[str, Any]
    output_format: OutputFormat
    errors: List[str] = field(default_factory=list)


@dataclass
class ValidationResult:
    """バリデーション結果

    Attributes:
        is_valid: 有効かどうか
        errors: エラーメッセージのリスト
    """

    is_valid: bool
    errors: List[str]


class ArgumentParser:
    """コマンドライン引数の解析"""

    def parse(self, argv: List[str]) -> ParsedCommand:
        """引数を解析してParsedCommandを返す

        Args:
            argv: コマンドライン引数リスト

        Returns:
            ParsedCommand: 解析結果
        """
        options: Dict[str, Any] = {}
        args: List[str] = []
        errors: List[str] = []
        command: str = ""
        output_format: Optional[OutputFormat] = None

        i = 0
        while i < len(argv):
            arg = argv[i]

            # フラグ
            if arg in FLAG_OPTIONS:
                options[FLAG_OPTIONS[arg]] = True
                i += 1
                continue

            # 値付きオプション
            if arg in VALUE_OPTIONS:
                key, convert = VALUE_OPTIONS[arg]
                if i + 1 >= len(argv):
                    errors.append(f"Option {arg} requires a value.")
                    i += 1
                    continue
                raw = argv[i + 1]
                try:
                    options[key] = convert(raw)
                except ValueError:
                    errors.append(f"Invalid value for {arg}: '{raw}'")
                i += 2
                continue

            if arg.startswith("-") and not self._is_number(arg):
                errors.append(f"Unknown option: {arg}")
                i += 1
                continue

            # コマンドまたは引数
            if not command:
                command = arg
            else:
                args.append(arg)
            i += 1

        if "format" in options:
            try:
                output_format = OutputFormat(str(options["format"]).lower())
            except ValueError:
                errors.append(
                    f"Invalid value for --format: '{options['format']}' (json, markdown, csv)"
                )

        return ParsedCommand(
            command=command,
            args=args,
            options=options,
            output_format=output_format or OutputFormat.MARKDOWN,
            errors=errors,
        )

    @staticmethod
    def _is_number(text: str) -> bool:
        try:
            float(text)
        except ValueError:
            return False
        return True

    def validate(self, parsed: ParsedCommand) -> ValidationResult:
        """解析結果の妥当性を検証

        Args:
            parsed: 解析済みコマンド

        Returns:
            ValidationResult: バリデーション結果
        """
        errors: List[str] = list(parsed.errors)

        # ヘルプ・バージョンオプションは常に有効
        if parsed.options.get("help") or parsed.options.get("version"):
            return ValidationResult(is_valid=True, errors=[])

        if errors:
            return ValidationResult(is_valid=False, errors=errors)

        # コマンドが空の場合
        if not parsed.command:
            errors.append("Command is required. Use --help for usage information.")
            return ValidationResult(is_valid=False, errors=errors)

        # 不明なコマンドの場合
        if parsed.command not in VALID_COMMANDS:
            errors.append(
                f"Unknown command: '{parsed.command}'. "
                f"Available commands: {', '.join(sorted(VALID_COMMANDS))}"
            )
            return ValidationResult(is_valid=False, errors=errors)

        options = parsed.options
        for key in REQUIRED_OPTIONS.get(parsed.command, []):
            if key not in options:
                errors.append(f"Command '{parsed.command}' requires --{key.replace('_', '-')}.")

        if parsed.command == "fit" and "from_model" not in options:
            if not (parsed.args or "input" in options):
                errors.append("Command 'fit' requires an input CSV (positional or --input).")
            for key in ("outcome", "treatment", "seed"):
                if key not in options:
                    errors.append(f"Command 'fit' requires --{key}.")

        if "family" in options and options["family"] not in FAMILIES:
            errors.append(f"Unknown copula family: '{options['family']}'. Available: {', '.join(sorted(FAMILIES))}")

        if "counterfactual" in options and "t" not in options:
            errors.append("--counterfactual requires --t.")
        if "dte" in options and not ("t" in options and "t2" in options):
            errors.append("--dte requires --t and --t2.")
        if ("s1" in options) != ("s2" in options):
            errors.append("--s1 and --s2 must be given together.")
        if parsed.command == "simulate" and ("family" in options) != ("param" in options):
            errors.append("--family and --param must be given together for 'simulate'.")

        return ValidationResult(is_valid=len(errors) == 0, errors=errors)
