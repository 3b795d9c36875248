"""memobility のCLIエントリーポイント"""

import logging
import logging.config
import os
import sys
from pathlib import Path
from typing import List

from dotenv import load_dotenv

from memobility import __version__
from memobility.cli.main import MobilityCLI
from memobility.cli.parser import ArgumentParser

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def _setup_logging(verbose: bool = False) -> None:
    """ロギング設定を読み込む

    環境変数 MEMOBILITY_LOGGING_CONFIG で指定された設定ファイルを読み込む。
    指定がない場合は標準エラーへの出力を WARNING (--verbose なら INFO) で設定する。
    """
    log_config = os.environ.get("MEMOBILITY_LOGGING_CONFIG")
    if log_config and Path(log_config).exists():
        try:
            logging.config.fileConfig(log_config, disable_existing_loggers=False)
            return
        except Exception as e:
            print(f"Warning: Failed to load logging config: {e}", file=sys.stderr)

    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format=LOG_FORMAT, stream=sys.stderr)


def main(args: List[str] | None = None) -> int:
    """
    memobility のメインエントリーポイント

    Args:
        args: コマンドライン引数（Noneの場合はsys.argvを使用）

    Returns:
        終了コード（0: 成功、1: 使い方・設定、2: データ、3: 非収束）
    """
    # .envをロード
    load_dotenv()

    if args is None:
        args = sys.argv[1:]

    # 引数解析
    parser = ArgumentParser()
    parsed = parser.parse(args)

    _setup_logging(verbose=bool(parsed.options.get("verbose")))

    # バージョン表示
    if parsed.options.get("version"):
        print(f"memobility {__version__}")
        return 0

    # ヘルプ表示
    if parsed.options.get("help") or (not parsed.command and not args):
        print(MobilityCLI.help_text())
        return 0

    # バリデーション
    validation = parser.validate(parsed)
    if not validation.is_valid:
        for error in validation.errors:
            print(error, file=sys.stderr)
        return 1

    cli = MobilityCLI(
        output_format=parsed.output_format if "format" in parsed.options else None,
        plain=bool(parsed.options.get("plain")) or not sys.stdout.isatty(),
    )
    return cli.run(parsed.command, parsed.args, options=parsed.options)


if __name__ == "__main__":
    sys.exit(main())
