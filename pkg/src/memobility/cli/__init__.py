"""CLIレイヤー - コマンド解析・データ取り込み・パイプライン実行"""
