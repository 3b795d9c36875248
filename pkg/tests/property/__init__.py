"""プロパティベーステスト"""
