"""コアエンジン - 推定アルゴリズムと移動指標の計算"""
