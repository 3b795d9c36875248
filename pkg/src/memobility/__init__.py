"""
memobility - 測定誤差を含む2変数の同時分布推定と世代間移動指標の計算

子と親の観測所得を恒常所得の誤差付き観測として扱い、
分位点回帰・確率的EM・パラメトリックコピュラによって同時分布を推定する。
"""

__version__ = "0.1.0"
