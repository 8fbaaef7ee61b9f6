"""
ガウス過程サロゲート（カーネル・因子分解・ハイパーパラメータ調整）
"""
