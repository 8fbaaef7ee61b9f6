"""
ベンチマーク関数と実験ハーネス
"""
