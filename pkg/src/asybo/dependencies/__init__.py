"""
依存性注入（評価バックエンド・時計の生成）
"""
