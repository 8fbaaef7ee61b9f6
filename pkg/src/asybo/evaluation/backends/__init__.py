"""
評価バックエンド実装
"""
