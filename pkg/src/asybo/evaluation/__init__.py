"""
非同期評価フレームワーク
"""
