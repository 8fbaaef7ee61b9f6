"""
asybo - 高コスト・高遅延・不安定なコスト関数のための非同期ベイズ最適化エンジン
"""

__version__ = "0.1.0"
__description__ = "ガウス過程サロゲートとブロッキング率付き非同期評価器によるベイズ最適化"
