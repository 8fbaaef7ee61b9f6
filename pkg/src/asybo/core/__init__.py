"""
コア機能モジュール（設定・エラー処理・最適化ループ・チェックポイント）
"""
