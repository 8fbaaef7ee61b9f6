# src/asybo/protocols/__init__.py

"""
型安全性を向上させるためのプロトコル定義
"""
