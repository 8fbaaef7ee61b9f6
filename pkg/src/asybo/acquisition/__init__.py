"""
獲得関数とインフィル点の選択
"""
