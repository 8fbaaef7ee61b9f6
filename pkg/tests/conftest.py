"""
テスト共通のフィクスチャ
"""

import pytest

from src.asybo.evaluation.clock import VirtualClock

from tests.support import ScriptedBackend, make_config


@pytest.fixture
def virtual_clock():
    """仮想時計"""
    return VirtualClock()


@pytest.fixture
def scripted_backend():
    """既定では即座に sum(x) を返すスクリプト化バックエンド"""
    return ScriptedBackend()


@pytest.fixture
def small_config():
    """2 次元・予算 12 の小さな実行設定"""
    return make_config()
