"""
最適化エンジン起動スクリプト

例:
    python run_optimizer.py optimize --config configs/rastrigin2d.cfg
    python run_optimizer.py resume --checkpoint output/run.ckpt
"""

import logging
import sys

from dotenv import load_dotenv

from src.asybo.cli import main
from src.asybo.core.config import setup_logging

# .envファイルから環境変数を読み込む
load_dotenv()

# ロギング設定
setup_logging()

logger = logging.getLogger(__name__)

if __name__ == "__main__":
    logger.info("asybo を起動します...")
    sys.exit(main())
