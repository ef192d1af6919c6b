from pathlib import Path
import os
from typing import Optional

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parents[1]

# 프로젝트 상위(.env) → 프로젝트 루트(.env) → setting/.env 순으로 환경 변수 읽기
load_dotenv(BASE_DIR.parent / ".env")
load_dotenv(BASE_DIR / ".env")
load_dotenv(BASE_DIR / "setting" / ".env")

APP_NAME = "comconceal"
APP_VERSION = "0.3.0"

LOG_LEVEL = os.environ.get("COMCONCEAL_LOG_LEVEL", "INFO").upper()
OUTPUT_ROOT = Path(os.environ.get("COMCONCEAL_OUTPUT_ROOT", str(BASE_DIR / "runs")))
TEMPLATE_DIR = BASE_DIR / "templates"
CONFIG_DIR = BASE_DIR / "configs"


def _read_threads() -> Optional[int]:
    raw = os.environ.get("COMCONCEAL_THREADS")
    if raw is None or not raw.strip():
        return None
    try:
        threads = int(raw)
    except ValueError as exc:
        raise RuntimeError(f"COMCONCEAL_THREADS 값이 정수가 아닙니다: {raw!r}") from exc
    if threads < 1:
        raise RuntimeError(f"COMCONCEAL_THREADS 는 1 이상이어야 합니다: {threads}")
    return threads


# None: keep the sweep config's own value
THREADS = _read_threads()
