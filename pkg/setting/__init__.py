"""Setting 패키지: 환경 변수와 스윕 설정 모델."""

from .config import APP_NAME, APP_VERSION, CONFIG_DIR, LOG_LEVEL, OUTPUT_ROOT, TEMPLATE_DIR, THREADS

__all__ = (
    "APP_NAME",
    "APP_VERSION",
    "CONFIG_DIR",
    "LOG_LEVEL",
    "OUTPUT_ROOT",
    "TEMPLATE_DIR",
    "THREADS",
)
