"""라우터 공용: 예외 → 종료 코드 변환, 인자 파서 보조."""

from __future__ import annotations

import functools
import json
import logging
from argparse import ArgumentTypeError, Namespace
from pathlib import Path
from typing import Any, Callable, List, Optional

from service.errors import ComconcealError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CELL_FAILURES = 1
EXIT_INVALID_INPUT = 2
EXIT_IO_ERROR = 3

Handler = Callable[[Namespace], Optional[int]]


def guarded(handler: Handler) -> Callable[[Namespace], int]:
    """서비스 예외를 종료 코드로 바꾼다 (HTTP 라우터가 상태 코드로 바꾸듯)."""

    @functools.wraps(handler)
    def wrapper(args: Namespace) -> int:
        try:
            code = handler(args)
        except ComconcealError as exc:
            logger.error("%s: %s", type(exc).__name__, exc)
            return EXIT_INVALID_INPUT
        except OSError as exc:
            logger.error("I/O error: %s", exc)
            return EXIT_IO_ERROR
        return EXIT_OK if code is None else code

    return wrapper


def int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _json_default(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    return str(value)


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path
