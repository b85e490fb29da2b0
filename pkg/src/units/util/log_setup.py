from __future__ import annotations

import logging
import os

LOG_ENV_VAR = "UNITS_LOG"
_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(env: dict[str, str] | None = None) -> int:
    """Configure the root logger from `UNITS_LOG` (a level name, default WARNING)."""

    env = os.environ if env is None else env
    raw = env.get(LOG_ENV_VAR, "WARNING").strip().upper() or "WARNING"
    level = logging.getLevelNamesMapping().get(raw)
    logging.basicConfig(level=level or logging.WARNING, format=_FORMAT, force=True)
    if level is None:
        logging.getLogger(__name__).warning(
            "%s=%r is not a log level; using WARNING", LOG_ENV_VAR, raw
        )
        return logging.WARNING
    return level
