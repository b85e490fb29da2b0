from __future__ import annotations

from .log_setup import LOG_ENV_VAR, configure_logging
from .rng import make_rng

__all__ = ["LOG_ENV_VAR", "configure_logging", "make_rng"]
