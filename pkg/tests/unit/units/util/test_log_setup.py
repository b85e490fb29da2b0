import logging
from collections.abc import Iterator

import pytest

from units.util import LOG_ENV_VAR, configure_logging


@pytest.fixture(autouse=True)
def restore_root_level() -> Iterator[None]:
    root = logging.getLogger()
    level, handlers = root.level, list(root.handlers)
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_default_is_warning() -> None:
    assert configure_logging({}) == logging.WARNING
    assert logging.getLogger().level == logging.WARNING


def test_level_from_env() -> None:
    assert configure_logging({LOG_ENV_VAR: "debug"}) == logging.DEBUG
    assert logging.getLogger().level == logging.DEBUG


def test_blank_value_is_warning() -> None:
    assert configure_logging({LOG_ENV_VAR: "  "}) == logging.WARNING


def test_unknown_level_warns(capsys: pytest.CaptureFixture[str]) -> None:
    level = configure_logging({LOG_ENV_VAR: "chatty"})
    assert level == logging.WARNING
    assert "CHATTY" in capsys.readouterr().err
