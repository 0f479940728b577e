import logging

import pytest

from src.logger import LEVEL_ENV_VAR, ColorFormatter, Logger


def test_level_from_environment(monkeypatch):
    monkeypatch.setenv(LEVEL_ENV_VAR, 'warning')
    assert Logger.default_level() == logging.WARNING
    monkeypatch.setenv(LEVEL_ENV_VAR, 'chatty')
    assert Logger.default_level() == logging.DEBUG


def test_logger_is_configured_once():
    logger = Logger.get_logger('tests.logger.once')
    again = Logger.get_logger('tests.logger.once')
    assert logger is again
    assert len(logger.handlers) == 1
    assert not logger.propagate


def test_set_level_applies_to_all_loggers():
    a, b = Logger.get_logger('tests.logger.a'), Logger.get_logger('tests.logger.b')
    Logger.set_level(logging.ERROR)
    assert a.level == logging.ERROR and b.level == logging.ERROR
    Logger.set_level(logging.DEBUG)


def test_color_formatter_wraps_message():
    record = logging.LogRecord('x', logging.ERROR, __file__, 1, 'boom', None, None)
    text = ColorFormatter('%(message)s').format(record)
    assert text == f"{ColorFormatter.COLORS[logging.ERROR]}boom{ColorFormatter.RESET}"


if __name__ == '__main__':
    pytest.main(["-v", __file__])
