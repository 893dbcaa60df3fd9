"""
Tests for the logging setup: context fields, formatting and level resolution.
"""

import logging

import pytest

from config.logger import LOG_FORMAT, CustomFilter, CustomFormatter, get_log_level, get_logger


def _record(msg: str = "solved", level: int = logging.INFO, **fields) -> logging.LogRecord:
    record = logging.LogRecord("kinetic.test", level, __file__, 1, msg, None, None)
    for name, value in fields.items():
        setattr(record, name, value)
    return record


class TestCustomFilter:
    """Block and epsilon context on every record."""

    def test_missing_fields_show_dash(self):
        record = _record()
        assert CustomFilter().filter(record)
        assert record.block == "-"
        assert record.epsilon == "-"

    def test_epsilon_is_rendered_in_scientific_notation(self):
        record = _record(block=55, epsilon=5e-3)
        CustomFilter().filter(record)
        assert record.block == 55
        assert record.epsilon == "5.0e-03"

    def test_second_pass_keeps_rendered_epsilon(self):
        record = _record(epsilon=0.1)
        CustomFilter().filter(record)
        CustomFilter().filter(record)
        assert record.epsilon == "1.0e-01"


class TestCustomFormatter:
    """Plain and colored output of the shared format."""

    def test_plain_output_carries_context(self):
        record = _record(block=7, epsilon=1e-2)
        CustomFilter().filter(record)
        out = CustomFormatter(LOG_FORMAT, use_color=False).format(record)
        assert "[INFO]" in out
        assert "block=7 eps=1.0e-02 - solved" in out
        assert "\x1b[" not in out

    def test_colored_output_by_level(self):
        record = _record(level=logging.WARNING)
        CustomFilter().filter(record)
        out = CustomFormatter(LOG_FORMAT).format(record)
        assert out.startswith(CustomFormatter.yellow)
        assert out.endswith(CustomFormatter.reset)


class TestLogLevel:
    """GMSFEM_LOG_LEVEL resolution and logger wiring."""

    @pytest.mark.parametrize("name, level", [("debug", logging.DEBUG), ("WARNING", logging.WARNING)])
    def test_level_from_environment(self, monkeypatch, name, level):
        monkeypatch.setenv("GMSFEM_LOG_LEVEL", name)
        assert get_log_level() == level

    def test_unknown_level_falls_back_to_info(self, monkeypatch):
        monkeypatch.setenv("GMSFEM_LOG_LEVEL", "chatty")
        assert get_log_level() == logging.INFO

    def test_logger_fills_context(self, caplog):
        logger = get_logger("kinetic.test.context")
        with caplog.at_level(logging.INFO, logger="kinetic.test.context"):
            logger.info("block done", extra={"block": 3, "epsilon": 1e-3})
            logger.info("no context")
        first, second = caplog.records[-2:]
        assert (first.block, first.epsilon) == (3, "1.0e-03")
        assert (second.block, second.epsilon) == ("-", "-")

    def test_one_handler_per_logger(self):
        logger = get_logger("kinetic.test.handlers")
        get_logger("kinetic.test.handlers")
        assert len(logger.handlers) == 1
