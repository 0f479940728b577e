import logging
import os

LEVEL_ENV_VAR = 'CANOPY_LOG_LEVEL'


class Logger:
    _loggers = {}

    @staticmethod
    def default_level():
        """Level named by ``CANOPY_LOG_LEVEL`` (e.g. 'INFO'), DEBUG if unset or unknown."""
        name = os.environ.get(LEVEL_ENV_VAR, 'DEBUG').upper()
        level = logging.getLevelName(name)
        return level if isinstance(level, int) else logging.DEBUG

    @staticmethod
    def get_logger(name: str, level=None) -> logging.Logger:
        """
        Returns a configured logger instance with the specified name and log level.

        Args:
            name (str): The name of the logger.
            level (int, optional): The logging level (e.g., logging.INFO). Defaults to `Logger.default_level()`.

        Returns:
            logging.Logger: Configured logger.
        """
        logger = logging.getLogger(name)
        level = Logger.default_level() if level is None else level

        # Avoid adding handlers if the logger is already configured
        if not logger.handlers:
            logger.setLevel(level)
            console_handler = logging.StreamHandler()
            console_handler.setLevel(logging.DEBUG)
            console_handler.setFormatter(ColorFormatter('%(asctime)s %(message)s', datefmt='[%H:%M:%S]'))
            logger.addHandler(console_handler)
            logger.propagate = False

        Logger._loggers[name] = logger
        return logger

    @staticmethod
    def set_level(level):
        """Sets the level of every logger handed out by the factory (CLI --verbose/--quiet)."""
        for logger in Logger._loggers.values():
            logger.setLevel(level)


class ColorFormatter(logging.Formatter):
    COLORS = {
        logging.DEBUG: "\033[37m",  # White
        logging.INFO: "\033[32m",   # Green
        logging.WARNING: "\033[33m",  # Yellow
        logging.ERROR: "\033[31m",    # Red
        logging.CRITICAL: "\033[41m", # Red background
    }
    RESET = "\033[0m"

    def format(self, record):
        log_color = self.COLORS.get(record.levelno, self.RESET)
        message = super().format(record)
        return f"{log_color}{message}{self.RESET}"
