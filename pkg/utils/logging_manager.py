"""
Logging Manager for the retrieval adapter toolkit
Named loggers per concern with rotating log files and a quiet console
"""
import json
import logging
import traceback
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from config.settings import CONSOLE_LOG_LEVEL, LOG_DIR, LOG_LEVEL

CONCERNS = ('store', 'training', 'mining', 'retrieval', 'errors', 'performance')


class LoggingManager:
    """Comprehensive logging manager; handlers attach on configure()"""

    def __init__(self, log_dir: str = LOG_DIR):
        self.log_dir = Path(log_dir)
        self.max_log_size_mb = 20
        self.backup_count = 3
        self.configured = False
        self._handlers: List[Tuple[logging.Logger, logging.Handler]] = []

        self.loggers = {concern: logging.getLogger(f'radapt.{concern}') for concern in CONCERNS}
        self.training_logger = self.loggers['training']
        self.error_logger = self.loggers['errors']
        self.performance_logger = self.loggers['performance']

    def configure(self, log_dir: Optional[str] = None, level: str = LOG_LEVEL,
                  console_level: str = CONSOLE_LOG_LEVEL, to_files: bool = True):
        """Setup file and console handlers; safe to call again with new settings"""
        self.shutdown()
        if log_dir:
            self.log_dir = Path(log_dir)

        root = logging.getLogger('radapt')
        root.setLevel(_level(level))

        if to_files:
            self._setup_file_handlers()
        self._setup_console_handler(console_level)
        self.configured = True
        root.debug(f"Logging configured (dir={self.log_dir}, level={level})")

    def _setup_file_handlers(self):
        """Rotating file handler per concern"""
        self.log_dir.mkdir(parents=True, exist_ok=True)

        detailed_formatter = logging.Formatter(
            '%(asctime)s | %(name)s | %(levelname)s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        for concern, concern_logger in self.loggers.items():
            handler = RotatingFileHandler(
                self.log_dir / f'{concern}.log',
                maxBytes=self.max_log_size_mb * 1024 * 1024,
                backupCount=self.backup_count,
                encoding='utf-8'
            )
            handler.setFormatter(detailed_formatter)
            concern_logger.addHandler(handler)
            self._handlers.append((concern_logger, handler))

    def _setup_console_handler(self, console_level: str):
        """Console logging for important messages only"""
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(logging.Formatter(
            '%(asctime)s | %(levelname)s | %(message)s',
            datefmt='%H:%M:%S'
        ))
        console_handler.setLevel(_level(console_level))
        root = logging.getLogger('radapt')
        root.addHandler(console_handler)
        self._handlers.append((root, console_handler))

    def shutdown(self):
        """Detach and close every handler this manager installed"""
        for owner, handler in self._handlers:
            owner.removeHandler(handler)
            handler.close()
        self._handlers = []
        self.configured = False

    def log_epoch(self, stage: str, record: Dict[str, Any]):
        """Log one epoch record as JSON"""
        self.training_logger.info(f"{stage} epoch | {json.dumps(record, sort_keys=True)}")

    def log_stage(self, stage: str, details: Dict[str, Any]):
        self.training_logger.info(f"{stage} | {json.dumps(details, sort_keys=True, default=str)}")

    def log_error(self, error: Exception, context: Optional[Dict[str, Any]] = None):
        """Log errors with context and stack trace"""
        error_info = {
            'error_type': type(error).__name__,
            'error_message': str(error),
            'timestamp': datetime.now().isoformat(),
            'context': context or {}
        }
        trace = ''.join(traceback.format_exception(type(error), error, error.__traceback__))
        self.error_logger.error(f"Error occurred: {json.dumps(error_info, default=str)}\n{trace}")


def _level(name: str) -> int:
    level = logging.getLevelName(str(name).upper())
    return level if isinstance(level, int) else logging.INFO


# Global logging manager instance
logging_manager = LoggingManager()
