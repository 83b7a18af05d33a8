"""
Centralized Error Handler for the radapt command line
Maps exceptions to categories, one-line diagnostics and exit codes
"""
import logging
import sys
from typing import Any, Dict, Optional, TextIO

from utils.exceptions import (
    AdapterFormatError, ConfigError, DimensionMismatchError, EmbeddingFormatError, MetricsError,
    MiningError, QrelsFormatError, RunFormatError, SplitError, StoreWriteError, SyntheticSpecError,
    TagFormatError, TrainingError
)
from utils.logging_manager import logging_manager

logger = logging.getLogger('radapt.errors')


class ErrorCategory:
    """Error categories with different handling approaches"""
    INPUT_ERROR = "input_error"             # malformed files
    VALIDATION_ERROR = "validation_error"   # inconsistent shapes, splits, metrics inputs
    CONFIG_ERROR = "config_error"           # bad flags or config values
    TRAINING_ERROR = "training_error"       # optimizer or stage failures
    IO_ERROR = "io_error"                   # missing files, unwritable outputs
    SYSTEM_ERROR = "system_error"           # out of memory and the like
    UNKNOWN_ERROR = "unknown_error"


class CliErrorHandler:
    """Centralized error handling for every subcommand"""

    def __init__(self):
        self.error_counts: Dict[str, Dict[str, int]] = {}
        self.error_messages = {
            ErrorCategory.INPUT_ERROR: {'title': 'input error', 'exit_code': 2,
                                        'help_text': 'check the file format of the named input'},
            ErrorCategory.VALIDATION_ERROR: {'title': 'validation error', 'exit_code': 3,
                                             'help_text': 'inputs are well-formed but inconsistent'},
            ErrorCategory.CONFIG_ERROR: {'title': 'configuration error', 'exit_code': 4,
                                         'help_text': 'check command-line flags and the config file'},
            ErrorCategory.TRAINING_ERROR: {'title': 'training error', 'exit_code': 5,
                                           'help_text': 'lower the learning rate or inspect the training log'},
            ErrorCategory.IO_ERROR: {'title': 'i/o error', 'exit_code': 6,
                                     'help_text': 'check paths and permissions'},
            ErrorCategory.SYSTEM_ERROR: {'title': 'system error', 'exit_code': 7,
                                         'help_text': 'the process ran out of resources'},
            ErrorCategory.UNKNOWN_ERROR: {'title': 'unexpected error', 'exit_code': 1,
                                          'help_text': 'see the error log for a stack trace'},
        }

    def categorize_error(self, error: Exception) -> str:
        """Categorize error based on type"""
        if isinstance(error, (EmbeddingFormatError, QrelsFormatError, RunFormatError, TagFormatError,
                              AdapterFormatError)):
            return ErrorCategory.INPUT_ERROR
        elif isinstance(error, (DimensionMismatchError, SplitError, MiningError, MetricsError)):
            return ErrorCategory.VALIDATION_ERROR
        elif isinstance(error, (ConfigError, SyntheticSpecError)):
            return ErrorCategory.CONFIG_ERROR
        elif isinstance(error, TrainingError):
            return ErrorCategory.TRAINING_ERROR
        elif isinstance(error, (StoreWriteError, FileNotFoundError, PermissionError, IsADirectoryError)):
            return ErrorCategory.IO_ERROR
        elif isinstance(error, UnicodeDecodeError):
            return ErrorCategory.INPUT_ERROR
        elif isinstance(error, (MemoryError, OSError)):
            return ErrorCategory.SYSTEM_ERROR
        return ErrorCategory.UNKNOWN_ERROR

    def exit_code(self, category: str) -> int:
        return self.error_messages.get(category, self.error_messages[ErrorCategory.UNKNOWN_ERROR])['exit_code']

    def get_user_friendly_message(self, error: Exception, category: str, command: Optional[str] = None) -> str:
        """One-line diagnostic"""
        info = self.error_messages.get(category, self.error_messages[ErrorCategory.UNKNOWN_ERROR])
        prefix = f"radapt {command}" if command else "radapt"
        detail = str(error) or type(error).__name__
        if category == ErrorCategory.UNKNOWN_ERROR:
            detail = f"{type(error).__name__}: {detail[:200]}"
        return f"{prefix}: {info['title']}: {detail} ({info['help_text']})"

    def handle_error(self, error: Exception, command: Optional[str] = None,
                     stream: Optional[TextIO] = None) -> int:
        """Log, report on stderr and return the exit code"""
        category = self.categorize_error(error)
        self._update_error_stats(category, error)
        self._log_error(error, category, command)
        print(self.get_user_friendly_message(error, category, command), file=stream or sys.stderr)
        return self.exit_code(category)

    def _update_error_stats(self, category: str, error: Exception):
        """Update error statistics for monitoring"""
        by_type = self.error_counts.setdefault(category, {})
        error_type = type(error).__name__
        by_type[error_type] = by_type.get(error_type, 0) + 1

    def _log_error(self, error: Exception, category: str, command: Optional[str]):
        """Log error with appropriate level"""
        error_info = {'category': category, 'command': command or 'unknown'}
        if category in (ErrorCategory.SYSTEM_ERROR, ErrorCategory.UNKNOWN_ERROR):
            logging_manager.log_error(error, error_info)
        elif category == ErrorCategory.TRAINING_ERROR:
            logger.warning(f"Training error: {error_info} {error}")
        else:
            logger.info(f"User error: {error_info} {error}")

    def get_error_statistics(self) -> Dict[str, Any]:
        """Get error statistics for monitoring"""
        total_errors = sum(sum(counts.values()) for counts in self.error_counts.values())
        return {
            'total_errors': total_errors,
            'by_category': dict(self.error_counts),
            'most_common': self._get_most_common_errors(),
        }

    def _get_most_common_errors(self) -> list:
        """Get most common errors across all categories"""
        all_errors = [
            {'category': category, 'type': error_type, 'count': count}
            for category, errors in self.error_counts.items()
            for error_type, count in errors.items()
        ]
        return sorted(all_errors, key=lambda x: x['count'], reverse=True)[:5]


# Global error handler instance
error_handler = CliErrorHandler()
