"""
radapt - Main Entry Point
Linear retrieval adapters between query and document embedding spaces
"""
import argparse
import sys
from typing import List, Optional

from config.settings import CONSOLE_LOG_LEVEL, LOG_DIR, LOG_LEVEL
from commands import EvaluationCommands, StageCommands
from commands.options import Options
from utils.error_handler import error_handler
from utils.logging_manager import logging_manager
from utils.monitoring import performance_tracker


class RadaptCli:
    """Builds the argument parser from the command groups and dispatches"""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog='radapt',
            description='Train and evaluate linear adapters between embedding spaces',
        )
        subparsers = self.parser.add_subparsers(dest='command', required=True)
        for group in (StageCommands(), EvaluationCommands()):
            group.register(subparsers)

    def run(self, argv: Optional[List[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as exit_request:
            return int(exit_request.code or 0)

        try:
            options = Options(args)
            logging_manager.configure(
                log_dir=options.get('log_dir', LOG_DIR),
                level=options.get('log_level', LOG_LEVEL),
                console_level=CONSOLE_LOG_LEVEL,
                to_files=not options.get('no_log_files', False),
            )
            with performance_tracker.timed(args.command):
                return args.handler(options)
        except KeyboardInterrupt:
            print("radapt: interrupted", file=sys.stderr)
            return 130
        except Exception as e:
            return error_handler.handle_error(e, args.command)
        finally:
            logging_manager.log_stage('session', {
                **performance_tracker.get_performance_summary(),
                'errors': error_handler.get_error_statistics(),
            })
            logging_manager.shutdown()


def main(argv: Optional[List[str]] = None) -> int:
    """Main function to run the command line"""
    return RadaptCli().run(argv)


if __name__ == '__main__':
    sys.exit(main())
