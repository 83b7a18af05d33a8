"""
Commands package for the radapt command line
Contains the subcommand groups
"""

from .stages import StageCommands
from .evaluation import EvaluationCommands

__all__ = [
    'StageCommands',
    'EvaluationCommands'
]
