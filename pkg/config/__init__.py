"""
Configuration package for the retrieval adapter toolkit
Contains toolkit defaults and settings
"""

from .settings import (
    LOG_DIR,
    LOG_LEVEL,
    CONSOLE_LOG_LEVEL,
    DEFAULT_SEED,
    NORM_EPS,
    INFONCE_TEMPERATURE,
    TRIPLET_MARGIN,
    ALIGNMENT_DEFAULTS,
    ADAPTATION_DEFAULTS,
    EMBEDDING_ADAPTER_DEFAULTS,
    MINING_POOL_SIZE,
    MINING_PERC,
    NEGATIVES_PER_QUERY,
    ALIGNMENT_DOCS_PER_TASK,
    VAL_RATIO,
    TEST_RATIO,
    RETRIEVAL_DEPTH,
    METRIC_NAMES,
    load_config_file,
    normalize_key
)

__all__ = [
    'LOG_DIR',
    'LOG_LEVEL',
    'CONSOLE_LOG_LEVEL',
    'DEFAULT_SEED',
    'NORM_EPS',
    'INFONCE_TEMPERATURE',
    'TRIPLET_MARGIN',
    'ALIGNMENT_DEFAULTS',
    'ADAPTATION_DEFAULTS',
    'EMBEDDING_ADAPTER_DEFAULTS',
    'MINING_POOL_SIZE',
    'MINING_PERC',
    'NEGATIVES_PER_QUERY',
    'ALIGNMENT_DOCS_PER_TASK',
    'VAL_RATIO',
    'TEST_RATIO',
    'RETRIEVAL_DEPTH',
    'METRIC_NAMES',
    'load_config_file',
    'normalize_key'
]
