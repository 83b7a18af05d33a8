"""
Configuration settings for the retrieval adapter toolkit
Contains all constants, environment variables, and configuration options
"""
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values, load_dotenv

# Load environment variables
load_dotenv('radapt.env')

# Runtime configuration
LOG_DIR = os.getenv('RADAPT_LOG_DIR', 'logs')
LOG_LEVEL = os.getenv('RADAPT_LOG_LEVEL', 'INFO')
CONSOLE_LOG_LEVEL = os.getenv('RADAPT_CONSOLE_LEVEL', 'WARNING')
DEFAULT_SEED = int(os.getenv('RADAPT_SEED', '0'))

# Numerics
NORM_EPS = 1e-12                # norm floor below which a vector is degenerate
UNIT_NORM_TOLERANCE = 1e-9
FIT_EPS = 1e-12                 # residual at or below which an alignment pair counts as exactly fit

# Losses
INFONCE_TEMPERATURE = 0.05
TRIPLET_MARGIN = 0.2            # artifact default, no published value
DEFAULT_LOSS = 'infonce'

# AdamW
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Alignment stage: fixed 100 epochs, constant lr
ALIGNMENT_DEFAULTS = {
    'learning_rate': 1e-3,
    'weight_decay': 1e-2,
    'batch_size': 256,
    'max_epochs': 100,
    'patience': None,
    'warmup_fraction': 0.0,
}

# Adaptation stage: early stopping on validation loss, warmup over 10% of steps
ADAPTATION_DEFAULTS = {
    'learning_rate': 1e-5,
    'weight_decay': 1e-4,
    'batch_size': 256,
    'max_epochs': 1000,
    'patience': 5,
    'warmup_fraction': 0.1,
}

# Adapter-only baseline (no alignment stage), tuned separately
EMBEDDING_ADAPTER_DEFAULTS = dict(ADAPTATION_DEFAULTS, learning_rate=1e-3, weight_decay=1e-4)

# Negative mining
MINING_POOL_SIZE = 100
MINING_PERC = 0.95
NEGATIVES_PER_QUERY = 5
DEFAULT_SAMPLER = 'topk_percpos'

# Data protocol
ALIGNMENT_DOCS_PER_TASK = 1000
VAL_RATIO = 0.10
TEST_RATIO = 0.50
MAX_TRAIN_RATIO = 0.40
DEFAULT_TRAIN_RATIO = 0.20

# Evaluation
RETRIEVAL_DEPTH = 100
NDCG_CUTOFF = 10
RECALL_CUTOFF = 100
MAP_CUTOFF = 100
MRR_CUTOFF = 100
METRIC_NAMES = ('ndcg_at_10', 'recall_at_100', 'map_at_100', 'mrr_at_100')

# File formats
EMBEDDING_MAGIC = b'ERAE'
ADAPTER_MAGIC = b'ERAW'
FORMAT_VERSION = 1

# Performance monitoring
SLOW_STAGE_SECONDS = 60.0


def normalize_key(key: str) -> str:
    """Normalise a config key so `Train-Ratio` and `train_ratio` match"""
    return key.strip().lower().replace('-', '_')


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Read a key=value config file; flags given on the command line win over it"""
    if not path:
        return {}

    config_path = Path(path)
    if not config_path.is_file():
        from utils.exceptions import ConfigError
        raise ConfigError(f"config file not found: {config_path}")

    values = dotenv_values(config_path)
    return {normalize_key(key): value for key, value in values.items() if value is not None}
