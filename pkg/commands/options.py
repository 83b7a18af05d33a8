"""
Shared option handling for subcommands
Flag > config file > default, plus common loaders for input files
"""
import argparse
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from config.settings import DEFAULT_SEED, load_config_file, normalize_key
from utils.embedding_store import EmbeddingSet, load_embeddings
from utils.exceptions import ConfigError
from utils.optimizer import TrainConfig


def add_common_arguments(parser: argparse.ArgumentParser):
    """Flags every subcommand accepts"""
    parser.add_argument('--config', help='key=value config file; flags override its values')
    parser.add_argument('--seed', type=int, help=f'random seed (default {DEFAULT_SEED})')
    parser.add_argument('--log-dir', help='directory for rotating log files')
    parser.add_argument('--log-level', help='file log level (DEBUG, INFO, ...)')
    parser.add_argument('--no-log-files', action='store_true', help='log to the console only')


def add_training_arguments(parser: argparse.ArgumentParser, with_early_stopping: bool = True):
    parser.add_argument('--lr', type=float, help='learning rate')
    parser.add_argument('--wd', type=float, help='decoupled weight decay')
    parser.add_argument('--batch-size', type=int)
    parser.add_argument('--epochs', type=int, help='maximum epochs')
    parser.add_argument('--warmup', type=float, help='warmup fraction of total steps')
    if with_early_stopping:
        parser.add_argument('--patience', type=int, help='early-stopping patience; 0 disables')
        parser.add_argument('--loss', choices=('infonce', 'triplet'))
        parser.add_argument('--temperature', type=float)
        parser.add_argument('--margin', type=float)


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off', ''):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


class Options:
    """Resolved view over argparse flags and the config file"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_values: Dict[str, str] = load_config_file(getattr(args, 'config', None))

    def get(self, name: str, default: Any = None, cast: Callable[[Any], Any] = None) -> Any:
        flag = getattr(self.args, name, None)
        if flag is not None and flag is not False:
            return flag
        key = normalize_key(name)
        if key in self.file_values:
            raw = self.file_values[key]
            if cast is None and default is not None:
                cast = _to_bool if isinstance(default, bool) else type(default)
            try:
                return cast(raw) if cast else raw
            except ValueError as e:
                raise ConfigError(f"config value {key}={raw!r}: {e}") from None
        return default

    def require(self, name: str, cast: Callable[[Any], Any] = None) -> Any:
        value = self.get(name, None, cast)
        if value is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required (flag or config file)")
        return value

    def get_list(self, name: str) -> Optional[List[str]]:
        """Comma-separated list, or None when unset"""
        value = self.get(name)
        if value is None:
            return None
        if isinstance(value, (list, tuple)):
            return [str(v) for v in value]
        return [part.strip() for part in str(value).split(',') if part.strip()]

    @property
    def seed(self) -> int:
        return self.get('seed', DEFAULT_SEED, int)

    def train_config(self, base: TrainConfig) -> TrainConfig:
        """Apply training overrides on top of a stage's defaults"""
        overrides = {
            'learning_rate': self.get('lr', None, float),
            'weight_decay': self.get('wd', None, float),
            'batch_size': self.get('batch_size', None, int),
            'max_epochs': self.get('epochs', None, int),
            'warmup_fraction': self.get('warmup', None, float),
            'loss': self.get('loss'),
            'temperature': self.get('temperature', None, float),
            'margin': self.get('margin', None, float),
            'seed': self.seed,
        }
        patience = self.get('patience', None, int)
        if patience is not None:
            overrides['patience'] = patience or None
        return base.updated(**{k: v for k, v in overrides.items() if v is not None})


def embedding_format(path: str, fmt: Optional[str] = None) -> str:
    if fmt:
        return fmt
    return 'lines' if Path(path).suffix in ('.jsonl', '.ndjson') else 'packed'


def read_embeddings(options: Options, name: str) -> EmbeddingSet:
    path = options.require(name)
    return load_embeddings(path, embedding_format(path, options.get('format')))
