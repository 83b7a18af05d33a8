"""
Dataset splits and alignment-document sampling
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Collection, Dict, List, Optional, Sequence, Union

from config.settings import DEFAULT_SEED, MAX_TRAIN_RATIO, TEST_RATIO, VAL_RATIO
from utils.embedding_store import TaskTag
from utils.exceptions import SplitError, StoreWriteError
from utils.rng import keyed_rng, stable_hash

logger = logging.getLogger('radapt.store')

MIN_TASK_QUERIES = 3


def _ceil(x: float) -> int:
    # guards 0.1 * 30 = 3.0000000000000004
    return math.ceil(x - 1e-9)


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float
    seed: int = DEFAULT_SEED
    val_ratio: float = VAL_RATIO
    test_ratio: float = TEST_RATIO

    def __post_init__(self):
        if not 0.0 < self.train_ratio <= MAX_TRAIN_RATIO:
            raise SplitError(f"train_ratio must lie in (0, {MAX_TRAIN_RATIO}], got {self.train_ratio}")
        if self.train_ratio + self.val_ratio + self.test_ratio > 1.0 + 1e-9:
            raise SplitError("train + val + test ratios exceed 1")


@dataclass
class Splits:
    train: List[str]
    val: List[str]
    test: List[str]
    test_only_tasks: List[str] = field(default_factory=list)
    spec: Optional[SplitSpec] = None

    def to_dict(self) -> Dict:
        return {
            'train': self.train,
            'val': self.val,
            'test': self.test,
            'test_only_tasks': self.test_only_tasks,
            'spec': asdict(self.spec) if self.spec else None,
        }


def split_dataset(query_ids: Sequence[str], tags: TaskTag, spec: SplitSpec) -> Splits:
    """Per task: keyed-hash order, first half test, next tenth val, then train"""
    ids = list(query_ids)
    if len(set(ids)) != len(ids):
        raise SplitError("query ids are not unique")
    untagged = [qid for qid in ids if qid not in tags]
    if untagged:
        raise SplitError(f"{len(untagged)} untagged queries, e.g. {untagged[0]!r}")

    train: List[str] = []
    val: List[str] = []
    test: List[str] = []
    test_only: List[str] = []
    for task, members in sorted(tags.by_task(ids).items()):
        ordered = sorted(members, key=lambda qid: (stable_hash('split', spec.seed, qid), qid))
        n = len(ordered)
        if n < MIN_TASK_QUERIES:
            logger.warning(f"task {task!r} has {n} queries; assigned to test only")
            test_only.append(task)
            test += ordered
            continue
        n_test = _ceil(spec.test_ratio * n)
        n_val = _ceil(spec.val_ratio * n)
        remainder = ordered[n_test + n_val:]
        test += ordered[:n_test]
        val += ordered[n_test:n_test + n_val]
        train += remainder[:min(_ceil(spec.train_ratio * n), len(remainder))]

    logger.info(f"Split {len(ids)} queries: {len(train)} train, {len(val)} val, {len(test)} test")
    return Splits(sorted(train), sorted(val), sorted(test), test_only, spec)


def sample_alignment_docs(corpus_ids: Sequence[str], tags: TaskTag, per_task: int, seed: int = DEFAULT_SEED,
                          groups: Optional[Collection[str]] = None) -> List[str]:
    """Up to per_task unlabeled documents from each task, uniform without replacement"""
    if int(per_task) != per_task or per_task < 1:
        raise SplitError(f"per_task must be a positive integer, got {per_task}")
    if not corpus_ids:
        raise SplitError("empty corpus")
    untagged = [doc_id for doc_id in corpus_ids if doc_id not in tags]
    if untagged:
        raise SplitError(f"{len(untagged)} untagged documents, e.g. {untagged[0]!r}")

    selected: List[str] = []
    for task, members in sorted(tags.by_task(sorted(set(corpus_ids))).items()):
        if groups is not None and tags.group(members[0]) not in groups:
            continue
        size = min(int(per_task), len(members))
        picks = keyed_rng(seed, 'alignment', task).choice(len(members), size=size, replace=False)
        selected += [members[i] for i in picks]
    if not selected:
        raise SplitError("no alignment documents in the selected groups")
    return selected


def save_splits(splits: Splits, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(splits.to_dict(), sort_keys=True, indent=2) + '\n', encoding='utf-8')
    except OSError as e:
        raise StoreWriteError(f"cannot write splits {path}: {e}") from e


def load_splits(path: Union[str, Path]) -> Splits:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
        spec = SplitSpec(**data['spec']) if data.get('spec') else None
        return Splits(data['train'], data['val'], data['test'], data.get('test_only_tasks', []), spec)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise SplitError(f"{path}: malformed splits file ({e})") from None
