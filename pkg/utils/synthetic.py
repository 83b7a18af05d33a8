"""
Synthetic retrieval datasets with a known document-space map

Documents live around unit cluster centers in the strong space. The weak
document space is a seeded orthonormal projection of it plus noise, so a
linear adapter that recovers the projection exists by construction.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from utils.adapter_core import Adapter, save_adapter
from utils.embedding_store import (
    EmbeddingSet, RelevanceJudgments, TaskTag, save_embeddings, save_qrels, save_tags
)
from utils.exceptions import SyntheticSpecError
from utils.rng import keyed_rng

logger = logging.getLogger('radapt.store')

DUPLICATE_NOISE = 0.05


@dataclass(frozen=True)
class SyntheticSpec:
    n_docs: int
    n_queries: int
    strong_dim: int
    weak_dim: int
    noise_sigma: float
    cluster_count: int
    seed: int = 0
    cluster_spread: float = 1.5
    weak_query_noise: float = 1.0
    instruction_shift: float = 0.0
    near_duplicate_rate: float = 0.0
    task_count: int = 2
    group_count: int = 2
    identity_projection: bool = False

    def __post_init__(self):
        for name in ('n_docs', 'n_queries', 'strong_dim', 'weak_dim', 'cluster_count', 'task_count', 'group_count'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise SyntheticSpecError(f"{name} must be a positive integer, got {value}")
        if self.weak_dim > self.strong_dim:
            raise SyntheticSpecError(f"weak_dim {self.weak_dim} exceeds strong_dim {self.strong_dim}")
        if self.group_count > self.task_count:
            raise SyntheticSpecError("group_count cannot exceed task_count")
        if self.task_count > self.n_docs:
            raise SyntheticSpecError("every task needs at least one document")
        for name in ('noise_sigma', 'cluster_spread', 'weak_query_noise', 'instruction_shift'):
            if getattr(self, name) < 0:
                raise SyntheticSpecError(f"{name} must be non-negative")
        if not 0.0 <= self.near_duplicate_rate <= 1.0:
            raise SyntheticSpecError("near_duplicate_rate must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    spec: SyntheticSpec
    strong_queries: EmbeddingSet
    strong_docs: EmbeddingSet
    weak_docs: EmbeddingSet
    weak_queries: EmbeddingSet
    qrels: RelevanceJudgments
    tags: TaskTag
    ground_truth_map: np.ndarray

    def save(self, directory: Union[str, Path]) -> Dict[str, Path]:
        """Write every artifact under directory; returns name -> path"""
        directory = Path(directory)
        paths = {
            'strong_queries': directory / 'strong_queries.erae',
            'strong_docs': directory / 'strong_docs.erae',
            'weak_docs': directory / 'weak_docs.erae',
            'weak_queries': directory / 'weak_queries.erae',
            'qrels': directory / 'qrels.txt',
            'tags': directory / 'tags.tsv',
            'ground_truth': directory / 'ground_truth.eraw',
        }
        for name in ('strong_queries', 'strong_docs', 'weak_docs', 'weak_queries'):
            save_embeddings(getattr(self, name), paths[name])
        save_qrels(self.qrels, paths['qrels'])
        save_tags(self.tags, paths['tags'])
        save_adapter(Adapter(self.ground_truth_map, {'synthetic_spec': asdict(self.spec)}), paths['ground_truth'])
        return paths


def _noise(rng: np.random.Generator, rows: int, dim: int, sigma: float) -> np.ndarray:
    # expected row norm is sigma
    return sigma * rng.standard_normal((rows, dim)) / np.sqrt(dim)


def _unit(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def _projection(spec: SyntheticSpec) -> np.ndarray:
    if spec.identity_projection:
        return np.eye(spec.strong_dim, spec.weak_dim)
    gaussian = keyed_rng(spec.seed, 'synthetic', 'projection').standard_normal((spec.strong_dim, spec.weak_dim))
    q, r = np.linalg.qr(gaussian)
    return q * np.sign(np.diag(r))


def _ids(prefix: str, count: int) -> Tuple[str, ...]:
    width = len(str(count))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(count))


def make_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic dataset from spec.seed: one positive document per query"""
    s = spec.strong_dim

    def stream(name: str) -> np.random.Generator:
        return keyed_rng(spec.seed, 'synthetic', name)

    centers = _unit(stream('centers').standard_normal((spec.cluster_count, s)))
    membership = stream('membership').integers(0, spec.cluster_count, size=spec.n_docs)
    docs = _unit(centers[membership] + _noise(stream('docs'), spec.n_docs, s, spec.cluster_spread))
    doc_ids = _ids('d', spec.n_docs)
    doc_task = np.arange(spec.n_docs) % spec.task_count

    sources = stream('sources').choice(spec.n_docs, size=spec.n_queries, replace=spec.n_queries > spec.n_docs)
    task_shift = _unit(stream('instructions').standard_normal((spec.task_count, s)))
    queries = _unit(docs[sources] + spec.instruction_shift * task_shift[doc_task[sources]]
                    + _noise(stream('queries'), spec.n_queries, s, spec.noise_sigma))
    query_ids = _ids('q', spec.n_queries)

    duplicate_count = int(round(spec.near_duplicate_rate * spec.n_queries))
    duplicate_sources = sources[:duplicate_count]
    if duplicate_count:
        duplicates = _unit(docs[duplicate_sources]
                           + _noise(stream('duplicates'), duplicate_count, s, DUPLICATE_NOISE))
        docs = np.vstack([docs, duplicates])
        doc_ids += _ids('dup', duplicate_count)
        doc_task = np.concatenate([doc_task, doc_task[duplicate_sources]])

    projection = _projection(spec)
    weak_docs = _unit(docs @ projection + _noise(stream('weak-docs'), len(doc_ids), spec.weak_dim, spec.noise_sigma))
    weak_queries = _unit(queries @ projection
                         + _noise(stream('weak-queries'), spec.n_queries, spec.weak_dim, spec.weak_query_noise))

    def label(task: int) -> Tuple[str, str]:
        return f"t{task}", f"g{task % spec.group_count}"

    assignment = {doc_id: label(int(t)) for doc_id, t in zip(doc_ids, doc_task)}
    assignment.update({qid: label(int(doc_task[src])) for qid, src in zip(query_ids, sources)})
    qrels = RelevanceJudgments({qid: {doc_ids[src]: 1} for qid, src in zip(query_ids, sources)})

    logger.info(f"Synthetic dataset: {spec.n_queries} queries, {len(doc_ids)} documents "
                f"({duplicate_count} near-duplicates), dims {s}/{spec.weak_dim}")
    return SyntheticDataset(
        spec=spec,
        strong_queries=EmbeddingSet('strong', s, query_ids, queries),
        strong_docs=EmbeddingSet('strong', s, doc_ids, docs),
        weak_docs=EmbeddingSet('weak', spec.weak_dim, doc_ids, weak_docs),
        weak_queries=EmbeddingSet('weak', spec.weak_dim, query_ids, weak_queries),
        qrels=qrels,
        tags=TaskTag(assignment),
        ground_truth_map=projection,
    )
