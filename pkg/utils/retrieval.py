"""
Brute-force dense retrieval
Exhaustive cosine scan in zero-shot, symmetric-adapter and asymmetric-adapter modes
"""
import logging
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.settings import RETRIEVAL_DEPTH
from utils.adapter_core import Adapter, apply_adapter_rows, normalize_rows
from utils.embedding_store import EmbeddingSet, RetrievalRun
from utils.exceptions import DimensionMismatchError
from utils.monitoring import performance_tracker

logger = logging.getLogger('radapt.retrieval')

QUERY_BLOCK = 512


def _unit_docs(docs: EmbeddingSet) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Documents reordered by ascending id so index order breaks ties"""
    order = sorted(range(len(docs)), key=lambda i: docs.ids[i])
    ids = tuple(docs.ids[i] for i in order)
    unit, degenerate = normalize_rows(docs.vectors[order].reshape(len(order), docs.dim))
    unit[degenerate] = 0.0
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} zero document vectors score 0 against every query")
    return ids, unit


def query_side(queries: EmbeddingSet, adapter: Optional[Adapter], doc_dim: int) -> np.ndarray:
    """Unit query vectors in document space; degenerate rows become zero"""
    if adapter is None:
        if queries.dim != doc_dim:
            raise DimensionMismatchError(
                f"zero-shot retrieval needs equal dims, got queries {queries.dim} and docs {doc_dim}")
        unit, degenerate = normalize_rows(queries.vectors)
    else:
        if adapter.query_dim != queries.dim or adapter.doc_dim != doc_dim:
            raise DimensionMismatchError(
                f"adapter is ({adapter.query_dim} -> {adapter.doc_dim}), data is "
                f"({queries.dim} -> {doc_dim})")
        unit, degenerate = apply_adapter_rows(adapter, queries.vectors)
    unit[degenerate] = 0.0
    return unit


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores, descending, ties by ascending index"""
    if k >= scores.shape[0]:
        return np.lexsort((np.arange(scores.shape[0]), -scores))
    kth = np.partition(-scores, k - 1)[k - 1]
    candidates = np.flatnonzero(-scores <= kth)
    ranked = candidates[np.argsort(-scores[candidates], kind='stable')]
    return ranked[:k]


def retrieve_topk(queries: EmbeddingSet, docs: EmbeddingSet, adapter: Optional[Adapter] = None,
                  k: int = RETRIEVAL_DEPTH) -> RetrievalRun:
    """Top-k documents per query by cosine similarity, exhaustive scan"""
    if int(k) != k or k < 1:
        raise DimensionMismatchError(f"k must be a positive integer, got {k}")
    mode = 'zero-shot' if adapter is None else 'adapter'

    with performance_tracker.timed('retrieve', mode=mode, queries=len(queries), docs=len(docs)):
        doc_ids, doc_matrix = _unit_docs(docs)
        query_matrix = query_side(queries, adapter, docs.dim)

        rankings: Dict[str, Tuple[Tuple[str, float], ...]] = {}
        if doc_ids:
            for start in range(0, len(queries), QUERY_BLOCK):
                block = query_matrix[start:start + QUERY_BLOCK] @ doc_matrix.T
                for offset, scores in enumerate(block):
                    qid = queries.ids[start + offset]
                    best = top_k_indices(scores, int(k))
                    rankings[qid] = tuple((doc_ids[i], float(scores[i])) for i in best)
        else:
            rankings = {qid: () for qid in queries.ids}

    logger.info(f"Retrieved top-{k} for {len(rankings)} queries over {len(doc_ids)} documents ({mode})")
    return RetrievalRun(rankings)


def score_pairs(queries: EmbeddingSet, docs: EmbeddingSet, pairs: Sequence[Tuple[str, str]],
                adapter: Optional[Adapter] = None) -> Mapping[Tuple[str, str], float]:
    """Cosine similarity of explicit (query, doc) pairs under the same scoring as retrieve_topk"""
    if not pairs:
        return {}
    q_rows = query_side(queries.subset(sorted({q for q, _ in pairs})), adapter, docs.dim)
    q_index = {qid: i for i, qid in enumerate(sorted({q for q, _ in pairs}))}
    d_subset = docs.subset(sorted({d for _, d in pairs}))
    d_rows, degenerate = normalize_rows(d_subset.vectors)
    d_rows[degenerate] = 0.0
    d_index = {doc_id: i for i, doc_id in enumerate(d_subset.ids)}
    return {(q, d): float(q_rows[q_index[q]] @ d_rows[d_index[d]]) for q, d in pairs}
