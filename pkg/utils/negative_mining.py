"""
Negative mining for the adaptation stage

Three strategies: TopK-PercPos (hard negatives below a fraction of the
positive score), naive top-k, and uniform random sampling. All of them
exclude every grade > 0 document and are deterministic from (seed, query-id).
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from config.settings import DEFAULT_SEED, MINING_PERC, MINING_POOL_SIZE, NEGATIVES_PER_QUERY
from utils.embedding_store import RelevanceJudgments, RetrievalRun
from utils.exceptions import MiningError, StoreWriteError
from utils.rng import keyed_rng

logger = logging.getLogger('radapt.mining')

STRATEGIES = ('topk_percpos', 'naive_topk', 'random')


@dataclass(frozen=True)
class NegativeSet:
    """Per-query ordered negative document ids"""
    per_query: Mapping[str, List[str]]
    strategy: str
    params: Mapping[str, Any] = field(default_factory=dict)
    backfilled: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise MiningError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        object.__setattr__(self, 'per_query', {q: list(n) for q, n in self.per_query.items()})

    def __len__(self) -> int:
        return len(self.per_query)

    def __contains__(self, qid: str) -> bool:
        return qid in self.per_query

    def query_ids(self) -> List[str]:
        return sorted(self.per_query)

    def negatives(self, qid: str) -> List[str]:
        return self.per_query[qid]

    def check_against(self, qrels: RelevanceJudgments) -> None:
        """Raise if any negative is a judged positive"""
        for qid, negatives in self.per_query.items():
            leaked = set(negatives) & set(qrels.positives(qid))
            if leaked:
                raise MiningError(f"query {qid!r}: positives {sorted(leaked)} listed as negatives")


def _check_k(k: int):
    if int(k) != k or k < 1:
        raise MiningError(f"k must be a positive integer, got {k}")


def _mined_queries(qrels: RelevanceJudgments, query_ids: Optional[Iterable[str]]) -> List[str]:
    if query_ids is None:
        return [qid for qid in qrels.query_ids() if qrels.positives(qid)]
    selected = sorted(set(query_ids))
    for qid in selected:
        if not qrels.positives(qid):
            raise MiningError(f"query {qid!r} has no positive judgment")
    return selected


def _sample(pool: Sequence[str], count: int, seed: int, qid: str, stream: str) -> List[str]:
    """Uniform without replacement from a sorted pool, keyed by (seed, stream, query)"""
    picks = keyed_rng(seed, stream, qid).choice(len(pool), size=count, replace=False)
    return [pool[i] for i in picks]


def percpos_threshold(positive_score: float, perc: float) -> float:
    """Scores at or above this are treated as suspected false negatives"""
    return positive_score - (1.0 - perc) * abs(positive_score)


def mine_topk_percpos(run: RetrievalRun, qrels: RelevanceJudgments, pool_size: int = MINING_POOL_SIZE,
                      perc: float = MINING_PERC, k: int = NEGATIVES_PER_QUERY, *,
                      corpus_ids: Optional[Sequence[str]] = None,
                      positive_scores: Optional[Mapping[str, float]] = None,
                      seed: int = DEFAULT_SEED,
                      query_ids: Optional[Iterable[str]] = None) -> NegativeSet:
    """Hard negatives from the run with a false-negative guard, backfilled at random"""
    _check_k(k)
    if int(pool_size) != pool_size or pool_size < 1:
        raise MiningError(f"pool_size must be a positive integer, got {pool_size}")
    if not 0.0 < perc <= 1.0:
        raise MiningError(f"perc must lie in (0, 1], got {perc}")
    corpus = sorted(set(corpus_ids)) if corpus_ids is not None else []
    positive_scores = positive_scores or {}

    per_query: Dict[str, List[str]] = {}
    backfilled: Dict[str, int] = {}
    for qid in _mined_queries(qrels, query_ids):
        if qid not in run.rankings:
            raise MiningError(f"query {qid!r} absent from run")
        positives = set(qrels.positives(qid))
        ranked = run.rankings[qid]

        in_run = [score for doc_id, score in ranked if doc_id in positives]
        if in_run:
            positive_score = max(in_run)
        elif qid in positive_scores:
            positive_score = float(positive_scores[qid])
        else:
            raise MiningError(f"query {qid!r}: no positive in run and no positive score supplied")
        threshold = percpos_threshold(positive_score, perc)

        pool = [(doc_id, score) for doc_id, score in ranked[:pool_size] if doc_id not in positives]
        discarded = {doc_id for doc_id, score in pool if score >= threshold}
        chosen = [doc_id for doc_id, _ in pool if doc_id not in discarded][:k]

        if len(chosen) < k:
            excluded = positives | discarded | set(chosen)
            remaining = [doc_id for doc_id in corpus if doc_id not in excluded]
            need = k - len(chosen)
            if not remaining:
                raise MiningError(f"query {qid!r}: empty corpus for backfill")
            fill = _sample(remaining, min(need, len(remaining)), seed, qid, 'backfill')
            if len(fill) < need:
                logger.warning(f"query {qid!r}: only {len(chosen) + len(fill)} negatives available, wanted {k}")
            chosen += fill
            backfilled[qid] = len(fill)
        per_query[qid] = chosen

    if backfilled:
        logger.info(f"TopK-PercPos backfilled {sum(backfilled.values())} negatives over {len(backfilled)} queries")
    return NegativeSet(per_query, 'topk_percpos',
                       {'pool_size': int(pool_size), 'perc': float(perc), 'k': int(k), 'seed': int(seed)},
                       backfilled)


def mine_naive_topk(run: RetrievalRun, qrels: RelevanceJudgments, k: int = NEGATIVES_PER_QUERY, *,
                    query_ids: Optional[Iterable[str]] = None) -> NegativeSet:
    """Highest-scoring non-positive run entries"""
    _check_k(k)
    per_query: Dict[str, List[str]] = {}
    for qid in _mined_queries(qrels, query_ids):
        if qid not in run.rankings:
            raise MiningError(f"query {qid!r} absent from run")
        positives = set(qrels.positives(qid))
        per_query[qid] = [d for d, _ in run.rankings[qid] if d not in positives][:k]
        if not per_query[qid]:
            raise MiningError(f"query {qid!r}: run holds no non-positive document")
    return NegativeSet(per_query, 'naive_topk', {'k': int(k)})


def mine_random(corpus_ids: Sequence[str], qrels: RelevanceJudgments, k: int = NEGATIVES_PER_QUERY,
                seed: int = DEFAULT_SEED, *, query_ids: Optional[Iterable[str]] = None) -> NegativeSet:
    """k uniform non-positive documents per query"""
    _check_k(k)
    corpus = sorted(set(corpus_ids))
    if not corpus:
        raise MiningError("empty corpus")
    per_query: Dict[str, List[str]] = {}
    for qid in _mined_queries(qrels, query_ids):
        positives = set(qrels.positives(qid))
        pool = [doc_id for doc_id in corpus if doc_id not in positives]
        if len(pool) < k:
            raise MiningError(f"query {qid!r}: insufficient corpus ({len(pool)} non-positive documents, k={k})")
        per_query[qid] = _sample(pool, k, seed, qid, 'random')
    return NegativeSet(per_query, 'random', {'k': int(k), 'seed': int(seed)})


def save_negatives(negatives: NegativeSet, path: Union[str, Path]) -> None:
    """JSON lines: {query_id, strategy, params, negatives}"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            for qid in negatives.query_ids():
                record = {
                    'query_id': qid,
                    'strategy': negatives.strategy,
                    'params': dict(negatives.params),
                    'negatives': negatives.negatives(qid),
                }
                handle.write(json.dumps(record, sort_keys=True) + '\n')
    except OSError as e:
        raise StoreWriteError(f"cannot write negatives {path}: {e}") from e
    logger.info(f"Saved {negatives.strategy} negatives for {len(negatives)} queries to {path}")


def load_negatives(path: Union[str, Path]) -> NegativeSet:
    per_query: Dict[str, List[str]] = {}
    strategy, params = None, {}
    with open(path, encoding='utf-8') as handle:
        for line_number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
                qid, negatives = record['query_id'], record['negatives']
            except (json.JSONDecodeError, KeyError, TypeError):
                raise MiningError(f"{path} line {line_number}: malformed negatives record") from None
            if strategy is None:
                strategy, params = record.get('strategy'), record.get('params', {})
            elif record.get('strategy') != strategy:
                raise MiningError(f"{path} line {line_number}: mixed strategies")
            per_query[qid] = list(negatives)
    if strategy is None:
        raise MiningError(f"{path}: no negatives")
    return NegativeSet(per_query, strategy, params)
